#pragma once

// Counting arithmetic types used to measure the cost of one prediction and
// parameter update. Complex operations are tallied at the complex level and
// converted to real operations afterwards with complex_ops_to_real(), so the
// conversion rule is applied in exactly one place.
//
// Counting convention:
//   complex add/sub             -> 2 real adds
//   complex mult                -> 3 real mults + 5 real adds
//   complex / complex           -> (a * conj(b)) / (b * conj(b)):
//                                  2 complex mults + 2 real divs
//   complex * real, real * cplx -> 2 real mults
//   complex / real              -> 2 real divs
//   complex + real              -> 1 real add
//   real add/sub/mult/div/sqrt  -> 1 of the respective kind
//   negation, conj(), real(), imag(), comparisons -> free

#include <cmath>
#include <complex>
#include <cstdint>
#include <ostream>

#include "fdsic/numeric.hpp"

namespace fdsic {

/// Raw complex-level tallies, before conversion to real operations.
struct ComplexOps {
    std::uint64_t add = 0;           ///< complex additions / subtractions
    std::uint64_t mult = 0;          ///< complex multiplications
    std::uint64_t div = 0;           ///< complex divisions with a complex denominator
    std::uint64_t div_by_real = 0;   ///< complex value divided by a real scalar
    std::uint64_t mult_by_real = 0;  ///< complex value times a real scalar
    std::uint64_t add_real = 0;      ///< real scalar added to a complex value
};

struct RealOps {
    std::uint64_t add = 0;
    std::uint64_t mult = 0;
    std::uint64_t div = 0;
    std::uint64_t sqrt = 0;

    RealOps& operator+=(const RealOps& o) {
        add += o.add;
        mult += o.mult;
        div += o.div;
        sqrt += o.sqrt;
        return *this;
    }
    friend RealOps operator+(RealOps a, const RealOps& b) { return a += b; }
    friend bool operator==(const RealOps&, const RealOps&) = default;
};

/// Converts complex operation tallies to real-valued operation counts.
inline RealOps complex_ops_to_real(const ComplexOps& c) {
    RealOps r;
    r.add = 2 * c.add + 5 * c.mult + 10 * c.div + c.add_real;
    r.mult = 3 * c.mult + 6 * c.div + 2 * c.mult_by_real;
    r.div = 2 * c.div + 2 * c.div_by_real;
    return r;
}

/// Three-argument form: complex adds, mults and complex-denominator divisions.
inline RealOps complex_ops_to_real(std::uint64_t cadd, std::uint64_t cmult, std::uint64_t cdiv) {
    ComplexOps c;
    c.add = cadd;
    c.mult = cmult;
    c.div = cdiv;
    return complex_ops_to_real(c);
}

namespace counted {

struct Tally {
    ComplexOps complex;
    RealOps real;

    RealOps to_real() const { return complex_ops_to_real(complex) + real; }
};

namespace detail {
inline thread_local Tally* active_tally = nullptr;
}

/// Installs a tally for the current thread for the lifetime of the scope.
/// Nested scopes shadow the outer one; each measurement owns its tally.
class Scope {
public:
    explicit Scope(Tally& t) : previous_(detail::active_tally) { detail::active_tally = &t; }
    ~Scope() { detail::active_tally = previous_; }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

private:
    Tally* previous_;
};

inline Tally* active() { return detail::active_tally; }

class Real {
public:
    Real() = default;
    Real(double v) : v_(v) {}  // NOLINT: implicit by design of the wrapper

    double value() const { return v_; }

    friend Real operator+(Real a, Real b) { return bump_add(), Real(a.v_ + b.v_); }
    friend Real operator-(Real a, Real b) { return bump_add(), Real(a.v_ - b.v_); }
    friend Real operator*(Real a, Real b) {
        if (auto* t = active()) ++t->real.mult;
        return Real(a.v_ * b.v_);
    }
    friend Real operator/(Real a, Real b) {
        if (auto* t = active()) ++t->real.div;
        return Real(a.v_ / b.v_);
    }
    friend Real operator-(Real a) { return Real(-a.v_); }
    Real& operator+=(Real b) { return *this = *this + b; }
    Real& operator-=(Real b) { return *this = *this - b; }
    Real& operator*=(Real b) { return *this = *this * b; }
    Real& operator/=(Real b) { return *this = *this / b; }

    friend bool operator<(Real a, Real b) { return a.v_ < b.v_; }
    friend bool operator>(Real a, Real b) { return a.v_ > b.v_; }
    friend bool operator<=(Real a, Real b) { return a.v_ <= b.v_; }
    friend bool operator>=(Real a, Real b) { return a.v_ >= b.v_; }
    friend bool operator==(Real a, Real b) { return a.v_ == b.v_; }

    friend Real sqrt(Real a) {
        if (auto* t = active()) ++t->real.sqrt;
        return Real(std::sqrt(a.v_));
    }
    friend Real abs(Real a) { return Real(std::abs(a.v_)); }
    friend double value_of(Real a) { return a.v_; }
    friend bool is_finite(Real a) { return std::isfinite(a.v_); }

private:
    static void bump_add() {
        if (auto* t = active()) ++t->real.add;
    }
    double v_ = 0.0;
};

class Complex {
public:
    Complex() = default;
    Complex(cplx v) : v_(v) {}  // NOLINT
    Complex(double re) : v_(re, 0.0) {}  // NOLINT
    Complex(Real re, Real im) : v_(re.value(), im.value()) {}

    cplx value() const { return v_; }

    friend Complex operator+(const Complex& a, const Complex& b) {
        if (auto* t = active()) ++t->complex.add;
        return Complex(a.v_ + b.v_);
    }
    friend Complex operator-(const Complex& a, const Complex& b) {
        if (auto* t = active()) ++t->complex.add;
        return Complex(a.v_ - b.v_);
    }
    friend Complex operator*(const Complex& a, const Complex& b) {
        if (auto* t = active()) ++t->complex.mult;
        return Complex(a.v_ * b.v_);
    }
    friend Complex operator/(const Complex& a, const Complex& b) {
        if (auto* t = active()) ++t->complex.div;
        return Complex(a.v_ / b.v_);
    }
    friend Complex operator*(const Complex& a, Real b) {
        if (auto* t = active()) ++t->complex.mult_by_real;
        return Complex(a.v_ * b.value());
    }
    friend Complex operator*(Real b, const Complex& a) { return a * b; }
    friend Complex operator/(const Complex& a, Real b) {
        if (auto* t = active()) ++t->complex.div_by_real;
        return Complex(a.v_ / b.value());
    }
    friend Complex operator+(const Complex& a, Real b) {
        if (auto* t = active()) ++t->complex.add_real;
        return Complex(a.v_ + b.value());
    }
    friend Complex operator+(Real b, const Complex& a) { return a + b; }
    friend Complex operator-(const Complex& a) { return Complex(-a.v_); }

    Complex& operator+=(const Complex& b) { return *this = *this + b; }
    Complex& operator-=(const Complex& b) { return *this = *this - b; }
    Complex& operator*=(const Complex& b) { return *this = *this * b; }

    friend bool operator==(const Complex& a, const Complex& b) { return a.v_ == b.v_; }

    friend Complex conj(const Complex& a) { return Complex(std::conj(a.v_)); }
    friend Real real(const Complex& a) { return Real(a.v_.real()); }
    friend Real imag(const Complex& a) { return Real(a.v_.imag()); }
    friend cplx value_of(const Complex& a) { return a.v_; }
    friend bool is_finite(const Complex& a) {
        return std::isfinite(a.v_.real()) && std::isfinite(a.v_.imag());
    }

private:
    cplx v_{};
};

}  // namespace counted

template <>
struct scalar_traits<counted::Complex> {
    using real_type = counted::Real;
};

inline std::ostream& operator<<(std::ostream& os, const RealOps& r) {
    return os << "{add " << r.add << ", mult " << r.mult << ", div " << r.div << ", sqrt " << r.sqrt
              << "}";
}

}  // namespace fdsic
