#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>
#include <type_traits>

namespace fdsic {

using cplx = std::complex<double>;

/// Maps a complex scalar type to the real type its components use.
///
/// The canceler and adaptation code is written against a generic complex
/// type `C` so the same source can run on `std::complex<double>` for
/// simulation and on the counting wrapper in `op_counter.hpp` for the
/// arithmetic-complexity tables.
template <typename C>
struct scalar_traits;

template <>
struct scalar_traits<cplx> {
    using real_type = double;
};

template <typename C>
using real_t = typename scalar_traits<C>::real_type;

// Plain-value access. The counting types provide hidden-friend overloads
// so generic code can call these unqualified.
inline double value_of(double x) { return x; }
inline cplx value_of(const cplx& z) { return z; }

inline bool is_finite(double x) { return std::isfinite(x); }
inline bool is_finite(const cplx& z) { return std::isfinite(z.real()) && std::isfinite(z.imag()); }

/// Raised when a caller hands an operation inconsistent sizes or settings.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

inline double db_to_linear(double db) { return std::pow(10.0, db / 10.0); }
inline double linear_to_db(double lin) { return 10.0 * std::log10(lin); }

inline bool is_odd_positive(int p) { return p > 0 && (p % 2) == 1; }

}  // namespace fdsic
