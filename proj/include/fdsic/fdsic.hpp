#pragma once

#include "fdsic/numeric.hpp"
#include "fdsic/op_counter.hpp"
#include "fdsic/rng.hpp"
#include "fdsic/baseband.hpp"
#include "fdsic/hwmodel.hpp"
#include "fdsic/cancelers.hpp"
#include "fdsic/adapt.hpp"
#include "fdsic/metrics.hpp"
#include "fdsic/protocol.hpp"
#include "fdsic/harness.hpp"
