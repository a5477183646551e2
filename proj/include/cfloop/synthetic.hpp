#pragma once

#include <cstddef>
#include <cstdint>

#include "cfloop/data.hpp"

namespace cfloop {

/// Two isotropic unit-variance Gaussian blobs in d dimensions, centred at
/// -delta and +delta on every axis, n/2 rows each (label 0 and 1). The Bayes
/// boundary is sum(x) = 0. Numeric features f0..f{d-1}, bounds from the data.
Dataset make_blobs(std::size_t n, std::size_t d, std::uint64_t seed, double delta = 1.0);

/// Uniform points in [-1,1]^2 labelled (x0 > 0) xor (x1 > 0).
Dataset make_xor(std::size_t n, std::uint64_t seed);

}  // namespace cfloop
