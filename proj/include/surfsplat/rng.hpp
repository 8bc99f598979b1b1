// Copyright Contributors to the SurfSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "surfsplat/geometry.hpp"

#include <cstdint>
#include <random>

namespace surfsplat {

/// Deterministic random source. One engine per logical stream; all draws
/// go through this wrapper so reproducibility depends only on the seed and
/// the call sequence.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    double uniform(double lo = 0.0, double hi = 1.0) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }

    /// Uniform integer in [0, n).
    std::uint64_t index(std::uint64_t n) {
        return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_);
    }

    double normal() {
        return std::normal_distribution<double>(0.0, 1.0)(engine_);
    }

    Vec3 normal3() {
        const double a = normal();
        const double b = normal();
        const double c = normal();
        return Vec3(a, b, c);
    }

    Vec3 uniform3(double lo, double hi) {
        const double a = uniform(lo, hi);
        const double b = uniform(lo, hi);
        const double c = uniform(lo, hi);
        return Vec3(a, b, c);
    }

    /// Derives an independent stream; stable against draw-count changes in
    /// the parent.
    Rng fork(std::uint64_t salt) {
        return Rng(engine_() ^ (salt * 0x9e3779b97f4a7c15ull));
    }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

} // namespace surfsplat
