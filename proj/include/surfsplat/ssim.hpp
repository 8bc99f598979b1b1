// Copyright Contributors to the SurfSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "surfsplat/image.hpp"

namespace surfsplat {

inline constexpr int kSsimWindow = 11;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

/// Mean structural similarity over valid window positions (no padding),
/// 11x11 Gaussian weights with sigma 1.5, averaged over channels. Both
/// images must share shape and be at least 11x11.
double ssim(const Image& a, const Image& b);

/// dL/da for L = grad_output * ssim(a, b). Same shape as `a`.
Image ssim_backward(const Image& a, const Image& b, double grad_output);

} // namespace surfsplat
