// Copyright Contributors to the SurfSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "surfsplat/geometry.hpp"

#include <vector>

namespace surfsplat {

inline constexpr int kMaxShDegree = 3;

/// Degree-0 basis constant; a flat color c is encoded as (c - 0.5) / kShY00.
inline constexpr double kShY00 = 0.28209479177387814;

inline int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

/// Real spherical harmonic basis values at a unit direction, standard
/// splatting band order and constants, degrees 0..3.
void eval_sh_basis(int degree, const Vec3& dir, double* out);

/// View-dependent color: SH expansion plus the 0.5 offset, clamped to
/// [0, 1] per channel. `dir` must be unit length.
Vec3 eval_sh_color(const std::vector<Vec3>& sh_coeffs, const Vec3& dir);

/// Gradients of eval_sh_color. Accumulates dL/dcoeffs into `grad_coeffs`
/// (must match sh_coeffs size) and dL/ddir into `grad_dir`, with the clamp
/// zeroing channels outside (0,1).
void eval_sh_color_backward(const std::vector<Vec3>& sh_coeffs, const Vec3& dir,
                            const Vec3& grad_color, std::vector<Vec3>& grad_coeffs,
                            Vec3& grad_dir);

} // namespace surfsplat
