// Copyright Contributors to the SurfSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "surfsplat/sh.hpp"

#include "surfsplat/error.hpp"

#include <cmath>

namespace surfsplat {

namespace {

constexpr double kC0 = 0.28209479177387814;
constexpr double kC1 = 0.4886025119029199;
constexpr double kC2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                           -1.0925484305920792, 0.5462742152960396};
constexpr double kC3[7] = {-0.5900435899266435, 2.890611442640554,  -0.4570457994644658,
                           0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                           -0.5900435899266435};

int degree_for_count(std::size_t count) {
    for (int d = 0; d <= kMaxShDegree; ++d)
        if (static_cast<std::size_t>(sh_coeff_count(d)) == count) return d;
    throw Error(ErrorCode::invalid_parameter,
                "sh coefficient count " + std::to_string(count) + " is not (d+1)^2, d <= 3");
}

// Basis gradients with respect to the (un-constrained) direction
// components. The unit-length constraint is the caller's chain rule.
void basis_gradients(int degree, const Vec3& d, Vec3* out) {
    const double x = d[0], y = d[1], z = d[2];
    out[0] = Vec3::Zero();
    if (degree < 1) return;
    out[1] = Vec3(0.0, -kC1, 0.0);
    out[2] = Vec3(0.0, 0.0, kC1);
    out[3] = Vec3(-kC1, 0.0, 0.0);
    if (degree < 2) return;
    out[4] = kC2[0] * Vec3(y, x, 0.0);
    out[5] = kC2[1] * Vec3(0.0, z, y);
    out[6] = kC2[2] * Vec3(-2.0 * x, -2.0 * y, 4.0 * z);
    out[7] = kC2[3] * Vec3(z, 0.0, x);
    out[8] = kC2[4] * Vec3(2.0 * x, -2.0 * y, 0.0);
    if (degree < 3) return;
    out[9] = kC3[0] * Vec3(6.0 * x * y, 3.0 * x * x - 3.0 * y * y, 0.0);
    out[10] = kC3[1] * Vec3(y * z, x * z, x * y);
    out[11] = kC3[2] * Vec3(-2.0 * x * y, 4.0 * z * z - x * x - 3.0 * y * y, 8.0 * y * z);
    out[12] = kC3[3] *
              Vec3(-6.0 * x * z, -6.0 * y * z, 6.0 * z * z - 3.0 * x * x - 3.0 * y * y);
    out[13] = kC3[4] * Vec3(4.0 * z * z - 3.0 * x * x - y * y, -2.0 * x * y, 8.0 * x * z);
    out[14] = kC3[5] * Vec3(2.0 * x * z, -2.0 * y * z, x * x - y * y);
    out[15] = kC3[6] * Vec3(3.0 * x * x - y * y, -2.0 * x * y, 0.0);
}

} // namespace

void eval_sh_basis(int degree, const Vec3& d, double* out) {
    const double x = d[0], y = d[1], z = d[2];
    out[0] = kC0;
    if (degree < 1) return;
    out[1] = -kC1 * y;
    out[2] = kC1 * z;
    out[3] = -kC1 * x;
    if (degree < 2) return;
    const double xx = x * x, yy = y * y, zz = z * z;
    out[4] = kC2[0] * x * y;
    out[5] = kC2[1] * y * z;
    out[6] = kC2[2] * (2.0 * zz - xx - yy);
    out[7] = kC2[3] * x * z;
    out[8] = kC2[4] * (xx - yy);
    if (degree < 3) return;
    out[9] = kC3[0] * y * (3.0 * xx - yy);
    out[10] = kC3[1] * x * y * z;
    out[11] = kC3[2] * y * (4.0 * zz - xx - yy);
    out[12] = kC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    out[13] = kC3[4] * x * (4.0 * zz - xx - yy);
    out[14] = kC3[5] * z * (xx - yy);
    out[15] = kC3[6] * x * (xx - yy);
}

Vec3 eval_sh_color(const std::vector<Vec3>& sh_coeffs, const Vec3& dir) {
    const int degree = degree_for_count(sh_coeffs.size());
    double basis[16];
    eval_sh_basis(degree, dir, basis);
    Vec3 raw = Vec3::Zero();
    for (std::size_t i = 0; i < sh_coeffs.size(); ++i) raw += basis[i] * sh_coeffs[i];
    raw.array() += 0.5;
    return raw.cwiseMax(0.0).cwiseMin(1.0);
}

void eval_sh_color_backward(const std::vector<Vec3>& sh_coeffs, const Vec3& dir,
                            const Vec3& grad_color, std::vector<Vec3>& grad_coeffs,
                            Vec3& grad_dir) {
    if (grad_coeffs.size() != sh_coeffs.size())
        throw Error(ErrorCode::invalid_parameter, "grad_coeffs size mismatch");
    const int degree = degree_for_count(sh_coeffs.size());
    double basis[16];
    eval_sh_basis(degree, dir, basis);
    Vec3 raw = Vec3::Zero();
    for (std::size_t i = 0; i < sh_coeffs.size(); ++i) raw += basis[i] * sh_coeffs[i];
    raw.array() += 0.5;

    // Channel gradient is zero where the clamp is active.
    Vec3 g = grad_color;
    for (int c = 0; c < 3; ++c)
        if (raw[c] <= 0.0 || raw[c] >= 1.0) g[c] = 0.0;

    for (std::size_t i = 0; i < sh_coeffs.size(); ++i) grad_coeffs[i] += basis[i] * g;

    Vec3 bgrad[16];
    basis_gradients(degree, dir, bgrad);
    for (std::size_t i = 0; i < sh_coeffs.size(); ++i)
        grad_dir += g.dot(sh_coeffs[i]) * bgrad[i];
}

} // namespace surfsplat
