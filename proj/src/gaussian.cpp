// Copyright Contributors to the SurfSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "surfsplat/gaussian.hpp"

#include "surfsplat/error.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>

namespace surfsplat {

int GaussianSplat::sh_degree() const {
    switch (sh_coeffs.size()) {
    case 1: return 0;
    case 4: return 1;
    case 9: return 2;
    case 16: return 3;
    default: return -1;
    }
}

bool GaussianSplat::finite() const {
    return position.allFinite() && log_scale.allFinite() && rotation.allFinite() &&
           std::isfinite(opacity_logit) &&
           std::all_of(sh_coeffs.begin(), sh_coeffs.end(),
                       [](const Vec3& c) { return c.allFinite(); });
}

void SplatCloud::resize_generation() {
    generation.resize(splats.size(), 0u);
}

Mat3 covariance_from_scale_rotation(const Vec3& log_scale, const Vec4& rotation) {
    if (!log_scale.allFinite() || !rotation.allFinite()) {
        throw Error(ErrorCode::invalid_parameter,
                    "covariance_from_scale_rotation: non-finite input");
    }
    const Mat3 r = rotation_matrix(rotation);
    const Vec3 s = log_scale.array().exp().matrix();
    const Mat3 m = r * s.asDiagonal(); // M = R S, Sigma = M M^T
    return m * m.transpose();
}

CovarianceGrad covariance_backward(const Vec3& log_scale, const Vec4& rotation,
                                   const Mat3& grad_sigma) {
    const Mat3 r = rotation_matrix(rotation);
    const Vec3 s = log_scale.array().exp().matrix();
    const Mat3 m = r * s.asDiagonal();

    // Sigma = M M^T, so dL/dM = (G + G^T) M.
    const Mat3 grad_m = (grad_sigma + grad_sigma.transpose()) * m;

    CovarianceGrad out;
    const Mat3 grad_r = grad_m * s.asDiagonal();
    for (int k = 0; k < 3; ++k) {
        out.log_scale[k] = r.col(k).dot(grad_m.col(k)) * s[k];
    }
    out.rotation = rotation_matrix_backward(rotation, grad_r);
    return out;
}

double eval_gaussian(const GaussianSplat& splat, const Vec3& x) {
    if (!x.allFinite() || !splat.finite()) {
        throw Error(ErrorCode::invalid_parameter, "eval_gaussian: non-finite input");
    }
    if (splat.scales().minCoeff() < kScaleFloor) {
        throw Error(ErrorCode::degenerate_splat,
                    "eval_gaussian: scale below floor, covariance singular");
    }
    const Mat3 sigma = covariance_from_scale_rotation(splat.log_scale, splat.rotation);
    const Vec3 r = x - splat.position;
    const double maha = r.dot(sigma.llt().solve(r));
    return std::exp(-0.5 * maha);
}

DensityGrad eval_gaussian_backward(const GaussianSplat& splat, const Vec3& x,
                                   double grad_output) {
    const Mat3 sigma = covariance_from_scale_rotation(splat.log_scale, splat.rotation);
    const Vec3 r = x - splat.position;
    const Vec3 u = sigma.llt().solve(r); // Sigma^-1 r
    const double g = std::exp(-0.5 * r.dot(u));

    DensityGrad out;
    out.position = grad_output * g * u;
    const Mat3 grad_sigma = grad_output * 0.5 * g * (u * u.transpose());
    const CovarianceGrad cg = covariance_backward(splat.log_scale, splat.rotation, grad_sigma);
    out.log_scale = cg.log_scale;
    out.rotation = cg.rotation;
    return out;
}

Vec3 sample_splat(const GaussianSplat& splat, const Vec3& eps) {
    if (!eps.allFinite()) {
        throw Error(ErrorCode::invalid_parameter, "sample_splat: non-finite draw");
    }
    const Mat3 r = rotation_matrix(splat.rotation);
    const Vec3 scaled = splat.scales().cwiseProduct(eps);
    return splat.position + r * scaled;
}

DensityGrad sample_splat_backward(const GaussianSplat& splat, const Vec3& eps,
                                  const Vec3& grad_sample) {
    const Mat3 r = rotation_matrix(splat.rotation);
    const Vec3 s = splat.scales();

    DensityGrad out;
    out.position = grad_sample;
    for (int k = 0; k < 3; ++k) {
        out.log_scale[k] = grad_sample.dot(r.col(k)) * s[k] * eps[k];
    }
    out.rotation = rotate_vector_backward(splat.rotation, s.cwiseProduct(eps), grad_sample);
    return out;
}

} // namespace surfsplat
