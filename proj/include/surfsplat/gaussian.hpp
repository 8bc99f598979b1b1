// Copyright Contributors to the SurfSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "surfsplat/geometry.hpp"

#include <cstdint>
#include <vector>

namespace surfsplat {

/// Smallest admissible axis scale (world units). Below this the covariance
/// is treated as singular; the trainer prunes such splats instead of
/// evaluating them.
inline constexpr double kScaleFloor = 1e-8;

/// Opacity clamp applied per contribution during compositing.
inline constexpr double kAlphaClamp = 0.99;

/// One anisotropic 3D Gaussian primitive. Scales are stored as logs so
/// positivity is structural; the rotation quaternion (w,x,y,z) is
/// renormalized after every optimizer step.
struct GaussianSplat {
    Vec3 position = Vec3::Zero();
    Vec3 log_scale = Vec3::Zero();
    Vec4 rotation = Vec4(1.0, 0.0, 0.0, 0.0);
    double opacity_logit = 0.0;
    std::vector<Vec3> sh_coeffs; // (degree+1)^2 entries, one Vec3 per basis function

    Vec3 scales() const { return log_scale.array().exp().matrix(); }
    double opacity() const { return 1.0 / (1.0 + std::exp(-opacity_logit)); }
    int sh_degree() const;

    bool finite() const;
};

struct SplatCloud {
    std::vector<GaussianSplat> splats;
    std::vector<std::uint32_t> generation; // densification events per splat

    std::size_t size() const { return splats.size(); }
    bool empty() const { return splats.empty(); }
    void resize_generation();
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
inline double logit(double p) { return std::log(p / (1.0 - p)); }

/// Sigma = R S S^T R^T with S = diag(exp(log_scale)). Symmetric PSD by
/// construction.
Mat3 covariance_from_scale_rotation(const Vec3& log_scale, const Vec4& rotation);

/// Pulls a symmetric dL/dSigma back to (dL/dlog_scale, dL/drotation).
struct CovarianceGrad {
    Vec3 log_scale = Vec3::Zero();
    Vec4 rotation = Vec4::Zero();
};
CovarianceGrad covariance_backward(const Vec3& log_scale, const Vec4& rotation,
                                   const Mat3& grad_sigma);

/// Unnormalized density exp(-0.5 (x-mu)^T Sigma^-1 (x-mu)), in (0, 1].
double eval_gaussian(const GaussianSplat& splat, const Vec3& x);

/// Gradients of eval_gaussian with respect to the splat parameters that
/// enter the density (position, log_scale, rotation).
struct DensityGrad {
    Vec3 position = Vec3::Zero();
    Vec3 log_scale = Vec3::Zero();
    Vec4 rotation = Vec4::Zero();
};
DensityGrad eval_gaussian_backward(const GaussianSplat& splat, const Vec3& x,
                                   double grad_output);

/// Reparameterized draw x = mu + R diag(exp(log_scale)) eps. Differentiable
/// in mu, log_scale and rotation for a frozen eps.
Vec3 sample_splat(const GaussianSplat& splat, const Vec3& eps);

DensityGrad sample_splat_backward(const GaussianSplat& splat, const Vec3& eps,
                                  const Vec3& grad_sample);

} // namespace surfsplat
