// Copyright Contributors to the SurfSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "surfsplat/camera.hpp"
#include "surfsplat/gaussian.hpp"
#include "surfsplat/image.hpp"

#include <optional>
#include <span>
#include <vector>

namespace surfsplat {

/// Splats closer than this camera-space depth are culled.
inline constexpr double kNearPlane = 0.01;

/// Screen-space covariance dilation added to the diagonal (anti-aliasing,
/// also bounds the conic away from singularity for point-like splats).
inline constexpr double kCovarianceDilation = 0.3;

/// Per-contribution alpha gate: screen-space alphas below 1/255 are
/// dropped before compositing.
inline constexpr double kAlphaGate = 1.0 / 255.0;

/// Compositing stops once transmittance falls below this.
inline constexpr double kTransmittanceCutoff = 1e-4;

/// A splat after EWA projection into one view.
struct ProjectedSplat {
    Vec2 mean2d = Vec2::Zero();   // pixels
    Mat2 cov2d = Mat2::Zero();    // pixels^2, dilation included
    double depth = 0.0;           // camera-space z
    Vec3 view_color = Vec3::Zero();
    double opacity = 0.0;
};

/// Perspective projection of the splat mean and EWA pushforward of its
/// covariance: cov2d = (J W Sigma W^T J^T)_2x2 + dilation * I, with W the
/// world-to-camera rotation and J the projection Jacobian at the mean.
/// Returns nullopt when the mean is behind the near plane.
std::optional<ProjectedSplat> project_splat(const GaussianSplat& splat, const Camera& camera);

struct PixelContribution {
    double alpha = 0.0; // in [0, kAlphaClamp]
    Vec3 color = Vec3::Zero();
};

/// Front-to-back accumulation of sorted contributions. Stops before any
/// contribution that would push transmittance below the cutoff. The caller
/// folds the remaining transmittance into the background.
Vec3 composite_pixel(std::span<const PixelContribution> sorted, double& transmittance_out);

struct RenderedImage {
    Image rgb;   // H x W x 3
    Image alpha; // H x W x 1, accumulated opacity in [0,1]
};

struct RenderDiagnostics {
    int culled_near_plane = 0;
    int skipped_degenerate = 0; // non-invertible cov2d after dilation
};

/// Renders the cloud into the camera with a constant background color.
/// Deterministic for fixed inputs; an empty cloud yields the background.
RenderedImage render(const SplatCloud& cloud, const Camera& camera, const Vec3& background,
                     RenderDiagnostics* diagnostics = nullptr);

/// Per-splat parameter gradients produced by render_backward.
struct SplatGrad {
    Vec3 position = Vec3::Zero();
    Vec3 log_scale = Vec3::Zero();
    Vec4 rotation = Vec4::Zero();
    double opacity_logit = 0.0;
    std::vector<Vec3> sh_coeffs;

    void accumulate(const SplatGrad& other);
    double squared_norm() const;
};

struct RenderGrads {
    std::vector<SplatGrad> splats;
    /// ||dL/dmean2d|| per splat for this view, the view-space densification
    /// statistic. Zero for culled or untouched splats.
    std::vector<double> mean2d_grad_norm;
    /// 1 where the splat survived projection for this view (it may still
    /// have touched no pixel); densification averages over visible views.
    std::vector<std::uint8_t> visible;
};

/// Analytic gradients of sum(upstream_grad * rendered.rgb) with respect to
/// every splat parameter. Recomputes the forward pass internally; pure.
RenderGrads render_backward(const SplatCloud& cloud, const Camera& camera,
                            const Vec3& background, const Image& upstream_grad);

} // namespace surfsplat
