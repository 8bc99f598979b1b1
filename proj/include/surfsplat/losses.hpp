// Copyright Contributors to the SurfSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "surfsplat/bvh.hpp"
#include "surfsplat/morphable.hpp"
#include "surfsplat/renderer.hpp"
#include "surfsplat/surface_distance.hpp"

#include <vector>

namespace surfsplat {

/// Regularization weight decayed log-linearly from `initial` at iteration 0
/// to `final_value` at `decay_end_iteration`, constant afterwards.
struct LambdaRegSchedule {
    double initial = 1e-2;
    double final_value = 1e-4;
    int decay_end_iteration = 1;
};

double lambda_reg_at(const LambdaRegSchedule& schedule, int iteration);

struct LossWeights {
    double lambda_rgb = 1.0;
    double lambda_s2s = 0.1;
    double lambda_ssim = 0.2; // SSIM share inside the rgb term
    LambdaRegSchedule lambda_reg_schedule;
    RegularizationWeights reg_weights; // w_s, w_e inside loss_reg
};

/// (1 - lambda_ssim) L1 + lambda_ssim (1 - SSIM) between the rendering and
/// the target with masked-out pixels replaced by the iteration background.
double rgb_loss(const RenderedImage& rendered, const Image& target, const Image& mask,
                const Vec3& background, double lambda_ssim);

/// dL/d(rendered rgb) for grad_output * rgb_loss.
Image rgb_loss_backward(const RenderedImage& rendered, const Image& target, const Image& mask,
                        const Vec3& background, double lambda_ssim, double grad_output);

/// Replaces target pixels where the mask is zero by the background color.
Image masked_target(const Image& target, const Image& mask, const Vec3& background);

enum class SurfaceLossMode {
    splat_to_surface, // Monte-Carlo expectation over the splat's density
    point_to_surface  // center point only; ignores splat extent
};

/// Per-cloud surface loss state. A splat belongs to the face region iff all
/// three vertices of the triangle closest to its center are masked; other
/// splats contribute nothing and are excluded from the denominator.
struct SurfaceLossResult {
    double loss = 0.0;
    int face_splat_count = 0;
    std::vector<std::uint8_t> in_face_region;            // per splat
    std::vector<std::vector<double>> per_sample;         // per splat; empty off-face
    std::vector<std::vector<SampleAssociation>> associations;
};

/// eps_draws[s] are the frozen reparameterization draws for splat s (one
/// entry per splat; point mode ignores them).
SurfaceLossResult surface_loss(const SplatCloud& cloud, const TriangleMesh& mesh,
                               const BvhIndex& index, const MorphableModel& model,
                               const std::vector<std::vector<Vec3>>& eps_draws,
                               SurfaceLossMode mode);

/// Backward of grad_output * surface_loss under frozen draws/associations.
/// Splat gradients accumulate into `splat_grads` (position/log_scale/rotation
/// only); surface gradients into `vertex_grads`.
void surface_loss_backward(const SplatCloud& cloud, const TriangleMesh& mesh,
                           const SurfaceLossResult& result,
                           const std::vector<std::vector<Vec3>>& eps_draws,
                           SurfaceLossMode mode, double grad_output,
                           std::vector<SplatGrad>& splat_grads,
                           std::vector<Vec3>& vertex_grads);

struct LossBreakdown {
    double rgb = 0.0;
    double s2s = 0.0;
    double reg = 0.0;
    double lambda_reg = 0.0; // schedule value actually applied
    double total = 0.0;
};

/// total = lambda_rgb * rgb + lambda_s2s * s2s + lambda_reg(iteration) * reg
LossBreakdown total_loss(double rgb, double s2s, double reg, const LossWeights& weights,
                         int iteration);

/// -10 log10(MSE); +infinity for identical images.
double psnr(const Image& rendered, const Image& target);

} // namespace surfsplat
