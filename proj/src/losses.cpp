// Copyright Contributors to the SurfSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "surfsplat/losses.hpp"

#include "surfsplat/error.hpp"
#include "surfsplat/ssim.hpp"

#include <cmath>
#include <limits>

namespace surfsplat {

double lambda_reg_at(const LambdaRegSchedule& schedule, int iteration) {
    if (schedule.initial <= 0.0 || schedule.final_value <= 0.0)
        throw Error(ErrorCode::invalid_parameter, "log-linear schedule needs positive endpoints");
    if (schedule.decay_end_iteration < 1)
        throw Error(ErrorCode::invalid_parameter, "decay_end_iteration must be >= 1");
    const double f = std::min(1.0, std::max(0.0, static_cast<double>(iteration) /
                                                     schedule.decay_end_iteration));
    return std::exp(std::log(schedule.initial) +
                    f * (std::log(schedule.final_value) - std::log(schedule.initial)));
}

Image masked_target(const Image& target, const Image& mask, const Vec3& background) {
    if (mask.width != target.width || mask.height != target.height || mask.channels != 1)
        throw Error(ErrorCode::invalid_input, "mask must be H x W x 1 matching the target");
    Image out = target;
    for (int y = 0; y < target.height; ++y)
        for (int x = 0; x < target.width; ++x)
            if (mask.at(y, x, 0) == 0.0) out.set_pixel(y, x, background);
    return out;
}

double rgb_loss(const RenderedImage& rendered, const Image& target, const Image& mask,
                const Vec3& background, double lambda_ssim) {
    if (!rendered.rgb.same_shape(target))
        throw Error(ErrorCode::invalid_input, "rendered/target dimension mismatch");
    const Image t = masked_target(target, mask, background);

    double l1 = 0.0;
    for (std::size_t i = 0; i < t.data.size(); ++i)
        l1 += std::abs(rendered.rgb.data[i] - t.data[i]);
    l1 /= static_cast<double>(t.data.size());

    if (lambda_ssim == 0.0) return l1;
    return (1.0 - lambda_ssim) * l1 + lambda_ssim * (1.0 - ssim(rendered.rgb, t));
}

Image rgb_loss_backward(const RenderedImage& rendered, const Image& target, const Image& mask,
                        const Vec3& background, double lambda_ssim, double grad_output) {
    if (!rendered.rgb.same_shape(target))
        throw Error(ErrorCode::invalid_input, "rendered/target dimension mismatch");
    const Image t = masked_target(target, mask, background);

    Image grad(target.width, target.height, 3);
    const double l1_w = grad_output * (1.0 - lambda_ssim) / static_cast<double>(t.data.size());
    for (std::size_t i = 0; i < t.data.size(); ++i) {
        const double d = rendered.rgb.data[i] - t.data[i];
        grad.data[i] = d > 0.0 ? l1_w : (d < 0.0 ? -l1_w : 0.0);
    }

    if (lambda_ssim != 0.0) {
        const Image g_ssim = ssim_backward(rendered.rgb, t, -grad_output * lambda_ssim);
        for (std::size_t i = 0; i < grad.data.size(); ++i) grad.data[i] += g_ssim.data[i];
    }
    return grad;
}

namespace {

bool splat_in_face_region(const GaussianSplat& splat, const TriangleMesh& mesh,
                          const BvhIndex& index, const MorphableModel& model) {
    const ClosestPointResult cp = index.closest_point(mesh, splat.position);
    const Triangle& tri = mesh.triangles[static_cast<std::size_t>(cp.triangle_index)];
    return model.face_region_mask[tri[0]] && model.face_region_mask[tri[1]] &&
           model.face_region_mask[tri[2]];
}

} // namespace

SurfaceLossResult surface_loss(const SplatCloud& cloud, const TriangleMesh& mesh,
                               const BvhIndex& index, const MorphableModel& model,
                               const std::vector<std::vector<Vec3>>& eps_draws,
                               SurfaceLossMode mode) {
    if (mode == SurfaceLossMode::splat_to_surface && eps_draws.size() != cloud.size())
        throw Error(ErrorCode::invalid_parameter, "one eps draw set per splat required");
    if (model.vertex_count() != mesh.vertices.size())
        throw Error(ErrorCode::invalid_input, "mesh does not match the morphable model");

    SurfaceLossResult r;
    r.in_face_region.assign(cloud.size(), 0);
    r.per_sample.resize(cloud.size());
    r.associations.resize(cloud.size());

    double sum = 0.0;
    for (std::size_t s = 0; s < cloud.size(); ++s) {
        const GaussianSplat& splat = cloud.splats[s];
        if (!splat_in_face_region(splat, mesh, index, model)) continue;
        r.in_face_region[s] = 1;
        ++r.face_splat_count;

        if (mode == SurfaceLossMode::splat_to_surface) {
            SplatSurfaceDistance d = splat_to_surface_distance(index, mesh, splat, eps_draws[s]);
            sum += d.mean;
            r.per_sample[s] = std::move(d.per_sample);
            r.associations[s] = std::move(d.associations);
        } else {
            const ClosestPointResult cp = index.closest_point(mesh, splat.position);
            const SampleAssociation assoc{cp.triangle_index, cp.barycentric};
            const double dist = frozen_association_distance(mesh, assoc, splat.position);
            sum += dist;
            r.per_sample[s] = {dist};
            r.associations[s] = {assoc};
        }
    }
    r.loss = r.face_splat_count > 0 ? sum / r.face_splat_count : 0.0;
    return r;
}

void surface_loss_backward(const SplatCloud& cloud, const TriangleMesh& mesh,
                           const SurfaceLossResult& result,
                           const std::vector<std::vector<Vec3>>& eps_draws,
                           SurfaceLossMode mode, double grad_output,
                           std::vector<SplatGrad>& splat_grads,
                           std::vector<Vec3>& vertex_grads) {
    if (splat_grads.size() != cloud.size() || vertex_grads.size() != mesh.vertices.size())
        throw Error(ErrorCode::invalid_parameter, "gradient buffers sized incorrectly");
    if (result.face_splat_count == 0) return;

    const double per_splat = grad_output / result.face_splat_count;
    for (std::size_t s = 0; s < cloud.size(); ++s) {
        if (!result.in_face_region[s]) continue;
        const GaussianSplat& splat = cloud.splats[s];
        if (mode == SurfaceLossMode::splat_to_surface) {
            DensityGrad g;
            splat_to_surface_backward(mesh, splat, eps_draws[s], result.associations[s],
                                      per_splat, g, vertex_grads);
            splat_grads[s].position += g.position;
            splat_grads[s].log_scale += g.log_scale;
            splat_grads[s].rotation += g.rotation;
        } else {
            Vec3 g_x = Vec3::Zero();
            point_to_surface_backward(mesh, result.associations[s][0], splat.position,
                                      per_splat, g_x, vertex_grads);
            splat_grads[s].position += g_x;
        }
    }
}

LossBreakdown total_loss(double rgb, double s2s, double reg, const LossWeights& weights,
                         int iteration) {
    LossBreakdown b;
    b.rgb = rgb;
    b.s2s = s2s;
    b.reg = reg;
    b.lambda_reg = lambda_reg_at(weights.lambda_reg_schedule, iteration);
    b.total = weights.lambda_rgb * rgb + weights.lambda_s2s * s2s + b.lambda_reg * reg;
    return b;
}

double psnr(const Image& rendered, const Image& target) {
    if (!rendered.same_shape(target))
        throw Error(ErrorCode::invalid_input, "psnr dimension mismatch");
    double mse = 0.0;
    for (std::size_t i = 0; i < rendered.data.size(); ++i) {
        const double d = rendered.data[i] - target.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(rendered.data.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return -10.0 * std::log10(mse);
}

} // namespace surfsplat
