// Copyright Contributors to the SurfSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "surfsplat/trainer.hpp"

#include "surfsplat/bvh.hpp"
#include "surfsplat/error.hpp"
#include "surfsplat/sh.hpp"

#include <algorithm>
#include <cmath>
#include <unordered_set>

namespace surfsplat {

void DensifyConfig::validate() const {
    if (interval < 1) throw Error(ErrorCode::invalid_parameter, "densify interval must be >= 1");
    if (view_grad_threshold <= 0.0 || split_scale_threshold <= 0.0 || tau_s2s_multiplier <= 0.0 ||
        tau_s2s_floor <= 0.0 || opacity_prune_threshold <= 0.0 || scale_prune_cap <= 0.0)
        throw Error(ErrorCode::invalid_parameter, "densify thresholds must be positive");
    if (split_scale_shrink <= 1.0)
        throw Error(ErrorCode::invalid_parameter, "split_scale_shrink must exceed 1");
    if (max_splats < 1) throw Error(ErrorCode::invalid_parameter, "max_splats must be >= 1");
}

namespace {

bool should_split(const GaussianSplat& splat, const DensifyConfig& config) {
    return splat.scales().maxCoeff() > config.split_scale_threshold;
}

double median_of(std::vector<double> values) {
    const std::size_t n = values.size();
    std::nth_element(values.begin(), values.begin() + n / 2, values.end());
    const double upper = values[n / 2];
    if (n % 2 == 1) return upper;
    const double lower = *std::max_element(values.begin(), values.begin() + n / 2);
    return 0.5 * (lower + upper);
}

} // namespace

std::vector<DensifyEdit> view_space_densify(const SplatCloud& cloud,
                                            const std::vector<double>& mean_grad_norm,
                                            const DensifyConfig& config) {
    if (mean_grad_norm.size() != cloud.size())
        throw Error(ErrorCode::invalid_parameter, "one accumulated grad norm per splat required");
    std::vector<DensifyEdit> edits;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        if (mean_grad_norm[i] <= config.view_grad_threshold) continue;
        edits.push_back({static_cast<int>(i), should_split(cloud.splats[i], config)});
    }
    return edits;
}

WorldDensifySelection world_space_densify(const SplatCloud& cloud,
                                          const std::vector<std::vector<double>>& sample_distances,
                                          const DensifyConfig& config) {
    if (sample_distances.size() != cloud.size())
        throw Error(ErrorCode::invalid_parameter, "one sample list per splat required");

    WorldDensifySelection out;
    std::vector<double> pooled;
    for (const auto& samples : sample_distances)
        pooled.insert(pooled.end(), samples.begin(), samples.end());
    if (pooled.empty()) return out;

    out.tau_s2s = std::max(config.tau_s2s_floor, config.tau_s2s_multiplier * median_of(pooled));
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        if (sample_distances[i].empty()) continue;
        const double worst =
            *std::max_element(sample_distances[i].begin(), sample_distances[i].end());
        if (worst > out.tau_s2s)
            out.edits.push_back({static_cast<int>(i), should_split(cloud.splats[i], config)});
    }
    return out;
}

std::vector<DensifyEdit> merge_edits(const std::vector<DensifyEdit>& a,
                                     const std::vector<DensifyEdit>& b) {
    std::vector<DensifyEdit> merged = a;
    std::unordered_set<int> seen;
    for (const DensifyEdit& e : a) seen.insert(e.source);
    for (const DensifyEdit& e : b)
        if (seen.insert(e.source).second) merged.push_back(e);
    std::sort(merged.begin(), merged.end(),
              [](const DensifyEdit& x, const DensifyEdit& y) { return x.source < y.source; });
    return merged;
}

DensifyOutcome apply_densify(SplatCloud& cloud, const std::vector<DensifyEdit>& edits,
                             const DensifyConfig& config, Rng& rng) {
    DensifyOutcome out;
    std::size_t splits = 0, clones = 0;
    for (const DensifyEdit& e : edits) {
        if (e.source < 0 || static_cast<std::size_t>(e.source) >= cloud.size())
            throw Error(ErrorCode::invalid_parameter, "densify edit source out of range");
        (e.split ? splits : clones) += 1;
    }
    if (cloud.size() + clones + splits > config.max_splats) return out;

    cloud.resize_generation();
    std::vector<std::uint8_t> is_split(cloud.size(), 0);
    for (const DensifyEdit& e : edits)
        if (e.split) is_split[static_cast<std::size_t>(e.source)] = 1;

    // Clones adjust the parent in place so parent and child share opacity:
    // both at 1 - sqrt(1 - alpha), the pair composites back to alpha at the
    // splat center and rendering stays continuous through the edit.
    for (const DensifyEdit& e : edits) {
        if (e.split) continue;
        GaussianSplat& parent = cloud.splats[static_cast<std::size_t>(e.source)];
        const double alpha = parent.opacity();
        const double shared = 1.0 - std::sqrt(std::max(0.0, 1.0 - alpha));
        parent.opacity_logit = logit(std::clamp(shared, 1e-6, 1.0 - 1e-6));
        cloud.generation[static_cast<std::size_t>(e.source)] += 1;
    }

    SplatCloud next;
    next.splats.reserve(cloud.size() + clones + 2 * splits - splits);
    next.generation.reserve(next.splats.capacity());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        if (is_split[i]) continue;
        next.splats.push_back(cloud.splats[i]);
        next.generation.push_back(cloud.generation[i]);
        out.kept.push_back(static_cast<int>(i));
    }
    for (const DensifyEdit& e : edits) {
        const std::size_t src = static_cast<std::size_t>(e.source);
        const GaussianSplat& parent = cloud.splats[src];
        if (e.split) {
            const double shrink = std::log(config.split_scale_shrink);
            for (int child = 0; child < 2; ++child) {
                GaussianSplat s = parent;
                s.position = sample_splat(parent, rng.normal3());
                s.log_scale = parent.log_scale.array() - shrink;
                next.splats.push_back(std::move(s));
                next.generation.push_back(cloud.generation[src] + 1);
            }
        } else {
            next.splats.push_back(parent); // opacity already shared above
            next.generation.push_back(cloud.generation[src]);
        }
    }
    cloud = std::move(next);
    out.applied = true;
    return out;
}

std::vector<int> prune(const SplatCloud& cloud, const DensifyConfig& config) {
    std::vector<int> kept;
    kept.reserve(cloud.size());
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const GaussianSplat& s = cloud.splats[i];
        if (s.opacity() < config.opacity_prune_threshold) continue;
        if (s.scales().maxCoeff() > config.scale_prune_cap) continue;
        kept.push_back(static_cast<int>(i));
    }
    return kept;
}

void apply_prune(SplatCloud& cloud, const std::vector<int>& kept) {
    cloud.resize_generation();
    SplatCloud next;
    next.splats.reserve(kept.size());
    next.generation.reserve(kept.size());
    for (int i : kept) {
        next.splats.push_back(std::move(cloud.splats[static_cast<std::size_t>(i)]));
        next.generation.push_back(cloud.generation[static_cast<std::size_t>(i)]);
    }
    cloud = std::move(next);
}

double scene_extent(const TriangleMesh& mesh) {
    if (mesh.vertices.empty()) throw Error(ErrorCode::invalid_input, "empty mesh has no extent");
    Vec3 centroid = Vec3::Zero();
    for (const Vec3& v : mesh.vertices) centroid += v;
    centroid /= static_cast<double>(mesh.vertices.size());
    double extent = 0.0;
    for (const Vec3& v : mesh.vertices) extent = std::max(extent, (v - centroid).norm());
    return extent;
}

SplatCloud initialize_splats(const TriangleMesh& mesh, int sh_degree) {
    if (mesh.vertices.empty())
        throw Error(ErrorCode::invalid_input, "cannot initialize splats from an empty mesh");
    if (sh_degree < 0 || sh_degree > kMaxShDegree)
        throw Error(ErrorCode::invalid_parameter, "unsupported sh degree");

    std::vector<double> edge_sum(mesh.vertices.size(), 0.0);
    std::vector<int> edge_count(mesh.vertices.size(), 0);
    double global_sum = 0.0;
    int global_count = 0;
    for (const Triangle& t : mesh.triangles) {
        for (int k = 0; k < 3; ++k) {
            const std::uint32_t a = t[static_cast<std::size_t>(k)];
            const std::uint32_t b = t[static_cast<std::size_t>((k + 1) % 3)];
            const double len = (mesh.vertices[a] - mesh.vertices[b]).norm();
            edge_sum[a] += len;
            edge_count[a] += 1;
            edge_sum[b] += len;
            edge_count[b] += 1;
            global_sum += len;
            global_count += 1;
        }
    }
    const double global_mean = global_count > 0 ? global_sum / global_count : 1.0;

    SplatCloud cloud;
    cloud.splats.resize(mesh.vertices.size());
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i) {
        GaussianSplat& s = cloud.splats[i];
        s.position = mesh.vertices[i];
        const double spacing =
            edge_count[i] > 0 ? edge_sum[i] / edge_count[i] : global_mean;
        s.log_scale = Vec3::Constant(std::log(std::max(10.0 * kScaleFloor, 0.5 * spacing)));
        s.rotation = Vec4(1.0, 0.0, 0.0, 0.0);
        s.opacity_logit = logit(0.1);
        s.sh_coeffs.assign(static_cast<std::size_t>(sh_coeff_count(sh_degree)), Vec3::Zero());
    }
    cloud.resize_generation();
    return cloud;
}

namespace {

struct IntervalStats {
    std::vector<double> grad_norm_sum;
    std::vector<int> visible_count;
    std::vector<std::vector<double>> s2s_samples;

    void reset(std::size_t n) {
        grad_norm_sum.assign(n, 0.0);
        visible_count.assign(n, 0);
        s2s_samples.assign(n, {});
    }
};

} // namespace

TrainResult train(const TrainingViews& views, const MorphableModel& model,
                  const TrainConfig& config) {
    if (views.empty())
        throw Error(ErrorCode::invalid_input, "training needs at least one view");
    for (const TrainingView& v : views) {
        v.camera.validate();
        if (v.image.width != v.camera.width || v.image.height != v.camera.height ||
            v.image.channels != 3)
            throw Error(ErrorCode::invalid_input, "view image does not match its camera");
        if (v.mask.width != v.camera.width || v.mask.height != v.camera.height ||
            v.mask.channels != 1)
            throw Error(ErrorCode::invalid_input, "view mask does not match its camera");
    }
    model.validate();
    config.densify.validate();
    if (config.iterations < 0)
        throw Error(ErrorCode::invalid_parameter, "iterations must be >= 0");
    if (config.s2s_draws < 1)
        throw Error(ErrorCode::invalid_parameter, "s2s_draws must be >= 1");
    if (config.metrics_interval < 1)
        throw Error(ErrorCode::invalid_parameter, "metrics_interval must be >= 1");

    LossWeights weights = config.weights;
    if (weights.lambda_reg_schedule.decay_end_iteration <= 1)
        weights.lambda_reg_schedule.decay_end_iteration = std::max(1, config.iterations / 2);

    TrainResult result;
    result.surface = SurfaceParams::zero(model);
    TriangleMesh mesh = evaluate_surface(model, result.surface);
    const double extent = scene_extent(mesh);
    result.cloud = initialize_splats(mesh, config.sh_degree);

    SplatOptimizer splat_opt(config.adam);
    SurfaceOptimizer surface_opt(model, config.adam);

    Rng root(config.seed);
    Rng rng_views = root.fork(1);
    Rng rng_background = root.fork(2);
    Rng rng_s2s = root.fork(3);
    Rng rng_densify = root.fork(4);

    const bool surface_term = config.use_surface_loss && weights.lambda_s2s != 0.0;
    IntervalStats stats;
    stats.reset(result.cloud.size());
    double last_tau = 0.0;

    for (int step = 1; step <= config.iterations; ++step) {
        const int schedule_iter = step - 1;
        mesh = evaluate_surface(model, result.surface);
        const BvhIndex index = BvhIndex::build(mesh);

        const TrainingView& view = views[rng_views.index(views.size())];
        const Vec3 background = rng_background.uniform3(0.0, 1.0);

        const RenderedImage rendered = render(result.cloud, view.camera, background);
        const double rgb = rgb_loss(rendered, view.image, view.mask, background,
                                    weights.lambda_ssim);
        const Image upstream = rgb_loss_backward(rendered, view.image, view.mask, background,
                                                 weights.lambda_ssim, weights.lambda_rgb);
        RenderGrads grads = render_backward(result.cloud, view.camera, background, upstream);

        double s2s = 0.0;
        std::vector<Vec3> vertex_grads(mesh.vertex_count(), Vec3::Zero());
        SurfaceLossResult sres;
        if (surface_term) {
            std::vector<std::vector<Vec3>> draws(result.cloud.size());
            if (config.surface_mode == SurfaceLossMode::splat_to_surface)
                for (auto& d : draws) {
                    d.reserve(static_cast<std::size_t>(config.s2s_draws));
                    for (int j = 0; j < config.s2s_draws; ++j) d.push_back(rng_s2s.normal3());
                }
            sres = surface_loss(result.cloud, mesh, index, model, draws, config.surface_mode);
            s2s = sres.loss;
            surface_loss_backward(result.cloud, mesh, sres, draws, config.surface_mode,
                                  weights.lambda_s2s, grads.splats, vertex_grads);
        }

        const double reg = regularization_energy(result.surface, weights.reg_weights);
        const LossBreakdown breakdown = total_loss(rgb, s2s, reg, weights, schedule_iter);
        if (!std::isfinite(breakdown.total)) {
            if (config.on_divergence)
                config.on_divergence(step, result.cloud, result.surface);
            throw Error(ErrorCode::divergence,
                        "total loss non-finite at iteration " + std::to_string(step));
        }

        splat_opt.step(result.cloud, grads.splats, config.learning_rates, extent);
        if (config.optimize_surface) {
            SurfaceParamsGrad sgrad = evaluate_surface_backward(model, result.surface,
                                                                vertex_grads);
            sgrad.accumulate(regularization_backward(result.surface, weights.reg_weights,
                                                     breakdown.lambda_reg));
            surface_opt.step(result.surface, sgrad, config.learning_rates);
        }

        // Interval statistics for the densification policies. View-space
        // norms are rescaled from pixels to half-viewport units so the
        // threshold is resolution independent.
        const double half_viewport = 0.5 * std::max(view.camera.width, view.camera.height);
        for (std::size_t i = 0; i < result.cloud.size(); ++i) {
            stats.grad_norm_sum[i] += grads.mean2d_grad_norm[i] * half_viewport;
            stats.visible_count[i] += grads.visible[i];
            if (surface_term && sres.in_face_region[i])
                stats.s2s_samples[i].insert(stats.s2s_samples[i].end(),
                                            sres.per_sample[i].begin(),
                                            sres.per_sample[i].end());
        }

        const bool densify_now = step % config.densify.interval == 0 &&
                                 step >= config.densify.window_start &&
                                 step <= config.densify.window_end;
        if (densify_now) {
            std::vector<DensifyEdit> edits;
            if (config.view_space_densify_enabled) {
                std::vector<double> mean_grad(result.cloud.size(), 0.0);
                for (std::size_t i = 0; i < result.cloud.size(); ++i)
                    if (stats.visible_count[i] > 0)
                        mean_grad[i] = stats.grad_norm_sum[i] / stats.visible_count[i];
                edits = view_space_densify(result.cloud, mean_grad, config.densify);
            }
            if (config.world_space_densify_enabled && surface_term) {
                WorldDensifySelection world =
                    world_space_densify(result.cloud, stats.s2s_samples, config.densify);
                if (world.tau_s2s > 0.0) last_tau = world.tau_s2s;
                edits = merge_edits(edits, world.edits);
            }

            const DensifyOutcome outcome =
                apply_densify(result.cloud, edits, config.densify, rng_densify);
            if (!outcome.applied && !edits.empty())
                result.warnings.push_back("densification skipped at iteration " +
                                          std::to_string(step) + ": max_splats would be exceeded");

            const std::vector<int> survivors = prune(result.cloud, config.densify);
            const bool pruned = survivors.size() != result.cloud.size();
            if (pruned) apply_prune(result.cloud, survivors);

            if (outcome.applied || pruned) {
                // Optimizer moments follow the same reindexing: survivors of
                // the original cloud keep state, appended children start
                // fresh (they sit after every original by construction).
                std::vector<int> remap;
                if (outcome.applied) {
                    for (int j : survivors) {
                        if (static_cast<std::size_t>(j) < outcome.kept.size())
                            remap.push_back(outcome.kept[static_cast<std::size_t>(j)]);
                    }
                } else {
                    remap = survivors;
                }
                splat_opt.remap(remap, result.cloud);
            }
            stats.reset(result.cloud.size());
        }

        if (step % config.metrics_interval == 0 || step == config.iterations || step == 1) {
            MetricsRecord rec;
            rec.iteration = step;
            rec.loss_total = breakdown.total;
            rec.loss_rgb = breakdown.rgb;
            rec.loss_s2s = breakdown.s2s;
            rec.loss_reg = breakdown.reg;
            rec.lambda_reg = breakdown.lambda_reg;
            rec.splat_count = result.cloud.size();
            rec.tau_s2s = last_tau;
            result.metrics.push_back(rec);
        }
        if (config.on_iteration) config.on_iteration(step, result.cloud, result.surface);
    }

    result.final_mesh = evaluate_surface(model, result.surface);
    return result;
}

} // namespace surfsplat
