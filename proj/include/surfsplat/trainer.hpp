// Copyright Contributors to the SurfSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "surfsplat/camera.hpp"
#include "surfsplat/losses.hpp"
#include "surfsplat/morphable.hpp"
#include "surfsplat/optimizer.hpp"
#include "surfsplat/renderer.hpp"
#include "surfsplat/rng.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace surfsplat {

/// Densification and pruning policy. Thresholds are in world units where
/// noted; defaults assume a scene of roughly unit extent (the synthetic
/// scenes are built that way) and are all config-exposed for other scales.
struct DensifyConfig {
    int interval = 100;      // iterations between densify+prune events
    int window_start = 500;  // first iteration eligible for densification
    int window_end = 7000;   // last iteration eligible for densification
    /// Mean screen-space positional gradient norm (in half-viewport units,
    /// i.e. pixels / (0.5 * max(width, height))) above which a splat
    /// densifies.
    double view_grad_threshold = 2e-4;
    /// World-unit scale separating clone (small splats) from split.
    double split_scale_threshold = 0.01;
    double split_scale_shrink = 1.6; // child scales = parent scales / this
    double tau_s2s_multiplier = 2.0; // k in tau = max(floor, k * median)
    double tau_s2s_floor = 1e-3;     // world units
    double opacity_prune_threshold = 0.005;
    double scale_prune_cap = 1.0;    // world units; prune any axis above this
    std::size_t max_splats = 100000;

    void validate() const; // throws invalid_parameter on nonsense values
};

/// One densification decision. `split` removes the source and samples two
/// children from its density; a clone keeps the source and appends a copy,
/// sharing opacity so the combined center contribution is preserved.
struct DensifyEdit {
    int source = -1;
    bool split = false;
};

/// Splats whose mean view-space positional gradient exceeds the threshold.
/// `mean_grad_norm` is the per-splat mean over views in half-viewport units.
std::vector<DensifyEdit> view_space_densify(const SplatCloud& cloud,
                                            const std::vector<double>& mean_grad_norm,
                                            const DensifyConfig& config);

struct WorldDensifySelection {
    std::vector<DensifyEdit> edits;
    double tau_s2s = 0.0; // threshold actually applied; 0 when no samples
};

/// Splats with any surface-distance sample beyond tau_s2s, where tau_s2s =
/// max(floor, k * median) over every sample of every face-region splat in
/// `sample_distances` (off-face splats have empty entries and never
/// densify).
WorldDensifySelection world_space_densify(const SplatCloud& cloud,
                                          const std::vector<std::vector<double>>& sample_distances,
                                          const DensifyConfig& config);

/// Union of two edit lists with one edit per source splat.
std::vector<DensifyEdit> merge_edits(const std::vector<DensifyEdit>& a,
                                     const std::vector<DensifyEdit>& b);

struct DensifyOutcome {
    bool applied = false;
    /// kept[i] = source index of surviving original i; children are
    /// appended after all survivors and start with fresh optimizer state.
    std::vector<int> kept;
};

/// Applies the edits in place. Refuses (applied = false, cloud untouched)
/// when the result would exceed max_splats. Split children draw positions
/// from the parent's density via `rng`.
DensifyOutcome apply_densify(SplatCloud& cloud, const std::vector<DensifyEdit>& edits,
                             const DensifyConfig& config, Rng& rng);

/// Indices surviving the opacity floor and the world-space scale cap.
std::vector<int> prune(const SplatCloud& cloud, const DensifyConfig& config);

/// Drops splats not listed in `kept` (ascending order), in place.
void apply_prune(SplatCloud& cloud, const std::vector<int>& kept);

struct TrainConfig {
    int iterations = 10000;
    int sh_degree = 2;
    std::uint64_t seed = 0;
    int s2s_draws = 8; // Monte-Carlo samples per splat per iteration

    bool optimize_surface = true;  // update SurfaceParams jointly
    bool use_surface_loss = true;  // apply the lambda_s2s term at all
    SurfaceLossMode surface_mode = SurfaceLossMode::splat_to_surface;
    bool view_space_densify_enabled = true;
    bool world_space_densify_enabled = true;

    LossWeights weights;            // lambda_reg decay_end <= 1 resolves to iterations/2
    LearningRates learning_rates;
    AdamConfig adam;
    DensifyConfig densify;

    int metrics_interval = 10;
    /// Observer hooks; both may be empty. `on_iteration` fires after the
    /// optimizer step (and densify/prune when scheduled) of each iteration.
    std::function<void(int, const SplatCloud&, const SurfaceParams&)> on_iteration;
    /// Fired once with the last finite state before a divergence abort.
    std::function<void(int, const SplatCloud&, const SurfaceParams&)> on_divergence;
};

struct MetricsRecord {
    int iteration = 0;
    double loss_total = 0.0;
    double loss_rgb = 0.0;
    double loss_s2s = 0.0; // unweighted mean face-splat surface distance
    double loss_reg = 0.0;
    double lambda_reg = 0.0;
    std::size_t splat_count = 0;
    double tau_s2s = 0.0; // most recent world-space threshold; 0 before one exists
};

struct TrainResult {
    SplatCloud cloud;
    SurfaceParams surface;
    TriangleMesh final_mesh; // surface evaluated at the final parameters
    std::vector<MetricsRecord> metrics;
    std::vector<std::string> warnings; // e.g. skipped densifications
};

/// Largest distance from the vertex centroid; scales the position learning
/// rate and nothing else.
double scene_extent(const TriangleMesh& mesh);

/// One splat per mesh vertex: position at the vertex, isotropic scale from
/// half the mean incident edge length, identity rotation, opacity 0.1, and
/// degree-0 mid-gray color (all SH coefficients zero).
SplatCloud initialize_splats(const TriangleMesh& mesh, int sh_degree);

/// Joint splat + surface optimization. Each iteration: evaluate the
/// surface, rebuild its spatial index, pick a random view, render over a
/// random background, evaluate the combined loss, backpropagate, step, and
/// on the densification schedule clone/split/prune. Deterministic for a
/// fixed config. Throws divergence when the total loss goes non-finite.
TrainResult train(const TrainingViews& views, const MorphableModel& model,
                  const TrainConfig& config);

} // namespace surfsplat
