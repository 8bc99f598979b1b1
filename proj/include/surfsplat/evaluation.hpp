// Copyright Contributors to the SurfSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "surfsplat/bvh.hpp"
#include "surfsplat/gaussian.hpp"
#include "surfsplat/image.hpp"
#include "surfsplat/morphable.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace surfsplat {

/// Similarity transform aligning a point set onto a mesh, found by
/// point-to-point ICP with a closed-form orthogonal alignment step.
struct AlignmentResult {
    Vec4 rotation = Vec4(1.0, 0.0, 0.0, 0.0); // unit quaternion
    Vec3 translation = Vec3::Zero();
    double scale = 1.0;
    /// Point-to-mesh RMS before any step, then after each iteration.
    /// Non-increasing when no correspondence rejection is active.
    std::vector<double> rms_history;

    Vec3 apply(const Vec3& p) const;
};

/// Aligns `source_points` onto `target_mesh`. Starts from a centroid-to-
/// centroid shift, runs at most `max_iterations` rounds, and stops when the
/// RMS improves by less than `tolerance`. `rms_history[0]` measures the
/// centroid-initialized transform.
/// `keep_fraction` < 1 drops the worst correspondences each round (noisy
/// data escape hatch; breaks the monotonicity guarantee). Throws
/// alignment_failure for fewer than 3 points or a degenerate (collinear or
/// coincident) source configuration.
AlignmentResult icp_align(const std::vector<Vec3>& source_points,
                          const TriangleMesh& target_mesh, bool with_scale = true,
                          int max_iterations = 50, double tolerance = 1e-6,
                          double keep_fraction = 1.0);

/// Point-to-surface distance statistics. The paper-style headline number is
/// the mean absolute distance; the literal mean of squares is reported
/// alongside under its own name (see Open Questions in the project notes).
struct DistanceStats {
    double mean = 0.0;         // mean |d|
    double mean_squared = 0.0; // mean d^2
    double median = 0.0;       // midpoint convention for even counts
    double m90 = 0.0;          // max after discarding the top decile (nearest rank)
    std::vector<double> raw;   // per-sample distances, input order
};

/// Nearest-rank percentile: sorted[ceil(fraction * n) - 1]. `fraction` in
/// (0, 1].
double nearest_rank_percentile(std::vector<double> values, double fraction);

/// True Euclidean distance from every sample to the predicted surface.
/// `index` must have been built over `predicted`.
DistanceStats mesh_distance_stats(const std::vector<Vec3>& gt_samples,
                                  const TriangleMesh& predicted, const BvhIndex& index);

/// Uniform-area surface samples, deterministic per seed.
std::vector<Vec3> sample_mesh_surface(const TriangleMesh& mesh, std::size_t count,
                                      std::uint64_t seed);

/// Root-mean-square distance between corresponding vertices.
double vertex_rmse(const std::vector<Vec3>& a, const std::vector<Vec3>& b);

struct ViewMetrics {
    double l1 = 0.0;
    double ssim = 0.0;
    double psnr = 0.0;
};

struct ImageMetricsReport {
    std::vector<ViewMetrics> per_view;
    ViewMetrics mean; // arithmetic means over the rows
};

/// L1/SSIM/PSNR per view plus aggregate means. When `masks` is non-empty it
/// must match `targets` pairwise; masked-out target pixels are replaced by
/// black to mirror the black-background evaluation renders.
ImageMetricsReport image_metrics_report(const std::vector<Image>& rendered,
                                        const std::vector<Image>& targets,
                                        const std::vector<Image>& masks = {});

/// Aligned plain-text table for terminals and logs.
std::string format_report(const ImageMetricsReport& report);

/// 95th-percentile (nearest rank) over splats of each splat's maximum
/// surface-distance sample; large values flag spike artifacts sticking out
/// of the surface. Draws are deterministic per seed.
double spike_metric(const SplatCloud& cloud, const TriangleMesh& mesh, const BvhIndex& index,
                    int draws_per_splat, std::uint64_t seed);

/// Mean over splats of the Monte-Carlo mean surface distance.
double mean_splat_surface_distance(const SplatCloud& cloud, const TriangleMesh& mesh,
                                   const BvhIndex& index, int draws_per_splat,
                                   std::uint64_t seed);

} // namespace surfsplat
