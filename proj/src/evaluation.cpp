// Copyright Contributors to the SurfSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "surfsplat/evaluation.hpp"

#include "surfsplat/error.hpp"
#include "surfsplat/geometry.hpp"
#include "surfsplat/losses.hpp"
#include "surfsplat/rng.hpp"
#include "surfsplat/ssim.hpp"
#include "surfsplat/surface_distance.hpp"

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>

namespace surfsplat {

Vec3 AlignmentResult::apply(const Vec3& p) const {
    return scale * (rotation_matrix(rotation) * p) + translation;
}

namespace {

double point_to_mesh_rms(const std::vector<Vec3>& points, const AlignmentResult& transform,
                         const TriangleMesh& mesh, const BvhIndex& index) {
    double sum = 0.0;
    for (const Vec3& p : points) {
        const double d = index.closest_point(mesh, transform.apply(p)).distance;
        sum += d * d;
    }
    return std::sqrt(sum / static_cast<double>(points.size()));
}

void require_non_degenerate(const std::vector<Vec3>& points) {
    if (points.size() < 3)
        throw Error(ErrorCode::alignment_failure, "icp needs at least 3 points");
    Vec3 centroid = Vec3::Zero();
    for (const Vec3& p : points) centroid += p;
    centroid /= static_cast<double>(points.size());
    Mat3 cov = Mat3::Zero();
    for (const Vec3& p : points) cov += (p - centroid) * (p - centroid).transpose();
    const Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
    // Coincident points have no spread at all; collinear points leave the
    // rotation about their axis unconstrained.
    const double top = eig.eigenvalues()[2];
    if (top <= 0.0 || eig.eigenvalues()[1] <= 1e-12 * top)
        throw Error(ErrorCode::alignment_failure, "source points are collinear or coincident");
}

} // namespace

AlignmentResult icp_align(const std::vector<Vec3>& source_points,
                          const TriangleMesh& target_mesh, bool with_scale,
                          int max_iterations, double tolerance, double keep_fraction) {
    require_non_degenerate(source_points);
    if (keep_fraction <= 0.0 || keep_fraction > 1.0)
        throw Error(ErrorCode::invalid_parameter, "keep_fraction must be in (0, 1]");
    const BvhIndex index = BvhIndex::build(target_mesh);

    const std::size_t n = source_points.size();
    Eigen::Matrix3Xd src(3, static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) src.col(static_cast<Eigen::Index>(i)) = source_points[i];

    // Centroid pre-alignment: a large global offset would otherwise collapse
    // every correspondence onto the near side of the target and strand the
    // iteration in a wrong basin.
    Vec3 source_centroid = Vec3::Zero();
    for (const Vec3& p : source_points) source_centroid += p;
    source_centroid /= static_cast<double>(n);
    Vec3 target_centroid = Vec3::Zero();
    for (const Vec3& v : target_mesh.vertices) target_centroid += v;
    target_centroid /= static_cast<double>(target_mesh.vertices.size());

    AlignmentResult result;
    result.translation = target_centroid - source_centroid;
    result.rms_history.push_back(point_to_mesh_rms(source_points, result, target_mesh, index));

    for (int iteration = 0; iteration < max_iterations; ++iteration) {
        std::vector<Vec3> matched(n);
        std::vector<double> distances(n);
        for (std::size_t i = 0; i < n; ++i) {
            const ClosestPointResult cp =
                index.closest_point(target_mesh, result.apply(source_points[i]));
            matched[i] = cp.point;
            distances[i] = cp.distance;
        }

        std::vector<std::size_t> used(n);
        std::iota(used.begin(), used.end(), std::size_t{0});
        if (keep_fraction < 1.0) {
            const std::size_t keep = std::max<std::size_t>(
                3, static_cast<std::size_t>(std::ceil(keep_fraction * static_cast<double>(n))));
            std::sort(used.begin(), used.end(), [&](std::size_t a, std::size_t b) {
                return distances[a] < distances[b];
            });
            used.resize(std::min(keep, n));
            std::sort(used.begin(), used.end());
        }

        Eigen::Matrix3Xd s(3, static_cast<Eigen::Index>(used.size()));
        Eigen::Matrix3Xd d(3, static_cast<Eigen::Index>(used.size()));
        for (std::size_t i = 0; i < used.size(); ++i) {
            s.col(static_cast<Eigen::Index>(i)) = src.col(static_cast<Eigen::Index>(used[i]));
            d.col(static_cast<Eigen::Index>(i)) = matched[used[i]];
        }

        const Mat4 t = Eigen::umeyama(s, d, with_scale);
        const Mat3 sr = t.topLeftCorner<3, 3>();
        const double scale = with_scale ? std::cbrt(sr.determinant()) : 1.0;
        if (!(scale > 0.0) || !std::isfinite(scale))
            throw Error(ErrorCode::alignment_failure, "alignment step produced a bad scale");
        result.scale = scale;
        result.rotation = quaternion_from_matrix(sr / scale);
        result.translation = t.topRightCorner<3, 1>();

        const double rms = point_to_mesh_rms(source_points, result, target_mesh, index);
        const double previous = result.rms_history.back();
        result.rms_history.push_back(rms);
        if (std::abs(previous - rms) < tolerance) break;
    }
    return result;
}

double nearest_rank_percentile(std::vector<double> values, double fraction) {
    if (values.empty())
        throw Error(ErrorCode::invalid_input, "percentile of an empty set");
    if (fraction <= 0.0 || fraction > 1.0)
        throw Error(ErrorCode::invalid_parameter, "percentile fraction must be in (0, 1]");
    const std::size_t rank = static_cast<std::size_t>(
        std::ceil(fraction * static_cast<double>(values.size())));
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(rank - 1),
                     values.end());
    return values[rank - 1];
}

DistanceStats mesh_distance_stats(const std::vector<Vec3>& gt_samples,
                                  const TriangleMesh& predicted, const BvhIndex& index) {
    if (gt_samples.empty())
        throw Error(ErrorCode::invalid_input, "no ground-truth samples given");

    DistanceStats stats;
    stats.raw.reserve(gt_samples.size());
    for (const Vec3& p : gt_samples) {
        const double d = index.closest_point(predicted, p).distance;
        stats.raw.push_back(d);
        stats.mean += d;
        stats.mean_squared += d * d;
    }
    const double n = static_cast<double>(stats.raw.size());
    stats.mean /= n;
    stats.mean_squared /= n;

    std::vector<double> sorted = stats.raw;
    std::sort(sorted.begin(), sorted.end());
    const std::size_t half = sorted.size() / 2;
    stats.median = sorted.size() % 2 == 1 ? sorted[half]
                                          : 0.5 * (sorted[half - 1] + sorted[half]);
    stats.m90 = nearest_rank_percentile(stats.raw, 0.9);
    return stats;
}

std::vector<Vec3> sample_mesh_surface(const TriangleMesh& mesh, std::size_t count,
                                      std::uint64_t seed) {
    if (mesh.triangles.empty())
        throw Error(ErrorCode::invalid_input, "cannot sample an empty mesh");

    std::vector<double> cumulative_area;
    cumulative_area.reserve(mesh.triangles.size());
    double total = 0.0;
    for (const Triangle& t : mesh.triangles) {
        const Vec3& a = mesh.vertices[t[0]];
        const Vec3& b = mesh.vertices[t[1]];
        const Vec3& c = mesh.vertices[t[2]];
        total += 0.5 * (b - a).cross(c - a).norm();
        cumulative_area.push_back(total);
    }
    if (total <= 0.0)
        throw Error(ErrorCode::invalid_input, "mesh has zero surface area");

    Rng rng(seed);
    std::vector<Vec3> samples;
    samples.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        const double pick = rng.uniform(0.0, total);
        const std::size_t tri = static_cast<std::size_t>(
            std::lower_bound(cumulative_area.begin(), cumulative_area.end(), pick) -
            cumulative_area.begin());
        const Triangle& t = mesh.triangles[std::min(tri, mesh.triangles.size() - 1)];
        // sqrt trick for uniform barycentric coordinates.
        const double r1 = std::sqrt(rng.uniform(0.0, 1.0));
        const double r2 = rng.uniform(0.0, 1.0);
        const double u = 1.0 - r1;
        const double v = r1 * (1.0 - r2);
        const double w = r1 * r2;
        samples.push_back(u * mesh.vertices[t[0]] + v * mesh.vertices[t[1]] +
                          w * mesh.vertices[t[2]]);
    }
    return samples;
}

double vertex_rmse(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
    if (a.size() != b.size() || a.empty())
        throw Error(ErrorCode::invalid_input, "vertex sets must match and be non-empty");
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += (a[i] - b[i]).squaredNorm();
    return std::sqrt(sum / static_cast<double>(a.size()));
}

ImageMetricsReport image_metrics_report(const std::vector<Image>& rendered,
                                        const std::vector<Image>& targets,
                                        const std::vector<Image>& masks) {
    if (rendered.size() != targets.size() || rendered.empty())
        throw Error(ErrorCode::invalid_input, "rendered/target view counts must match");
    if (!masks.empty() && masks.size() != targets.size())
        throw Error(ErrorCode::invalid_input, "mask count must match the views");

    ImageMetricsReport report;
    for (std::size_t i = 0; i < rendered.size(); ++i) {
        if (!rendered[i].same_shape(targets[i]))
            throw Error(ErrorCode::invalid_input, "rendered/target shape mismatch");
        const Image target = masks.empty()
                                 ? targets[i]
                                 : masked_target(targets[i], masks[i], Vec3::Zero());
        ViewMetrics m;
        double l1 = 0.0;
        for (std::size_t k = 0; k < target.data.size(); ++k)
            l1 += std::abs(rendered[i].data[k] - target.data[k]);
        m.l1 = l1 / static_cast<double>(target.data.size());
        m.ssim = ssim(rendered[i], target);
        m.psnr = psnr(rendered[i], target);
        report.per_view.push_back(m);
    }

    for (const ViewMetrics& m : report.per_view) {
        report.mean.l1 += m.l1;
        report.mean.ssim += m.ssim;
        report.mean.psnr += m.psnr;
    }
    const double n = static_cast<double>(report.per_view.size());
    report.mean.l1 /= n;
    report.mean.ssim /= n;
    report.mean.psnr /= n;
    return report;
}

std::string format_report(const ImageMetricsReport& report) {
    std::string out = "view        L1       SSIM       PSNR\n";
    char line[128];
    for (std::size_t i = 0; i < report.per_view.size(); ++i) {
        const ViewMetrics& m = report.per_view[i];
        std::snprintf(line, sizeof(line), "%4zu  %8.5f  %9.6f  %9.4f\n", i, m.l1, m.ssim,
                      m.psnr);
        out += line;
    }
    std::snprintf(line, sizeof(line), "mean  %8.5f  %9.6f  %9.4f\n", report.mean.l1,
                  report.mean.ssim, report.mean.psnr);
    out += line;
    return out;
}

namespace {

std::vector<double> per_splat_stat(const SplatCloud& cloud, const TriangleMesh& mesh,
                                   const BvhIndex& index, int draws_per_splat,
                                   std::uint64_t seed, bool take_max) {
    if (draws_per_splat < 1)
        throw Error(ErrorCode::invalid_parameter, "draws_per_splat must be >= 1");
    Rng rng(seed);
    std::vector<double> stat;
    stat.reserve(cloud.size());
    std::vector<Vec3> eps(static_cast<std::size_t>(draws_per_splat));
    for (const GaussianSplat& splat : cloud.splats) {
        for (Vec3& e : eps) e = rng.normal3();
        const SplatSurfaceDistance d = splat_to_surface_distance(index, mesh, splat, eps);
        stat.push_back(take_max
                           ? *std::max_element(d.per_sample.begin(), d.per_sample.end())
                           : d.mean);
    }
    return stat;
}

} // namespace

double spike_metric(const SplatCloud& cloud, const TriangleMesh& mesh, const BvhIndex& index,
                    int draws_per_splat, std::uint64_t seed) {
    if (cloud.empty()) throw Error(ErrorCode::invalid_input, "spike metric of an empty cloud");
    return nearest_rank_percentile(
        per_splat_stat(cloud, mesh, index, draws_per_splat, seed, true), 0.95);
}

double mean_splat_surface_distance(const SplatCloud& cloud, const TriangleMesh& mesh,
                                   const BvhIndex& index, int draws_per_splat,
                                   std::uint64_t seed) {
    if (cloud.empty())
        throw Error(ErrorCode::invalid_input, "surface distance of an empty cloud");
    const std::vector<double> means =
        per_splat_stat(cloud, mesh, index, draws_per_splat, seed, false);
    return std::accumulate(means.begin(), means.end(), 0.0) /
           static_cast<double>(means.size());
}

} // namespace surfsplat
