// Copyright Contributors to the SurfSplat Project
// SPDX-License-Identifier: Apache-2.0

#include <surfsplat/error.hpp>
#include <surfsplat/evaluation.hpp>
#include <surfsplat/geometry.hpp>
#include <surfsplat/rng.hpp>

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

using namespace surfsplat;

namespace {

// Lat-long sphere with enough structure for alignment tests.
TriangleMesh sphere_mesh(double radius, int rings = 8, int segments = 12) {
    TriangleMesh mesh;
    mesh.vertices.push_back(Vec3(0, 0, radius));
    for (int r = 1; r < rings; ++r) {
        const double phi = std::numbers::pi * r / rings;
        for (int s = 0; s < segments; ++s) {
            const double theta = 2.0 * std::numbers::pi * s / segments;
            mesh.vertices.push_back(radius * Vec3(std::sin(phi) * std::cos(theta),
                                                  std::sin(phi) * std::sin(theta),
                                                  std::cos(phi)));
        }
    }
    mesh.vertices.push_back(Vec3(0, 0, -radius));
    const auto ring_vertex = [&](int r, int s) -> std::uint32_t {
        return 1 + static_cast<std::uint32_t>((r - 1) * segments + (s % segments));
    };
    for (int s = 0; s < segments; ++s)
        mesh.triangles.push_back({0, ring_vertex(1, s), ring_vertex(1, s + 1)});
    for (int r = 1; r + 1 < rings; ++r)
        for (int s = 0; s < segments; ++s) {
            const std::uint32_t a = ring_vertex(r, s), b = ring_vertex(r, s + 1);
            const std::uint32_t c = ring_vertex(r + 1, s), d = ring_vertex(r + 1, s + 1);
            mesh.triangles.push_back({a, c, b});
            mesh.triangles.push_back({b, c, d});
        }
    const std::uint32_t south = static_cast<std::uint32_t>(mesh.vertices.size() - 1);
    for (int s = 0; s < segments; ++s)
        mesh.triangles.push_back({south, ring_vertex(rings - 1, s + 1), ring_vertex(rings - 1, s)});
    mesh.recompute_normals();
    return mesh;
}

// Radially perturbed sphere: no rotational symmetry, so a similarity
// transform between two copies is uniquely recoverable.
TriangleMesh bumpy_mesh(int rings = 24, int segments = 36) {
    TriangleMesh mesh = sphere_mesh(1.0, rings, segments);
    for (Vec3& v : mesh.vertices) {
        const double f = 1.0 + 0.18 * std::sin(1.7 * v.x() + 0.3) * std::sin(2.3 * v.y() - 0.5) +
                         0.12 * std::sin(1.1 * v.z() + 2.0);
        v *= f;
    }
    mesh.recompute_normals();
    return mesh;
}

TriangleMesh transformed(const TriangleMesh& mesh, double scale, const Vec4& quat,
                         const Vec3& translation) {
    TriangleMesh out = mesh;
    const Mat3 r = rotation_matrix(quat);
    for (Vec3& v : out.vertices) v = scale * (r * v) + translation;
    out.recompute_normals();
    return out;
}

TriangleMesh big_plane() {
    TriangleMesh mesh;
    mesh.vertices = {{-50, -50, 0}, {50, -50, 0}, {50, 50, 0}, {-50, 50, 0}};
    mesh.triangles = {{0, 1, 2}, {0, 2, 3}};
    mesh.recompute_normals();
    return mesh;
}

} // namespace

TEST_CASE("icp on an already aligned set is the identity") {
    const TriangleMesh mesh = sphere_mesh(1.0);
    const AlignmentResult a = icp_align(mesh.vertices, mesh);
    CHECK(a.rms_history.back() < 1e-9);
    CHECK((a.translation).norm() < 1e-9);
    CHECK(std::abs(a.scale - 1.0) < 1e-9);
    CHECK(std::abs(std::abs(a.rotation[0]) - 1.0) < 1e-9);
}

TEST_CASE("icp recovers a pure translation exactly") {
    const TriangleMesh source = bumpy_mesh();
    const TriangleMesh target =
        transformed(source, 1.0, Vec4(1, 0, 0, 0), Vec3(1.0, 2.0, 3.0));
    const AlignmentResult a = icp_align(source.vertices, target, true, 300, 1e-12);
    CHECK((a.translation - Vec3(1.0, 2.0, 3.0)).norm() < 1e-6);
    CHECK(std::abs(a.scale - 1.0) < 1e-6);
    CHECK(a.rms_history.back() < 1e-6);
}

TEST_CASE("icp converges for a 10 degree rotation with offset and scale") {
    const TriangleMesh source = bumpy_mesh();
    const double angle = 10.0 * std::numbers::pi / 180.0;
    const Vec4 q(std::cos(angle / 2), 0.0, std::sin(angle / 2) * 0.6,
                 std::sin(angle / 2) * 0.8);
    const TriangleMesh target = transformed(source, 1.3, q, Vec3(0.2, -0.1, 0.15));

    const AlignmentResult a = icp_align(source.vertices, target, true, 3000, 1e-12);
    CHECK(a.rms_history.back() < 1e-8);
    CHECK(a.scale == doctest::Approx(1.3).epsilon(1e-7));

    // Brute-force residual: every transformed source vertex must coincide
    // with its rigidly moved counterpart.
    const Mat3 r_true = rotation_matrix(q);
    double worst = 0.0;
    for (std::size_t i = 0; i < source.vertices.size(); ++i) {
        const Vec3 expected = 1.3 * (r_true * source.vertices[i]) + Vec3(0.2, -0.1, 0.15);
        worst = std::max(worst, (a.apply(source.vertices[i]) - expected).norm());
    }
    CHECK(worst < 1e-6);
}

TEST_CASE("icp rms history never increases") {
    const TriangleMesh source = sphere_mesh(1.0);
    const double angle = 25.0 * std::numbers::pi / 180.0;
    const TriangleMesh target = transformed(
        source, 1.0, Vec4(std::cos(angle / 2), std::sin(angle / 2), 0, 0), Vec3(0.3, 0.3, -0.2));
    const AlignmentResult a = icp_align(source.vertices, target, false);
    REQUIRE(a.rms_history.size() >= 2);
    for (std::size_t i = 1; i < a.rms_history.size(); ++i)
        CHECK(a.rms_history[i] <= a.rms_history[i - 1] + 1e-12);
}

TEST_CASE("icp rejects degenerate point sets") {
    const TriangleMesh mesh = sphere_mesh(1.0);
    CHECK_THROWS_AS(icp_align({Vec3(0, 0, 0), Vec3(1, 0, 0)}, mesh), Error);
    const std::vector<Vec3> collinear = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(2, 0, 0),
                                         Vec3(3, 0, 0)};
    CHECK_THROWS_AS(icp_align(collinear, mesh), Error);
}

TEST_CASE("nearest-rank m90 equals the sort-and-trim oracle on random arrays") {
    Rng rng(13);
    for (int trial = 0; trial < 10000; ++trial) {
        const std::size_t n = 1 + rng.index(50);
        std::vector<double> values(n);
        for (double& v : values) v = rng.uniform(0.0, 100.0);

        // Oracle: sort ascending, discard the top 10% (count floor(n/10)),
        // the maximum of the rest is the nearest-rank 90th percentile.
        std::vector<double> sorted = values;
        std::sort(sorted.begin(), sorted.end());
        const std::size_t rank = static_cast<std::size_t>(
            std::ceil(0.9 * static_cast<double>(n)));
        const double oracle = sorted[rank - 1];

        CHECK(nearest_rank_percentile(values, 0.9) == oracle);
    }
}

TEST_CASE("mesh_distance_stats on constructed fields") {
    const TriangleMesh plane = big_plane();
    const BvhIndex index = BvhIndex::build(plane);

    SUBCASE("samples on the surface give all-zero stats") {
        std::vector<Vec3> on{{0.5, 0.5, 0}, {-3, 2, 0}, {10, -10, 0}};
        const DistanceStats s = mesh_distance_stats(on, plane, index);
        CHECK(s.mean == 0.0);
        CHECK(s.mean_squared == 0.0);
        CHECK(s.median == 0.0);
        CHECK(s.m90 == 0.0);
    }
    SUBCASE("distances one through ten") {
        std::vector<Vec3> samples;
        for (int i = 1; i <= 10; ++i)
            samples.push_back(Vec3(static_cast<double>(i), 0.0, static_cast<double>(i)));
        const DistanceStats s = mesh_distance_stats(samples, plane, index);
        CHECK(s.mean == doctest::Approx(5.5).epsilon(1e-12));
        CHECK(s.mean_squared == doctest::Approx(38.5).epsilon(1e-12));
        CHECK(s.median == doctest::Approx(5.5).epsilon(1e-12));
        CHECK(s.m90 == doctest::Approx(9.0).epsilon(1e-12));
        REQUIRE(s.raw.size() == 10);
        CHECK(s.raw[2] == doctest::Approx(3.0).epsilon(1e-12));
    }
    SUBCASE("constant offset plane") {
        std::vector<Vec3> samples;
        for (int x = -5; x <= 5; ++x)
            for (int y = -5; y <= 5; ++y)
                samples.push_back(Vec3(x, y, 2.0));
        const DistanceStats s = mesh_distance_stats(samples, plane, index);
        CHECK(s.mean == doctest::Approx(2.0).epsilon(1e-12));
        CHECK(s.median == doctest::Approx(2.0).epsilon(1e-12));
        CHECK(s.m90 == doctest::Approx(2.0).epsilon(1e-12));
        CHECK(s.mean_squared == doctest::Approx(4.0).epsilon(1e-12));
    }
    SUBCASE("empty samples throw") {
        CHECK_THROWS_AS(mesh_distance_stats({}, plane, index), Error);
    }
}

TEST_CASE("mesh_distance_stats is invariant under a shared rigid transform") {
    const TriangleMesh mesh = sphere_mesh(0.8, 6, 9);
    const BvhIndex index = BvhIndex::build(mesh);

    Rng rng(31);
    std::vector<Vec3> samples;
    for (int i = 0; i < 200; ++i) samples.push_back(rng.uniform3(-1.2, 1.2));
    const DistanceStats base = mesh_distance_stats(samples, mesh, index);

    const Vec4 q = Vec4(0.6, -0.3, 0.2, 0.55).normalized();
    const Vec3 t(4.0, -2.0, 7.0);
    const TriangleMesh moved_mesh = transformed(mesh, 1.0, q, t);
    const BvhIndex moved_index = BvhIndex::build(moved_mesh);
    std::vector<Vec3> moved_samples;
    const Mat3 r = rotation_matrix(q);
    for (const Vec3& p : samples) moved_samples.push_back(r * p + t);

    const DistanceStats moved = mesh_distance_stats(moved_samples, moved_mesh, moved_index);
    CHECK(moved.mean == doctest::Approx(base.mean).epsilon(1e-9));
    CHECK(moved.median == doctest::Approx(base.median).epsilon(1e-9));
    CHECK(moved.m90 == doctest::Approx(base.m90).epsilon(1e-9));
    CHECK(moved.median <= moved.m90);
    CHECK(moved.m90 <= *std::max_element(moved.raw.begin(), moved.raw.end()));
}

TEST_CASE("sample_mesh_surface is deterministic, on-surface, and area weighted") {
    TriangleMesh mesh;
    // One tiny and one large triangle: 0.5 vs 49.5 area, ~1% vs ~99%.
    mesh.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {10, 0, 1}, {20, 0, 1}, {10, 11, 1}};
    mesh.triangles = {{0, 1, 2}, {3, 4, 5}};
    mesh.recompute_normals();
    const BvhIndex index = BvhIndex::build(mesh);

    const std::vector<Vec3> a = sample_mesh_surface(mesh, 4000, 7);
    const std::vector<Vec3> b = sample_mesh_surface(mesh, 4000, 7);
    REQUIRE(a.size() == 4000);
    CHECK(a[0] == b[0]);
    CHECK(a[3999] == b[3999]);

    int on_small = 0;
    for (const Vec3& p : a) {
        CHECK(index.closest_point(mesh, p).distance < 1e-12);
        if (p.z() < 0.5) ++on_small;
    }
    // Expected share 1%; allow generous sampling noise.
    CHECK(on_small > 10);
    CHECK(on_small < 100);

    const std::vector<Vec3> c = sample_mesh_surface(mesh, 4000, 8);
    CHECK(a[0] != c[0]);
}

TEST_CASE("vertex_rmse hand value") {
    const std::vector<Vec3> a = {{0, 0, 0}, {1, 0, 0}};
    const std::vector<Vec3> b = {{0, 0, 3}, {1, 4, 0}};
    // sqrt((9 + 16) / 2)
    CHECK(vertex_rmse(a, b) == doctest::Approx(std::sqrt(12.5)).epsilon(1e-12));
    CHECK_THROWS_AS(vertex_rmse(a, {}), Error);
}

TEST_CASE("image metrics report per-view and mean rows") {
    SUBCASE("identical views are perfect") {
        Image img(16, 16, 3, 0.4);
        const ImageMetricsReport r = image_metrics_report({img}, {img});
        REQUIRE(r.per_view.size() == 1);
        CHECK(r.per_view[0].l1 == 0.0);
        CHECK(r.per_view[0].ssim == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(std::isinf(r.per_view[0].psnr));
        CHECK(r.mean.l1 == r.per_view[0].l1);
        CHECK(r.mean.ssim == r.per_view[0].ssim);
    }
    SUBCASE("two-view mean is the arithmetic mean") {
        Image t(16, 16, 3, 0.5);
        Image r1(16, 16, 3, 0.52); // L1 0.02
        Image r2(16, 16, 3, 0.54); // L1 0.04
        const ImageMetricsReport r = image_metrics_report({r1, r2}, {t, t});
        CHECK(r.per_view[0].l1 == doctest::Approx(0.02).epsilon(1e-12));
        CHECK(r.per_view[1].l1 == doctest::Approx(0.04).epsilon(1e-12));
        CHECK(r.mean.l1 == doctest::Approx(0.03).epsilon(1e-12));
    }
    SUBCASE("masked target pixels are compared against black") {
        Image target(16, 16, 3, 0.8);
        Image mask(16, 16, 1, 0.0); // everything masked out
        Image rendered(16, 16, 3, 0.0);
        const ImageMetricsReport r = image_metrics_report({rendered}, {target}, {mask});
        CHECK(r.per_view[0].l1 == 0.0);
    }
    SUBCASE("count mismatch throws") {
        Image img(16, 16, 3, 0.4);
        CHECK_THROWS_AS(image_metrics_report({img}, {img, img}), Error);
    }

    Image img(16, 16, 3, 0.4);
    const std::string table = format_report(image_metrics_report({img}, {img}));
    CHECK(table.find("mean") != std::string::npos);
    CHECK(table.find("SSIM") != std::string::npos);
}

TEST_CASE("spike metric flags splats sticking out of the surface") {
    const TriangleMesh plane = big_plane();
    const BvhIndex index = BvhIndex::build(plane);

    SplatCloud flat;
    for (int i = 0; i < 20; ++i) {
        GaussianSplat s;
        s.position = Vec3(static_cast<double>(i) * 0.3 - 3.0, 0.0, 0.0);
        s.log_scale = Vec3::Constant(std::log(0.01));
        s.sh_coeffs.assign(1, Vec3::Zero());
        flat.splats.push_back(s);
    }

    const double quiet = spike_metric(flat, plane, index, 16, 99);
    CHECK(quiet < 0.1);

    SplatCloud spiky = flat;
    // Two spiked splats out of twenty put one past the 95th percentile.
    spiky.splats[4].log_scale = Vec3(std::log(0.01), std::log(0.01), std::log(2.0));
    spiky.splats[11].log_scale = Vec3(std::log(0.01), std::log(0.01), std::log(2.0));
    const double loud = spike_metric(spiky, plane, index, 16, 99);
    CHECK(loud > 10.0 * quiet);

    const double mean_flat = mean_splat_surface_distance(flat, plane, index, 16, 99);
    const double mean_spiky = mean_splat_surface_distance(spiky, plane, index, 16, 99);
    CHECK(mean_flat < mean_spiky);
}
