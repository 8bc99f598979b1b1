// Copyright Contributors to the SurfSplat Project
// SPDX-License-Identifier: Apache-2.0

#include <surfsplat/bvh.hpp>
#include <surfsplat/error.hpp>
#include <surfsplat/rng.hpp>

#include <doctest.h>

#include <cmath>
#include <limits>

using namespace surfsplat;

namespace {

// Brute force over every triangle, breaking ties on the lowest index. This is
// the oracle the BVH must agree with exactly.
ClosestPointResult brute_force_closest(const TriangleMesh& mesh, const Vec3& query)
{
    ClosestPointResult best;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (size_t t = 0; t < mesh.triangles.size(); ++t) {
        const auto& tri = mesh.triangles[t];
        const TrianglePoint tp = closest_point_on_triangle(
            query, mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]);
        if (tp.squared_distance < best_d2) {
            best_d2 = tp.squared_distance;
            best.point = tp.point;
            best.barycentric = tp.barycentric;
            best.triangle_index = static_cast<int>(t);
            best.normal = mesh.triangle_normals[t];
            best.distance = std::sqrt(tp.squared_distance);
        }
    }
    return best;
}

TriangleMesh make_icosphere_like(Rng& rng, int n_points)
{
    // Random points on a sphere triangulated as a fan per octant would be
    // fussy; instead build a jittered lat-long grid sphere.
    TriangleMesh mesh;
    const int rows = 6, cols = 8;
    (void)n_points;
    for (int i = 0; i <= rows; ++i) {
        const double theta = M_PI * i / rows;
        for (int j = 0; j < cols; ++j) {
            const double phi = 2.0 * M_PI * j / cols + rng.uniform(0.0, 0.05);
            mesh.vertices.push_back(Vec3(std::sin(theta) * std::cos(phi),
                                         std::sin(theta) * std::sin(phi), std::cos(theta)));
        }
    }
    auto idx = [cols](int i, int j) { return static_cast<uint32_t>(i * cols + (j % cols)); };
    for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) {
            // Skip triangles that collapse at the poles.
            if (i != 0)
                mesh.triangles.push_back({idx(i, j), idx(i + 1, j), idx(i, j + 1)});
            if (i != rows - 1)
                mesh.triangles.push_back({idx(i, j + 1), idx(i + 1, j), idx(i + 1, j + 1)});
        }
    }
    mesh.recompute_normals();
    return mesh;
}

} // namespace

TEST_CASE("closest point on a single triangle covers every Voronoi region")
{
    const Vec3 a(0, 0, 0), b(2, 0, 0), c(0, 2, 0);

    // Interior projection.
    TrianglePoint tp = closest_point_on_triangle(Vec3(0.5, 0.5, 3.0), a, b, c);
    CHECK((tp.point - Vec3(0.5, 0.5, 0.0)).norm() < 1e-14);
    CHECK(tp.squared_distance == doctest::Approx(9.0));

    // Vertex region.
    tp = closest_point_on_triangle(Vec3(-1, -1, 0), a, b, c);
    CHECK((tp.point - a).norm() < 1e-14);
    CHECK((tp.barycentric - Vec3(1, 0, 0)).norm() < 1e-14);

    // Edge region (midpoint of ab).
    tp = closest_point_on_triangle(Vec3(1, -2, 0), a, b, c);
    CHECK((tp.point - Vec3(1, 0, 0)).norm() < 1e-14);
    CHECK(tp.barycentric[0] == doctest::Approx(0.5));
    CHECK(tp.barycentric[1] == doctest::Approx(0.5));
    CHECK(tp.barycentric[2] == doctest::Approx(0.0));

    // Hypotenuse edge region.
    tp = closest_point_on_triangle(Vec3(2, 2, 0), a, b, c);
    CHECK((tp.point - Vec3(1, 1, 0)).norm() < 1e-13);
}

TEST_CASE("barycentric coordinates reconstruct the closest point")
{
    Rng rng(5);
    const Vec3 a(0.3, -0.2, 0.1), b(1.4, 0.3, -0.5), c(-0.1, 1.2, 0.8);
    for (int i = 0; i < 50; ++i) {
        const Vec3 q(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
        const TrianglePoint tp = closest_point_on_triangle(q, a, b, c);
        const Vec3 rec = tp.barycentric[0] * a + tp.barycentric[1] * b + tp.barycentric[2] * c;
        CHECK((rec - tp.point).norm() < 1e-12);
        CHECK(tp.barycentric.minCoeff() >= -1e-15);
        CHECK(tp.barycentric.sum() == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("bvh agrees with brute force on random queries")
{
    Rng rng(13);
    const TriangleMesh mesh = make_icosphere_like(rng, 0);
    const BvhIndex index = BvhIndex::build(mesh);

    for (int i = 0; i < 200; ++i) {
        const Vec3 q(rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2));
        const ClosestPointResult got = index.closest_point(mesh, q);
        const ClosestPointResult want = brute_force_closest(mesh, q);
        CHECK(got.triangle_index == want.triangle_index);
        CHECK((got.point - want.point).norm() < 1e-12);
        CHECK(got.distance == doctest::Approx(want.distance).epsilon(1e-12));
    }
}

TEST_CASE("queries on the surface return zero distance")
{
    Rng rng(15);
    const TriangleMesh mesh = make_icosphere_like(rng, 0);
    const BvhIndex index = BvhIndex::build(mesh);
    for (int i = 0; i < 20; ++i) {
        const auto t = rng.index(mesh.triangles.size());
        const auto& tri = mesh.triangles[t];
        double u = rng.uniform(0.0, 1.0), v = rng.uniform(0.0, 1.0);
        if (u + v > 1.0) { u = 1.0 - u; v = 1.0 - v; }
        const Vec3 q = (1 - u - v) * mesh.vertices[tri[0]] + u * mesh.vertices[tri[1]] +
                       v * mesh.vertices[tri[2]];
        CHECK(index.closest_point(mesh, q).distance < 1e-12);
    }
}

TEST_CASE("tie between equidistant triangles resolves to the lowest index")
{
    // Two parallel unit triangles straddling the query plane at equal distance.
    TriangleMesh mesh;
    mesh.vertices = {Vec3(0, 0, 1),  Vec3(1, 0, 1),  Vec3(0, 1, 1),
                     Vec3(0, 0, -1), Vec3(1, 0, -1), Vec3(0, 1, -1)};
    mesh.triangles = {{3, 4, 5}, {0, 1, 2}}; // farther-listed first to stress ordering
    mesh.recompute_normals();
    const BvhIndex index = BvhIndex::build(mesh);
    const ClosestPointResult r = index.closest_point(mesh, Vec3(0.25, 0.25, 0.0));
    CHECK(r.triangle_index == 0);
    CHECK(brute_force_closest(mesh, Vec3(0.25, 0.25, 0.0)).triangle_index == 0);
}

TEST_CASE("single triangle mesh and leaf-sized meshes work")
{
    TriangleMesh mesh;
    mesh.vertices = {Vec3(0, 0, 0), Vec3(1, 0, 0), Vec3(0, 1, 0)};
    mesh.triangles = {{0, 1, 2}};
    mesh.recompute_normals();
    const BvhIndex index = BvhIndex::build(mesh);
    const ClosestPointResult r = index.closest_point(mesh, Vec3(0, 0, 5));
    CHECK(r.triangle_index == 0);
    CHECK(r.distance == doctest::Approx(5.0));
    CHECK((r.normal - Vec3(0, 0, 1)).norm() < 1e-14);
}

TEST_CASE("empty mesh is rejected")
{
    TriangleMesh mesh;
    CHECK_THROWS_AS(BvhIndex::build(mesh), Error);
}

TEST_CASE("degenerate needle-ish triangles still give exact answers")
{
    // Thin but not area-degenerate sliver.
    TriangleMesh mesh;
    mesh.vertices = {Vec3(0, 0, 0), Vec3(10, 0, 0), Vec3(5, 1e-4, 0)};
    mesh.triangles = {{0, 1, 2}};
    mesh.recompute_normals();
    const BvhIndex index = BvhIndex::build(mesh);
    const ClosestPointResult r = index.closest_point(mesh, Vec3(5, -1, 0));
    CHECK(r.distance == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("free function wrappers match the class interface")
{
    Rng rng(21);
    const TriangleMesh mesh = make_icosphere_like(rng, 0);
    const BvhIndex index = build_bvh(mesh);
    const Vec3 q(0.3, 0.4, 1.7);
    const ClosestPointResult a = closest_point_on_surface(index, mesh, q);
    const ClosestPointResult b = index.closest_point(mesh, q);
    CHECK(a.triangle_index == b.triangle_index);
    CHECK((a.point - b.point).norm() == 0.0);
}
