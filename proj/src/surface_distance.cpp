// Copyright Contributors to the SurfSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "surfsplat/surface_distance.hpp"

#include "surfsplat/error.hpp"

#include <cmath>

namespace surfsplat {

namespace {

inline double sign_of(double x) {
    if (x > 0.0) return 1.0;
    if (x < 0.0) return -1.0;
    return 0.0;
}

} // namespace

double point_to_surface_distance(const BvhIndex& index, const TriangleMesh& mesh, const Vec3& x) {
    const ClosestPointResult cp = index.closest_point(mesh, x);
    return std::abs((x - cp.point).dot(cp.normal));
}

double frozen_association_distance(const TriangleMesh& mesh, const SampleAssociation& assoc,
                                   const Vec3& sample_point) {
    const Triangle& tri = mesh.triangles[assoc.triangle];
    const Vec3 xi = assoc.barycentric[0] * mesh.vertices[tri[0]] +
                    assoc.barycentric[1] * mesh.vertices[tri[1]] +
                    assoc.barycentric[2] * mesh.vertices[tri[2]];
    const Vec3 n = triangle_normal(mesh, static_cast<std::size_t>(assoc.triangle));
    return std::abs((sample_point - xi).dot(n));
}

SplatSurfaceDistance splat_to_surface_distance(const BvhIndex& index, const TriangleMesh& mesh,
                                               const GaussianSplat& splat,
                                               std::span<const Vec3> eps_draws) {
    if (eps_draws.empty()) {
        throw Error(ErrorCode::invalid_parameter,
                    "splat_to_surface_distance: need at least one draw");
    }
    SplatSurfaceDistance out;
    out.per_sample.reserve(eps_draws.size());
    out.associations.reserve(eps_draws.size());

    double sum = 0.0;
    for (const Vec3& eps : eps_draws) {
        const Vec3 x = sample_splat(splat, eps);
        const ClosestPointResult cp = index.closest_point(mesh, x);
        const double d = std::abs((x - cp.point).dot(cp.normal));
        sum += d;
        out.per_sample.push_back(d);
        out.associations.push_back({cp.triangle_index, cp.barycentric});
    }
    out.mean = sum / static_cast<double>(eps_draws.size());
    return out;
}

void splat_to_surface_backward(const TriangleMesh& mesh, const GaussianSplat& splat,
                               std::span<const Vec3> eps_draws,
                               std::span<const SampleAssociation> associations,
                               double grad_mean, DensityGrad& splat_grad,
                               std::vector<Vec3>& vertex_grads) {
    const double w = grad_mean / static_cast<double>(eps_draws.size());
    for (std::size_t j = 0; j < eps_draws.size(); ++j) {
        const SampleAssociation& assoc = associations[j];
        const Triangle& tri = mesh.triangles[assoc.triangle];
        const Vec3& v0 = mesh.vertices[tri[0]];
        const Vec3& v1 = mesh.vertices[tri[1]];
        const Vec3& v2 = mesh.vertices[tri[2]];

        const Vec3 x = sample_splat(splat, eps_draws[j]);
        const Vec3 xi = assoc.barycentric[0] * v0 + assoc.barycentric[1] * v1 +
                        assoc.barycentric[2] * v2;
        const Vec3 n = triangle_normal(mesh, static_cast<std::size_t>(assoc.triangle));
        const Vec3 r = x - xi;
        const double sgn = sign_of(r.dot(n));
        if (sgn == 0.0) continue; // |.| is flat at exactly zero

        // d = sgn * (x - xi) . n
        const Vec3 grad_x = w * sgn * n;
        const DensityGrad g = sample_splat_backward(splat, eps_draws[j], grad_x);
        splat_grad.position += g.position;
        splat_grad.log_scale += g.log_scale;
        splat_grad.rotation += g.rotation;

        const Vec3 grad_xi = -grad_x;
        for (int k = 0; k < 3; ++k) {
            vertex_grads[tri[k]] += assoc.barycentric[k] * grad_xi;
        }
        const Vec3 grad_n = w * sgn * r;
        triangle_normal_backward(v0, v1, v2, grad_n, vertex_grads[tri[0]],
                                 vertex_grads[tri[1]], vertex_grads[tri[2]]);
    }
}

void point_to_surface_backward(const TriangleMesh& mesh, const SampleAssociation& assoc,
                               const Vec3& x, double grad_output, Vec3& grad_x,
                               std::vector<Vec3>& vertex_grads) {
    const Triangle& tri = mesh.triangles[assoc.triangle];
    const Vec3& v0 = mesh.vertices[tri[0]];
    const Vec3& v1 = mesh.vertices[tri[1]];
    const Vec3& v2 = mesh.vertices[tri[2]];
    const Vec3 xi =
        assoc.barycentric[0] * v0 + assoc.barycentric[1] * v1 + assoc.barycentric[2] * v2;
    const Vec3 n = triangle_normal(mesh, static_cast<std::size_t>(assoc.triangle));
    const Vec3 r = x - xi;
    const double sgn = sign_of(r.dot(n));
    if (sgn == 0.0) return;

    const Vec3 gx = grad_output * sgn * n;
    grad_x += gx;
    for (int k = 0; k < 3; ++k) {
        vertex_grads[tri[k]] += assoc.barycentric[k] * (-gx);
    }
    triangle_normal_backward(v0, v1, v2, grad_output * sgn * r, vertex_grads[tri[0]],
                             vertex_grads[tri[1]], vertex_grads[tri[2]]);
}

} // namespace surfsplat
