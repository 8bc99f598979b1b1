// Copyright Contributors to the SurfSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "surfsplat/geometry.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace surfsplat {

inline constexpr double kDegenerateTriangleArea = 1e-12;

using Triangle = std::array<std::uint32_t, 3>;

/// Evaluated surface: vertices, triangles and per-triangle unit normals
/// (counter-clockwise winding).
struct TriangleMesh {
    std::vector<Vec3> vertices;
    std::vector<Triangle> triangles;
    std::vector<Vec3> triangle_normals;

    std::size_t vertex_count() const { return vertices.size(); }
    std::size_t triangle_count() const { return triangles.size(); }

    void recompute_normals();
};

/// Generic linear morphable surface: template plus shape/expression bases.
/// Bases are stored as per-basis vertex displacement fields.
struct MorphableModel {
    std::vector<Vec3> template_vertices;                 // n
    std::vector<std::vector<Vec3>> shape_basis;          // K_s x n
    std::vector<std::vector<Vec3>> expression_basis;     // K_e x n
    std::vector<Triangle> triangles;                     // m
    std::vector<std::uint8_t> face_region_mask;          // n, 1 = face region

    std::size_t vertex_count() const { return template_vertices.size(); }
    std::size_t shape_count() const { return shape_basis.size(); }
    std::size_t expression_count() const { return expression_basis.size(); }

    /// Throws load_error when dimensions are inconsistent, a triangle index
    /// is out of bounds, or a template triangle is degenerate.
    void validate() const;
};

/// Per-scene surface state: blend coefficients plus a rigid pose with
/// uniform scale. Pose is applied after blending: scale, rotation, then
/// translation.
struct SurfaceParams {
    VecX shape_coeffs;      // beta
    VecX expression_coeffs; // psi
    Vec4 pose_rotation = Vec4(1.0, 0.0, 0.0, 0.0);
    Vec3 pose_translation = Vec3::Zero();
    double pose_scale = 1.0;

    static SurfaceParams zero(const MorphableModel& model);
};

/// vertices = pose_scale * R * (template + sum beta_k shape_k + sum psi_k expr_k) + t
TriangleMesh evaluate_surface(const MorphableModel& model, const SurfaceParams& params);

/// Gradients of a scalar loss with respect to every SurfaceParams entry,
/// given per-vertex position gradients on the evaluated mesh.
struct SurfaceParamsGrad {
    VecX shape_coeffs;
    VecX expression_coeffs;
    Vec4 pose_rotation = Vec4::Zero();
    Vec3 pose_translation = Vec3::Zero();
    double pose_scale = 0.0;

    static SurfaceParamsGrad zero(const MorphableModel& model);
    void accumulate(const SurfaceParamsGrad& other);
};
SurfaceParamsGrad evaluate_surface_backward(const MorphableModel& model,
                                            const SurfaceParams& params,
                                            const std::vector<Vec3>& vertex_grads);

/// Unit CCW normal of one triangle. Throws degenerate_triangle below the
/// area floor.
Vec3 triangle_normal(const TriangleMesh& mesh, std::size_t tri_index);
Vec3 triangle_normal(const Vec3& v0, const Vec3& v1, const Vec3& v2);

/// Gradient of the unit normal with respect to the three triangle
/// vertices: given dL/dn, accumulates dL/dv0, dL/dv1, dL/dv2.
void triangle_normal_backward(const Vec3& v0, const Vec3& v1, const Vec3& v2,
                              const Vec3& grad_normal,
                              Vec3& grad_v0, Vec3& grad_v1, Vec3& grad_v2);

struct RegularizationWeights {
    double shape = 1.0;
    double expression = 1.0;
};

/// w_s |beta|^2 + w_e |psi|^2. Pose is unpenalized.
double regularization_energy(const SurfaceParams& params, const RegularizationWeights& weights);

/// dL/d(beta, psi) for grad_output * regularization_energy.
SurfaceParamsGrad regularization_backward(const SurfaceParams& params,
                                          const RegularizationWeights& weights,
                                          double grad_output);

} // namespace surfsplat
