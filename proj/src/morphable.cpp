// Copyright Contributors to the SurfSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "surfsplat/morphable.hpp"

#include "surfsplat/error.hpp"

#include <cmath>
#include <string>

namespace surfsplat {

void TriangleMesh::recompute_normals() {
    triangle_normals.resize(triangles.size());
    for (std::size_t i = 0; i < triangles.size(); ++i) {
        const Vec3& a = vertices[triangles[i][0]];
        const Vec3& b = vertices[triangles[i][1]];
        const Vec3& c = vertices[triangles[i][2]];
        const Vec3 cross = (b - a).cross(c - a);
        const double len = cross.norm();
        if (0.5 * len < kDegenerateTriangleArea) {
            throw Error(ErrorCode::degenerate_triangle,
                        "triangle " + std::to_string(i) + " has area below floor");
        }
        triangle_normals[i] = cross / len;
    }
}

void MorphableModel::validate() const {
    const std::size_t n = template_vertices.size();
    if (n == 0) {
        throw Error(ErrorCode::load_error, "morphable model has no vertices");
    }
    if (face_region_mask.size() != n) {
        throw Error(ErrorCode::load_error, "face_region_mask length != vertex count");
    }
    for (const auto& basis : shape_basis) {
        if (basis.size() != n) {
            throw Error(ErrorCode::load_error, "shape basis length != vertex count");
        }
        for (const Vec3& d : basis) {
            if (!d.allFinite()) throw Error(ErrorCode::load_error, "shape basis not finite");
        }
    }
    for (const auto& basis : expression_basis) {
        if (basis.size() != n) {
            throw Error(ErrorCode::load_error, "expression basis length != vertex count");
        }
        for (const Vec3& d : basis) {
            if (!d.allFinite()) throw Error(ErrorCode::load_error, "expression basis not finite");
        }
    }
    for (std::size_t i = 0; i < triangles.size(); ++i) {
        for (int k = 0; k < 3; ++k) {
            if (triangles[i][k] >= n) {
                throw Error(ErrorCode::load_error,
                            "triangle " + std::to_string(i) + " index out of bounds");
            }
        }
        const Vec3& a = template_vertices[triangles[i][0]];
        const Vec3& b = template_vertices[triangles[i][1]];
        const Vec3& c = template_vertices[triangles[i][2]];
        if (0.5 * (b - a).cross(c - a).norm() < kDegenerateTriangleArea) {
            throw Error(ErrorCode::load_error,
                        "template triangle " + std::to_string(i) + " is degenerate");
        }
    }
}

SurfaceParams SurfaceParams::zero(const MorphableModel& model) {
    SurfaceParams p;
    p.shape_coeffs = VecX::Zero(static_cast<Eigen::Index>(model.shape_count()));
    p.expression_coeffs = VecX::Zero(static_cast<Eigen::Index>(model.expression_count()));
    return p;
}

SurfaceParamsGrad SurfaceParamsGrad::zero(const MorphableModel& model) {
    SurfaceParamsGrad g;
    g.shape_coeffs = VecX::Zero(static_cast<Eigen::Index>(model.shape_count()));
    g.expression_coeffs = VecX::Zero(static_cast<Eigen::Index>(model.expression_count()));
    return g;
}

void SurfaceParamsGrad::accumulate(const SurfaceParamsGrad& other) {
    shape_coeffs += other.shape_coeffs;
    expression_coeffs += other.expression_coeffs;
    pose_rotation += other.pose_rotation;
    pose_translation += other.pose_translation;
    pose_scale += other.pose_scale;
}

TriangleMesh evaluate_surface(const MorphableModel& model, const SurfaceParams& params) {
    if (params.shape_coeffs.size() != static_cast<Eigen::Index>(model.shape_count()) ||
        params.expression_coeffs.size() != static_cast<Eigen::Index>(model.expression_count())) {
        throw Error(ErrorCode::invalid_parameter,
                    "evaluate_surface: coefficient count does not match basis count");
    }
    const Mat3 r = rotation_matrix(params.pose_rotation);
    const double s = params.pose_scale;

    TriangleMesh mesh;
    mesh.vertices.resize(model.vertex_count());
    for (std::size_t i = 0; i < model.vertex_count(); ++i) {
        Vec3 blended = model.template_vertices[i];
        for (std::size_t k = 0; k < model.shape_count(); ++k) {
            blended += params.shape_coeffs[static_cast<Eigen::Index>(k)] * model.shape_basis[k][i];
        }
        for (std::size_t k = 0; k < model.expression_count(); ++k) {
            blended += params.expression_coeffs[static_cast<Eigen::Index>(k)] *
                       model.expression_basis[k][i];
        }
        mesh.vertices[i] = s * (r * blended) + params.pose_translation;
    }
    mesh.triangles = model.triangles;
    mesh.recompute_normals();
    return mesh;
}

SurfaceParamsGrad evaluate_surface_backward(const MorphableModel& model,
                                            const SurfaceParams& params,
                                            const std::vector<Vec3>& vertex_grads) {
    if (vertex_grads.size() != model.vertex_count()) {
        throw Error(ErrorCode::invalid_parameter,
                    "evaluate_surface_backward: gradient count != vertex count");
    }
    const Mat3 r = rotation_matrix(params.pose_rotation);
    const double s = params.pose_scale;

    SurfaceParamsGrad grad = SurfaceParamsGrad::zero(model);
    Mat3 grad_r = Mat3::Zero();
    for (std::size_t i = 0; i < model.vertex_count(); ++i) {
        const Vec3& g = vertex_grads[i];
        Vec3 blended = model.template_vertices[i];
        for (std::size_t k = 0; k < model.shape_count(); ++k) {
            blended += params.shape_coeffs[static_cast<Eigen::Index>(k)] * model.shape_basis[k][i];
        }
        for (std::size_t k = 0; k < model.expression_count(); ++k) {
            blended += params.expression_coeffs[static_cast<Eigen::Index>(k)] *
                       model.expression_basis[k][i];
        }

        // v = s R b + t
        const Vec3 grad_blended = s * (r.transpose() * g);
        for (std::size_t k = 0; k < model.shape_count(); ++k) {
            grad.shape_coeffs[static_cast<Eigen::Index>(k)] +=
                grad_blended.dot(model.shape_basis[k][i]);
        }
        for (std::size_t k = 0; k < model.expression_count(); ++k) {
            grad.expression_coeffs[static_cast<Eigen::Index>(k)] +=
                grad_blended.dot(model.expression_basis[k][i]);
        }
        grad.pose_translation += g;
        grad.pose_scale += g.dot(r * blended);
        grad_r += s * (g * blended.transpose());
    }
    grad.pose_rotation = rotation_matrix_backward(params.pose_rotation, grad_r);
    return grad;
}

Vec3 triangle_normal(const TriangleMesh& mesh, std::size_t tri_index) {
    const Triangle& tri = mesh.triangles[tri_index];
    return triangle_normal(mesh.vertices[tri[0]], mesh.vertices[tri[1]], mesh.vertices[tri[2]]);
}

Vec3 triangle_normal(const Vec3& v0, const Vec3& v1, const Vec3& v2) {
    const Vec3 cross = (v1 - v0).cross(v2 - v0);
    const double len = cross.norm();
    if (0.5 * len < kDegenerateTriangleArea) {
        throw Error(ErrorCode::degenerate_triangle, "triangle has area below floor");
    }
    return cross / len;
}

void triangle_normal_backward(const Vec3& v0, const Vec3& v1, const Vec3& v2,
                              const Vec3& grad_normal,
                              Vec3& grad_v0, Vec3& grad_v1, Vec3& grad_v2) {
    const Vec3 e1 = v1 - v0;
    const Vec3 e2 = v2 - v0;
    const Vec3 c = e1.cross(e2);
    const double len = c.norm();
    const Vec3 n = c / len;

    // n = c / |c| => dL/dc = (I - n n^T) / |c| * dL/dn
    const Vec3 grad_c = (grad_normal - n * n.dot(grad_normal)) / len;

    // c = e1 x e2 => dL/de1 = e2 x dL/dc, dL/de2 = dL/dc x e1
    const Vec3 grad_e1 = e2.cross(grad_c);
    const Vec3 grad_e2 = grad_c.cross(e1);

    grad_v0 += -grad_e1 - grad_e2;
    grad_v1 += grad_e1;
    grad_v2 += grad_e2;
}

double regularization_energy(const SurfaceParams& params, const RegularizationWeights& weights) {
    return weights.shape * params.shape_coeffs.squaredNorm() +
           weights.expression * params.expression_coeffs.squaredNorm();
}

SurfaceParamsGrad regularization_backward(const SurfaceParams& params,
                                          const RegularizationWeights& weights,
                                          double grad_output) {
    SurfaceParamsGrad g;
    g.shape_coeffs = grad_output * 2.0 * weights.shape * params.shape_coeffs;
    g.expression_coeffs = grad_output * 2.0 * weights.expression * params.expression_coeffs;
    return g;
}

} // namespace surfsplat
