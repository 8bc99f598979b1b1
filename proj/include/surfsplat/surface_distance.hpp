// Copyright Contributors to the SurfSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "surfsplat/bvh.hpp"
#include "surfsplat/gaussian.hpp"

#include <span>
#include <vector>

namespace surfsplat {

/// Normal-projected point-to-surface distance |(x - x_i) . n_i| with x_i,
/// n_i taken from the closest triangle. Equals Euclidean distance only when
/// the closest point is interior to a triangle.
double point_to_surface_distance(const BvhIndex& index, const TriangleMesh& mesh, const Vec3& x);

/// Closest-triangle association of one sample, frozen within a gradient
/// evaluation: the triangle index and barycentric coordinates are treated
/// as constants, ICP-style, while the surface vertices stay differentiable.
struct SampleAssociation {
    int triangle = -1;
    Vec3 barycentric = Vec3::Zero();
};

/// Distance of one sample point under a frozen association. Re-expresses
/// x_i as the barycentric combination of the current surface vertices, so
/// vertex perturbations flow through both x_i and the face normal.
double frozen_association_distance(const TriangleMesh& mesh, const SampleAssociation& assoc,
                                   const Vec3& sample_point);

struct SplatSurfaceDistance {
    double mean = 0.0;                             // (1/N) sum of per-sample distances
    std::vector<double> per_sample;                // raw distances, forwarded to densification
    std::vector<SampleAssociation> associations;   // per draw, for the frozen backward
};

/// Monte-Carlo splat-to-surface distance: N reparameterized draws
/// x_j = mu + R S eps_j, each projected onto its closest triangle.
SplatSurfaceDistance splat_to_surface_distance(const BvhIndex& index, const TriangleMesh& mesh,
                                               const GaussianSplat& splat,
                                               std::span<const Vec3> eps_draws);

/// Backward pass for grad_mean * splat_to_surface_distance under frozen
/// draws and associations. Splat gradients go to `splat_grad`; surface
/// gradients accumulate into `vertex_grads` (size = mesh vertex count).
void splat_to_surface_backward(const TriangleMesh& mesh, const GaussianSplat& splat,
                               std::span<const Vec3> eps_draws,
                               std::span<const SampleAssociation> associations,
                               double grad_mean, DensityGrad& splat_grad,
                               std::vector<Vec3>& vertex_grads);

/// Same frozen-association rule for a single point (the point-to-surface
/// ablation path): distance of `x` to its recorded association.
void point_to_surface_backward(const TriangleMesh& mesh, const SampleAssociation& assoc,
                               const Vec3& x, double grad_output, Vec3& grad_x,
                               std::vector<Vec3>& vertex_grads);

} // namespace surfsplat
