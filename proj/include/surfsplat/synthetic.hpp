// Copyright Contributors to the SurfSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "surfsplat/camera.hpp"
#include "surfsplat/gaussian.hpp"
#include "surfsplat/morphable.hpp"

#include <cstdint>
#include <string>

namespace surfsplat {

/// Procedural face stand-in: an ellipsoid template with smooth normal-
/// directed bump fields as blend shapes. Eight shape bases, four expression
/// bases, face region covering the front (+z) of the surface. All arrays
/// are snapped to single precision so the on-disk container reproduces the
/// model exactly.
MorphableModel make_blendshape_ellipsoid(int rings = 24, int segments = 32);

/// Recipe for a self-contained synthetic scene. Ground-truth blend
/// coefficients may be given explicitly (sizes must match the procedural
/// model); an empty vector is drawn from `seed`. Cameras sit on a ring of
/// radius `ring_radius` facing the origin, spread uniformly over
/// `arc_degrees` centred on the face's +z axis.
struct SyntheticSceneSpec {
    VecX shape_coeffs;      // empty = draw from seed
    VecX expression_coeffs; // empty = draw from seed
    int view_count = 5;
    double ring_radius = 2.5;
    double ring_elevation = 0.12; // camera height as a fraction of the radius
    double arc_degrees = 120.0;
    int resolution = 128;
    std::uint64_t seed = 0; // textures, coefficients, splat placement
    std::size_t splat_count = 400;

    /// Throws invalid_parameter: views >= 1, 8 <= resolution <= 512,
    /// ring_radius > 0, splat_count >= 1, arc_degrees in (0, 360].
    void validate() const;
};

/// Everything the generator produced, still in memory. Images are already
/// quantized to the 8-bit grid and masks binarized, so the on-disk scene
/// loads back to exactly these values.
struct SyntheticScene {
    SyntheticSceneSpec spec;
    MorphableModel model;     // prior handed to training (zero coefficients)
    SurfaceParams gt_params;  // coefficients the images were rendered from
    TriangleMesh gt_mesh;
    SplatCloud gt_splats;     // on-surface, tangent-oblate, degree-0 colors
    TrainingViews views;
};

/// Pure function of the spec: same spec, same scene, down to the last bit.
SyntheticScene make_synthetic_scene(const SyntheticSceneSpec& spec);

/// Writes a generated scene as a loadable directory: manifest.json,
/// images/, masks/, cameras/, model container, and ground-truth artifacts
/// (mesh OBJ, splat PLY, surface-parameter text). Returns the manifest
/// path.
std::string write_synthetic_scene(const SyntheticScene& scene, const std::string& directory);

/// make + write in one step.
std::string generate_synthetic_scene(const SyntheticSceneSpec& spec,
                                     const std::string& directory);

} // namespace surfsplat
