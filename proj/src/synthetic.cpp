// Copyright Contributors to the SurfSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "surfsplat/synthetic.hpp"

#include "surfsplat/error.hpp"
#include "surfsplat/renderer.hpp"
#include "surfsplat/rng.hpp"
#include "surfsplat/scene_io.hpp"
#include "surfsplat/sh.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numbers>
#include <vector>

namespace surfsplat {

namespace {

double snap(double v) { return snap_to_float(v); }

Vec3 snap3(const Vec3& v) { return Vec3(snap(v.x()), snap(v.y()), snap(v.z())); }

void snap_field(std::vector<Vec3>& field) {
    for (Vec3& v : field) v = snap3(v);
}

/// Smooth bump supported around direction `center` on the unit sphere,
/// measured by chordal distance of the vertex direction.
double bump_weight(const Vec3& direction, const Vec3& center, double sigma) {
    const double d2 = (direction - center).squaredNorm();
    return std::exp(-d2 / (2.0 * sigma * sigma));
}

} // namespace

MorphableModel make_blendshape_ellipsoid(int rings, int segments) {
    if (rings < 4 || segments < 6)
        throw Error(ErrorCode::invalid_parameter, "ellipsoid needs rings >= 4, segments >= 6");

    // Semi-axes: x width, y height (polar axis), z depth; +z is the face.
    const Vec3 axes(0.75, 1.0, 0.8);

    MorphableModel model;
    std::vector<Vec3> directions; // unit-sphere parameter of each vertex
    directions.push_back(Vec3(0, 1, 0));
    model.template_vertices.push_back(axes.cwiseProduct(directions.back()));
    for (int r = 1; r < rings; ++r) {
        const double phi = std::numbers::pi * r / rings;
        for (int s = 0; s < segments; ++s) {
            const double theta = 2.0 * std::numbers::pi * s / segments;
            directions.push_back(Vec3(std::sin(phi) * std::sin(theta), std::cos(phi),
                                      std::sin(phi) * std::cos(theta)));
            model.template_vertices.push_back(axes.cwiseProduct(directions.back()));
        }
    }
    directions.push_back(Vec3(0, -1, 0));
    model.template_vertices.push_back(axes.cwiseProduct(directions.back()));

    const auto ring_vertex = [&](int r, int s) -> std::uint32_t {
        return 1 + static_cast<std::uint32_t>((r - 1) * segments + (s % segments));
    };
    // Winding chosen so normals point out of the ellipsoid.
    for (int s = 0; s < segments; ++s)
        model.triangles.push_back({0, ring_vertex(1, s), ring_vertex(1, s + 1)});
    for (int r = 1; r + 1 < rings; ++r)
        for (int s = 0; s < segments; ++s) {
            const std::uint32_t a = ring_vertex(r, s), b = ring_vertex(r, s + 1);
            const std::uint32_t c = ring_vertex(r + 1, s), d = ring_vertex(r + 1, s + 1);
            model.triangles.push_back({a, c, b});
            model.triangles.push_back({b, c, d});
        }
    const std::uint32_t south =
        static_cast<std::uint32_t>(model.template_vertices.size() - 1);
    for (int s = 0; s < segments; ++s)
        model.triangles.push_back({south, ring_vertex(rings - 1, s + 1), ring_vertex(rings - 1, s)});

    // Outward surface normal of an axis-aligned ellipsoid at the vertex.
    const auto surface_normal = [&](const Vec3& direction) {
        const Vec3 n(direction.x() / axes.x(), direction.y() / axes.y(),
                     direction.z() / axes.z());
        return Vec3(n.normalized());
    };

    const std::vector<Vec3> shape_centers = {
        Vec3(0.5, 0.5, 0.7).normalized(),   Vec3(-0.5, 0.5, 0.7).normalized(),
        Vec3(0.5, -0.5, 0.7).normalized(),  Vec3(-0.5, -0.5, 0.7).normalized(),
        Vec3(0.0, 0.8, 0.6).normalized(),   Vec3(0.0, -0.8, 0.6).normalized(),
        Vec3(0.8, 0.0, 0.6).normalized(),   Vec3(-0.8, 0.0, 0.6).normalized(),
    };
    for (const Vec3& center : shape_centers) {
        std::vector<Vec3> basis(model.template_vertices.size());
        for (std::size_t i = 0; i < basis.size(); ++i)
            basis[i] =
                0.08 * bump_weight(directions[i], center, 0.5) * surface_normal(directions[i]);
        snap_field(basis);
        model.shape_basis.push_back(std::move(basis));
    }

    const std::vector<Vec3> expression_centers = {
        Vec3(0.0, -0.6, 0.8).normalized(),
        Vec3(0.45, -0.5, 0.74).normalized(),
        Vec3(-0.45, -0.5, 0.74).normalized(),
        Vec3(0.0, 0.5, 0.87).normalized(),
    };
    for (const Vec3& center : expression_centers) {
        std::vector<Vec3> basis(model.template_vertices.size());
        for (std::size_t i = 0; i < basis.size(); ++i)
            basis[i] =
                0.06 * bump_weight(directions[i], center, 0.35) * surface_normal(directions[i]);
        snap_field(basis);
        model.expression_basis.push_back(std::move(basis));
    }

    model.face_region_mask.resize(model.template_vertices.size());
    for (std::size_t i = 0; i < directions.size(); ++i)
        model.face_region_mask[i] = directions[i].z() > 0.05 ? 1 : 0;

    snap_field(model.template_vertices);
    model.validate();
    return model;
}

void SyntheticSceneSpec::validate() const {
    if (view_count < 1)
        throw Error(ErrorCode::invalid_parameter, "a scene needs at least one view");
    if (resolution < 8 || resolution > 512)
        throw Error(ErrorCode::invalid_parameter, "resolution must be in [8, 512]");
    if (!(ring_radius > 0.0))
        throw Error(ErrorCode::invalid_parameter, "ring_radius must be positive");
    if (splat_count < 1)
        throw Error(ErrorCode::invalid_parameter, "splat_count must be >= 1");
    if (!(arc_degrees > 0.0) || arc_degrees > 360.0)
        throw Error(ErrorCode::invalid_parameter, "arc_degrees must be in (0, 360]");
}

namespace {

VecX draw_or_check(const VecX& given, std::size_t expected, double range, Rng& rng,
                   const char* what) {
    if (given.size() == 0) {
        VecX drawn(expected);
        for (std::size_t i = 0; i < expected; ++i) drawn[static_cast<Eigen::Index>(i)] =
            rng.uniform(-range, range);
        return drawn;
    }
    if (static_cast<std::size_t>(given.size()) != expected)
        throw Error(ErrorCode::invalid_parameter,
                    std::string(what) + " count does not match the procedural model");
    return given;
}

GaussianSplat surface_splat(const TriangleMesh& mesh, std::size_t triangle, const Vec3& position,
                            double tangent_scale, const Vec3& color) {
    const Vec3 n = mesh.triangle_normals[triangle];
    const Vec3 up = std::abs(n.y()) < 0.9 ? Vec3(0, 1, 0) : Vec3(1, 0, 0);
    const Vec3 t1 = up.cross(n).normalized();
    const Vec3 t2 = n.cross(t1); // (t1, t2, n) right-handed
    Mat3 frame;
    frame.col(0) = t1;
    frame.col(1) = t2;
    frame.col(2) = n;

    GaussianSplat splat;
    splat.position = snap3(position);
    // Oblate: thin along the local z axis, which the frame maps to the
    // surface normal.
    splat.log_scale = snap3(
        Vec3(std::log(tangent_scale), std::log(tangent_scale), std::log(tangent_scale / 4.0)));
    Vec4 q = quaternion_from_matrix(frame);
    for (int i = 0; i < 4; ++i) q[i] = snap(q[i]);
    splat.rotation = q;
    splat.opacity_logit = snap(logit(0.9));
    splat.sh_coeffs.assign(1, snap3((color - Vec3::Constant(0.5)) / kShY00));
    return splat;
}

} // namespace

SyntheticScene make_synthetic_scene(const SyntheticSceneSpec& spec) {
    spec.validate();

    SyntheticScene scene;
    scene.spec = spec;
    scene.model = make_blendshape_ellipsoid();

    Rng root(spec.seed);
    Rng coeff_rng = root.fork(1);
    Rng texture_rng = root.fork(2);
    Rng placement_rng = root.fork(3);

    scene.gt_params = SurfaceParams::zero(scene.model);
    scene.gt_params.shape_coeffs = draw_or_check(spec.shape_coeffs, scene.model.shape_count(),
                                                 0.7, coeff_rng, "shape coefficient");
    scene.gt_params.expression_coeffs = draw_or_check(
        spec.expression_coeffs, scene.model.expression_count(), 0.5, coeff_rng,
        "expression coefficient");
    scene.gt_mesh = evaluate_surface(scene.model, scene.gt_params);

    // Area-weighted surface sampling that remembers the triangle, so each
    // splat can be aligned with the local tangent plane.
    std::vector<double> cumulative_area;
    cumulative_area.reserve(scene.gt_mesh.triangle_count());
    double total_area = 0.0;
    for (const Triangle& t : scene.gt_mesh.triangles) {
        const Vec3& a = scene.gt_mesh.vertices[t[0]];
        const Vec3& b = scene.gt_mesh.vertices[t[1]];
        const Vec3& c = scene.gt_mesh.vertices[t[2]];
        total_area += 0.5 * (b - a).cross(c - a).norm();
        cumulative_area.push_back(total_area);
    }

    const Vec3 phase(texture_rng.uniform(0.0, 2.0 * std::numbers::pi),
                     texture_rng.uniform(0.0, 2.0 * std::numbers::pi),
                     texture_rng.uniform(0.0, 2.0 * std::numbers::pi));
    const auto texture = [&](const Vec3& p) {
        return Vec3(0.5 + 0.35 * std::sin(2.1 * p.x() + 1.3 * p.y() + 1.7 * p.z() + phase.x()),
                    0.5 + 0.35 * std::sin(1.2 * p.x() + 2.3 * p.y() + 0.9 * p.z() + phase.y()),
                    0.5 + 0.35 * std::sin(1.9 * p.x() + 0.8 * p.y() + 2.5 * p.z() + phase.z()));
    };

    const double tangent_scale =
        0.7 * std::sqrt(total_area / static_cast<double>(spec.splat_count));
    for (std::size_t i = 0; i < spec.splat_count; ++i) {
        const double pick = placement_rng.uniform(0.0, total_area);
        const std::size_t tri = static_cast<std::size_t>(
            std::lower_bound(cumulative_area.begin(), cumulative_area.end(), pick) -
            cumulative_area.begin());
        const std::size_t clamped = std::min(tri, scene.gt_mesh.triangle_count() - 1);
        const Triangle& t = scene.gt_mesh.triangles[clamped];
        const double r1 = std::sqrt(placement_rng.uniform(0.0, 1.0));
        const double r2 = placement_rng.uniform(0.0, 1.0);
        const Vec3 position = (1.0 - r1) * scene.gt_mesh.vertices[t[0]] +
                              r1 * (1.0 - r2) * scene.gt_mesh.vertices[t[1]] +
                              r1 * r2 * scene.gt_mesh.vertices[t[2]];
        scene.gt_splats.splats.push_back(
            surface_splat(scene.gt_mesh, clamped, position, tangent_scale, texture(position)));
    }
    scene.gt_splats.resize_generation();

    const double arc = spec.arc_degrees * std::numbers::pi / 180.0;
    for (int i = 0; i < spec.view_count; ++i) {
        const double theta =
            spec.view_count == 1
                ? 0.0
                : arc * (static_cast<double>(i) / (spec.view_count - 1) - 0.5);
        const Vec3 eye = spec.ring_radius *
                         Vec3(std::sin(theta), spec.ring_elevation, std::cos(theta));
        TrainingView view;
        view.camera = look_at_camera(eye, Vec3::Zero(), Vec3(0, 1, 0),
                                     1.1 * spec.resolution, spec.resolution, spec.resolution);

        const RenderedImage rendered = render(scene.gt_splats, view.camera, Vec3::Zero());
        view.image = rendered.rgb;
        // Quantize to the 8-bit file grid so the in-memory scene and its
        // on-disk round trip train identically.
        for (double& v : view.image.data)
            v = std::lround(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0;
        view.mask = Image(spec.resolution, spec.resolution, 1);
        for (std::size_t k = 0; k < view.mask.data.size(); ++k)
            view.mask.data[k] = rendered.alpha.data[k] > 0.5 ? 1.0 : 0.0;
        scene.views.push_back(std::move(view));
    }
    return scene;
}

std::string write_synthetic_scene(const SyntheticScene& scene, const std::string& directory) {
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(directory, ec);
    if (ec) throw Error(ErrorCode::io_error, "cannot create directory " + directory);

    SceneManifest manifest;
    manifest.seed = scene.spec.seed;
    manifest.model_directory = "model";
    for (std::size_t i = 0; i < scene.views.size(); ++i) {
        char name[64];
        std::snprintf(name, sizeof(name), "view_%03zu", i);
        SceneManifest::ViewPaths paths;
        paths.image = std::string("images/") + name + ".ppm";
        paths.mask = std::string("masks/") + name + ".pgm";
        paths.camera = std::string("cameras/") + name + ".txt";
        write_image(scene.views[i].image, directory + "/" + paths.image);
        write_image(scene.views[i].mask, directory + "/" + paths.mask);
        write_camera(scene.views[i].camera, directory + "/" + paths.camera);
        manifest.views.push_back(std::move(paths));
    }

    write_morphable_model(scene.model, directory + "/model");
    manifest.ground_truth.mesh = "gt/mesh.obj";
    manifest.ground_truth.splats = "gt/splats.ply";
    manifest.ground_truth.surface_params = "gt/surface_params.txt";
    write_obj(scene.gt_mesh, directory + "/" + manifest.ground_truth.mesh);
    write_splat_ply(scene.gt_splats, directory + "/" + manifest.ground_truth.splats);
    write_surface_params(scene.gt_params, directory + "/" + manifest.ground_truth.surface_params);

    const std::string manifest_path = directory + "/manifest.json";
    write_scene_manifest(manifest, manifest_path);
    return manifest_path;
}

std::string generate_synthetic_scene(const SyntheticSceneSpec& spec,
                                     const std::string& directory) {
    return write_synthetic_scene(make_synthetic_scene(spec), directory);
}

} // namespace surfsplat
