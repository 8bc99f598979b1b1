// Copyright Contributors to the SurfSplat Project
// SPDX-License-Identifier: Apache-2.0

#include <surfsplat/error.hpp>
#include <surfsplat/losses.hpp>
#include <surfsplat/sh.hpp>
#include <surfsplat/trainer.hpp>

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace surfsplat;

namespace {

GaussianSplat unit_splat(const Vec3& position, double scale, double opacity) {
    GaussianSplat s;
    s.position = position;
    s.log_scale = Vec3::Constant(std::log(scale));
    s.opacity_logit = logit(opacity);
    s.sh_coeffs.assign(1, Vec3::Zero());
    return s;
}

// Octahedron blob model of radius r with a single shape and expression
// basis; enough structure to drive the full joint loop.
MorphableModel octahedron_model(double r) {
    MorphableModel m;
    m.template_vertices = {{r, 0, 0}, {-r, 0, 0}, {0, r, 0}, {0, -r, 0}, {0, 0, r}, {0, 0, -r}};
    m.triangles = {{0, 2, 4}, {2, 1, 4}, {1, 3, 4}, {3, 0, 4},
                   {2, 0, 5}, {1, 2, 5}, {3, 1, 5}, {0, 3, 5}};
    m.shape_basis.assign(1, std::vector<Vec3>(6, Vec3::Zero()));
    m.shape_basis[0][0] = Vec3(0.1, 0.0, 0.0);
    m.shape_basis[0][1] = Vec3(-0.1, 0.0, 0.0);
    m.expression_basis.assign(1, std::vector<Vec3>(6, Vec3::Zero()));
    m.expression_basis[0][4] = Vec3(0.0, 0.0, 0.1);
    m.face_region_mask.assign(6, 1);
    m.validate();
    return m;
}

// Ground-truth views rendered from a hand-made colorful cloud on the
// template surface; masks from the rendered alpha.
TrainingViews synthetic_views(const MorphableModel& model, int image_size) {
    const TriangleMesh mesh = evaluate_surface(model, SurfaceParams::zero(model));
    SplatCloud gt = initialize_splats(mesh, 0);
    for (std::size_t i = 0; i < gt.size(); ++i) {
        GaussianSplat& s = gt.splats[i];
        s.opacity_logit = logit(0.8);
        const Vec3 color(0.2 + 0.1 * static_cast<double>(i), 0.5,
                         0.9 - 0.1 * static_cast<double>(i));
        s.sh_coeffs[0] = (color - Vec3::Constant(0.5)) / 0.28209479177387814;
    }

    const std::vector<Vec3> eyes = {{0.0, 0.0, 2.5}, {1.8, 0.3, 1.8}};
    TrainingViews views;
    for (const Vec3& eye : eyes) {
        TrainingView v;
        v.camera = look_at_camera(eye, Vec3::Zero(), Vec3(0, 1, 0),
                                  1.2 * image_size, image_size, image_size);
        const RenderedImage r = render(gt, v.camera, Vec3::Zero());
        v.image = r.rgb;
        v.mask = Image(image_size, image_size, 1, 0.0);
        for (int y = 0; y < image_size; ++y)
            for (int x = 0; x < image_size; ++x)
                v.mask.at(y, x, 0) = r.alpha.at(y, x, 0) > 0.5 ? 1.0 : 0.0;
        views.push_back(std::move(v));
    }
    return views;
}

} // namespace

TEST_CASE("densify config validation rejects nonsense") {
    DensifyConfig c;
    CHECK_NOTHROW(c.validate());
    c.interval = 0;
    CHECK_THROWS_AS(c.validate(), Error);
    c = DensifyConfig();
    c.view_grad_threshold = 0.0;
    CHECK_THROWS_AS(c.validate(), Error);
    c = DensifyConfig();
    c.split_scale_shrink = 1.0;
    CHECK_THROWS_AS(c.validate(), Error);
}

TEST_CASE("view_space_densify selects by mean gradient and sizes by scale") {
    SplatCloud cloud;
    cloud.splats.push_back(unit_splat(Vec3::Zero(), 0.005, 0.5)); // small -> clone
    cloud.splats.push_back(unit_splat(Vec3::Ones(), 0.05, 0.5));  // large -> split
    cloud.splats.push_back(unit_splat(Vec3::Zero(), 0.05, 0.5));  // quiet

    DensifyConfig config; // view_grad_threshold 2e-4, split_scale_threshold 0.01

    SUBCASE("all grad norms zero give an empty edit list") {
        const auto edits = view_space_densify(cloud, {0.0, 0.0, 0.0}, config);
        CHECK(edits.empty());
    }
    SUBCASE("selection splits large and clones small splats") {
        const auto edits = view_space_densify(cloud, {1e-3, 1e-3, 0.0}, config);
        REQUIRE(edits.size() == 2);
        CHECK(edits[0].source == 0);
        CHECK_FALSE(edits[0].split);
        CHECK(edits[1].source == 1);
        CHECK(edits[1].split);
    }
    SUBCASE("mismatched stats length throws") {
        CHECK_THROWS_AS(view_space_densify(cloud, {0.0}, config), Error);
    }
}

TEST_CASE("world_space_densify applies the adaptive threshold") {
    DensifyConfig config;
    config.tau_s2s_multiplier = 2.0;
    config.tau_s2s_floor = 1e-4;

    SplatCloud cloud;
    for (int i = 0; i < 5; ++i) cloud.splats.push_back(unit_splat(Vec3::Zero(), 0.005, 0.5));

    SUBCASE("identical distances select nothing since max equals the median") {
        std::vector<std::vector<double>> samples(5, std::vector<double>{0.3, 0.3});
        const auto sel = world_space_densify(cloud, samples, config);
        CHECK(sel.tau_s2s == doctest::Approx(0.6));
        CHECK(sel.edits.empty());
    }
    SUBCASE("a planted far splat is selected") {
        std::vector<std::vector<double>> samples(5, std::vector<double>{0.1, 0.1});
        samples[3].push_back(1.0); // 10x the median
        const auto sel = world_space_densify(cloud, samples, config);
        CHECK(sel.tau_s2s == doctest::Approx(0.2));
        REQUIRE(sel.edits.size() == 1);
        CHECK(sel.edits[0].source == 3);
        CHECK_FALSE(sel.edits[0].split); // scale 0.005 < split threshold
    }
    SUBCASE("off-face splats with empty samples never densify") {
        std::vector<std::vector<double>> samples(5);
        samples[0] = {0.01, 0.01, 5.0};
        const auto sel = world_space_densify(cloud, samples, config);
        REQUIRE(sel.edits.size() == 1);
        CHECK(sel.edits[0].source == 0);
    }
    SUBCASE("no samples at all leave tau at zero") {
        std::vector<std::vector<double>> samples(5);
        const auto sel = world_space_densify(cloud, samples, config);
        CHECK(sel.tau_s2s == 0.0);
        CHECK(sel.edits.empty());
    }
    SUBCASE("the floor wins over a tiny median") {
        config.tau_s2s_floor = 0.5;
        std::vector<std::vector<double>> samples(5, std::vector<double>{0.01});
        const auto sel = world_space_densify(cloud, samples, config);
        CHECK(sel.tau_s2s == doctest::Approx(0.5));
        CHECK(sel.edits.empty());
    }
}

TEST_CASE("merge_edits keeps one edit per source") {
    const std::vector<DensifyEdit> a = {{2, false}, {5, true}};
    const std::vector<DensifyEdit> b = {{5, true}, {1, false}};
    const auto merged = merge_edits(a, b);
    REQUIRE(merged.size() == 3);
    CHECK(merged[0].source == 1);
    CHECK(merged[1].source == 2);
    CHECK(merged[2].source == 5);
    CHECK(merged[2].split);
}

TEST_CASE("apply_densify clone shares opacity and split shrinks children") {
    DensifyConfig config;
    Rng rng(3);

    SUBCASE("clone") {
        SplatCloud cloud;
        cloud.splats.push_back(unit_splat(Vec3(1, 2, 3), 0.005, 0.8));
        const auto outcome = apply_densify(cloud, {{0, false}}, config, rng);
        REQUIRE(outcome.applied);
        REQUIRE(cloud.size() == 2);
        CHECK(outcome.kept == std::vector<int>{0});

        const double shared = 1.0 - std::sqrt(1.0 - 0.8);
        CHECK(cloud.splats[0].opacity() == doctest::Approx(shared).epsilon(1e-9));
        CHECK(cloud.splats[1].opacity() == doctest::Approx(shared).epsilon(1e-9));
        CHECK(cloud.splats[0].position == cloud.splats[1].position);
        CHECK(cloud.splats[0].log_scale == cloud.splats[1].log_scale);
        CHECK(cloud.generation[0] == 1);
        CHECK(cloud.generation[1] == 1);
    }
    SUBCASE("split") {
        SplatCloud cloud;
        cloud.splats.push_back(unit_splat(Vec3(0, 0, 0), 0.005, 0.5));
        cloud.splats.push_back(unit_splat(Vec3(1, 1, 1), 0.2, 0.5));
        const Vec3 parent_scale = cloud.splats[1].scales();

        const auto outcome = apply_densify(cloud, {{1, true}}, config, rng);
        REQUIRE(outcome.applied);
        REQUIRE(cloud.size() == 3); // untouched + two children, parent gone
        CHECK(outcome.kept == std::vector<int>{0});

        for (std::size_t c = 1; c < 3; ++c) {
            const Vec3 child_scale = cloud.splats[c].scales();
            for (int k = 0; k < 3; ++k)
                CHECK(child_scale[k] == doctest::Approx(parent_scale[k] / 1.6).epsilon(1e-12));
            CHECK(cloud.generation[c] == 1);
            // Children land near the parent (sampled from its density).
            CHECK((cloud.splats[c].position - Vec3(1, 1, 1)).norm() < 5.0 * 0.2);
        }
        CHECK(cloud.splats[1].position != cloud.splats[2].position);
    }
    SUBCASE("max_splats refusal leaves the cloud untouched") {
        config.max_splats = 2;
        SplatCloud cloud;
        cloud.splats.push_back(unit_splat(Vec3::Zero(), 0.005, 0.8));
        cloud.splats.push_back(unit_splat(Vec3::Ones(), 0.005, 0.8));
        const SplatCloud before = cloud;

        const auto outcome = apply_densify(cloud, {{0, false}}, config, rng);
        CHECK_FALSE(outcome.applied);
        REQUIRE(cloud.size() == 2);
        CHECK(cloud.splats[0].opacity_logit == before.splats[0].opacity_logit);
    }
}

TEST_CASE("cloning keeps the rendering nearly unchanged") {
    // Splat dead-center on a pixel: fx * 0.05 / 2 + 7.5 = 8 for fx = 20.
    SplatCloud cloud;
    cloud.splats.push_back(unit_splat(Vec3(0.05, 0.05, 2.0), 0.08, 0.8));
    cloud.splats.front().sh_coeffs[0] = (Vec3(0.9, 0.3, 0.2) - Vec3::Constant(0.5)) / 0.28209479177387814;
    cloud.splats.push_back(unit_splat(Vec3(-0.1, 0.0, 3.0), 0.15, 0.6));

    Camera cam;
    cam.fx = cam.fy = 20.0;
    cam.cx = cam.cy = 7.5;
    cam.width = cam.height = 16;
    cam.world_to_camera = Mat4::Identity();

    const Vec3 bg(0.1, 0.1, 0.1);
    const RenderedImage before = render(cloud, cam, bg);

    DensifyConfig config;
    Rng rng(9);
    const auto outcome = apply_densify(cloud, {{0, false}}, config, rng);
    REQUIRE(outcome.applied);
    const RenderedImage after = render(cloud, cam, bg);

    // At the splat center the pair composites back to the original alpha
    // exactly; elsewhere the deviation is bounded by the clone's own
    // contribution (max alpha * g * (1 - g) over the footprint).
    double max_diff = 0.0;
    for (std::size_t i = 0; i < before.rgb.data.size(); ++i)
        max_diff = std::max(max_diff, std::abs(before.rgb.data[i] - after.rgb.data[i]));
    CHECK(max_diff < 0.08);
    for (int c = 0; c < 3; ++c)
        CHECK(std::abs(before.rgb.at(8, 8, c) - after.rgb.at(8, 8, c)) < 1e-9);
}

TEST_CASE("prune removes transparent and oversized splats") {
    DensifyConfig config; // opacity floor 0.005, scale cap 1.0
    SplatCloud cloud;
    cloud.splats.push_back(unit_splat(Vec3::Zero(), 0.01, 0.5));
    cloud.splats.push_back(unit_splat(Vec3::Zero(), 0.01, 1e-4));
    cloud.splats.push_back(unit_splat(Vec3::Zero(), 2.0, 0.5));

    SUBCASE("all healthy splats survive") {
        SplatCloud healthy;
        for (int i = 0; i < 4; ++i) healthy.splats.push_back(unit_splat(Vec3::Zero(), 0.01, 0.5));
        CHECK(prune(healthy, config).size() == 4);
    }
    SUBCASE("low opacity and oversized are dropped") {
        const std::vector<int> kept = prune(cloud, config);
        CHECK(kept == std::vector<int>{0});
        apply_prune(cloud, kept);
        REQUIRE(cloud.size() == 1);
        CHECK(cloud.splats[0].opacity() == doctest::Approx(0.5));
    }
}

TEST_CASE("initialize_splats places mid-gray low-opacity splats on vertices") {
    TriangleMesh mesh;
    mesh.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    mesh.triangles = {{0, 1, 2}};
    mesh.recompute_normals();

    const SplatCloud cloud = initialize_splats(mesh, 1);
    REQUIRE(cloud.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        const GaussianSplat& s = cloud.splats[i];
        CHECK(s.position == mesh.vertices[i]);
        CHECK(s.opacity() == doctest::Approx(0.1).epsilon(1e-12));
        CHECK(s.rotation == Vec4(1, 0, 0, 0));
        REQUIRE(s.sh_coeffs.size() == 4);
        // Zero coefficients decode to mid-gray through the +0.5 offset.
        CHECK(eval_sh_color(s.sh_coeffs, Vec3(0, 0, 1)) == Vec3(0.5, 0.5, 0.5));
    }
    // Vertex 0 touches edges of length 1 and 1 (and the hypotenuse does not
    // involve it): scale = 0.5 * mean incident edge length = 0.5.
    CHECK(cloud.splats[0].scales()[0] == doctest::Approx(0.5).epsilon(1e-12));
    // Vertex 1 touches lengths 1 and sqrt(2).
    CHECK(cloud.splats[1].scales()[0] ==
          doctest::Approx(0.5 * (1.0 + std::sqrt(2.0)) / 2.0).epsilon(1e-12));
}

TEST_CASE("scene_extent is the max distance from the centroid") {
    TriangleMesh mesh;
    mesh.vertices = {{-1, 0, 0}, {3, 0, 0}};
    CHECK(scene_extent(mesh) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("zero training iterations return the initialization unchanged") {
    const MorphableModel model = octahedron_model(0.5);
    const TrainingViews views = synthetic_views(model, 32);

    TrainConfig config;
    config.iterations = 0;
    config.sh_degree = 1;

    const TrainResult result = train(views, model, config);
    const TriangleMesh mesh = evaluate_surface(model, SurfaceParams::zero(model));
    const SplatCloud expected = initialize_splats(mesh, 1);

    REQUIRE(result.cloud.size() == expected.size());
    for (std::size_t i = 0; i < expected.size(); ++i) {
        CHECK(result.cloud.splats[i].position == expected.splats[i].position);
        CHECK(result.cloud.splats[i].opacity_logit == expected.splats[i].opacity_logit);
    }
    CHECK(result.surface.shape_coeffs.norm() == 0.0);
    CHECK(result.surface.pose_scale == 1.0);
    CHECK(result.metrics.empty());
    CHECK(result.final_mesh.vertices.size() == mesh.vertices.size());
}

TEST_CASE("training is deterministic per seed and improves the fit") {
    const MorphableModel model = octahedron_model(0.5);
    const TrainingViews views = synthetic_views(model, 32);

    TrainConfig config;
    config.iterations = 60;
    config.sh_degree = 0;
    config.seed = 5;
    config.s2s_draws = 4;
    config.metrics_interval = 10;
    config.densify.window_start = 1000; // densification off for this length

    const TrainResult a = train(views, model, config);
    const TrainResult b = train(views, model, config);

    REQUIRE(a.metrics.size() == b.metrics.size());
    REQUIRE(!a.metrics.empty());
    for (std::size_t i = 0; i < a.metrics.size(); ++i) {
        CHECK(a.metrics[i].iteration == b.metrics[i].iteration);
        CHECK(a.metrics[i].loss_total == b.metrics[i].loss_total);
        CHECK(a.metrics[i].loss_rgb == b.metrics[i].loss_rgb);
        CHECK(a.metrics[i].loss_s2s == b.metrics[i].loss_s2s);
        CHECK(a.metrics[i].splat_count == b.metrics[i].splat_count);
    }
    REQUIRE(a.cloud.size() == b.cloud.size());
    for (std::size_t i = 0; i < a.cloud.size(); ++i)
        CHECK(a.cloud.splats[i].position == b.cloud.splats[i].position);

    config.seed = 6;
    const TrainResult c = train(views, model, config);
    bool any_difference = false;
    for (std::size_t i = 0; i < std::min(a.metrics.size(), c.metrics.size()); ++i)
        any_difference |= a.metrics[i].loss_total != c.metrics[i].loss_total;
    CHECK(any_difference);

    // Deterministic fit comparison on a fixed view and background.
    const TriangleMesh mesh = evaluate_surface(model, SurfaceParams::zero(model));
    const SplatCloud init = initialize_splats(mesh, 0);
    const RenderedImage before = render(init, views[0].camera, Vec3::Zero());
    const RenderedImage after = render(a.cloud, views[0].camera, Vec3::Zero());
    CHECK(psnr(after.rgb, views[0].image) > psnr(before.rgb, views[0].image));
}

TEST_CASE("training invariants hold through densification and capping") {
    const MorphableModel model = octahedron_model(0.5);
    const TrainingViews views = synthetic_views(model, 32);

    TrainConfig config;
    config.iterations = 80;
    config.sh_degree = 0;
    config.seed = 11;
    config.s2s_draws = 2;
    config.metrics_interval = 20;
    config.densify.window_start = 10;
    config.densify.window_end = 70;
    config.densify.interval = 15;
    config.densify.view_grad_threshold = 1e-12; // force growth
    config.densify.max_splats = 40;

    int checked = 0;
    config.on_iteration = [&](int, const SplatCloud& cloud, const SurfaceParams& surface) {
        CHECK(cloud.size() <= 40);
        for (const GaussianSplat& s : cloud.splats) {
            CHECK(s.finite());
            CHECK(s.rotation.norm() == doctest::Approx(1.0).epsilon(1e-9));
        }
        CHECK(std::isfinite(surface.pose_scale));
        ++checked;
    };

    const TrainResult result = train(views, model, config);
    CHECK(checked == 80);
    CHECK(result.cloud.size() <= 40);
    CHECK(result.cloud.size() > 6); // densification actually fired
    CHECK_FALSE(result.warnings.empty()); // and eventually hit the cap
    for (const MetricsRecord& rec : result.metrics) CHECK(std::isfinite(rec.loss_total));
}

TEST_CASE("non-finite targets abort with a divergence snapshot") {
    const MorphableModel model = octahedron_model(0.5);
    TrainingViews views = synthetic_views(model, 32);
    // The poisoned pixel must be inside the mask or the loss replaces it.
    REQUIRE(views[0].mask.at(16, 16, 0) == 1.0);
    views[0].image.at(16, 16, 1) = std::numeric_limits<double>::quiet_NaN();
    views.resize(1);

    TrainConfig config;
    config.iterations = 5;
    config.sh_degree = 0;

    bool snapshot = false;
    config.on_divergence = [&](int iteration, const SplatCloud& cloud, const SurfaceParams&) {
        snapshot = true;
        CHECK(iteration == 1);
        CHECK(cloud.size() == 6);
    };

    CHECK_THROWS_AS(train(views, model, config), Error);
    CHECK(snapshot);
}

TEST_CASE("train validates its inputs") {
    const MorphableModel model = octahedron_model(0.5);
    TrainConfig config;
    CHECK_THROWS_AS(train({}, model, config), Error);

    TrainingViews views = synthetic_views(model, 32);
    views[0].mask = Image(8, 8, 1, 1.0); // wrong shape
    CHECK_THROWS_AS(train(views, model, config), Error);
}
