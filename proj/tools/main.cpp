// Copyright Contributors to the SurfSplat Project
// SPDX-License-Identifier: Apache-2.0

#include <surfsplat/bvh.hpp>
#include <surfsplat/error.hpp>
#include <surfsplat/evaluation.hpp>
#include <surfsplat/morphable.hpp>
#include <surfsplat/renderer.hpp>
#include <surfsplat/scene_io.hpp>
#include <surfsplat/synthetic.hpp>
#include <surfsplat/trainer.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace {

using nlohmann::json;
using namespace surfsplat;

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(ErrorCode::load_error, path + ": cannot open");
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out || !(out << text) || !out.flush())
        throw Error(ErrorCode::io_error, path + ": cannot write");
}

/// "a.b.c=value" assigned into a nested JSON object. The value is parsed as
/// a JSON literal when possible, otherwise taken as a string, so
/// `--set densify.max_splats=500` and `--set surface_mode=point_to_surface`
/// both work unquoted.
void assign_dotted(json& root, const std::string& entry) {
    const std::size_t eq = entry.find('=');
    if (eq == std::string::npos || eq == 0)
        throw Error(ErrorCode::invalid_parameter,
                    "--set expects key.path=value, got \"" + entry + "\"");
    const std::string path = entry.substr(0, eq);
    const std::string raw = entry.substr(eq + 1);

    json* node = &root;
    std::size_t begin = 0;
    while (true) {
        const std::size_t dot = path.find('.', begin);
        const std::string key = path.substr(begin, dot - begin);
        if (key.empty())
            throw Error(ErrorCode::invalid_parameter, "--set path has an empty segment: " + path);
        if (dot == std::string::npos) {
            json value;
            try {
                value = json::parse(raw);
            } catch (const json::exception&) {
                value = raw; // unquoted strings (e.g. surface modes)
            }
            (*node)[key] = value;
            return;
        }
        if (!node->contains(key) || !(*node)[key].is_object()) (*node)[key] = json::object();
        node = &(*node)[key];
        begin = dot + 1;
    }
}

json view_metrics_json(const ViewMetrics& m) {
    return json{{"l1", m.l1}, {"ssim", m.ssim}, {"psnr", m.psnr}};
}

json distance_stats_json(const DistanceStats& stats) {
    return json{{"mean", stats.mean},
                {"mean_squared", stats.mean_squared},
                {"median", stats.median},
                {"m90", stats.m90},
                {"samples", stats.raw.size()}};
}

// ---------------------------------------------------------------------------
// synth

struct SynthArgs {
    std::string out;
    std::vector<double> shape_coeffs;
    std::vector<double> expression_coeffs;
    int views = 5;
    int resolution = 128;
    double ring_radius = 2.5;
    double ring_elevation = 0.12;
    double arc_degrees = 120.0;
    std::size_t splats = 400;
    std::uint64_t seed = 0;
};

int run_synth(const SynthArgs& a) {
    SyntheticSceneSpec spec;
    spec.shape_coeffs = Eigen::Map<const VecX>(a.shape_coeffs.data(),
                                               static_cast<Eigen::Index>(a.shape_coeffs.size()));
    spec.expression_coeffs = Eigen::Map<const VecX>(
        a.expression_coeffs.data(), static_cast<Eigen::Index>(a.expression_coeffs.size()));
    spec.view_count = a.views;
    spec.resolution = a.resolution;
    spec.ring_radius = a.ring_radius;
    spec.ring_elevation = a.ring_elevation;
    spec.arc_degrees = a.arc_degrees;
    spec.splat_count = a.splats;
    spec.seed = a.seed;

    const std::string manifest = generate_synthetic_scene(spec, a.out);
    std::printf("wrote %s (%d views at %dx%d, seed %llu)\n", manifest.c_str(), spec.view_count,
                spec.resolution, spec.resolution, static_cast<unsigned long long>(spec.seed));
    return 0;
}

// ---------------------------------------------------------------------------
// train

struct TrainArgs {
    std::string scene;
    std::string out;
    std::string config_file;
    std::vector<std::string> sets;
    int progress = 100;

    int iterations = 0;
    int sh_degree = 0;
    int s2s_draws = 0;
    std::string surface_mode;
    bool optimize_surface = true;
    bool use_surface_loss = true;
    bool view_densify = true;
    bool world_densify = true;
    double lambda_rgb = 0.0;
    double lambda_s2s = 0.0;
    double lambda_ssim = 0.0;
    std::size_t max_splats = 0;
    int metrics_interval = 0;
    std::uint64_t seed = 0;
};

int run_train(const TrainArgs& a, const CLI::App& cmd) {
    const LoadedScene scene = load_scene(a.scene);
    TrainConfig config = scene.config;

    if (!a.config_file.empty()) apply_train_config_json(config, slurp(a.config_file));

    if (!a.sets.empty()) {
        json overrides = json::object();
        for (const std::string& entry : a.sets) assign_dotted(overrides, entry);
        apply_train_config_json(config, overrides.dump());
    }

    json direct = json::object();
    const auto passed = [&cmd](const std::string& name) { return cmd.count(name) > 0; };
    if (passed("--iterations")) direct["iterations"] = a.iterations;
    if (passed("--sh-degree")) direct["sh_degree"] = a.sh_degree;
    if (passed("--s2s-draws")) direct["s2s_draws"] = a.s2s_draws;
    if (passed("--surface-mode")) direct["surface_mode"] = a.surface_mode;
    if (passed("--optimize-surface")) direct["optimize_surface"] = a.optimize_surface;
    if (passed("--surface-loss")) direct["use_surface_loss"] = a.use_surface_loss;
    if (passed("--view-densify")) direct["view_space_densify_enabled"] = a.view_densify;
    if (passed("--world-densify")) direct["world_space_densify_enabled"] = a.world_densify;
    if (passed("--lambda-rgb")) direct["weights"]["lambda_rgb"] = a.lambda_rgb;
    if (passed("--lambda-s2s")) direct["weights"]["lambda_s2s"] = a.lambda_s2s;
    if (passed("--lambda-ssim")) direct["weights"]["lambda_ssim"] = a.lambda_ssim;
    if (passed("--max-splats")) direct["densify"]["max_splats"] = a.max_splats;
    if (passed("--metrics-interval")) direct["metrics_interval"] = a.metrics_interval;
    if (!direct.empty()) apply_train_config_json(config, direct.dump());

    if (passed("--seed")) config.seed = a.seed;

    if (a.progress > 0) {
        const int every = a.progress;
        const int total = config.iterations;
        config.on_iteration = [every, total](int iteration, const SplatCloud& cloud,
                                             const SurfaceParams&) {
            if (iteration % every == 0 || iteration == total)
                std::fprintf(stderr, "iteration %d/%d, %zu splats\n", iteration, total,
                             cloud.splats.size());
        };
    }
    const std::string out_dir = a.out;
    config.on_divergence = [&config, &out_dir](int iteration, const SplatCloud& cloud,
                                               const SurfaceParams& surface) {
        std::fprintf(stderr, "divergence at iteration %d; saving last finite state\n", iteration);
        save_checkpoint(out_dir + "/diverged", cloud, surface, config);
    };

    const TrainResult result = train(scene.views, scene.model, config);

    for (const std::string& w : result.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
    save_checkpoint(a.out, result.cloud, result.surface, config);
    write_metrics_log(result.metrics, a.out + "/metrics.jsonl");

    if (!result.metrics.empty()) {
        const MetricsRecord& last = result.metrics.back();
        std::printf("finished %d iterations: loss %.6f (rgb %.6f, s2s %.6f), %zu splats\n",
                    last.iteration, last.loss_total, last.loss_rgb, last.loss_s2s,
                    last.splat_count);
    }
    std::printf("checkpoint written to %s\n", a.out.c_str());
    return 0;
}

// ---------------------------------------------------------------------------
// render

struct RenderArgs {
    std::string checkpoint;
    std::string camera;
    std::string out;
    std::string alpha_out;
    std::vector<double> background{0.0, 0.0, 0.0};
};

int run_render(const RenderArgs& a) {
    const Checkpoint ckpt = load_checkpoint(a.checkpoint);
    const Camera camera = read_camera(a.camera);
    const Vec3 background(a.background[0], a.background[1], a.background[2]);
    const RenderedImage rendered = render(ckpt.cloud, camera, background);
    write_image(rendered.rgb, a.out);
    if (!a.alpha_out.empty()) write_image(rendered.alpha, a.alpha_out);
    std::printf("wrote %s (%dx%d)\n", a.out.c_str(), camera.width, camera.height);
    return 0;
}

// ---------------------------------------------------------------------------
// eval-images

struct EvalImagesArgs {
    std::string scene;
    std::string checkpoint;
    std::string report;
};

int run_eval_images(const EvalImagesArgs& a) {
    const LoadedScene scene = load_scene(a.scene);
    const Checkpoint ckpt = load_checkpoint(a.checkpoint);

    std::vector<Image> rendered, targets, masks;
    for (const TrainingView& view : scene.views) {
        rendered.push_back(render(ckpt.cloud, view.camera, Vec3::Zero()).rgb);
        targets.push_back(view.image);
        masks.push_back(view.mask);
    }
    const ImageMetricsReport report = image_metrics_report(rendered, targets, masks);
    std::fputs(format_report(report).c_str(), stdout);

    if (!a.report.empty()) {
        json j;
        j["views"] = json::array();
        for (const ViewMetrics& m : report.per_view) j["views"].push_back(view_metrics_json(m));
        j["mean"] = view_metrics_json(report.mean);
        write_text(a.report, j.dump(2) + "\n");
    }
    return 0;
}

// ---------------------------------------------------------------------------
// eval-mesh

struct EvalMeshArgs {
    std::string scene;
    std::string model_dir;
    std::string checkpoint;
    std::string gt_mesh;
    std::string report;
    std::size_t samples = 100000;
    int icp_iterations = 200;
    double icp_tolerance = 1e-9;
    bool with_scale = true;
    int spike_draws = 8;
    std::uint64_t seed = 0;
};

/// The morphable model evaluated with the checkpoint's parameters. The
/// model comes from --model when given, else from the scene manifest.
MorphableModel load_model_for(const std::string& model_dir, const std::string& scene_manifest,
                              const char* command) {
    if (!model_dir.empty()) return read_morphable_model(model_dir);
    if (!scene_manifest.empty()) return load_scene(scene_manifest).model;
    throw Error(ErrorCode::invalid_parameter,
                std::string(command) + " needs --model or --scene to evaluate the surface");
}

int run_eval_mesh(const EvalMeshArgs& a) {
    const Checkpoint ckpt = load_checkpoint(a.checkpoint);
    const MorphableModel model = load_model_for(a.model_dir, a.scene, "eval-mesh");
    const TriangleMesh predicted = evaluate_surface(model, ckpt.surface);

    std::string gt_path = a.gt_mesh;
    if (gt_path.empty() && !a.scene.empty()) {
        const LoadedScene scene = load_scene(a.scene);
        if (!scene.manifest.ground_truth.mesh.empty())
            gt_path = scene_path(scene, scene.manifest.ground_truth.mesh);
    }
    if (gt_path.empty())
        throw Error(ErrorCode::invalid_parameter,
                    "eval-mesh needs --gt-mesh or a scene manifest with a ground-truth mesh");
    const TriangleMesh gt = read_obj(gt_path);

    const std::vector<Vec3> samples = sample_mesh_surface(gt, a.samples, a.seed);
    const AlignmentResult alignment =
        icp_align(samples, predicted, a.with_scale, a.icp_iterations, a.icp_tolerance);

    std::vector<Vec3> aligned(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) aligned[i] = alignment.apply(samples[i]);

    const BvhIndex index = build_bvh(predicted);
    const DistanceStats stats = mesh_distance_stats(aligned, predicted, index);
    const double spike = spike_metric(ckpt.cloud, predicted, index, a.spike_draws, a.seed);
    const double mean_s2s =
        mean_splat_surface_distance(ckpt.cloud, predicted, index, a.spike_draws, a.seed);

    std::printf("alignment: %zu iterations, rms %.3e, scale %.6f\n",
                alignment.rms_history.size() - 1, alignment.rms_history.back(), alignment.scale);
    std::printf("distance to recovered surface over %zu ground-truth samples:\n",
                stats.raw.size());
    std::printf("  mean          %.6f\n", stats.mean);
    std::printf("  mean squared  %.6f\n", stats.mean_squared);
    std::printf("  median        %.6f\n", stats.median);
    std::printf("  m90           %.6f\n", stats.m90);
    std::printf("splat spike metric %.6f, mean splat-surface distance %.6f\n", spike, mean_s2s);

    if (!a.report.empty()) {
        json j;
        j["alignment"] = {{"iterations", alignment.rms_history.size() - 1},
                          {"rms", alignment.rms_history.back()},
                          {"scale", alignment.scale}};
        j["distance"] = distance_stats_json(stats);
        j["spike_metric"] = spike;
        j["mean_splat_surface_distance"] = mean_s2s;
        write_text(a.report, j.dump(2) + "\n");
    }
    return 0;
}

// ---------------------------------------------------------------------------
// export-mesh / export-splats

struct ExportArgs {
    std::string checkpoint;
    std::string scene;
    std::string model_dir;
    std::string out;
};

int run_export_mesh(const ExportArgs& a) {
    const Checkpoint ckpt = load_checkpoint(a.checkpoint);
    const MorphableModel model = load_model_for(a.model_dir, a.scene, "export-mesh");
    const TriangleMesh mesh = evaluate_surface(model, ckpt.surface);
    write_obj(mesh, a.out);
    std::printf("wrote %s (%zu vertices, %zu triangles)\n", a.out.c_str(), mesh.vertex_count(),
                mesh.triangle_count());
    return 0;
}

int run_export_splats(const ExportArgs& a) {
    const Checkpoint ckpt = load_checkpoint(a.checkpoint);
    write_splat_ply(ckpt.cloud, a.out);
    std::printf("wrote %s (%zu splats)\n", a.out.c_str(), ckpt.cloud.splats.size());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Surface-constrained Gaussian-splat reconstruction"};
    app.require_subcommand(1);

    SynthArgs synth;
    CLI::App* synth_cmd =
        app.add_subcommand("synth", "Generate a synthetic scene with ground truth");
    synth_cmd->add_option("--out", synth.out, "Output scene directory")->required();
    synth_cmd->add_option("--views", synth.views, "Number of camera views");
    synth_cmd->add_option("--resolution", synth.resolution, "Image width and height");
    synth_cmd->add_option("--ring-radius", synth.ring_radius, "Camera ring radius");
    synth_cmd->add_option("--ring-elevation", synth.ring_elevation,
                          "Camera height as a fraction of the ring radius");
    synth_cmd->add_option("--arc-degrees", synth.arc_degrees, "Angular spread of the camera ring");
    synth_cmd->add_option("--splats", synth.splats, "Ground-truth splat count");
    synth_cmd->add_option("--shape-coeffs", synth.shape_coeffs,
                          "Ground-truth shape coefficients (default: drawn from the seed)");
    synth_cmd->add_option("--expression-coeffs", synth.expression_coeffs,
                          "Ground-truth expression coefficients (default: drawn from the seed)");
    synth_cmd->add_option("--seed", synth.seed, "Scene seed (textures, coefficients, placement)");

    TrainArgs train_args;
    CLI::App* train_cmd = app.add_subcommand("train", "Optimize splats and surface from a scene");
    train_cmd->add_option("--scene", train_args.scene, "Scene manifest path")->required();
    train_cmd->add_option("--out", train_args.out, "Checkpoint output directory")->required();
    train_cmd->add_option("--config", train_args.config_file,
                          "JSON config overrides applied over the manifest's");
    train_cmd->add_option("--set", train_args.sets,
                          "Single config override as key.path=value (repeatable)");
    train_cmd->add_option("--iterations", train_args.iterations, "Optimization iterations");
    train_cmd->add_option("--sh-degree", train_args.sh_degree, "Spherical-harmonics degree");
    train_cmd->add_option("--s2s-draws", train_args.s2s_draws,
                          "Monte-Carlo draws per splat for the surface loss");
    train_cmd->add_option("--surface-mode", train_args.surface_mode,
                          "splat_to_surface or point_to_surface");
    train_cmd->add_flag("--optimize-surface,!--no-optimize-surface", train_args.optimize_surface,
                        "Jointly optimize the surface parameters");
    train_cmd->add_flag("--surface-loss,!--no-surface-loss", train_args.use_surface_loss,
                        "Apply the surface-distance loss term");
    train_cmd->add_flag("--view-densify,!--no-view-densify", train_args.view_densify,
                        "Densify from view-space positional gradients");
    train_cmd->add_flag("--world-densify,!--no-world-densify", train_args.world_densify,
                        "Densify from world-space surface distances");
    train_cmd->add_option("--lambda-rgb", train_args.lambda_rgb, "Photometric loss weight");
    train_cmd->add_option("--lambda-s2s", train_args.lambda_s2s, "Surface-distance loss weight");
    train_cmd->add_option("--lambda-ssim", train_args.lambda_ssim, "SSIM loss weight");
    train_cmd->add_option("--max-splats", train_args.max_splats, "Densification budget");
    train_cmd->add_option("--metrics-interval", train_args.metrics_interval,
                          "Iterations between metrics records");
    train_cmd->add_option("--progress", train_args.progress,
                          "Iterations between progress lines on stderr (0 = quiet)");
    train_cmd->add_option("--seed", train_args.seed,
                          "Random seed (overrides manifest and config)");

    RenderArgs render_args;
    CLI::App* render_cmd = app.add_subcommand("render", "Render a checkpoint through a camera");
    render_cmd->add_option("--checkpoint", render_args.checkpoint, "Checkpoint directory")
        ->required();
    render_cmd->add_option("--camera", render_args.camera, "Camera file")->required();
    render_cmd->add_option("--out", render_args.out, "Output PPM image path")->required();
    render_cmd->add_option("--alpha-out", render_args.alpha_out,
                           "Optional PGM path for accumulated opacity");
    render_cmd->add_option("--background", render_args.background, "Background color r g b")
        ->expected(3);
    std::uint64_t render_seed = 0;
    render_cmd->add_option("--seed", render_seed, "Accepted for uniformity; rendering is exact");

    EvalImagesArgs eval_images;
    CLI::App* eval_images_cmd =
        app.add_subcommand("eval-images", "Image metrics of a checkpoint against scene views");
    eval_images_cmd->add_option("--scene", eval_images.scene, "Scene manifest path")->required();
    eval_images_cmd->add_option("--checkpoint", eval_images.checkpoint, "Checkpoint directory")
        ->required();
    eval_images_cmd->add_option("--report", eval_images.report, "Optional JSON report path");
    std::uint64_t eval_images_seed = 0;
    eval_images_cmd->add_option("--seed", eval_images_seed,
                                "Accepted for uniformity; evaluation is exact");

    EvalMeshArgs eval_mesh;
    CLI::App* eval_mesh_cmd =
        app.add_subcommand("eval-mesh", "Geometric accuracy of a recovered surface");
    eval_mesh_cmd->add_option("--checkpoint", eval_mesh.checkpoint, "Checkpoint directory")
        ->required();
    eval_mesh_cmd->add_option("--scene", eval_mesh.scene,
                              "Scene manifest (model and ground-truth mesh source)");
    eval_mesh_cmd->add_option("--model", eval_mesh.model_dir, "Morphable model directory");
    eval_mesh_cmd->add_option("--gt-mesh", eval_mesh.gt_mesh, "Ground-truth mesh OBJ");
    eval_mesh_cmd->add_option("--samples", eval_mesh.samples, "Ground-truth surface samples");
    eval_mesh_cmd->add_option("--icp-iterations", eval_mesh.icp_iterations, "ICP iteration cap");
    eval_mesh_cmd->add_option("--icp-tolerance", eval_mesh.icp_tolerance,
                              "ICP convergence tolerance on RMS improvement");
    eval_mesh_cmd->add_flag("--with-scale,!--no-scale", eval_mesh.with_scale,
                            "Solve for a uniform scale during alignment");
    eval_mesh_cmd->add_option("--spike-draws", eval_mesh.spike_draws,
                              "Draws per splat for the spike metric");
    eval_mesh_cmd->add_option("--seed", eval_mesh.seed, "Sampling seed");

    ExportArgs export_mesh;
    CLI::App* export_mesh_cmd =
        app.add_subcommand("export-mesh", "Write the checkpoint surface as OBJ");
    export_mesh_cmd->add_option("--checkpoint", export_mesh.checkpoint, "Checkpoint directory")
        ->required();
    export_mesh_cmd->add_option("--scene", export_mesh.scene, "Scene manifest (model source)");
    export_mesh_cmd->add_option("--model", export_mesh.model_dir, "Morphable model directory");
    export_mesh_cmd->add_option("--out", export_mesh.out, "Output OBJ path")->required();
    std::uint64_t export_mesh_seed = 0;
    export_mesh_cmd->add_option("--seed", export_mesh_seed,
                                "Accepted for uniformity; export is exact");

    ExportArgs export_splats;
    CLI::App* export_splats_cmd =
        app.add_subcommand("export-splats", "Write the checkpoint splats as PLY");
    export_splats_cmd->add_option("--checkpoint", export_splats.checkpoint, "Checkpoint directory")
        ->required();
    export_splats_cmd->add_option("--out", export_splats.out, "Output PLY path")->required();
    std::uint64_t export_splats_seed = 0;
    export_splats_cmd->add_option("--seed", export_splats_seed,
                                  "Accepted for uniformity; export is exact");

    eval_mesh_cmd->add_option("--report", eval_mesh.report, "Optional JSON report path");

    CLI11_PARSE(app, argc, argv);

    try {
        if (app.got_subcommand(synth_cmd)) return run_synth(synth);
        if (app.got_subcommand(train_cmd)) return run_train(train_args, *train_cmd);
        if (app.got_subcommand(render_cmd)) return run_render(render_args);
        if (app.got_subcommand(eval_images_cmd)) return run_eval_images(eval_images);
        if (app.got_subcommand(eval_mesh_cmd)) return run_eval_mesh(eval_mesh);
        if (app.got_subcommand(export_mesh_cmd)) return run_export_mesh(export_mesh);
        if (app.got_subcommand(export_splats_cmd)) return run_export_splats(export_splats);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 0;
}
