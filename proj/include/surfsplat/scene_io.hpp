// Copyright Contributors to the SurfSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "surfsplat/camera.hpp"
#include "surfsplat/gaussian.hpp"
#include "surfsplat/image.hpp"
#include "surfsplat/morphable.hpp"
#include "surfsplat/trainer.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace surfsplat {

/// Binary PPM (P6) for 3-channel images, PGM (P5) for single-channel, 8-bit,
/// values clamped to [0,1] and rounded. Loading maps bytes back to k/255,
/// so save -> load -> save reproduces the file bitwise.
void write_image(const Image& image, const std::string& path);
Image read_image(const std::string& path);

/// Structured text: intrinsics, viewport size, and the 4x4 world-to-camera
/// matrix, printed with enough digits that doubles survive the round trip.
void write_camera(const Camera& camera, const std::string& path);
/// Parses and validates; a non-orthonormal rotation or bad intrinsics throw
/// load_error naming the field.
Camera read_camera(const std::string& path);

/// Wavefront OBJ with v/f records and 1-based indices. Other record types
/// are ignored on load; normals are recomputed.
void write_obj(const TriangleMesh& mesh, const std::string& path);
TriangleMesh read_obj(const std::string& path);

/// De-facto splat-viewer PLY layout: binary little-endian float32 records
/// x,y,z, nx,ny,nz (zeroed), f_dc_0..2, f_rest (channel-major), opacity
/// (logit), scale_0..2 (logs), rot_0..3 (w,x,y,z). The spherical-harmonics
/// degree is recovered from the f_rest property count. Values are stored in
/// single precision; clouds written by the synthetic generator are snapped
/// to that grid at creation so their round trips are exact. Generation
/// counters are not part of the format and reset to zero on load.
void write_splat_ply(const SplatCloud& cloud, const std::string& path);
SplatCloud read_splat_ply(const std::string& path);

/// Morphable-model container: a directory holding model.json (dimensions,
/// blob names, face mask) plus one raw little-endian float32 blob per
/// vertex array and a uint32 blob for triangles. Blob lengths are checked
/// against the manifest; the loaded model is validated.
void write_morphable_model(const MorphableModel& model, const std::string& directory);
MorphableModel read_morphable_model(const std::string& directory);

/// Blend coefficients and pose as line-oriented text, double-lossless.
void write_surface_params(const SurfaceParams& params, const std::string& path);
SurfaceParams read_surface_params(const std::string& path);

/// Full config as a JSON object (every key present).
std::string train_config_to_json(const TrainConfig& config);
/// Applies the keys present in `json_text` (a JSON object, possibly
/// partial) over `config`. Unknown keys throw load_error naming them.
void apply_train_config_json(TrainConfig& config, const std::string& json_text);
void write_train_config(const TrainConfig& config, const std::string& path);
/// Defaults with the file's keys applied.
TrainConfig read_train_config(const std::string& path);

/// Line-delimited JSON, one MetricsRecord per line.
void write_metrics_log(const std::vector<MetricsRecord>& records, const std::string& path);
std::vector<MetricsRecord> read_metrics_log(const std::string& path);

/// Scene description on disk. All paths are relative to the manifest's
/// directory. `config_overrides` holds a JSON object applied over the
/// default TrainConfig at load; `seed` then overrides the config seed.
/// Ground-truth paths are optional (empty when absent) and are never read
/// by load_scene — they serve evaluation tools.
struct SceneManifest {
    struct ViewPaths {
        std::string image;
        std::string mask;
        std::string camera;
    };
    struct GroundTruthPaths {
        std::string mesh;           // OBJ
        std::string splats;         // PLY
        std::string surface_params; // text
    };

    std::vector<ViewPaths> views;
    std::string model_directory;
    std::uint64_t seed = 0;
    std::string config_overrides = "{}";
    GroundTruthPaths ground_truth;
};

void write_scene_manifest(const SceneManifest& manifest, const std::string& path);
SceneManifest read_scene_manifest(const std::string& path);

struct LoadedScene {
    TrainingViews views;
    MorphableModel model;
    TrainConfig config;
    SceneManifest manifest;
    std::string root; // manifest directory, for resolving ground-truth paths
};

/// Reads the manifest and everything it references. Images come back in
/// [0,1], masks binarized at 0.5, cameras validated, and view shapes
/// cross-checked. Missing or malformed files throw load_error naming the
/// path.
LoadedScene load_scene(const std::string& manifest_path);

/// Resolves a manifest-relative path against the scene root.
std::string scene_path(const LoadedScene& scene, const std::string& relative);

/// Checkpoint directory: splats.ply + surface_params.txt + config.json.
struct Checkpoint {
    SplatCloud cloud;
    SurfaceParams surface;
    TrainConfig config;
};

void save_checkpoint(const std::string& directory, const SplatCloud& cloud,
                     const SurfaceParams& surface, const TrainConfig& config);
Checkpoint load_checkpoint(const std::string& directory);

} // namespace surfsplat
