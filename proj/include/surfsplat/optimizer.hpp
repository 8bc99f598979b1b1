// Copyright Contributors to the SurfSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "surfsplat/morphable.hpp"
#include "surfsplat/renderer.hpp"

#include <vector>

namespace surfsplat {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

/// Per-group learning rates. The position rate is multiplied by the scene
/// extent by the trainer so step sizes track the scene's physical scale.
struct LearningRates {
    double position = 1.6e-4;
    double log_scale = 5e-3;
    double rotation = 1e-3;
    double opacity = 5e-2;
    double sh = 2.5e-3;
    double surface_coeffs = 1e-3;
    double pose = 1e-4;
};

/// Update direction for one scalar slot; caller subtracts lr * direction.
/// Bias correction uses the global step count, shared across slots.
double adam_direction(double& m, double& v, double grad, int step, const AdamConfig& config);

/// Adaptive-moment optimizer over every splat parameter. Moment buffers
/// share the SplatGrad layout; splats added by densification start with
/// zeroed moments, removed splats drop theirs.
class SplatOptimizer {
public:
    explicit SplatOptimizer(AdamConfig config) : config_(config) {}

    /// One update; grads must be sized like the cloud. Renormalizes each
    /// quaternion afterwards.
    void step(SplatCloud& cloud, const std::vector<SplatGrad>& grads, const LearningRates& lr,
              double position_lr_scale);

    /// Rebuilds moment arrays after an edit: kept[i] names the previous
    /// index of surviving splat i; `added` new splats follow with zeroed
    /// state (their sh shape is taken from the cloud).
    void remap(const std::vector<int>& kept, const SplatCloud& cloud);

    int step_count() const { return step_; }

private:
    void ensure_shapes(const SplatCloud& cloud);

    AdamConfig config_;
    int step_ = 0;
    std::vector<SplatGrad> m_, v_;
};

/// Adaptive-moment optimizer for the morphable-surface parameters. The
/// uniform pose scale is optimized in log space so positivity is
/// structural.
class SurfaceOptimizer {
public:
    SurfaceOptimizer(const MorphableModel& model, AdamConfig config);

    void step(SurfaceParams& params, const SurfaceParamsGrad& grads, const LearningRates& lr);

    int step_count() const { return step_; }

private:
    AdamConfig config_;
    int step_ = 0;
    SurfaceParamsGrad m_, v_;
    double m_log_scale_ = 0.0, v_log_scale_ = 0.0;
};

} // namespace surfsplat
