// Copyright Contributors to the SurfSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "surfsplat/optimizer.hpp"

#include "surfsplat/error.hpp"

#include <cmath>

namespace surfsplat {

double adam_direction(double& m, double& v, double grad, int step, const AdamConfig& c) {
    m = c.beta1 * m + (1.0 - c.beta1) * grad;
    v = c.beta2 * v + (1.0 - c.beta2) * grad * grad;
    const double m_hat = m / (1.0 - std::pow(c.beta1, step));
    const double v_hat = v / (1.0 - std::pow(c.beta2, step));
    return m_hat / (std::sqrt(v_hat) + c.epsilon);
}

void SplatOptimizer::ensure_shapes(const SplatCloud& cloud) {
    if (m_.size() != cloud.size()) {
        m_.resize(cloud.size());
        v_.resize(cloud.size());
    }
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        const std::size_t n_sh = cloud.splats[i].sh_coeffs.size();
        if (m_[i].sh_coeffs.size() != n_sh) {
            m_[i].sh_coeffs.assign(n_sh, Vec3::Zero());
            v_[i].sh_coeffs.assign(n_sh, Vec3::Zero());
        }
    }
}

void SplatOptimizer::step(SplatCloud& cloud, const std::vector<SplatGrad>& grads,
                          const LearningRates& lr, double position_lr_scale) {
    if (grads.size() != cloud.size())
        throw Error(ErrorCode::invalid_parameter, "gradient count does not match splat count");
    ensure_shapes(cloud);
    ++step_;

    const double pos_lr = lr.position * position_lr_scale;
    for (std::size_t i = 0; i < cloud.size(); ++i) {
        GaussianSplat& s = cloud.splats[i];
        SplatGrad& m = m_[i];
        SplatGrad& v = v_[i];
        const SplatGrad& g = grads[i];

        for (int k = 0; k < 3; ++k)
            s.position[k] -=
                pos_lr * adam_direction(m.position[k], v.position[k], g.position[k], step_, config_);
        for (int k = 0; k < 3; ++k)
            s.log_scale[k] -= lr.log_scale * adam_direction(m.log_scale[k], v.log_scale[k],
                                                            g.log_scale[k], step_, config_);
        for (int k = 0; k < 4; ++k)
            s.rotation[k] -= lr.rotation * adam_direction(m.rotation[k], v.rotation[k],
                                                          g.rotation[k], step_, config_);
        s.opacity_logit -= lr.opacity * adam_direction(m.opacity_logit, v.opacity_logit,
                                                       g.opacity_logit, step_, config_);
        for (std::size_t c = 0; c < s.sh_coeffs.size(); ++c) {
            const Vec3 gc = c < g.sh_coeffs.size() ? g.sh_coeffs[c] : Vec3(Vec3::Zero());
            for (int k = 0; k < 3; ++k)
                s.sh_coeffs[c][k] -= lr.sh * adam_direction(m.sh_coeffs[c][k], v.sh_coeffs[c][k],
                                                            gc[k], step_, config_);
        }

        // Keep the quaternion on the unit sphere; gradients already carry
        // the normalization chain, so this is a pure reparameterization.
        const double n = s.rotation.norm();
        if (n > 1e-12) s.rotation /= n;
        else s.rotation = Vec4(1.0, 0.0, 0.0, 0.0);
    }
}

void SplatOptimizer::remap(const std::vector<int>& kept, const SplatCloud& cloud) {
    std::vector<SplatGrad> new_m(cloud.size()), new_v(cloud.size());
    for (std::size_t i = 0; i < kept.size(); ++i) {
        const std::size_t old_index = static_cast<std::size_t>(kept[i]);
        if (old_index < m_.size()) {
            new_m[i] = std::move(m_[old_index]);
            new_v[i] = std::move(v_[old_index]);
        }
    }
    m_ = std::move(new_m);
    v_ = std::move(new_v);
    ensure_shapes(cloud);
}

SurfaceOptimizer::SurfaceOptimizer(const MorphableModel& model, AdamConfig config)
    : config_(config), m_(SurfaceParamsGrad::zero(model)), v_(SurfaceParamsGrad::zero(model)) {}

void SurfaceOptimizer::step(SurfaceParams& params, const SurfaceParamsGrad& grads,
                            const LearningRates& lr) {
    ++step_;
    for (int i = 0; i < params.shape_coeffs.size(); ++i)
        params.shape_coeffs[i] -=
            lr.surface_coeffs * adam_direction(m_.shape_coeffs[i], v_.shape_coeffs[i],
                                               grads.shape_coeffs[i], step_, config_);
    for (int i = 0; i < params.expression_coeffs.size(); ++i)
        params.expression_coeffs[i] -=
            lr.surface_coeffs * adam_direction(m_.expression_coeffs[i], v_.expression_coeffs[i],
                                               grads.expression_coeffs[i], step_, config_);
    for (int k = 0; k < 4; ++k)
        params.pose_rotation[k] -=
            lr.pose * adam_direction(m_.pose_rotation[k], v_.pose_rotation[k],
                                     grads.pose_rotation[k], step_, config_);
    for (int k = 0; k < 3; ++k)
        params.pose_translation[k] -=
            lr.pose * adam_direction(m_.pose_translation[k], v_.pose_translation[k],
                                     grads.pose_translation[k], step_, config_);

    // d loss / d log(s) = s * d loss / d s
    double log_scale = std::log(params.pose_scale);
    const double g_log = grads.pose_scale * params.pose_scale;
    log_scale -= lr.pose * adam_direction(m_log_scale_, v_log_scale_, g_log, step_, config_);
    params.pose_scale = std::exp(log_scale);

    const double n = params.pose_rotation.norm();
    if (n > 1e-12) params.pose_rotation /= n;
    else params.pose_rotation = Vec4(1.0, 0.0, 0.0, 0.0);
}

} // namespace surfsplat
