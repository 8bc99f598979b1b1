// Copyright Contributors to the SurfSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "surfsplat/renderer.hpp"

#include "surfsplat/error.hpp"
#include "surfsplat/sh.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace surfsplat {

void SplatGrad::accumulate(const SplatGrad& other) {
    position += other.position;
    log_scale += other.log_scale;
    rotation += other.rotation;
    opacity_logit += other.opacity_logit;
    if (sh_coeffs.size() < other.sh_coeffs.size()) sh_coeffs.resize(other.sh_coeffs.size(), Vec3::Zero());
    for (std::size_t i = 0; i < other.sh_coeffs.size(); ++i) sh_coeffs[i] += other.sh_coeffs[i];
}

double SplatGrad::squared_norm() const {
    double n = position.squaredNorm() + log_scale.squaredNorm() + rotation.squaredNorm() +
               opacity_logit * opacity_logit;
    for (const Vec3& c : sh_coeffs) n += c.squaredNorm();
    return n;
}

namespace {

// Projection Jacobian of (fx tx/tz + cx, fy ty/tz + cy) at the camera-space
// mean t; also the EWA linearization pushing the covariance to the screen.
Eigen::Matrix<double, 2, 3> projection_jacobian(const Camera& cam, const Vec3& t) {
    Eigen::Matrix<double, 2, 3> j;
    const double iz = 1.0 / t[2];
    j << cam.fx * iz, 0.0, -cam.fx * t[0] * iz * iz,
         0.0, cam.fy * iz, -cam.fy * t[1] * iz * iz;
    return j;
}

struct PreparedSplat {
    int source = 0;       // index into the cloud
    ProjectedSplat proj;
    Mat2 conic = Mat2::Zero();
    Vec3 cam_t = Vec3::Zero(); // camera-space mean
    int x0 = 0, x1 = -1, y0 = 0, y1 = -1; // inclusive pixel bounds, empty when x1 < x0
};

std::vector<PreparedSplat> prepare_splats(const SplatCloud& cloud, const Camera& camera,
                                          RenderDiagnostics* diagnostics) {
    std::vector<PreparedSplat> prepared;
    prepared.reserve(cloud.size());
    for (std::size_t s = 0; s < cloud.size(); ++s) {
        const GaussianSplat& splat = cloud.splats[s];
        const std::optional<ProjectedSplat> proj = project_splat(splat, camera);
        if (!proj) {
            if (diagnostics) ++diagnostics->culled_near_plane;
            continue;
        }
        PreparedSplat p;
        p.source = static_cast<int>(s);
        p.proj = *proj;
        p.cam_t = camera.to_camera(splat.position);

        const Mat2& m = p.proj.cov2d;
        const double det = m(0, 0) * m(1, 1) - m(0, 1) * m(1, 0);
        if (!(det > 1e-12) || !m.allFinite()) {
            if (diagnostics) ++diagnostics->skipped_degenerate;
            continue;
        }
        p.conic << m(1, 1) / det, -m(0, 1) / det, -m(1, 0) / det, m(0, 0) / det;

        // 3-sigma bounding box from the largest eigenvalue.
        const double mid = 0.5 * (m(0, 0) + m(1, 1));
        const double lambda_max = mid + std::sqrt(std::max(0.0, mid * mid - det));
        const double radius = 3.0 * std::sqrt(lambda_max);
        p.x0 = std::max(0, static_cast<int>(std::floor(p.proj.mean2d[0] - radius)));
        p.x1 = std::min(camera.width - 1, static_cast<int>(std::ceil(p.proj.mean2d[0] + radius)));
        p.y0 = std::max(0, static_cast<int>(std::floor(p.proj.mean2d[1] - radius)));
        p.y1 = std::min(camera.height - 1, static_cast<int>(std::ceil(p.proj.mean2d[1] + radius)));
        if (p.x1 < p.x0 || p.y1 < p.y0) continue; // off screen
        prepared.push_back(std::move(p));
    }
    // Global front-to-back order; index tie-break keeps sorting deterministic.
    std::sort(prepared.begin(), prepared.end(), [](const PreparedSplat& a, const PreparedSplat& b) {
        if (a.proj.depth != b.proj.depth) return a.proj.depth < b.proj.depth;
        return a.source < b.source;
    });
    return prepared;
}

struct Entry {
    int pixel = 0;
    int prep = 0;        // index into the prepared array
    double raw_alpha = 0.0; // opacity * exp(power), before the 0.99 clamp
};

// Bins screen-space contributions per pixel. Entries are generated in depth
// order and the counting sort below is stable, so each pixel's slice stays
// sorted front to back.
struct Binning {
    std::vector<int> start; // pixel_count + 1 offsets into entries
    std::vector<Entry> entries;
};

Binning bin_contributions(const std::vector<PreparedSplat>& prepared, const Camera& camera) {
    std::vector<Entry> flat;
    for (std::size_t i = 0; i < prepared.size(); ++i) {
        const PreparedSplat& p = prepared[i];
        for (int y = p.y0; y <= p.y1; ++y) {
            for (int x = p.x0; x <= p.x1; ++x) {
                const Vec2 d(x - p.proj.mean2d[0], y - p.proj.mean2d[1]);
                const double power = -0.5 * d.dot(p.conic * d);
                if (power > 0.0) continue;
                const double raw = p.proj.opacity * std::exp(power);
                if (raw < kAlphaGate) continue;
                flat.push_back({y * camera.width + x, static_cast<int>(i), raw});
            }
        }
    }

    Binning bin;
    const std::size_t pixel_count = static_cast<std::size_t>(camera.width) * camera.height;
    bin.start.assign(pixel_count + 1, 0);
    for (const Entry& e : flat) ++bin.start[e.pixel + 1];
    for (std::size_t p = 0; p < pixel_count; ++p) bin.start[p + 1] += bin.start[p];
    bin.entries.resize(flat.size());
    std::vector<int> cursor(bin.start.begin(), bin.start.end() - 1);
    for (const Entry& e : flat) bin.entries[cursor[e.pixel]++] = e;
    return bin;
}

} // namespace

std::optional<ProjectedSplat> project_splat(const GaussianSplat& splat, const Camera& camera) {
    const Vec3 t = camera.to_camera(splat.position);
    if (t[2] < kNearPlane) return std::nullopt;

    ProjectedSplat out;
    out.depth = t[2];
    out.mean2d = Vec2(camera.fx * t[0] / t[2] + camera.cx, camera.fy * t[1] / t[2] + camera.cy);

    const Eigen::Matrix<double, 2, 3> v = projection_jacobian(camera, t) * camera.rotation();
    const Mat3 sigma = covariance_from_scale_rotation(splat.log_scale, splat.rotation);
    out.cov2d = v * sigma * v.transpose();
    out.cov2d(0, 0) += kCovarianceDilation;
    out.cov2d(1, 1) += kCovarianceDilation;

    out.opacity = splat.opacity();

    const Vec3 offset = splat.position - camera.center();
    const double r = offset.norm();
    const Vec3 dir = r > 1e-12 ? Vec3(offset / r) : Vec3(0.0, 0.0, 1.0);
    out.view_color = eval_sh_color(splat.sh_coeffs, dir);
    return out;
}

Vec3 composite_pixel(std::span<const PixelContribution> sorted, double& transmittance_out) {
    Vec3 color = Vec3::Zero();
    double t = 1.0;
    for (const PixelContribution& c : sorted) {
        const double alpha = std::min(c.alpha, kAlphaClamp);
        const double next_t = t * (1.0 - alpha);
        if (next_t < kTransmittanceCutoff) break;
        color += c.color * (alpha * t);
        t = next_t;
    }
    transmittance_out = t;
    return color;
}

RenderedImage render(const SplatCloud& cloud, const Camera& camera, const Vec3& background,
                     RenderDiagnostics* diagnostics) {
    camera.validate();
    RenderedImage out;
    out.rgb = Image(camera.width, camera.height, 3);
    out.alpha = Image(camera.width, camera.height, 1);

    const std::vector<PreparedSplat> prepared = prepare_splats(cloud, camera, diagnostics);
    const Binning bin = bin_contributions(prepared, camera);

    for (int y = 0; y < camera.height; ++y) {
        for (int x = 0; x < camera.width; ++x) {
            const int p = y * camera.width + x;
            Vec3 color = Vec3::Zero();
            double t = 1.0;
            for (int e = bin.start[p]; e < bin.start[p + 1]; ++e) {
                const Entry& entry = bin.entries[e];
                const double alpha = std::min(entry.raw_alpha, kAlphaClamp);
                const double next_t = t * (1.0 - alpha);
                if (next_t < kTransmittanceCutoff) break;
                color += prepared[entry.prep].proj.view_color * (alpha * t);
                t = next_t;
            }
            out.rgb.set_pixel(y, x, color + t * background);
            out.alpha.at(y, x, 0) = 1.0 - t;
        }
    }
    return out;
}

RenderGrads render_backward(const SplatCloud& cloud, const Camera& camera,
                            const Vec3& background, const Image& upstream_grad) {
    camera.validate();
    if (upstream_grad.width != camera.width || upstream_grad.height != camera.height ||
        upstream_grad.channels != 3)
        throw Error(ErrorCode::invalid_input, "upstream gradient shape does not match camera");

    RenderGrads out;
    out.splats.resize(cloud.size());
    for (std::size_t s = 0; s < cloud.size(); ++s)
        out.splats[s].sh_coeffs.assign(cloud.splats[s].sh_coeffs.size(), Vec3::Zero());
    out.mean2d_grad_norm.assign(cloud.size(), 0.0);
    out.visible.assign(cloud.size(), 0);

    const std::vector<PreparedSplat> prepared = prepare_splats(cloud, camera, nullptr);
    const Binning bin = bin_contributions(prepared, camera);
    for (const PreparedSplat& ps : prepared) out.visible[ps.source] = 1;

    // Screen-space accumulators per prepared splat.
    std::vector<Vec2> g_mean2d(prepared.size(), Vec2::Zero());
    std::vector<Mat2> g_conic(prepared.size(), Mat2::Zero());
    std::vector<Vec3> g_color(prepared.size(), Vec3::Zero());
    std::vector<double> g_opacity(prepared.size(), 0.0);

    std::vector<double> t_scratch;
    for (int y = 0; y < camera.height; ++y) {
        for (int x = 0; x < camera.width; ++x) {
            const int p = y * camera.width + x;
            const int begin = bin.start[p];
            const int end = bin.start[p + 1];
            if (begin == end) continue;
            const Vec3 g = upstream_grad.pixel(y, x);
            if (g.isZero()) continue;

            // Forward re-walk to record per-contribution transmittance.
            t_scratch.clear();
            double t = 1.0;
            int composited = 0;
            for (int e = begin; e < end; ++e) {
                const double alpha = std::min(bin.entries[e].raw_alpha, kAlphaClamp);
                const double next_t = t * (1.0 - alpha);
                if (next_t < kTransmittanceCutoff) break;
                t_scratch.push_back(t);
                t = next_t;
                ++composited;
            }

            // Reverse walk; suffix holds sum_{j>i} c_j a_j T_j + bg * T_end.
            Vec3 suffix = background * t;
            for (int k = composited - 1; k >= 0; --k) {
                const Entry& entry = bin.entries[begin + k];
                const PreparedSplat& ps = prepared[entry.prep];
                const double alpha = std::min(entry.raw_alpha, kAlphaClamp);
                const double t_i = t_scratch[k];
                const Vec3& c_i = ps.proj.view_color;

                g_color[entry.prep] += g * (alpha * t_i);

                const double d_alpha = g.dot(c_i * t_i - suffix / (1.0 - alpha));
                if (entry.raw_alpha < kAlphaClamp) {
                    // alpha = opacity * G with G = exp(power)
                    const double gauss = entry.raw_alpha / ps.proj.opacity;
                    g_opacity[entry.prep] += d_alpha * gauss;
                    const double d_power = d_alpha * entry.raw_alpha;
                    const Vec2 d(x - ps.proj.mean2d[0], y - ps.proj.mean2d[1]);
                    const Vec2 conic_d = ps.conic * d;
                    g_mean2d[entry.prep] += d_power * conic_d;
                    g_conic[entry.prep] += (-0.5 * d_power) * (d * d.transpose());
                }
                suffix += c_i * (alpha * t_i);
            }
        }
    }

    // Pull screen-space gradients back to world-space splat parameters.
    const Mat3 w_rot = camera.rotation();
    for (std::size_t i = 0; i < prepared.size(); ++i) {
        const PreparedSplat& ps = prepared[i];
        const GaussianSplat& splat = cloud.splats[ps.source];
        SplatGrad& sg = out.splats[ps.source];
        out.mean2d_grad_norm[ps.source] += g_mean2d[i].norm();

        // conic = cov2d^-1: dL/dcov2d = -A dL/dA A for symmetric A.
        const Mat2 g_cov2d = -ps.conic * g_conic[i] * ps.conic;

        const Eigen::Matrix<double, 2, 3> j = projection_jacobian(camera, ps.cam_t);
        const Eigen::Matrix<double, 2, 3> v = j * w_rot;
        const Mat3 sigma = covariance_from_scale_rotation(splat.log_scale, splat.rotation);

        const Mat3 g_sigma = v.transpose() * g_cov2d * v;
        const CovarianceGrad cg = covariance_backward(splat.log_scale, splat.rotation, g_sigma);
        sg.log_scale += cg.log_scale;
        sg.rotation += cg.rotation;

        // cov2d = V Sigma V^T: dL/dV = (G + G^T) V Sigma.
        const Eigen::Matrix<double, 2, 3> g_v =
            (g_cov2d + g_cov2d.transpose()) * v * sigma;
        const Eigen::Matrix<double, 2, 3> g_j = g_v * w_rot.transpose();

        // Mean chain: screen position directly, plus J's dependence on t.
        const Vec3& t = ps.cam_t;
        const double iz = 1.0 / t[2], iz2 = iz * iz, iz3 = iz2 * iz;
        Vec3 g_t = j.transpose() * g_mean2d[i];
        g_t[0] += g_j(0, 2) * (-camera.fx * iz2);
        g_t[1] += g_j(1, 2) * (-camera.fy * iz2);
        g_t[2] += g_j(0, 0) * (-camera.fx * iz2) + g_j(1, 1) * (-camera.fy * iz2) +
                  g_j(0, 2) * (2.0 * camera.fx * t[0] * iz3) +
                  g_j(1, 2) * (2.0 * camera.fy * t[1] * iz3);
        sg.position += w_rot.transpose() * g_t;

        // Color chain: SH coefficients directly, view direction back to mu.
        const Vec3 offset = splat.position - camera.center();
        const double r = offset.norm();
        if (r > 1e-12) {
            const Vec3 dir = offset / r;
            Vec3 g_dir = Vec3::Zero();
            eval_sh_color_backward(splat.sh_coeffs, dir, g_color[i], sg.sh_coeffs, g_dir);
            sg.position += (g_dir - dir * dir.dot(g_dir)) / r;
        }

        const double op = ps.proj.opacity;
        sg.opacity_logit += g_opacity[i] * op * (1.0 - op);
    }
    return out;
}

} // namespace surfsplat
