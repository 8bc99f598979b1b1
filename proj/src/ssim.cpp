// Copyright Contributors to the SurfSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "surfsplat/ssim.hpp"

#include "surfsplat/error.hpp"

#include <array>
#include <cmath>
#include <vector>

namespace surfsplat {

namespace {

std::array<double, kSsimWindow> gaussian_kernel() {
    std::array<double, kSsimWindow> k;
    const int half = kSsimWindow / 2;
    double sum = 0.0;
    for (int i = 0; i < kSsimWindow; ++i) {
        const double d = i - half;
        k[i] = std::exp(-0.5 * d * d / (kSsimSigma * kSsimSigma));
        sum += k[i];
    }
    for (double& v : k) v /= sum;
    return k;
}

// One channel of an interleaved image as a flat plane.
std::vector<double> extract_channel(const Image& img, int c) {
    std::vector<double> plane(img.pixel_count());
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            plane[static_cast<std::size_t>(y) * img.width + x] = img.at(y, x, c);
    return plane;
}

// Valid-mode separable convolution: output is (h-10) x (w-10).
std::vector<double> conv_valid(const std::vector<double>& plane, int w, int h,
                               const std::array<double, kSsimWindow>& k) {
    const int ow = w - kSsimWindow + 1;
    const int oh = h - kSsimWindow + 1;
    std::vector<double> rows(static_cast<std::size_t>(oh) * w); // vertical pass first
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int u = 0; u < kSsimWindow; ++u)
                acc += k[u] * plane[static_cast<std::size_t>(y + u) * w + x];
            rows[static_cast<std::size_t>(y) * w + x] = acc;
        }
    std::vector<double> out(static_cast<std::size_t>(oh) * ow);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            double acc = 0.0;
            for (int v = 0; v < kSsimWindow; ++v)
                acc += k[v] * rows[static_cast<std::size_t>(y) * w + x + v];
            out[static_cast<std::size_t>(y) * ow + x] = acc;
        }
    return out;
}

// Adjoint of conv_valid: scatter (oh x ow) values back onto the (h x w)
// grid with the same separable weights.
std::vector<double> conv_valid_adjoint(const std::vector<double>& grad_out, int w, int h,
                                       const std::array<double, kSsimWindow>& k) {
    const int ow = w - kSsimWindow + 1;
    const int oh = h - kSsimWindow + 1;
    std::vector<double> rows(static_cast<std::size_t>(oh) * w, 0.0);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < ow; ++x) {
            const double g = grad_out[static_cast<std::size_t>(y) * ow + x];
            if (g == 0.0) continue;
            for (int v = 0; v < kSsimWindow; ++v)
                rows[static_cast<std::size_t>(y) * w + x + v] += k[v] * g;
        }
    std::vector<double> plane(static_cast<std::size_t>(h) * w, 0.0);
    for (int y = 0; y < oh; ++y)
        for (int x = 0; x < w; ++x) {
            const double g = rows[static_cast<std::size_t>(y) * w + x];
            if (g == 0.0) continue;
            for (int u = 0; u < kSsimWindow; ++u)
                plane[static_cast<std::size_t>(y + u) * w + x] += k[u] * g;
        }
    return plane;
}

void check_shapes(const Image& a, const Image& b) {
    if (!a.same_shape(b))
        throw Error(ErrorCode::invalid_input, "ssim images must share dimensions");
    if (a.width < kSsimWindow || a.height < kSsimWindow)
        throw Error(ErrorCode::invalid_input, "ssim images must be at least 11x11");
}

struct ChannelStats {
    std::vector<double> ca, cb, caa, cbb, cab;
    int ow = 0, oh = 0;
};

ChannelStats channel_stats(const std::vector<double>& pa, const std::vector<double>& pb, int w,
                           int h, const std::array<double, kSsimWindow>& k) {
    ChannelStats s;
    s.ow = w - kSsimWindow + 1;
    s.oh = h - kSsimWindow + 1;
    std::vector<double> aa(pa.size()), bb(pa.size()), ab(pa.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
        aa[i] = pa[i] * pa[i];
        bb[i] = pb[i] * pb[i];
        ab[i] = pa[i] * pb[i];
    }
    s.ca = conv_valid(pa, w, h, k);
    s.cb = conv_valid(pb, w, h, k);
    s.caa = conv_valid(aa, w, h, k);
    s.cbb = conv_valid(bb, w, h, k);
    s.cab = conv_valid(ab, w, h, k);
    return s;
}

} // namespace

double ssim(const Image& a, const Image& b) {
    check_shapes(a, b);
    const auto k = gaussian_kernel();
    double total = 0.0;
    std::size_t count = 0;
    for (int c = 0; c < a.channels; ++c) {
        const ChannelStats s =
            channel_stats(extract_channel(a, c), extract_channel(b, c), a.width, a.height, k);
        for (std::size_t i = 0; i < s.ca.size(); ++i) {
            const double mu_a = s.ca[i], mu_b = s.cb[i];
            const double var_a = s.caa[i] - mu_a * mu_a;
            const double var_b = s.cbb[i] - mu_b * mu_b;
            const double cov = s.cab[i] - mu_a * mu_b;
            const double a1 = 2.0 * mu_a * mu_b + kSsimC1;
            const double a2 = 2.0 * cov + kSsimC2;
            const double b1 = mu_a * mu_a + mu_b * mu_b + kSsimC1;
            const double b2 = var_a + var_b + kSsimC2;
            total += (a1 * a2) / (b1 * b2);
        }
        count += s.ca.size();
    }
    return total / static_cast<double>(count);
}

Image ssim_backward(const Image& a, const Image& b, double grad_output) {
    check_shapes(a, b);
    const auto k = gaussian_kernel();
    Image grad(a.width, a.height, a.channels);

    for (int c = 0; c < a.channels; ++c) {
        const std::vector<double> pa = extract_channel(a, c);
        const std::vector<double> pb = extract_channel(b, c);
        const ChannelStats s = channel_stats(pa, pb, a.width, a.height, k);

        const std::size_t n = s.ca.size() * static_cast<std::size_t>(a.channels);
        const double scale = grad_output / static_cast<double>(n);

        // Partials of the per-window score with respect to the five
        // convolution outputs; each conv is linear in the pixels.
        std::vector<double> g_ca(s.ca.size()), g_caa(s.ca.size()), g_cab(s.ca.size());
        for (std::size_t i = 0; i < s.ca.size(); ++i) {
            const double mu_a = s.ca[i], mu_b = s.cb[i];
            const double var_a = s.caa[i] - mu_a * mu_a;
            const double var_b = s.cbb[i] - mu_b * mu_b;
            const double cov = s.cab[i] - mu_a * mu_b;
            const double a1 = 2.0 * mu_a * mu_b + kSsimC1;
            const double a2 = 2.0 * cov + kSsimC2;
            const double b1 = mu_a * mu_a + mu_b * mu_b + kSsimC1;
            const double b2 = var_a + var_b + kSsimC2;
            const double m = (a1 * a2) / (b1 * b2);

            // d m / d ca, with cov and var_a re-expressed through ca.
            const double d_ca = (2.0 * mu_b * a2 - 2.0 * mu_b * a1) / (b1 * b2) -
                                m * (2.0 * mu_a / b1 - 2.0 * mu_a / b2);
            const double d_caa = -m / b2;
            const double d_cab = 2.0 * a1 / (b1 * b2);
            g_ca[i] = scale * d_ca;
            g_caa[i] = scale * d_caa;
            g_cab[i] = scale * d_cab;
        }

        const std::vector<double> s_ca = conv_valid_adjoint(g_ca, a.width, a.height, k);
        const std::vector<double> s_caa = conv_valid_adjoint(g_caa, a.width, a.height, k);
        const std::vector<double> s_cab = conv_valid_adjoint(g_cab, a.width, a.height, k);
        for (int y = 0; y < a.height; ++y)
            for (int x = 0; x < a.width; ++x) {
                const std::size_t i = static_cast<std::size_t>(y) * a.width + x;
                grad.at(y, x, c) = s_ca[i] + 2.0 * pa[i] * s_caa[i] + pb[i] * s_cab[i];
            }
    }
    return grad;
}

} // namespace surfsplat
