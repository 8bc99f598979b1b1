// Copyright Contributors to the SurfSplat Project
// SPDX-License-Identifier: Apache-2.0

#include <surfsplat/error.hpp>
#include <surfsplat/rng.hpp>
#include <surfsplat/ssim.hpp>

#include <doctest.h>

#include <cmath>
#include <vector>

using namespace surfsplat;

namespace {

// Independent reference: direct 2D windowed statistics, no separability,
// no shared code with the implementation under test.
double reference_ssim(const Image& a, const Image& b) {
    const int w = kSsimWindow;
    std::vector<double> kernel(w * w);
    double kernel_sum = 0.0;
    for (int i = 0; i < w; ++i) {
        for (int j = 0; j < w; ++j) {
            const double di = i - (w - 1) / 2.0;
            const double dj = j - (w - 1) / 2.0;
            kernel[i * w + j] = std::exp(-(di * di + dj * dj) / (2.0 * kSsimSigma * kSsimSigma));
            kernel_sum += kernel[i * w + j];
        }
    }
    for (double& k : kernel) k /= kernel_sum;

    double total = 0.0;
    int count = 0;
    for (int c = 0; c < a.channels; ++c) {
        for (int y = 0; y + w <= a.height; ++y) {
            for (int x = 0; x + w <= a.width; ++x) {
                double mu_a = 0.0, mu_b = 0.0, aa = 0.0, bb = 0.0, ab = 0.0;
                for (int i = 0; i < w; ++i) {
                    for (int j = 0; j < w; ++j) {
                        const double k = kernel[i * w + j];
                        const double va = a.at(y + i, x + j, c);
                        const double vb = b.at(y + i, x + j, c);
                        mu_a += k * va;
                        mu_b += k * vb;
                        aa += k * va * va;
                        bb += k * vb * vb;
                        ab += k * va * vb;
                    }
                }
                const double var_a = aa - mu_a * mu_a;
                const double var_b = bb - mu_b * mu_b;
                const double cov = ab - mu_a * mu_b;
                const double num = (2.0 * mu_a * mu_b + kSsimC1) * (2.0 * cov + kSsimC2);
                const double den =
                    (mu_a * mu_a + mu_b * mu_b + kSsimC1) * (var_a + var_b + kSsimC2);
                total += num / den;
                ++count;
            }
        }
    }
    return total / count;
}

Image random_image(int width, int height, int channels, Rng& rng) {
    Image img(width, height, channels);
    for (double& v : img.data) v = rng.uniform(0.0, 1.0);
    return img;
}

} // namespace

TEST_CASE("ssim of an image with itself is one") {
    Rng rng(7);
    const Image a = random_image(17, 13, 3, rng);
    CHECK(ssim(a, a) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("ssim is symmetric") {
    Rng rng(11);
    const Image a = random_image(16, 16, 3, rng);
    const Image b = random_image(16, 16, 3, rng);
    CHECK(ssim(a, b) == doctest::Approx(ssim(b, a)).epsilon(1e-12));
}

TEST_CASE("ssim of two constant images matches the closed form") {
    Image a(14, 14, 1, 0.2);
    Image b(14, 14, 1, 0.8);
    // Zero variance everywhere: value is ((2*0.16 + C1) * C2) / ((0.04 + 0.64 + C1) * C2).
    const double expected = (2.0 * 0.2 * 0.8 + kSsimC1) / (0.2 * 0.2 + 0.8 * 0.8 + kSsimC1);
    CHECK(ssim(a, b) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("ssim matches the direct windowed reference") {
    Rng rng(23);
    SUBCASE("three-channel") {
        const Image a = random_image(32, 32, 3, rng);
        Image b = a;
        for (double& v : b.data) v = std::clamp(v + rng.uniform(-0.2, 0.2), 0.0, 1.0);
        const double got = ssim(a, b);
        const double want = reference_ssim(a, b);
        CHECK(got == doctest::Approx(want).epsilon(1e-9));
        CHECK(got < 1.0);
        CHECK(got > 0.0);
    }
    SUBCASE("single-channel non-square") {
        const Image a = random_image(20, 15, 1, rng);
        const Image b = random_image(20, 15, 1, rng);
        CHECK(ssim(a, b) == doctest::Approx(reference_ssim(a, b)).epsilon(1e-9));
    }
    SUBCASE("minimum size has exactly one window") {
        const Image a = random_image(11, 11, 1, rng);
        const Image b = random_image(11, 11, 1, rng);
        CHECK(ssim(a, b) == doctest::Approx(reference_ssim(a, b)).epsilon(1e-9));
    }
}

TEST_CASE("ssim rejects mismatched or undersized inputs") {
    Image a(16, 16, 3, 0.5);
    Image b(16, 15, 3, 0.5);
    CHECK_THROWS_AS(ssim(a, b), Error);
    Image tiny_a(10, 16, 1, 0.5);
    Image tiny_b(10, 16, 1, 0.5);
    CHECK_THROWS_AS(ssim(tiny_a, tiny_b), Error);
}

TEST_CASE("ssim_backward matches central finite differences") {
    Rng rng(31);
    Image a = random_image(13, 12, 2, rng);
    const Image b = random_image(13, 12, 2, rng);
    const double grad_output = 0.7;
    const Image grad = ssim_backward(a, b, grad_output);
    REQUIRE(grad.width == a.width);
    REQUIRE(grad.height == a.height);
    REQUIRE(grad.channels == a.channels);

    const double h = 1e-5;
    // Probe a spread of pixels: corners, center, and random interior ones.
    std::vector<std::size_t> probes = {0, a.data.size() - 1, a.data.size() / 2};
    for (int i = 0; i < 12; ++i) probes.push_back(rng.index(a.data.size()));
    for (std::size_t p : probes) {
        const double saved = a.data[p];
        a.data[p] = saved + h;
        const double up = ssim(a, b);
        a.data[p] = saved - h;
        const double down = ssim(a, b);
        a.data[p] = saved;
        const double fd = grad_output * (up - down) / (2.0 * h);
        CHECK(grad.data[p] == doctest::Approx(fd).epsilon(1e-5).scale(1e-6));
    }
}

TEST_CASE("ssim_backward scales linearly with the upstream gradient") {
    Rng rng(41);
    const Image a = random_image(12, 12, 1, rng);
    const Image b = random_image(12, 12, 1, rng);
    const Image g1 = ssim_backward(a, b, 1.0);
    const Image g3 = ssim_backward(a, b, -3.0);
    for (std::size_t i = 0; i < g1.data.size(); ++i)
        CHECK(g3.data[i] == doctest::Approx(-3.0 * g1.data[i]).epsilon(1e-12));
}
