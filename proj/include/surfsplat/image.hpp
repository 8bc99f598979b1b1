// Copyright Contributors to the SurfSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "surfsplat/error.hpp"
#include "surfsplat/geometry.hpp"

#include <vector>

namespace surfsplat {

/// Dense row-major image, double per channel. Interleaved channels; pixel
/// (row y, column x) holds channels [c0, c1, ...].
struct Image {
    int width = 0;
    int height = 0;
    int channels = 0;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h, int ch, double fill = 0.0)
        : width(w), height(h), channels(ch),
          data(static_cast<std::size_t>(w) * h * ch, fill) {
        if (w < 0 || h < 0 || ch < 1)
            throw Error(ErrorCode::invalid_parameter, "bad image dimensions");
    }

    double& at(int y, int x, int c) {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }
    double at(int y, int x, int c) const {
        return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
    }

    Vec3 pixel(int y, int x) const {
        const std::size_t base = (static_cast<std::size_t>(y) * width + x) * channels;
        return Vec3(data[base], data[base + 1], data[base + 2]);
    }
    void set_pixel(int y, int x, const Vec3& v) {
        const std::size_t base = (static_cast<std::size_t>(y) * width + x) * channels;
        data[base] = v[0];
        data[base + 1] = v[1];
        data[base + 2] = v[2];
    }

    std::size_t pixel_count() const { return static_cast<std::size_t>(width) * height; }

    bool finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    bool same_shape(const Image& other) const {
        return width == other.width && height == other.height && channels == other.channels;
    }
};

} // namespace surfsplat
