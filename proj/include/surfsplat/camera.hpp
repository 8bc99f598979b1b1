// Copyright Contributors to the SurfSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "surfsplat/geometry.hpp"
#include "surfsplat/image.hpp"

#include <vector>

namespace surfsplat {

/// Pinhole camera looking down +z in its own frame. Pixel centers sit at
/// integer coordinates: a camera-space point (X, Y, Z) lands at
/// (fx X/Z + cx, fy Y/Z + cy) with x = column, y = row.
struct Camera {
    double fx = 0.0;
    double fy = 0.0;
    double cx = 0.0;
    double cy = 0.0;
    int width = 0;
    int height = 0;
    Mat4 world_to_camera = Mat4::Identity();

    Mat3 rotation() const { return world_to_camera.topLeftCorner<3, 3>(); }
    Vec3 translation() const { return world_to_camera.topRightCorner<3, 1>(); }

    Vec3 to_camera(const Vec3& world) const { return rotation() * world + translation(); }

    /// Camera center expressed in world coordinates.
    Vec3 center() const { return -rotation().transpose() * translation(); }

    /// Throws invalid_parameter naming the offending field: fx/fy must be
    /// positive, dimensions positive, the rotation block orthonormal to
    /// 1e-9, and the bottom row (0,0,0,1).
    void validate() const;
};

/// Rigid transform for a camera at `eye` looking at `target`.
Camera look_at_camera(const Vec3& eye, const Vec3& target, const Vec3& up, double focal,
                      int width, int height);

/// One posed training observation: target image, foreground mask (1 channel,
/// values 0 or 1), camera.
struct TrainingView {
    Camera camera;
    Image image; // H x W x 3 in [0,1]
    Image mask;  // H x W x 1, binarized
};

using TrainingViews = std::vector<TrainingView>;

} // namespace surfsplat
