// Copyright Contributors to the SurfSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "surfsplat/camera.hpp"

#include "surfsplat/error.hpp"

namespace surfsplat {

void Camera::validate() const {
    if (!(fx > 0.0) || !(fy > 0.0))
        throw Error(ErrorCode::invalid_parameter, "camera focal lengths must be positive");
    if (width <= 0 || height <= 0)
        throw Error(ErrorCode::invalid_parameter, "camera image dimensions must be positive");
    if (!world_to_camera.allFinite())
        throw Error(ErrorCode::invalid_parameter, "camera world_to_camera is not finite");
    const Mat3 r = rotation();
    if ((r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-9)
        throw Error(ErrorCode::invalid_parameter, "camera rotation block is not orthonormal");
    const Eigen::RowVector4d bottom = world_to_camera.row(3);
    if ((bottom - Eigen::RowVector4d(0, 0, 0, 1)).cwiseAbs().maxCoeff() > 1e-12)
        throw Error(ErrorCode::invalid_parameter, "camera matrix bottom row must be 0 0 0 1");
}

Camera look_at_camera(const Vec3& eye, const Vec3& target, const Vec3& up, double focal,
                      int width, int height) {
    const Vec3 forward = (target - eye).normalized(); // camera +z
    Vec3 right = forward.cross(up);
    if (right.norm() < 1e-12)
        throw Error(ErrorCode::invalid_parameter, "look_at up direction parallel to view axis");
    right.normalize();
    const Vec3 down = forward.cross(right); // camera +y (image rows grow downward)

    Mat3 r;
    r.row(0) = right.transpose();
    r.row(1) = down.transpose();
    r.row(2) = forward.transpose();

    Camera cam;
    cam.fx = focal;
    cam.fy = focal;
    cam.cx = 0.5 * (width - 1);
    cam.cy = 0.5 * (height - 1);
    cam.width = width;
    cam.height = height;
    cam.world_to_camera = Mat4::Identity();
    cam.world_to_camera.topLeftCorner<3, 3>() = r;
    cam.world_to_camera.topRightCorner<3, 1>() = -r * eye;
    cam.validate();
    return cam;
}

} // namespace surfsplat
