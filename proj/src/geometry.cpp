// Copyright Contributors to the SurfSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "surfsplat/geometry.hpp"

#include <cmath>

namespace surfsplat {

namespace {

Mat3 rotation_matrix_unit(const Vec4& q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
        2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
        2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
    return r;
}

} // namespace

Mat3 rotation_matrix(const Vec4& quat) {
    return rotation_matrix_unit(quat / quat.norm());
}

Vec4 rotation_matrix_backward(const Vec4& quat, const Mat3& grad_rotation) {
    const double norm = quat.norm();
    const Vec4 q = quat / norm;
    const double w = q[0], x = q[1], y = q[2], z = q[3];

    Mat3 dw, dx, dy, dz;
    dw << 0, -z, y,
        z, 0, -x,
        -y, x, 0;
    dx << 0, y, z,
        y, -2.0 * x, -w,
        z, w, -2.0 * x;
    dy << -2.0 * y, x, w,
        x, 0, z,
        -w, z, -2.0 * y;
    dz << -2.0 * z, -w, x,
        w, -2.0 * z, y,
        x, y, 0;

    Vec4 grad_unit;
    grad_unit[0] = 2.0 * (grad_rotation.array() * dw.array()).sum();
    grad_unit[1] = 2.0 * (grad_rotation.array() * dx.array()).sum();
    grad_unit[2] = 2.0 * (grad_rotation.array() * dy.array()).sum();
    grad_unit[3] = 2.0 * (grad_rotation.array() * dz.array()).sum();

    // Chain through q_hat = q / |q|.
    return (grad_unit - q * q.dot(grad_unit)) / norm;
}

Vec4 quaternion_from_axis_angle(const Vec3& axis, double angle) {
    const Vec3 a = axis.normalized();
    const double half = 0.5 * angle;
    const double s = std::sin(half);
    return Vec4(std::cos(half), s * a.x(), s * a.y(), s * a.z());
}

Vec4 quaternion_from_matrix(const Mat3& rotation) {
    Eigen::Quaterniond q(rotation);
    q.normalize();
    Vec4 out(q.w(), q.x(), q.y(), q.z());
    if (out[0] < 0.0) out = -out;
    return out;
}

} // namespace surfsplat
