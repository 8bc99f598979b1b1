// Copyright Contributors to the SurfSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace surfsplat {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using VecX = Eigen::VectorXd;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using MatX = Eigen::MatrixXd;

// Quaternions are stored (w, x, y, z). All rotation evaluations normalize
// first, so gradients stay meaningful when the optimizer drifts off the
// unit sphere between renormalization steps.

/// Rotation matrix of q / |q|.
Mat3 rotation_matrix(const Vec4& quat);

/// Pulls dL/dR back to dL/dq, including the normalization Jacobian.
Vec4 rotation_matrix_backward(const Vec4& quat, const Mat3& grad_rotation);

/// Convenience: dL/dq for v = R(q) * u given dL/dv.
inline Vec4 rotate_vector_backward(const Vec4& quat, const Vec3& u, const Vec3& grad_v) {
    return rotation_matrix_backward(quat, grad_v * u.transpose());
}

/// Same, also producing dL/du = R(q)^T dL/dv.
inline void rotate_vector_backward(const Vec4& quat, const Vec3& u, const Vec3& grad_v,
                                   Vec4& grad_quat, Vec3& grad_u) {
    grad_quat = rotation_matrix_backward(quat, grad_v * u.transpose());
    grad_u = rotation_matrix(quat).transpose() * grad_v;
}

inline Vec4 identity_quaternion() { return Vec4(1.0, 0.0, 0.0, 0.0); }

/// Quaternion (w,x,y,z) for a rotation of `angle` radians about unit `axis`.
Vec4 quaternion_from_axis_angle(const Vec3& axis, double angle);

/// Quaternion of a rotation matrix (assumed orthonormal within roundoff).
Vec4 quaternion_from_matrix(const Mat3& rotation);

inline bool all_finite(const Eigen::Ref<const VecX>& v) { return v.allFinite(); }

/// Rounds a double through IEEE single precision. The volatile store forces
/// the narrowing to happen; at high optimization levels GCC otherwise drops
/// the round trip for some loop iterations.
inline double snap_to_float(double v) {
    volatile float narrowed = static_cast<float>(v);
    return static_cast<double>(narrowed);
}

} // namespace surfsplat
