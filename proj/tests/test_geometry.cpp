// Copyright Contributors to the SurfSplat Project
// SPDX-License-Identifier: Apache-2.0

#include <surfsplat/geometry.hpp>
#include <surfsplat/rng.hpp>

#include "test_util.hpp"

#include <doctest.h>

#include <cmath>

using namespace surfsplat;
using testutil::fd_partial;
using testutil::grad_close;

TEST_CASE("identity quaternion maps to identity matrix")
{
    const Mat3 r = rotation_matrix(identity_quaternion());
    CHECK((r - Mat3::Identity()).norm() == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("rotation matrix is orthonormal for arbitrary quaternions")
{
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
        Vec4 q;
        for (int i = 0; i < 4; ++i) q[i] = rng.uniform(-2.0, 2.0);
        if (q.norm() < 1e-3) q[0] = 1.0;
        const Mat3 r = rotation_matrix(q);
        CHECK((r * r.transpose() - Mat3::Identity()).norm() < 1e-12);
        CHECK(r.determinant() == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("unnormalized quaternion gives the same rotation as its unit form")
{
    const Vec4 q(0.3, -0.4, 0.5, 0.6);
    const Vec4 scaled = 3.7 * q;
    CHECK((rotation_matrix(q) - rotation_matrix(scaled)).norm() < 1e-12);
}

TEST_CASE("90 degree rotation about z maps x to y")
{
    const Vec4 q = quaternion_from_axis_angle(Vec3(0, 0, 1), M_PI / 2.0);
    const Vec3 rotated = rotation_matrix(q) * Vec3(1, 0, 0);
    CHECK((rotated - Vec3(0, 1, 0)).norm() < 1e-12);
}

TEST_CASE("quaternion_from_matrix round trips and canonicalizes sign")
{
    Rng rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        Vec3 axis(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
        if (axis.norm() < 1e-3) axis = Vec3(1, 0, 0);
        axis.normalize();
        const double angle = rng.uniform(-3.0, 3.0);
        const Mat3 r = rotation_matrix(quaternion_from_axis_angle(axis, angle));
        const Vec4 q = quaternion_from_matrix(r);
        CHECK(q[0] >= 0.0);
        CHECK(q.norm() == doctest::Approx(1.0).epsilon(1e-12));
        CHECK((rotation_matrix(q) - r).norm() < 1e-10);
    }
}

TEST_CASE("rotation_matrix_backward matches finite differences")
{
    Rng rng(23);
    for (int trial = 0; trial < 10; ++trial) {
        Vec4 q;
        for (int i = 0; i < 4; ++i) q[i] = rng.uniform(-1.5, 1.5);
        if (q.norm() < 0.2) q[0] += 1.0;

        // Random linear functional over the matrix entries: L = sum_ij w_ij R_ij.
        Mat3 w;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) w(i, j) = rng.uniform(-1.0, 1.0);

        const Vec4 analytic = rotation_matrix_backward(q, w);

        auto loss = [&](const VecX& x) {
            const Vec4 qq(x[0], x[1], x[2], x[3]);
            return (w.array() * rotation_matrix(qq).array()).sum();
        };
        VecX x(4);
        x << q[0], q[1], q[2], q[3];
        for (int i = 0; i < 4; ++i) {
            const double fd = fd_partial(loss, x, i);
            CHECK_MESSAGE(grad_close(analytic[i], fd),
                          "component " << i << " analytic=" << analytic[i] << " fd=" << fd);
        }
    }
}

TEST_CASE("rotate_vector_backward matches finite differences")
{
    Rng rng(29);
    const Vec4 q(0.8, 0.1, -0.3, 0.5);
    const Vec3 v(0.4, -1.2, 2.0);
    const Vec3 w(1.0, 0.5, -0.25); // gradient of loss w.r.t. rotated vector

    Vec4 grad_q;
    Vec3 grad_v;
    rotate_vector_backward(q, v, w, grad_q, grad_v);

    auto loss = [&](const VecX& x) {
        const Vec4 qq(x[0], x[1], x[2], x[3]);
        const Vec3 vv(x[4], x[5], x[6]);
        return w.dot(rotation_matrix(qq) * vv);
    };
    VecX x(7);
    x << q[0], q[1], q[2], q[3], v[0], v[1], v[2];
    for (int i = 0; i < 4; ++i) CHECK(grad_close(grad_q[i], fd_partial(loss, x, i)));
    for (int i = 0; i < 3; ++i) CHECK(grad_close(grad_v[i], fd_partial(loss, x, 4 + i)));
    (void)rng;
}

TEST_CASE("rng fork produces decorrelated but deterministic streams")
{
    Rng a(42);
    Rng b(42);
    Rng fa = a.fork(1);
    Rng fb = b.fork(1);
    CHECK(fa.uniform(0.0, 1.0) == fb.uniform(0.0, 1.0));

    Rng c(42);
    Rng f1 = c.fork(1);
    Rng f2 = c.fork(2);
    CHECK(f1.uniform(0.0, 1.0) != f2.uniform(0.0, 1.0));
}
