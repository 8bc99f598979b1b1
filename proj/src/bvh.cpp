// Copyright Contributors to the SurfSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "surfsplat/bvh.hpp"

#include "surfsplat/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>

namespace surfsplat {

TrianglePoint closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b,
                                        const Vec3& c) {
    const Vec3 ab = b - a;
    const Vec3 ac = c - a;
    const Vec3 ap = p - a;

    const double d1 = ab.dot(ap);
    const double d2 = ac.dot(ap);
    if (d1 <= 0.0 && d2 <= 0.0) {
        return {a, Vec3(1.0, 0.0, 0.0), (p - a).squaredNorm()};
    }

    const Vec3 bp = p - b;
    const double d3 = ab.dot(bp);
    const double d4 = ac.dot(bp);
    if (d3 >= 0.0 && d4 <= d3) {
        return {b, Vec3(0.0, 1.0, 0.0), (p - b).squaredNorm()};
    }

    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
        const double v = d1 / (d1 - d3);
        const Vec3 q = a + v * ab;
        return {q, Vec3(1.0 - v, v, 0.0), (p - q).squaredNorm()};
    }

    const Vec3 cp = p - c;
    const double d5 = ab.dot(cp);
    const double d6 = ac.dot(cp);
    if (d6 >= 0.0 && d5 <= d6) {
        return {c, Vec3(0.0, 0.0, 1.0), (p - c).squaredNorm()};
    }

    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
        const double w = d2 / (d2 - d6);
        const Vec3 q = a + w * ac;
        return {q, Vec3(1.0 - w, 0.0, w), (p - q).squaredNorm()};
    }

    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0) {
        const double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
        const Vec3 q = b + w * (c - b);
        return {q, Vec3(0.0, 1.0 - w, w), (p - q).squaredNorm()};
    }

    const double denom = 1.0 / (va + vb + vc);
    const double v = vb * denom;
    const double w = vc * denom;
    const Vec3 q = a + ab * v + ac * w;
    return {q, Vec3(1.0 - v - w, v, w), (p - q).squaredNorm()};
}

BvhIndex BvhIndex::build(const TriangleMesh& mesh, int leaf_size) {
    if (mesh.triangles.empty()) {
        throw Error(ErrorCode::invalid_input, "build_bvh: empty mesh");
    }
    BvhIndex index;
    index.order_.resize(mesh.triangles.size());
    for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
        index.order_[i] = static_cast<std::uint32_t>(i);
    }
    std::vector<Vec3> centroids(mesh.triangles.size());
    for (std::size_t i = 0; i < mesh.triangles.size(); ++i) {
        const Triangle& t = mesh.triangles[i];
        centroids[i] =
            (mesh.vertices[t[0]] + mesh.vertices[t[1]] + mesh.vertices[t[2]]) / 3.0;
    }
    index.nodes_.reserve(2 * mesh.triangles.size());
    index.build_node(mesh, centroids, 0, static_cast<std::int32_t>(mesh.triangles.size()),
                     std::max(1, leaf_size));
    return index;
}

std::int32_t BvhIndex::build_node(const TriangleMesh& mesh, const std::vector<Vec3>& centroids,
                                  std::int32_t first, std::int32_t count, int leaf_size) {
    const std::int32_t node_id = static_cast<std::int32_t>(nodes_.size());
    nodes_.emplace_back();

    Aabb box;
    Aabb centroid_box;
    for (std::int32_t i = first; i < first + count; ++i) {
        const Triangle& t = mesh.triangles[order_[i]];
        box.expand(mesh.vertices[t[0]]);
        box.expand(mesh.vertices[t[1]]);
        box.expand(mesh.vertices[t[2]]);
        centroid_box.expand(centroids[order_[i]]);
    }
    nodes_[node_id].box = box;

    const Vec3 extent = centroid_box.hi - centroid_box.lo;
    int axis = 0;
    extent.maxCoeff(&axis);

    if (count <= leaf_size || extent[axis] <= 0.0) {
        nodes_[node_id].first = first;
        nodes_[node_id].count = count;
        return node_id;
    }

    const std::int32_t mid = first + count / 2;
    std::nth_element(order_.begin() + first, order_.begin() + mid, order_.begin() + first + count,
                     [&](std::uint32_t lhs, std::uint32_t rhs) {
                         if (centroids[lhs][axis] != centroids[rhs][axis]) {
                             return centroids[lhs][axis] < centroids[rhs][axis];
                         }
                         return lhs < rhs;
                     });

    const std::int32_t left = build_node(mesh, centroids, first, mid - first, leaf_size);
    const std::int32_t right = build_node(mesh, centroids, mid, first + count - mid, leaf_size);
    nodes_[node_id].left = left;
    nodes_[node_id].right = right;
    return node_id;
}

ClosestPointResult BvhIndex::closest_point(const TriangleMesh& mesh, const Vec3& query) const {
    double best_d2 = std::numeric_limits<double>::max();
    std::uint32_t best_tri = 0;
    TrianglePoint best_tp{};

    // Explicit stack, nearer child first. Nodes at exactly the current best
    // distance are still visited so equal-distance ties resolve to the
    // lowest triangle index.
    std::array<std::int32_t, 128> stack;
    int top = 0;
    stack[top++] = 0;
    while (top > 0) {
        const Node& node = nodes_[stack[--top]];
        if (node.box.squared_distance(query) > best_d2) continue;
        if (node.is_leaf()) {
            for (std::int32_t i = node.first; i < node.first + node.count; ++i) {
                const std::uint32_t tri = order_[i];
                const Triangle& t = mesh.triangles[tri];
                const TrianglePoint tp = closest_point_on_triangle(
                    query, mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]);
                if (tp.squared_distance < best_d2 ||
                    (tp.squared_distance == best_d2 && tri < best_tri)) {
                    best_d2 = tp.squared_distance;
                    best_tri = tri;
                    best_tp = tp;
                }
            }
        } else {
            const double dl = nodes_[node.left].box.squared_distance(query);
            const double dr = nodes_[node.right].box.squared_distance(query);
            // Push the farther child first so the nearer one is processed next.
            if (dl <= dr) {
                if (dr <= best_d2) stack[top++] = node.right;
                if (dl <= best_d2) stack[top++] = node.left;
            } else {
                if (dl <= best_d2) stack[top++] = node.left;
                if (dr <= best_d2) stack[top++] = node.right;
            }
        }
    }

    ClosestPointResult out;
    out.point = best_tp.point;
    out.barycentric = best_tp.barycentric;
    out.triangle_index = static_cast<int>(best_tri);
    out.normal = mesh.triangle_normals[best_tri];
    out.distance = std::sqrt(best_tp.squared_distance);
    return out;
}

} // namespace surfsplat
