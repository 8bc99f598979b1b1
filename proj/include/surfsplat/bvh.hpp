// Copyright Contributors to the SurfSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "surfsplat/morphable.hpp"

#include <cstdint>
#include <limits>
#include <vector>

namespace surfsplat {

struct Aabb {
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::max());
    Vec3 hi = Vec3::Constant(std::numeric_limits<double>::lowest());

    void expand(const Vec3& p) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    void expand(const Aabb& other) {
        lo = lo.cwiseMin(other.lo);
        hi = hi.cwiseMax(other.hi);
    }
    bool contains(const Aabb& other) const {
        return (lo.array() <= other.lo.array()).all() && (hi.array() >= other.hi.array()).all();
    }
    double squared_distance(const Vec3& p) const {
        const Vec3 d = (lo - p).cwiseMax(p - hi).cwiseMax(0.0);
        return d.squaredNorm();
    }
};

/// Exact closest point on one triangle (Ericson's region test). Barycentric
/// coordinates sum to 1 with entries in [0,1].
struct TrianglePoint {
    Vec3 point;
    Vec3 barycentric;
    double squared_distance;
};
TrianglePoint closest_point_on_triangle(const Vec3& query, const Vec3& a, const Vec3& b,
                                        const Vec3& c);

struct ClosestPointResult {
    Vec3 point;           // x_i
    Vec3 normal;          // face normal n_i
    int triangle_index;
    Vec3 barycentric;
    double distance;      // Euclidean |query - point|
};

/// Axis-aligned bounding-box tree over triangles, median split on the
/// longest centroid axis. Queries are exact: results equal a brute-force
/// scan over all triangles (ties broken toward the lowest triangle index).
class BvhIndex {
public:
    struct Node {
        Aabb box;
        std::int32_t left = -1;   // internal: child node ids
        std::int32_t right = -1;
        std::int32_t first = 0;   // leaf: range into triangle_order
        std::int32_t count = 0;
        bool is_leaf() const { return count > 0; }
    };

    static BvhIndex build(const TriangleMesh& mesh, int leaf_size = 4);

    ClosestPointResult closest_point(const TriangleMesh& mesh, const Vec3& query) const;

    const std::vector<Node>& nodes() const { return nodes_; }
    const std::vector<std::uint32_t>& triangle_order() const { return order_; }
    std::size_t triangle_count() const { return order_.size(); }

private:
    std::vector<Node> nodes_;
    std::vector<std::uint32_t> order_;

    std::int32_t build_node(const TriangleMesh& mesh, const std::vector<Vec3>& centroids,
                            std::int32_t first, std::int32_t count, int leaf_size);
};

inline BvhIndex build_bvh(const TriangleMesh& mesh, int leaf_size = 4) {
    return BvhIndex::build(mesh, leaf_size);
}

inline ClosestPointResult closest_point_on_surface(const BvhIndex& index,
                                                   const TriangleMesh& mesh, const Vec3& x) {
    return index.closest_point(mesh, x);
}

} // namespace surfsplat
