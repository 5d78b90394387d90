#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <vector>

#include "artemis/geometry.hpp"
#include "artemis/mesh.hpp"

namespace artemis {

// Parallel-ray rejection threshold on the Möller–Trumbore determinant.
inline constexpr double kParallelEpsilon = 1e-12;
// Hits whose t differ by at most this much are ties, broken by face id.
inline constexpr double kTieEpsilon = 1e-9;

struct Ray {
  Vec3 origin;
  Vec3 direction;  // unit length

  static Ray through(const Vec3& origin, const Vec3& target) {
    return {origin, normalized(target - origin)};
  }
};

struct Hit {
  std::uint32_t face_id = 0;
  double t = 0.0;
  double bary_u = 0.0;
  double bary_v = 0.0;

  friend bool operator==(const Hit&, const Hit&) = default;
};

struct TriangleHit {
  double t;
  double u;
  double v;
};

/// Möller–Trumbore. Edges and vertices count as hits; parallel rays
/// (|det| < 1e-12) and hits behind the origin do not.
inline std::optional<TriangleHit> ray_triangle_intersect(const Ray& ray, const Vec3& v0, const Vec3& v1,
                                                         const Vec3& v2) {
  const Vec3 e1 = v1 - v0;
  const Vec3 e2 = v2 - v0;
  const Vec3 p = cross(ray.direction, e2);
  const double det = dot(e1, p);
  if (std::abs(det) < kParallelEpsilon) return std::nullopt;
  const double inv_det = 1.0 / det;
  const Vec3 s = ray.origin - v0;
  const double u = dot(s, p) * inv_det;
  if (u < 0.0 || u > 1.0) return std::nullopt;
  const Vec3 q = cross(s, e1);
  const double v = dot(ray.direction, q) * inv_det;
  if (v < 0.0 || u + v > 1.0) return std::nullopt;
  const double t = dot(e2, q) * inv_det;
  if (t < 0.0) return std::nullopt;
  return TriangleHit{t, u, v};
}

inline std::optional<TriangleHit> intersect_face(const Ray& ray, const TriangleMesh& mesh, std::size_t f) {
  const Face& tri = mesh.faces[f];
  return ray_triangle_intersect(ray, mesh.positions[tri[0]], mesh.positions[tri[1]], mesh.positions[tri[2]]);
}

// Returns true when the ray overlaps the box within [0, t_max]; t_entry gets
// the entry distance (clamped at 0).
inline bool ray_box(const Ray& ray, const Vec3& inv_dir, const AABB& box, double t_max, double& t_entry) {
  double lo = 0.0;
  double hi = t_max;
  for (int a = 0; a < 3; ++a) {
    const double o = ray.origin[a];
    if (ray.direction[a] == 0.0) {
      if (o < box.min[a] || o > box.max[a]) return false;
      continue;
    }
    double t0 = (box.min[a] - o) * inv_dir[a];
    double t1 = (box.max[a] - o) * inv_dir[a];
    if (t0 > t1) std::swap(t0, t1);
    // Widen slightly so rounding never culls a box whose faces the
    // triangle test would accept.
    t1 *= 1.0 + 4.0 * std::numeric_limits<double>::epsilon();
    lo = std::max(lo, t0);
    hi = std::min(hi, t1);
    if (lo > hi) return false;
  }
  t_entry = lo;
  return true;
}

/**
 * Bounding volume hierarchy over the faces of one mesh.
 *
 * Built by median split along the longest axis of the centroid bounds,
 * stopping at `max_leaf_size` faces. Ties in the split coordinate are broken
 * by face id, so the topology is a pure function of the mesh.
 */
class BVH {
 public:
  struct Node {
    AABB bounds;
    // Leaf: first index into face_order(). Interior: index of right child
    // (the left child immediately follows the node).
    std::uint32_t offset = 0;
    std::uint32_t count = 0;  // 0 for interior nodes
    bool is_leaf() const { return count > 0; }
  };

  static constexpr std::uint32_t kDefaultLeafSize = 8;

  BVH() = default;

  explicit BVH(const TriangleMesh& mesh, std::uint32_t max_leaf_size = kDefaultLeafSize)
      : max_leaf_size_(std::max<std::uint32_t>(1, max_leaf_size)) {
    const std::size_t n = mesh.faces.size();
    order_.resize(n);
    std::iota(order_.begin(), order_.end(), 0U);
    face_bounds_.resize(n);
    centroids_.resize(n);
    for (std::size_t f = 0; f < n; ++f) {
      AABB b;
      for (std::uint32_t v : mesh.faces[f]) b.expand(mesh.positions[v]);
      face_bounds_[f] = b;
      centroids_[f] = b.center();
    }
    nodes_.reserve(n > 0 ? 2 * (n / max_leaf_size_ + 1) : 1);
    if (n > 0) build_recursive(0, static_cast<std::uint32_t>(n));
    face_bounds_.clear();
    face_bounds_.shrink_to_fit();
    centroids_.clear();
    centroids_.shrink_to_fit();
    face_count_ = n;
  }

  const std::vector<Node>& nodes() const { return nodes_; }
  const std::vector<std::uint32_t>& face_order() const { return order_; }
  std::uint32_t max_leaf_size() const { return max_leaf_size_; }
  std::size_t face_count() const { return face_count_; }
  bool empty() const { return nodes_.empty(); }

  /// Nearest hit; among hits within kTieEpsilon of the minimum t, the
  /// smallest face id wins.
  std::optional<Hit> raycast_nearest(const TriangleMesh& mesh, const Ray& ray) const {
    if (nodes_.empty()) return std::nullopt;
    const Vec3 inv = inverse(ray.direction);
    double best_t = std::numeric_limits<double>::infinity();
    std::vector<Hit> near_hits;  // hits within the tie window of best_t
    std::uint32_t stack[128];
    int sp = 0;
    stack[sp++] = 0;
    while (sp > 0) {
      const std::uint32_t ni = stack[--sp];
      const Node& node = nodes_[ni];
      double entry = 0.0;
      if (!ray_box(ray, inv, node.bounds, best_t + kTieEpsilon, entry)) continue;
      if (node.is_leaf()) {
        for (std::uint32_t i = node.offset; i < node.offset + node.count; ++i) {
          const std::uint32_t f = order_[i];
          const auto h = intersect_face(ray, mesh, f);
          if (!h || h->t > best_t + kTieEpsilon) continue;
          if (h->t < best_t) {
            best_t = h->t;
            std::erase_if(near_hits, [&](const Hit& x) { return x.t > best_t + kTieEpsilon; });
          }
          near_hits.push_back({f, h->t, h->u, h->v});
        }
        continue;
      }
      // Visit the nearer child first.
      const std::uint32_t left = ni + 1;
      const std::uint32_t right = node.offset;
      double tl = 0.0, tr = 0.0;
      const bool hl = ray_box(ray, inv, nodes_[left].bounds, best_t + kTieEpsilon, tl);
      const bool hr = ray_box(ray, inv, nodes_[right].bounds, best_t + kTieEpsilon, tr);
      if (hl && hr) {
        if (tl <= tr) {
          stack[sp++] = right;
          stack[sp++] = left;
        } else {
          stack[sp++] = left;
          stack[sp++] = right;
        }
      } else if (hl) {
        stack[sp++] = left;
      } else if (hr) {
        stack[sp++] = right;
      }
    }
    if (near_hits.empty()) return std::nullopt;
    const Hit* best = nullptr;
    for (const Hit& h : near_hits) {
      if (h.t > best_t + kTieEpsilon) continue;
      if (!best || h.face_id < best->face_id) best = &h;
    }
    return *best;
  }

  /// Every intersected face, sorted by t then face id.
  std::vector<Hit> raycast_all(const TriangleMesh& mesh, const Ray& ray) const {
    std::vector<Hit> hits;
    if (nodes_.empty()) return hits;
    const Vec3 inv = inverse(ray.direction);
    const double inf = std::numeric_limits<double>::infinity();
    std::uint32_t stack[128];
    int sp = 0;
    stack[sp++] = 0;
    while (sp > 0) {
      const Node& node = nodes_[stack[--sp]];
      const std::uint32_t ni = static_cast<std::uint32_t>(&node - nodes_.data());
      double entry = 0.0;
      if (!ray_box(ray, inv, node.bounds, inf, entry)) continue;
      if (node.is_leaf()) {
        for (std::uint32_t i = node.offset; i < node.offset + node.count; ++i) {
          const std::uint32_t f = order_[i];
          if (const auto h = intersect_face(ray, mesh, f)) hits.push_back({f, h->t, h->u, h->v});
        }
      } else {
        stack[sp++] = node.offset;
        stack[sp++] = ni + 1;
      }
    }
    std::sort(hits.begin(), hits.end(), [](const Hit& a, const Hit& b) {
      return a.t < b.t || (a.t == b.t && a.face_id < b.face_id);
    });
    return hits;
  }

  /// True if some face other than `ignore_face` is hit with t < t_max.
  bool occluded(const TriangleMesh& mesh, const Ray& ray, double t_max, std::uint32_t ignore_face) const {
    if (nodes_.empty()) return false;
    const Vec3 inv = inverse(ray.direction);
    std::uint32_t stack[128];
    int sp = 0;
    stack[sp++] = 0;
    while (sp > 0) {
      const std::uint32_t ni = stack[--sp];
      const Node& node = nodes_[ni];
      double entry = 0.0;
      if (!ray_box(ray, inv, node.bounds, t_max, entry)) continue;
      if (node.is_leaf()) {
        for (std::uint32_t i = node.offset; i < node.offset + node.count; ++i) {
          const std::uint32_t f = order_[i];
          if (f == ignore_face) continue;
          const auto h = intersect_face(ray, mesh, f);
          if (h && h->t < t_max) return true;
        }
      } else {
        stack[sp++] = node.offset;
        stack[sp++] = ni + 1;
      }
    }
    return false;
  }

 private:
  static Vec3 inverse(const Vec3& d) {
    return {d.x != 0.0 ? 1.0 / d.x : 0.0, d.y != 0.0 ? 1.0 / d.y : 0.0, d.z != 0.0 ? 1.0 / d.z : 0.0};
  }

  std::uint32_t build_recursive(std::uint32_t begin, std::uint32_t end) {
    const auto index = static_cast<std::uint32_t>(nodes_.size());
    nodes_.emplace_back();
    AABB bounds;
    AABB centroid_bounds;
    for (std::uint32_t i = begin; i < end; ++i) {
      bounds.expand(face_bounds_[order_[i]]);
      centroid_bounds.expand(centroids_[order_[i]]);
    }
    nodes_[index].bounds = bounds;
    const std::uint32_t count = end - begin;
    if (count <= max_leaf_size_) {
      nodes_[index].offset = begin;
      nodes_[index].count = count;
      return index;
    }
    const int axis = centroid_bounds.longest_axis();
    const std::uint32_t mid = begin + count / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                     [&](std::uint32_t a, std::uint32_t b) {
                       const double ca = centroids_[a][axis];
                       const double cb = centroids_[b][axis];
                       return ca < cb || (ca == cb && a < b);
                     });
    build_recursive(begin, mid);
    const std::uint32_t right = build_recursive(mid, end);
    nodes_[index].offset = right;
    nodes_[index].count = 0;
    return index;
  }

  std::vector<Node> nodes_;
  std::vector<std::uint32_t> order_;
  std::vector<AABB> face_bounds_;
  std::vector<Vec3> centroids_;
  std::uint32_t max_leaf_size_ = kDefaultLeafSize;
  std::size_t face_count_ = 0;
};

inline BVH build_bvh(const TriangleMesh& mesh) { return BVH(mesh); }

inline std::optional<Hit> raycast_nearest(const BVH& bvh, const TriangleMesh& mesh, const Ray& ray) {
  return bvh.raycast_nearest(mesh, ray);
}

inline std::vector<Hit> raycast_all(const BVH& bvh, const TriangleMesh& mesh, const Ray& ray) {
  return bvh.raycast_all(mesh, ray);
}

}  // namespace artemis
