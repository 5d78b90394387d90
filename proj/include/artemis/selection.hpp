#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <string>
#include <vector>

#include "artemis/bvh.hpp"
#include "artemis/camera.hpp"
#include "artemis/error.hpp"
#include "artemis/mesh.hpp"

namespace artemis {

// Relative depth slack: a face is hidden only by hits strictly nearer than
// t_self * (1 - kVisibilityTolerance).
inline constexpr double kVisibilityTolerance = 1e-6;

/// A region of interest: a set of whole faces on one mesh. `faces` is kept
/// sorted and duplicate-free.
struct SelectionSet {
  std::string mesh_id;
  std::vector<std::uint32_t> faces;

  static SelectionSet from_faces(std::string mesh_id, std::vector<std::uint32_t> faces) {
    std::sort(faces.begin(), faces.end());
    faces.erase(std::unique(faces.begin(), faces.end()), faces.end());
    return {std::move(mesh_id), std::move(faces)};
  }

  bool contains(std::uint32_t f) const { return std::binary_search(faces.begin(), faces.end(), f); }
  bool empty() const { return faces.empty(); }
  std::size_t size() const { return faces.size(); }

  bool is_subset_of(const SelectionSet& other) const {
    return std::includes(other.faces.begin(), other.faces.end(), faces.begin(), faces.end());
  }

  friend bool operator==(const SelectionSet&, const SelectionSet&) = default;
};

struct BrushStroke {
  std::vector<ScreenPoint> samples;
  double radius = 0.0;  // NDC units
};

struct LassoPolygon {
  std::vector<ScreenPoint> vertices;  // implicitly closed
};

namespace detail {

inline bool valid_ndc(const ScreenPoint& p) {
  return std::isfinite(p.x) && std::isfinite(p.y) && std::abs(p.x) <= 1.0 && std::abs(p.y) <= 1.0;
}

inline void require_same_mesh(const SelectionSet& a, const SelectionSet& b) {
  if (a.mesh_id != b.mesh_id) {
    throw Error(ErrorCode::MeshMismatch, "selections belong to different meshes ('" + a.mesh_id + "' vs '" +
                                             b.mesh_id + "')");
  }
}

}  // namespace detail

inline bool face_visible(const TriangleMesh& mesh, const BVH& bvh, const CameraPose& cam, std::uint32_t face_id) {
  const Vec3 c = face_centroid(mesh, face_id);
  const Vec3 to = c - cam.eye();
  if (!(length(to) > 0.0)) return false;
  const Ray ray{cam.eye(), normalized(to)};
  const auto self = intersect_face(ray, mesh, face_id);
  if (!self) return false;
  return !bvh.occluded(mesh, ray, self->t * (1.0 - kVisibilityTolerance), face_id);
}

// Even-odd rule (crossing count of a +x ray).
inline bool point_in_polygon(const ScreenPoint& p, const std::vector<ScreenPoint>& poly) {
  bool inside = false;
  const std::size_t n = poly.size();
  for (std::size_t i = 0, j = n - 1; i < n; j = i++) {
    const ScreenPoint& a = poly[i];
    const ScreenPoint& b = poly[j];
    if ((a.y > p.y) != (b.y > p.y)) {
      const double x_cross = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
      if (p.x < x_cross) inside = !inside;
    }
  }
  return inside;
}

/// Inserts samples so consecutive ones are at most `radius / 2` apart.
inline std::vector<ScreenPoint> densify_stroke(const BrushStroke& stroke) {
  std::vector<ScreenPoint> out;
  if (stroke.samples.empty()) return out;
  const double step = stroke.radius / 2.0;
  out.push_back(stroke.samples.front());
  for (std::size_t i = 1; i < stroke.samples.size(); ++i) {
    const ScreenPoint& a = stroke.samples[i - 1];
    const ScreenPoint& b = stroke.samples[i];
    const double d = std::hypot(b.x - a.x, b.y - a.y);
    const auto n = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(d / step)));
    for (std::size_t k = 1; k <= n; ++k) {
      const double s = static_cast<double>(k) / static_cast<double>(n);
      out.push_back({a.x + (b.x - a.x) * s, a.y + (b.y - a.y) * s});
    }
  }
  return out;
}

/**
 * Brush selection. A face is selected when its projected centroid lies within
 * `radius` of a (densified) stroke sample and its centroid is visible. The
 * face under each original sample's pick ray is always included.
 */
inline SelectionSet brush_select(const TriangleMesh& mesh, const BVH& bvh, const CameraPose& cam,
                                 const BrushStroke& stroke) {
  if (stroke.samples.empty()) throw Error(ErrorCode::InvalidStroke, "brush stroke has no samples");
  if (!(stroke.radius > 0.0) || !std::isfinite(stroke.radius)) {
    throw Error(ErrorCode::InvalidStroke, "brush radius must be > 0");
  }
  for (const ScreenPoint& s : stroke.samples) {
    if (!detail::valid_ndc(s)) throw Error(ErrorCode::InvalidStroke, "stroke sample outside [-1,1]^2");
  }

  const std::vector<ScreenPoint> samples = densify_stroke(stroke);
  const double r2 = stroke.radius * stroke.radius;
  double min_x = samples[0].x, max_x = samples[0].x, min_y = samples[0].y, max_y = samples[0].y;
  for (const ScreenPoint& s : samples) {
    min_x = std::min(min_x, s.x);
    max_x = std::max(max_x, s.x);
    min_y = std::min(min_y, s.y);
    max_y = std::max(max_y, s.y);
  }
  min_x -= stroke.radius;
  max_x += stroke.radius;
  min_y -= stroke.radius;
  max_y += stroke.radius;

  std::vector<std::uint32_t> picked;
  for (std::uint32_t f = 0; f < mesh.faces.size(); ++f) {
    const auto proj = project_point(cam, face_centroid(mesh, f));
    if (!proj) continue;
    const ScreenPoint& c = proj->ndc;
    if (c.x < min_x || c.x > max_x || c.y < min_y || c.y > max_y) continue;
    const bool in_disk = std::any_of(samples.begin(), samples.end(), [&](const ScreenPoint& s) {
      const double dx = c.x - s.x;
      const double dy = c.y - s.y;
      return dx * dx + dy * dy <= r2;
    });
    if (in_disk && face_visible(mesh, bvh, cam, f)) picked.push_back(f);
  }
  for (const ScreenPoint& s : stroke.samples) {
    if (const auto hit = bvh.raycast_nearest(mesh, pick_ray(cam, s))) picked.push_back(hit->face_id);
  }
  return SelectionSet::from_faces(mesh.id, std::move(picked));
}

/// Lasso selection: visible faces whose projected centroid is inside the
/// polygon under the even-odd rule.
inline SelectionSet lasso_select(const TriangleMesh& mesh, const BVH& bvh, const CameraPose& cam,
                                 const LassoPolygon& polygon) {
  if (polygon.vertices.size() < 3) throw Error(ErrorCode::InvalidPolygon, "lasso needs at least 3 vertices");
  for (const ScreenPoint& v : polygon.vertices) {
    if (!detail::valid_ndc(v)) throw Error(ErrorCode::InvalidPolygon, "lasso vertex outside [-1,1]^2");
  }
  double min_x = 1.0, max_x = -1.0, min_y = 1.0, max_y = -1.0;
  for (const ScreenPoint& v : polygon.vertices) {
    min_x = std::min(min_x, v.x);
    max_x = std::max(max_x, v.x);
    min_y = std::min(min_y, v.y);
    max_y = std::max(max_y, v.y);
  }
  std::vector<std::uint32_t> picked;
  for (std::uint32_t f = 0; f < mesh.faces.size(); ++f) {
    const auto proj = project_point(cam, face_centroid(mesh, f));
    if (!proj) continue;
    const ScreenPoint& c = proj->ndc;
    if (c.x < min_x || c.x > max_x || c.y < min_y || c.y > max_y) continue;
    if (point_in_polygon(c, polygon.vertices) && face_visible(mesh, bvh, cam, f)) picked.push_back(f);
  }
  return {mesh.id, std::move(picked)};
}

inline SelectionSet selection_union(const SelectionSet& a, const SelectionSet& b) {
  detail::require_same_mesh(a, b);
  SelectionSet out{a.mesh_id, {}};
  std::set_union(a.faces.begin(), a.faces.end(), b.faces.begin(), b.faces.end(), std::back_inserter(out.faces));
  return out;
}

inline SelectionSet selection_difference(const SelectionSet& a, const SelectionSet& b) {
  detail::require_same_mesh(a, b);
  SelectionSet out{a.mesh_id, {}};
  std::set_difference(a.faces.begin(), a.faces.end(), b.faces.begin(), b.faces.end(),
                      std::back_inserter(out.faces));
  return out;
}

inline SelectionSet selection_intersect(const SelectionSet& a, const SelectionSet& b) {
  detail::require_same_mesh(a, b);
  SelectionSet out{a.mesh_id, {}};
  std::set_intersection(a.faces.begin(), a.faces.end(), b.faces.begin(), b.faces.end(),
                        std::back_inserter(out.faces));
  return out;
}

/// Sorted vertex indices touched by the selected faces.
inline std::vector<std::uint32_t> derive_vertices(const TriangleMesh& mesh, const std::vector<std::uint32_t>& faces) {
  std::vector<std::uint32_t> verts;
  verts.reserve(faces.size() * 3);
  for (std::uint32_t f : faces) {
    for (std::uint32_t v : mesh.faces.at(f)) verts.push_back(v);
  }
  std::sort(verts.begin(), verts.end());
  verts.erase(std::unique(verts.begin(), verts.end()), verts.end());
  return verts;
}

}  // namespace artemis
