#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "artemis/error.hpp"
#include "artemis/geometry.hpp"

namespace artemis {

using Face = std::array<std::uint32_t, 3>;

/**
 * Indexed triangle mesh: the object under annotation.
 *
 * Attribute arrays (normals, uvs) are per-vertex and, when present, have the
 * same length as `positions`. The texture reference is an opaque hint that is
 * stored and served but never decoded.
 */
struct TriangleMesh {
  std::vector<Vec3> positions;
  std::vector<Face> faces;
  std::optional<std::vector<Vec3>> normals;
  std::optional<std::vector<Vec2>> uvs;
  std::optional<std::string> texture_ref;
  std::string name;
  // Content identifier of the source (model id in a store); empty when the
  // mesh was built in memory.
  std::string id;

  std::size_t vertex_count() const { return positions.size(); }
  std::size_t face_count() const { return faces.size(); }

  friend bool operator==(const TriangleMesh&, const TriangleMesh&) = default;
};

/// Throws IndexError / EmptyMesh / InvalidArgument when an invariant is broken.
inline void validate(const TriangleMesh& mesh) {
  if (mesh.faces.empty()) throw Error(ErrorCode::EmptyMesh, "mesh has no faces");
  const std::size_t n = mesh.positions.size();
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    for (std::uint32_t v : mesh.faces[f]) {
      if (v >= n) {
        throw Error(ErrorCode::IndexError, "face " + std::to_string(f) + " references vertex " +
                                               std::to_string(v) + " but only " +
                                               std::to_string(n) + " vertices exist");
      }
    }
  }
  if (mesh.normals) {
    if (mesh.normals->size() != n) {
      throw Error(ErrorCode::InvalidArgument, "normal count does not match vertex count");
    }
    for (const Vec3& nrm : *mesh.normals) {
      if (std::abs(length(nrm) - 1.0) > 1e-6) {
        throw Error(ErrorCode::InvalidArgument, "vertex normal is not unit length");
      }
    }
  }
  if (mesh.uvs && mesh.uvs->size() != n) {
    throw Error(ErrorCode::InvalidArgument, "uv count does not match vertex count");
  }
}

inline Vec3 face_cross(const TriangleMesh& mesh, std::size_t f) {
  const Face& t = mesh.faces[f];
  const Vec3& a = mesh.positions[t[0]];
  return cross(mesh.positions[t[1]] - a, mesh.positions[t[2]] - a);
}

inline Vec3 face_centroid(const TriangleMesh& mesh, std::size_t f) {
  const Face& t = mesh.faces[f];
  return (mesh.positions[t[0]] + mesh.positions[t[1]] + mesh.positions[t[2]]) / 3.0;
}

inline std::vector<double> face_areas(const TriangleMesh& mesh) {
  std::vector<double> areas(mesh.faces.size());
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) areas[f] = 0.5 * length(face_cross(mesh, f));
  return areas;
}

inline double total_area(const TriangleMesh& mesh) {
  double sum = 0.0;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) sum += 0.5 * length(face_cross(mesh, f));
  return sum;
}

// Min/max over vertices referenced by at least one face.
inline AABB bounding_box(const TriangleMesh& mesh) {
  AABB box;
  for (const Face& t : mesh.faces) {
    for (std::uint32_t v : t) box.expand(mesh.positions[v]);
  }
  return box;
}

// Area-weighted vertex normals. The unnormalized face cross product already
// carries twice the area, so summing it weights by area and zero-area faces
// drop out. Vertices with no (non-degenerate) incident face get +Z.
inline std::vector<Vec3> vertex_normals(const TriangleMesh& mesh) {
  std::vector<Vec3> acc(mesh.positions.size());
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const Vec3 c = face_cross(mesh, f);
    for (std::uint32_t v : mesh.faces[f]) acc[v] += c;
  }
  for (Vec3& n : acc) {
    const double len = length(n);
    n = len > 0.0 ? n / len : Vec3{0.0, 0.0, 1.0};
  }
  return acc;
}

inline TriangleMesh compute_vertex_normals(TriangleMesh mesh) {
  mesh.normals = vertex_normals(mesh);
  return mesh;
}

/// Neighbor lists, sorted ascending, induced by face edges.
inline std::vector<std::vector<std::uint32_t>> vertex_adjacency(const TriangleMesh& mesh) {
  std::vector<std::vector<std::uint32_t>> adj(mesh.positions.size());
  for (const Face& t : mesh.faces) {
    for (int i = 0; i < 3; ++i) {
      const std::uint32_t a = t[i];
      const std::uint32_t b = t[(i + 1) % 3];
      if (a == b) continue;
      adj[a].push_back(b);
      adj[b].push_back(a);
    }
  }
  for (auto& list : adj) {
    std::sort(list.begin(), list.end());
    list.erase(std::unique(list.begin(), list.end()), list.end());
  }
  return adj;
}

inline TriangleMesh transformed(TriangleMesh mesh, const RigidTransform& xf) {
  for (Vec3& p : mesh.positions) p = xf.apply(p);
  if (mesh.normals) {
    for (Vec3& n : *mesh.normals) n = normalized(xf.rotate(n));
  }
  return mesh;
}

}  // namespace artemis
