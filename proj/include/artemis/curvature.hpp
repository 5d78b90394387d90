#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "artemis/geometry.hpp"
#include "artemis/mesh.hpp"

namespace artemis {

/// Vertices incident to an edge used by exactly one face.
inline std::vector<bool> boundary_vertices(const TriangleMesh& mesh) {
  std::vector<std::uint64_t> edges;
  edges.reserve(mesh.faces.size() * 3);
  for (const Face& t : mesh.faces) {
    for (int i = 0; i < 3; ++i) {
      std::uint32_t a = t[i], b = t[(i + 1) % 3];
      if (a == b) continue;
      if (a > b) std::swap(a, b);
      edges.push_back((std::uint64_t{a} << 32) | b);
    }
  }
  std::sort(edges.begin(), edges.end());
  std::vector<bool> boundary(mesh.positions.size(), false);
  for (std::size_t i = 0; i < edges.size();) {
    std::size_t j = i;
    while (j < edges.size() && edges[j] == edges[i]) ++j;
    if (j - i == 1) {
      boundary[edges[i] >> 32] = true;
      boundary[edges[i] & 0xFFFFFFFFu] = true;
    }
    i = j;
  }
  return boundary;
}

/**
 * Unsigned discrete mean curvature per vertex, in 1/model-unit.
 *
 * Interior vertices: H = |K|/2 with K = (1/2A) sum_j (cot a_ij + cot b_ij)(p_j - p_i)
 * and A the mixed Voronoi area (Voronoi region for non-obtuse triangles,
 * area/2 or area/4 otherwise).
 *
 * Boundary vertices, where the cotangent stencil is one-sided:
 * H = 2 |mean_j <p_j - p_i, n_i>| / mean_j |p_j - p_i|^2.
 */
inline std::vector<double> mean_curvature(const TriangleMesh& mesh) {
  const std::size_t n = mesh.positions.size();
  const auto& P = mesh.positions;
  std::vector<Vec3> lap(n);
  std::vector<double> area(n, 0.0);

  for (const Face& t : mesh.faces) {
    const Vec3 e[3] = {P[t[2]] - P[t[1]], P[t[0]] - P[t[2]], P[t[1]] - P[t[0]]};  // e[i] opposite vertex i
    const double twice_area = length(cross(e[0], e[1]));
    if (!(twice_area > 0.0)) continue;
    double cot[3];
    for (int i = 0; i < 3; ++i) {
      // Angle at vertex i lies between -e[(i+1)%3] and e[(i+2)%3].
      cot[i] = -dot(e[(i + 1) % 3], e[(i + 2) % 3]) / twice_area;
    }
    for (int i = 0; i < 3; ++i) {
      const std::uint32_t a = t[(i + 1) % 3], b = t[(i + 2) % 3];
      const Vec3 d = P[b] - P[a];
      lap[a] += cot[i] * d;
      lap[b] -= cot[i] * d;
    }
    const int obtuse = cot[0] < 0.0 ? 0 : cot[1] < 0.0 ? 1 : cot[2] < 0.0 ? 2 : -1;
    const double tri_area = 0.5 * twice_area;
    for (int i = 0; i < 3; ++i) {
      if (obtuse < 0) {
        const int j = (i + 1) % 3, k = (i + 2) % 3;
        // |e[k]| = |p_i p_j|, opposite vertex k; |e[j]| = |p_i p_k|, opposite vertex j.
        area[t[i]] += (dot(e[k], e[k]) * cot[k] + dot(e[j], e[j]) * cot[j]) / 8.0;
      } else {
        area[t[i]] += obtuse == i ? tri_area / 2.0 : tri_area / 4.0;
      }
    }
  }

  const std::vector<bool> boundary = boundary_vertices(mesh);
  std::vector<double> H(n, 0.0);
  std::vector<std::vector<std::uint32_t>> adj;
  std::vector<Vec3> normals;
  bool have_boundary = std::find(boundary.begin(), boundary.end(), true) != boundary.end();
  if (have_boundary) {
    adj = vertex_adjacency(mesh);
    normals = mesh.normals ? *mesh.normals : vertex_normals(mesh);
  }
  for (std::size_t v = 0; v < n; ++v) {
    if (boundary[v]) {
      if (adj[v].empty()) continue;
      double along = 0.0, sq = 0.0;
      for (std::uint32_t j : adj[v]) {
        const Vec3 d = P[j] - P[v];
        along += dot(d, normals[v]);
        sq += dot(d, d);
      }
      if (sq > 0.0) H[v] = 2.0 * std::abs(along) / sq;
    } else if (area[v] > 0.0) {
      H[v] = length(lap[v]) / (4.0 * area[v]);
    }
  }
  return H;
}

}  // namespace artemis
