#pragma once

// Procedural meshes shared by the unit and acceptance suites.

#include <cmath>
#include <cstdint>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "artemis/mesh.hpp"

namespace artemis::testing {

inline TriangleMesh single_triangle() {
  TriangleMesh m;
  m.positions = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  m.faces = {{0, 1, 2}};
  m.name = "triangle";
  m.id = "triangle";
  return m;
}

// Unit cube [0,1]^3, outward-facing triangles.
inline TriangleMesh unit_cube() {
  TriangleMesh m;
  m.positions = {{0, 0, 0}, {1, 0, 0}, {1, 1, 0}, {0, 1, 0}, {0, 0, 1}, {1, 0, 1}, {1, 1, 1}, {0, 1, 1}};
  m.faces = {
      {0, 2, 1}, {0, 3, 2},  // z = 0
      {4, 5, 6}, {4, 6, 7},  // z = 1
      {0, 1, 5}, {0, 5, 4},  // y = 0
      {3, 7, 6}, {3, 6, 2},  // y = 1
      {0, 4, 7}, {0, 7, 3},  // x = 0
      {1, 2, 6}, {1, 6, 5},  // x = 1
  };
  m.name = "cube";
  m.id = "cube";
  return m;
}

inline const char* kCubeObj =
    "# unit cube\n"
    "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nv 0 0 1\nv 1 0 1\nv 1 1 1\nv 0 1 1\n"
    "f 1 3 2\nf 1 4 3\nf 5 6 7\nf 5 7 8\nf 1 2 6\nf 1 6 5\n"
    "f 4 8 7\nf 4 7 3\nf 1 5 8\nf 1 8 4\nf 2 3 7\nf 2 7 6\n";

inline TriangleMesh icosphere(int subdivisions, double radius = 1.0, Vec3 center = {}) {
  const double t = (1.0 + std::sqrt(5.0)) / 2.0;
  std::vector<Vec3> p = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                         {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
  for (Vec3& v : p) v = normalized(v);
  std::vector<Face> f = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11}, {1, 5, 9}, {5, 11, 4},
                         {11, 10, 2}, {10, 7, 6}, {7, 1, 8},   {3, 9, 4},  {3, 4, 2},   {3, 2, 6}, {3, 6, 8},
                         {3, 8, 9},  {4, 9, 5},  {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
  for (int s = 0; s < subdivisions; ++s) {
    std::map<std::pair<std::uint32_t, std::uint32_t>, std::uint32_t> mid;
    auto midpoint = [&](std::uint32_t a, std::uint32_t b) {
      const auto key = std::minmax(a, b);
      auto it = mid.find(key);
      if (it != mid.end()) return it->second;
      p.push_back(normalized((p[a] + p[b]) * 0.5));
      const auto idx = static_cast<std::uint32_t>(p.size() - 1);
      mid.emplace(key, idx);
      return idx;
    };
    std::vector<Face> next;
    next.reserve(f.size() * 4);
    for (const Face& tri : f) {
      const std::uint32_t a = midpoint(tri[0], tri[1]);
      const std::uint32_t b = midpoint(tri[1], tri[2]);
      const std::uint32_t c = midpoint(tri[2], tri[0]);
      next.push_back({tri[0], a, c});
      next.push_back({tri[1], b, a});
      next.push_back({tri[2], c, b});
      next.push_back({a, b, c});
    }
    f = std::move(next);
  }
  TriangleMesh m;
  for (Vec3& v : p) v = center + v * radius;
  m.positions = std::move(p);
  m.faces = std::move(f);
  m.name = "icosphere" + std::to_string(subdivisions);
  m.id = m.name;
  return m;
}

// Regular n x n grid of squares in z = 0 spanning [0,size]^2, each split
// along alternating diagonals.
inline TriangleMesh grid_plane(int n, double size = 1.0) {
  TriangleMesh m;
  for (int j = 0; j <= n; ++j) {
    for (int i = 0; i <= n; ++i) m.positions.push_back({size * i / n, size * j / n, 0.0});
  }
  auto idx = [n](int i, int j) { return static_cast<std::uint32_t>(j * (n + 1) + i); };
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < n; ++i) {
      const auto a = idx(i, j), b = idx(i + 1, j), c = idx(i + 1, j + 1), d = idx(i, j + 1);
      if ((i + j) % 2 == 0) {
        m.faces.push_back({a, b, c});
        m.faces.push_back({a, c, d});
      } else {
        m.faces.push_back({a, b, d});
        m.faces.push_back({b, c, d});
      }
    }
  }
  m.name = "grid";
  m.id = "grid" + std::to_string(n);
  return m;
}

inline bool grid_interior(int n, std::uint32_t v) {
  const int i = static_cast<int>(v) % (n + 1);
  const int j = static_cast<int>(v) / (n + 1);
  return i > 0 && i < n && j > 0 && j < n;
}

// Open cylinder around z with staggered rings (near-equilateral triangles).
inline TriangleMesh cylinder(double radius, double height, int segments, int rings) {
  TriangleMesh m;
  const double dz = height / rings;
  for (int r = 0; r <= rings; ++r) {
    const double offset = (r % 2) * 0.5;
    for (int s = 0; s < segments; ++s) {
      const double a = 2.0 * std::numbers::pi * (s + offset) / segments;
      m.positions.push_back({radius * std::cos(a), radius * std::sin(a), r * dz});
    }
  }
  auto idx = [segments](int r, int s) { return static_cast<std::uint32_t>(r * segments + (s % segments)); };
  for (int r = 0; r < rings; ++r) {
    for (int s = 0; s < segments; ++s) {
      if (r % 2 == 0) {
        m.faces.push_back({idx(r, s), idx(r, s + 1), idx(r + 1, s)});
        m.faces.push_back({idx(r, s + 1), idx(r + 1, s + 1), idx(r + 1, s)});
      } else {
        m.faces.push_back({idx(r, s), idx(r, s + 1), idx(r + 1, s + 1)});
        m.faces.push_back({idx(r, s), idx(r + 1, s + 1), idx(r + 1, s)});
      }
    }
  }
  m.name = "cylinder";
  m.id = "cylinder";
  return m;
}

// Independent random triangles inside [-1,1]^3.
inline TriangleMesh random_soup(std::size_t faces, std::uint64_t seed, double size = 0.2) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> pos(-1.0, 1.0);
  std::uniform_real_distribution<double> off(-size, size);
  TriangleMesh m;
  for (std::size_t f = 0; f < faces; ++f) {
    const Vec3 c{pos(rng), pos(rng), pos(rng)};
    const auto base = static_cast<std::uint32_t>(m.positions.size());
    for (int k = 0; k < 3; ++k) m.positions.push_back(c + Vec3{off(rng), off(rng), off(rng)});
    m.faces.push_back({base, base + 1, base + 2});
  }
  m.name = "soup";
  m.id = "soup" + std::to_string(seed);
  return m;
}

// Two coaxial square grids facing +z: the front one at z = 0 spanning
// [-1,1]^2, the back one at z = -1 spanning [-0.8,0.8]^2. A camera on the
// +z side near the axis sees only the front plane.
inline TriangleMesh two_planes(int n, std::uint32_t* front_face_count = nullptr) {
  TriangleMesh front = grid_plane(n, 2.0);
  for (Vec3& p : front.positions) p = p - Vec3{1.0, 1.0, 0.0};
  TriangleMesh back = grid_plane(n, 1.6);
  for (Vec3& p : back.positions) p = p - Vec3{0.8, 0.8, 1.0};
  TriangleMesh m = front;
  const auto offset = static_cast<std::uint32_t>(m.positions.size());
  m.positions.insert(m.positions.end(), back.positions.begin(), back.positions.end());
  for (Face f : back.faces) m.faces.push_back({f[0] + offset, f[1] + offset, f[2] + offset});
  if (front_face_count) *front_face_count = static_cast<std::uint32_t>(front.faces.size());
  m.name = "two-planes";
  m.id = "two-planes";
  return m;
}

// Unit icosphere with a smooth radial bump around +z. Returns bump vertex
// flags through `in_bump`.
inline TriangleMesh bump_sphere(int subdivisions, std::vector<bool>* in_bump, double cone = 0.25,
                                double height = 0.15) {
  TriangleMesh m = icosphere(subdivisions);
  if (in_bump) in_bump->assign(m.positions.size(), false);
  for (std::size_t i = 0; i < m.positions.size(); ++i) {
    const Vec3 d = normalized(m.positions[i]);
    const double ang = std::acos(std::clamp(d.z, -1.0, 1.0));
    if (ang < cone) {
      const double w = 0.5 * (1.0 + std::cos(std::numbers::pi * ang / cone));
      m.positions[i] = d * (1.0 + height * w);
      if (in_bump) (*in_bump)[i] = true;
    }
  }
  m.name = "bump-sphere";
  m.id = "bump-sphere";
  return m;
}

inline std::vector<std::uint32_t> all_faces(const TriangleMesh& m) {
  std::vector<std::uint32_t> out(m.faces.size());
  for (std::uint32_t i = 0; i < out.size(); ++i) out[i] = i;
  return out;
}

}  // namespace artemis::testing
