#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <unordered_map>
#include <vector>

#include "artemis/curvature.hpp"
#include "artemis/error.hpp"
#include "artemis/mesh.hpp"
#include "artemis/selection.hpp"

namespace artemis {

/// Per-vertex scalar importance map. "Hotter" (closer to 1) is more
/// important.
struct HeatMap {
  std::string mesh_id;
  std::vector<double> values;
  std::string detector;
  bool normalized = false;

  friend bool operator==(const HeatMap&, const HeatMap&) = default;
};

inline bool satisfies_normalized(const std::vector<double>& values) {
  double hi = 0.0;
  for (double v : values) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) return false;
    hi = std::max(hi, v);
  }
  return hi == 1.0 || hi == 0.0;
}

/// Min-max to [0,1]. Fields whose range is at most `constant_range` map to
/// all zeros.
inline std::vector<double> min_max_normalize(const std::vector<double>& values, double constant_range = 0.0) {
  std::vector<double> out(values.size(), 0.0);
  if (values.empty()) return out;
  const auto [lo_it, hi_it] = std::minmax_element(values.begin(), values.end());
  const double lo = *lo_it, range = *hi_it - *lo_it;
  if (!(range > constant_range)) return out;
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = std::clamp((values[i] - lo) / range, 0.0, 1.0);
  out[hi_it - values.begin()] = 1.0;
  return out;
}

inline void check_heatmap(const TriangleMesh& mesh, const HeatMap& hm) {
  if (hm.mesh_id != mesh.id) {
    throw Error(ErrorCode::MeshMismatch, "heat map belongs to mesh '" + hm.mesh_id + "', not '" + mesh.id + "'");
  }
  if (hm.values.size() != mesh.vertex_count()) {
    throw Error(ErrorCode::MeshMismatch, "heat map has " + std::to_string(hm.values.size()) + " values for " +
                                             std::to_string(mesh.vertex_count()) + " vertices");
  }
}

/// Faces whose mean vertex value is at least `threshold`.
inline SelectionSet heatmap_to_selection(const TriangleMesh& mesh, const HeatMap& hm, double threshold) {
  check_heatmap(mesh, hm);
  if (!hm.normalized || !satisfies_normalized(hm.values)) {
    throw Error(ErrorCode::InvalidArgument, "heat map is not normalized");
  }
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "threshold must lie in [0,1]");
  }
  SelectionSet out;
  out.mesh_id = mesh.id;
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const Face& t = mesh.faces[f];
    const double mean = (hm.values[t[0]] + hm.values[t[1]] + hm.values[t[2]]) / 3.0;
    if (mean >= threshold) out.faces.push_back(static_cast<std::uint32_t>(f));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Multi-scale Gaussian vertex averaging

/**
 * For each sigma s and vertex v, the weighted mean of `values` over vertices
 * x with |x - v| < 2s, weights exp(-|x - v|^2 / (2 s^2)).
 *
 * Vertices are bucketed into a hashed uniform grid whose cell edge is the
 * largest cutoff radius, then sorted by cell so each 27-cell neighborhood is
 * a handful of contiguous runs. Each unordered pair is visited once (half
 * stencil) and accumulated into both endpoints. Results are indexed
 * [sigma][vertex] in the caller's sigma order.
 */
inline std::vector<std::vector<double>> gaussian_vertex_means(const std::vector<Vec3>& positions,
                                                             const std::vector<double>& values,
                                                             const std::vector<double>& sigmas) {
  const std::size_t n = positions.size();
  const std::size_t K = sigmas.size();
  std::vector<std::vector<double>> result(K, std::vector<double>(n, 0.0));
  if (n == 0 || K == 0) return result;

  // Sigmas in descending order so the per-pair loop can stop at the first
  // scale whose cutoff the pair exceeds.
  std::vector<std::size_t> order(K);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sigmas[a] > sigmas[b]; });
  std::vector<double> inv(K);  // 1 / (2 s^2), descending-sigma order
  for (std::size_t k = 0; k < K; ++k) inv[k] = 1.0 / (2.0 * sigmas[order[k]] * sigmas[order[k]]);
  const double radius = 2.0 * sigmas[order[0]];
  const double r2 = radius * radius;

  AABB box;
  for (const Vec3& p : positions) box.expand(p);
  auto cell_of = [&](const Vec3& p) {
    const auto c = [&](double x, double lo) { return static_cast<std::int64_t>(std::floor((x - lo) / radius)); };
    return std::array<std::int64_t, 3>{c(p.x, box.min.x), c(p.y, box.min.y), c(p.z, box.min.z)};
  };
  auto pack = [](std::int64_t x, std::int64_t y, std::int64_t z) {
    return (static_cast<std::uint64_t>(x) << 42) | (static_cast<std::uint64_t>(y) << 21) | static_cast<std::uint64_t>(z);
  };
  constexpr std::int64_t kMaxCell = (std::int64_t{1} << 21) - 2;
  for (int a = 0; a < 3; ++a) {
    if ((box.max[a] - box.min[a]) / radius > static_cast<double>(kMaxCell)) {
      throw Error(ErrorCode::InvalidArgument, "smoothing scale too small for the model extent");
    }
  }

  std::vector<std::pair<std::uint64_t, std::uint32_t>> keyed(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = cell_of(positions[i]);
    keyed[i] = {pack(c[0] + 1, c[1] + 1, c[2] + 1), static_cast<std::uint32_t>(i)};
  }
  std::sort(keyed.begin(), keyed.end());

  struct Cell {
    std::uint32_t begin, end;
  };
  std::unordered_map<std::uint64_t, Cell> cells;
  std::vector<std::uint64_t> cell_keys;
  for (std::uint32_t i = 0; i < n;) {
    std::uint32_t j = i;
    while (j < n && keyed[j].first == keyed[i].first) ++j;
    cells.emplace(keyed[i].first, Cell{i, j});
    cell_keys.push_back(keyed[i].first);
    i = j;
  }

  std::vector<double> xs(n), ys(n), zs(n), hs(n);
  for (std::size_t s = 0; s < n; ++s) {
    const Vec3& p = positions[keyed[s].second];
    xs[s] = p.x;
    ys[s] = p.y;
    zs[s] = p.z;
    hs[s] = values[keyed[s].second];
  }
  // Per sorted vertex: K weight sums followed by K weighted value sums.
  std::vector<double> acc(n * 2 * K, 0.0);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t k = 0; k < K; ++k) {
      acc[s * 2 * K + k] = 1.0;
      acc[s * 2 * K + K + k] = hs[s];
    }
  }

  // Forward half of the 27-cell stencil.
  std::vector<std::array<std::int64_t, 3>> offsets;
  for (std::int64_t dx = -1; dx <= 1; ++dx)
    for (std::int64_t dy = -1; dy <= 1; ++dy)
      for (std::int64_t dz = -1; dz <= 1; ++dz)
        if (dx > 0 || (dx == 0 && (dy > 0 || (dy == 0 && dz > 0)))) offsets.push_back({dx, dy, dz});

  std::vector<double> local(2 * K);
  auto visit = [&](std::uint32_t i, std::uint32_t jb, std::uint32_t je) {
    const double xi = xs[i], yi = ys[i], zi = zs[i], hi = hs[i];
    std::fill(local.begin(), local.end(), 0.0);
    for (std::uint32_t j = jb; j < je; ++j) {
      const double dx = xs[j] - xi, dy = ys[j] - yi, dz = zs[j] - zi;
      const double d2 = dx * dx + dy * dy + dz * dz;
      if (d2 >= r2) continue;
      double* aj = &acc[std::size_t{j} * 2 * K];
      const double hj = hs[j];
      for (std::size_t k = 0; k < K; ++k) {
        const double t = d2 * inv[k];
        if (t >= 2.0) break;
        const double w = std::exp(-t);
        local[k] += w;
        local[K + k] += w * hj;
        aj[k] += w;
        aj[K + k] += w * hi;
      }
    }
    double* ai = &acc[std::size_t{i} * 2 * K];
    for (std::size_t k = 0; k < 2 * K; ++k) ai[k] += local[k];
  };

  for (std::uint64_t key : cell_keys) {
    const Cell& c = cells.at(key);
    const std::int64_t cx = static_cast<std::int64_t>(key >> 42), cy = static_cast<std::int64_t>((key >> 21) & 0x1FFFFF),
                       cz = static_cast<std::int64_t>(key & 0x1FFFFF);
    for (std::uint32_t i = c.begin; i < c.end; ++i) visit(i, i + 1, c.end);
    for (const auto& o : offsets) {
      const auto it = cells.find(pack(cx + o[0], cy + o[1], cz + o[2]));
      if (it == cells.end()) continue;
      for (std::uint32_t i = c.begin; i < c.end; ++i) visit(i, it->second.begin, it->second.end);
    }
  }

  for (std::size_t s = 0; s < n; ++s) {
    const double* a = &acc[s * 2 * K];
    for (std::size_t k = 0; k < K; ++k) result[order[k]][keyed[s].second] = a[K + k] / a[k];
  }
  return result;
}

// ---------------------------------------------------------------------------
// Reference detectors

inline constexpr double kDefaultScaleUnit = 0.003;

/**
 * Length that saliency scales are expressed against: the diameter of the
 * ball around the vertex centroid that encloses every referenced vertex.
 * Equals the bounding-box diagonal for box-like models, and unlike the
 * axis-aligned diagonal it does not change when the model is rotated.
 */
inline double scale_reference_length(const TriangleMesh& mesh) {
  std::vector<bool> used(mesh.vertex_count(), false);
  for (const Face& t : mesh.faces) used[t[0]] = used[t[1]] = used[t[2]] = true;
  Vec3 c{};
  std::size_t count = 0;
  for (std::size_t v = 0; v < used.size(); ++v) {
    if (!used[v]) continue;
    c += mesh.positions[v];
    ++count;
  }
  if (count == 0) return 0.0;
  c = c / static_cast<double>(count);
  double r2 = 0.0;
  for (std::size_t v = 0; v < used.size(); ++v) {
    if (used[v]) r2 = std::max(r2, dot(mesh.positions[v] - c, mesh.positions[v] - c));
  }
  return 2.0 * std::sqrt(r2);
}

inline std::vector<double> default_saliency_scales() {
  return {2 * kDefaultScaleUnit, 3 * kDefaultScaleUnit, 4 * kDefaultScaleUnit, 5 * kDefaultScaleUnit,
          6 * kDefaultScaleUnit};
}

/**
 * Center-surround mesh saliency on mean curvature. `scales` are fractions
 * of scale_reference_length; each contributes |G(H,s) - G(H,2s)|, the
 * contributions are summed and min-max normalized.
 */
inline HeatMap saliency_map(const TriangleMesh& mesh, const std::vector<double>& scales = default_saliency_scales()) {
  validate(mesh);
  if (scales.empty()) throw Error(ErrorCode::InvalidArgument, "saliency needs at least one scale");
  for (double s : scales) {
    if (!(s > 0.0) || !std::isfinite(s)) throw Error(ErrorCode::InvalidArgument, "saliency scales must be positive");
  }
  if (!(bounding_box(mesh).diagonal() > 0.0)) throw Error(ErrorCode::DegenerateMesh, "bounding box has zero diagonal");
  const double diag = scale_reference_length(mesh);

  const std::vector<double> H = mean_curvature(mesh);

  // Distinct absolute sigmas, both s and 2s for each scale.
  std::vector<double> sigmas;
  for (double s : scales) {
    sigmas.push_back(s * diag);
    sigmas.push_back(2.0 * s * diag);
  }
  std::sort(sigmas.begin(), sigmas.end());
  sigmas.erase(std::unique(sigmas.begin(), sigmas.end(), [](double a, double b) { return std::abs(a - b) <= 1e-12 * b; }),
               sigmas.end());
  auto index_of = [&](double s) {
    std::size_t best = 0;
    for (std::size_t k = 1; k < sigmas.size(); ++k) {
      if (std::abs(sigmas[k] - s) < std::abs(sigmas[best] - s)) best = k;
    }
    return best;
  };

  // Only vertices used by faces take part; isolated vertices stay cold.
  std::vector<bool> used(mesh.vertex_count(), false);
  for (const Face& t : mesh.faces) used[t[0]] = used[t[1]] = used[t[2]] = true;
  std::vector<Vec3> pos;
  std::vector<double> vals;
  std::vector<std::uint32_t> ids;
  for (std::uint32_t v = 0; v < mesh.vertex_count(); ++v) {
    if (!used[v]) continue;
    pos.push_back(mesh.positions[v]);
    vals.push_back(H[v]);
    ids.push_back(v);
  }
  const auto G = gaussian_vertex_means(pos, vals, sigmas);

  std::vector<double> raw(mesh.vertex_count(), 0.0);
  for (double s : scales) {
    const auto& fine = G[index_of(s * diag)];
    const auto& coarse = G[index_of(2.0 * s * diag)];
    for (std::size_t i = 0; i < ids.size(); ++i) raw[ids[i]] += std::abs(fine[i] - coarse[i]);
  }
  // raw is in 1/length; the guard is taken in diagonal-relative units.
  HeatMap hm;
  hm.mesh_id = mesh.id;
  hm.detector = "saliency";
  hm.values = min_max_normalize(raw, 1e-9 / diag);
  hm.normalized = true;
  return hm;
}

namespace detail {

inline double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const std::size_t mid = v.size() / 2;
  std::nth_element(v.begin(), v.begin() + mid, v.end());
  const double upper = v[mid];
  if (v.size() % 2 == 1) return upper;
  const double lower = *std::max_element(v.begin(), v.begin() + mid);
  return 0.5 * (lower + upper);
}

}  // namespace detail

inline constexpr double kRoughnessConstantRange = 1e-9;

/**
 * Surface-defect susceptibility: roughness r = 1 - mean cos(n_v, n_j) over
 * one-ring neighbors, standardized as z = (r - median) / (1.4826 MAD),
 * clamped at z <= 3, then min-max normalized.
 */
inline HeatMap defect_map(const TriangleMesh& mesh) {
  validate(mesh);
  const std::vector<Vec3> normals = mesh.normals ? *mesh.normals : vertex_normals(mesh);
  const auto adj = vertex_adjacency(mesh);
  const std::size_t n = mesh.vertex_count();

  std::vector<double> rough(n, 0.0);
  std::vector<double> sample;
  sample.reserve(n);
  for (std::size_t v = 0; v < n; ++v) {
    if (adj[v].empty()) continue;
    double cos_sum = 0.0;
    for (std::uint32_t j : adj[v]) cos_sum += std::clamp(dot(normals[v], normals[j]), -1.0, 1.0);
    rough[v] = 1.0 - cos_sum / static_cast<double>(adj[v].size());
    sample.push_back(rough[v]);
  }

  HeatMap hm;
  hm.mesh_id = mesh.id;
  hm.detector = "defect";
  hm.normalized = true;
  hm.values.assign(n, 0.0);

  const double med = detail::median_of(sample);
  std::vector<double> dev(sample.size());
  for (std::size_t i = 0; i < sample.size(); ++i) dev[i] = std::abs(sample[i] - med);
  double scale = 1.4826 * detail::median_of(dev);
  if (!(scale > kRoughnessConstantRange)) {
    const double mad_mean = dev.empty() ? 0.0 : std::accumulate(dev.begin(), dev.end(), 0.0) / static_cast<double>(dev.size());
    scale = 1.2533 * mad_mean;
  }
  if (!(scale > kRoughnessConstantRange)) return hm;

  std::vector<double> z(n, 0.0);
  double lowest = 0.0;
  for (std::size_t v = 0; v < n; ++v) {
    if (adj[v].empty()) continue;
    z[v] = std::min((rough[v] - med) / scale, 3.0);
    lowest = std::min(lowest, z[v]);
  }
  // Isolated vertices sit at the floor of the standardized field.
  for (std::size_t v = 0; v < n; ++v) {
    if (adj[v].empty()) z[v] = lowest;
  }
  hm.values = min_max_normalize(z, kRoughnessConstantRange);
  return hm;
}

}  // namespace artemis
