#pragma once

#include "lightsq/grid.hpp"
#include "lightsq/hull.hpp"

#include <map>
#include <set>

namespace lightsq {

/// Axis-aligned cut. A plane at index i on axis a separates voxels with
/// coordinate < i from those with coordinate >= i.
struct SlicePlane {
  int axis = 0;
  int index = 0;
  double score = 0.0;

  bool operator==(const SlicePlane&) const = default;
};

struct DecompConfig {
  double alpha = 0.7;
  int k = 6;
  /// Minimum world distance between two planes on the same axis.
  double min_spacing = 0.1;
  double beta = 0.4;
  double gamma = 0.6;
  double tau_m = 0.7;
  /// Curvature normalization; 0 selects 1 / voxel_size.
  double h_max = 0.0;
  /// Take the top k planes over all three axes instead of k per axis.
  bool planes_global = false;

  void validate() const {
    auto unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!unit(alpha) || !unit(beta) || !unit(gamma)) throw Error(ErrorCode::InvalidArgument, "decomp weights must lie in [0, 1]");
    if (k < 1) throw Error(ErrorCode::InvalidArgument, "decomp.k must be >= 1");
    if (!(tau_m > 0.0 && tau_m <= 1.0)) throw Error(ErrorCode::InvalidArgument, "decomp.tau_m must lie in (0, 1]");
    if (min_spacing < 0.0 || h_max < 0.0) throw Error(ErrorCode::InvalidArgument, "decomp spacing and h_max must be >= 0");
  }
};

/// Face-adjacent voxel pair straddling the boundary between two partitions:
/// first belongs to the partition holding the record.
using InterfacePair = std::pair<std::size_t, std::size_t>;

struct Partition {
  int id = 0;
  /// Sorted grid indices.
  std::vector<std::size_t> voxels;
  /// Hull of the member voxel cubes in lattice units.
  LatticeHull hull;
  std::map<int, std::vector<InterfacePair>> neighbors;
};

namespace detail {

inline std::size_t slice_index(const TsdfGrid& g, int axis, int s, int u, int v) {
  switch (axis) {
    case 0: return g.index(s, u, v);
    case 1: return g.index(u, s, v);
    default: return g.index(u, v, s);
  }
}

inline std::size_t axis_stride(const TsdfGrid& g, int axis) {
  const auto n = static_cast<std::size_t>(g.resolution);
  return axis == 0 ? 1 : axis == 1 ? n : n * n;
}

}  // namespace detail

/// A_i: interior voxel count on every slice orthogonal to axis.
inline std::vector<double> slice_area_profile(const TsdfGrid& grid, int axis) {
  const int n = grid.resolution;
  std::vector<double> area(n, 0.0);
  for (std::size_t idx = 0; idx < grid.size(); ++idx)
    if (grid.interior(idx)) area[grid.coords(idx)[axis]] += 1.0;
  return area;
}

/// M_i with a window of 3; slices whose window leaves the array get 0.
inline double second_order_difference(std::span<const double> area, int i) {
  const int n = static_cast<int>(area.size());
  if (i < 3 || i >= n - 3) return 0.0;
  double m = 0.0;
  for (int j = 1; j <= 3; ++j) m += area[i - j] + area[i + j];
  return m - 2.0 * (area[i - 1] + area[i] + area[i + 1]);
}

/// Number of 4-connected interior regions on slice s.
inline int slice_components(const TsdfGrid& grid, int axis, int s) {
  const int n = grid.resolution;
  std::vector<char> seen(static_cast<std::size_t>(n) * n, 0);
  std::vector<std::pair<int, int>> stack;
  int count = 0;
  for (int v = 0; v < n; ++v)
    for (int u = 0; u < n; ++u) {
      if (seen[u + n * v] || !grid.interior(detail::slice_index(grid, axis, s, u, v))) continue;
      ++count;
      seen[u + n * v] = 1;
      stack.assign(1, {u, v});
      while (!stack.empty()) {
        const auto [cu, cv] = stack.back();
        stack.pop_back();
        const int nu[4] = {cu + 1, cu - 1, cu, cu};
        const int nv[4] = {cv, cv, cv + 1, cv - 1};
        for (int e = 0; e < 4; ++e) {
          const int a = nu[e], b = nv[e];
          if (a < 0 || b < 0 || a >= n || b >= n || seen[a + n * b]) continue;
          if (!grid.interior(detail::slice_index(grid, axis, s, a, b))) continue;
          seen[a + n * b] = 1;
          stack.emplace_back(a, b);
        }
      }
    }
  return count;
}

/// Delta N_i = |N_i - N_{i-1}|, with Delta N_0 = 0.
inline double component_variation(const TsdfGrid& grid, int axis, int i) {
  if (i <= 0) return 0.0;
  return std::abs(slice_components(grid, axis, i) - slice_components(grid, axis, i - 1));
}

inline std::vector<double> component_variation(const TsdfGrid& grid, int axis) {
  const int n = grid.resolution;
  std::vector<int> count(n);
  for (int s = 0; s < n; ++s) count[s] = slice_components(grid, axis, s);
  std::vector<double> dn(n, 0.0);
  for (int s = 1; s < n; ++s) dn[s] = std::abs(count[s] - count[s - 1]);
  return dn;
}

namespace detail {

inline void normalize_max(std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  for (double& x : v) x = m > 0.0 ? x / m : 0.0;
}

}  // namespace detail

/// Saliency S_i per slice. Only positive M_i (area dips, where the profile is
/// locally convex) count as salient, so the combined score lies in [0, 1].
inline std::vector<double> saliency_scores(const TsdfGrid& grid, int axis, double alpha) {
  const auto area = slice_area_profile(grid, axis);
  std::vector<double> m(area.size());
  for (std::size_t i = 0; i < area.size(); ++i) m[i] = std::max(0.0, second_order_difference(area, static_cast<int>(i)));
  auto dn = component_variation(grid, axis);
  detail::normalize_max(m);
  detail::normalize_max(dn);
  std::vector<double> s(area.size());
  for (std::size_t i = 0; i < s.size(); ++i) s[i] = alpha * m[i] + (1.0 - alpha) * dn[i];
  return s;
}

/// Greedy top-k slices by saliency, highest first (ties: lower axis, then
/// lower index), skipping slices closer than min_spacing to an earlier pick on
/// the same axis. Zero-score slices are never picked. Output is sorted by
/// (axis, index).
inline std::vector<SlicePlane> select_planes(const TsdfGrid& grid, const DecompConfig& cfg) {
  cfg.validate();
  const int n = grid.resolution;
  // Smallest index gap whose world distance reaches min_spacing.
  const int gap = std::max(1, static_cast<int>(std::ceil(cfg.min_spacing / grid.voxel_size - 1e-9)));
  std::vector<SlicePlane> all;
  for (int axis = 0; axis < 3; ++axis) {
    const auto s = saliency_scores(grid, axis, cfg.alpha);
    for (int i = 0; i < n; ++i)
      if (s[i] > 0.0) all.push_back({axis, i, s[i]});
  }
  std::stable_sort(all.begin(), all.end(), [](const SlicePlane& a, const SlicePlane& b) { return a.score > b.score; });
  std::vector<SlicePlane> picked;
  int per_axis[3] = {0, 0, 0};
  for (const auto& p : all) {
    if (cfg.planes_global ? static_cast<int>(picked.size()) >= cfg.k : per_axis[p.axis] >= cfg.k) continue;
    const bool crowded = std::any_of(picked.begin(), picked.end(), [&](const SlicePlane& q) {
      return q.axis == p.axis && std::abs(q.index - p.index) < gap;
    });
    if (crowded) continue;
    picked.push_back(p);
    ++per_axis[p.axis];
  }
  std::sort(picked.begin(), picked.end(),
            [](const SlicePlane& a, const SlicePlane& b) { return std::tie(a.axis, a.index) < std::tie(b.axis, b.index); });
  return picked;
}

/// Hull of a voxel index set, in lattice units.
inline LatticeHull partition_hull(const TsdfGrid& grid, std::span<const std::size_t> voxels) {
  std::vector<std::array<int, 3>> cells;
  cells.reserve(voxels.size());
  for (std::size_t idx : voxels) cells.push_back(grid.coords(idx));
  return voxel_hull(cells);
}

namespace detail {

inline void link_partitions(const TsdfGrid& grid, std::vector<Partition>& parts, const std::vector<std::int32_t>& owner) {
  std::map<int, std::size_t> slot;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    parts[p].neighbors.clear();
    slot[parts[p].id] = p;
  }
  const int n = grid.resolution;
  for (auto& part : parts)
    for (std::size_t idx : part.voxels) {
      const auto c = grid.coords(idx);
      for (int axis = 0; axis < 3; ++axis)
        for (int dir : {-1, 1}) {
          const int nc = c[axis] + dir;
          if (nc < 0 || nc >= n) continue;
          const std::size_t nb = dir > 0 ? idx + axis_stride(grid, axis) : idx - axis_stride(grid, axis);
          const std::int32_t other = owner[nb];
          if (other < 0 || other == part.id) continue;
          part.neighbors[other].emplace_back(idx, nb);
        }
    }
}

}  // namespace detail

/// Interior voxels binned into the boxes cut out by the planes, each box split
/// further into 6-connected pieces. Partition ids follow the lowest member
/// voxel index. Voxels flagged in exclude are left out.
inline std::vector<Partition> split(const TsdfGrid& grid, const std::vector<SlicePlane>& planes,
                                    const std::vector<bool>* exclude = nullptr) {
  const int n = grid.resolution;
  std::array<std::vector<int>, 3> cell_of;
  for (int axis = 0; axis < 3; ++axis) {
    cell_of[axis].assign(n, 0);
    for (const auto& p : planes) {
      if (p.axis != axis) continue;
      for (int s = std::max(0, p.index); s < n; ++s) ++cell_of[axis][s];
    }
  }
  auto same_cell = [&](const std::array<int, 3>& a, const std::array<int, 3>& b) {
    return cell_of[0][a[0]] == cell_of[0][b[0]] && cell_of[1][a[1]] == cell_of[1][b[1]] && cell_of[2][a[2]] == cell_of[2][b[2]];
  };
  std::vector<std::int32_t> owner(grid.size(), -1);
  std::vector<Partition> parts;
  std::vector<std::size_t> stack;
  for (std::size_t seed = 0; seed < grid.size(); ++seed) {
    if (owner[seed] >= 0 || !grid.interior(seed) || (exclude && (*exclude)[seed])) continue;
    Partition part;
    part.id = static_cast<int>(parts.size());
    owner[seed] = part.id;
    stack.assign(1, seed);
    while (!stack.empty()) {
      const std::size_t cur = stack.back();
      stack.pop_back();
      part.voxels.push_back(cur);
      const auto c = grid.coords(cur);
      for (int axis = 0; axis < 3; ++axis)
        for (int dir : {-1, 1}) {
          auto nc = c;
          nc[axis] += dir;
          if (nc[axis] < 0 || nc[axis] >= n) continue;
          const std::size_t nb = dir > 0 ? cur + detail::axis_stride(grid, axis) : cur - detail::axis_stride(grid, axis);
          if (owner[nb] >= 0 || !grid.interior(nb) || (exclude && (*exclude)[nb]) || !same_cell(c, nc)) continue;
          owner[nb] = part.id;
          stack.push_back(nb);
        }
    }
    std::sort(part.voxels.begin(), part.voxels.end());
    parts.push_back(std::move(part));
  }
  parallel_chunks(parts.size(), 1, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t p = b; p < e; ++p) parts[p].hull = partition_hull(grid, parts[p].voxels);
  });
  detail::link_partitions(grid, parts, owner);
  return parts;
}

namespace detail {

inline double mean_curvature_at(const TsdfGrid& g, std::size_t idx) {
  const int n = g.resolution;
  const auto c = g.coords(idx);
  for (int a = 0; a < 3; ++a)
    if (c[a] < 1 || c[a] > n - 2) return 0.0;
  auto at = [&](int di, int dj, int dk) { return static_cast<double>(g.values[g.index(c[0] + di, c[1] + dj, c[2] + dk)]); };
  const double h = g.voxel_size;
  const double f0 = at(0, 0, 0);
  const double fx = (at(1, 0, 0) - at(-1, 0, 0)) / (2 * h);
  const double fy = (at(0, 1, 0) - at(0, -1, 0)) / (2 * h);
  const double fz = (at(0, 0, 1) - at(0, 0, -1)) / (2 * h);
  const double g2 = fx * fx + fy * fy + fz * fz;
  // Flat clamp plateau: no level set passes here.
  if (g2 < 1e-6) return 0.0;
  const double fxx = (at(1, 0, 0) - 2 * f0 + at(-1, 0, 0)) / (h * h);
  const double fyy = (at(0, 1, 0) - 2 * f0 + at(0, -1, 0)) / (h * h);
  const double fzz = (at(0, 0, 1) - 2 * f0 + at(0, 0, -1)) / (h * h);
  const double fxy = (at(1, 1, 0) - at(1, -1, 0) - at(-1, 1, 0) + at(-1, -1, 0)) / (4 * h * h);
  const double fxz = (at(1, 0, 1) - at(1, 0, -1) - at(-1, 0, 1) + at(-1, 0, -1)) / (4 * h * h);
  const double fyz = (at(0, 1, 1) - at(0, 1, -1) - at(0, -1, 1) + at(0, -1, -1)) / (4 * h * h);
  const double num = fx * fx * (fyy + fzz) + fy * fy * (fxx + fzz) + fz * fz * (fxx + fyy) - 2 * fx * fy * fxy -
                     2 * fx * fz * fxz - 2 * fy * fz * fyz;
  return 0.5 * num / (g2 * std::sqrt(g2));
}

}  // namespace detail

/// Mean curvature 1/2 div(grad phi / |grad phi|) of the grid by central
/// differences; 0 on the boundary layer and where the gradient vanishes.
inline double mean_curvature(const TsdfGrid& grid, std::size_t idx) { return detail::mean_curvature_at(grid, idx); }

/// S_curv over the shared interface, with each side's curvature taken at its
/// own voxel of every straddling pair. Clamped to [0, 1].
inline double curvature_continuity(const TsdfGrid& grid, const Partition& p1, const Partition& p2, const DecompConfig& cfg = {}) {
  const auto it = p1.neighbors.find(p2.id);
  if (it == p1.neighbors.end() || it->second.empty()) throw Error(ErrorCode::NotAdjacent, "partitions share no interface");
  const double h_max = cfg.h_max > 0.0 ? cfg.h_max : 1.0 / grid.voxel_size;
  double sum = 0.0;
  for (const auto& [a, b] : it->second)
    sum += std::abs(detail::mean_curvature_at(grid, a) - detail::mean_curvature_at(grid, b)) / h_max;
  return std::clamp(1.0 - sum / static_cast<double>(it->second.size()), 0.0, 1.0);
}

/// S_vol = (|C1| + |C2|) / Vol(CH(C1 u C2)) with the hull taken over voxel
/// cubes, clamped to 1.
inline double volumetric_iou(const Partition& p1, const Partition& p2) {
  std::vector<LatticePoint> pts = p1.hull.vertices;
  pts.insert(pts.end(), p2.hull.vertices.begin(), p2.hull.vertices.end());
  const double both = static_cast<double>(p1.voxels.size() + p2.voxels.size());
  const double hull = lattice_hull(std::move(pts)).volume();
  if (hull <= 0.0) return 1.0;
  return std::min(1.0, both / hull);
}

inline double merge_score(const TsdfGrid& grid, const Partition& p1, const Partition& p2, const DecompConfig& cfg) {
  return cfg.beta * curvature_continuity(grid, p1, p2, cfg) + cfg.gamma * volumetric_iou(p1, p2);
}

/// Merges adjacent pairs while the best score exceeds tau_m. The best pair goes
/// first, ties broken by the lower id pair; the merged partition keeps the
/// lower id. Output is sorted by id.
inline std::vector<Partition> adaptive_merge(std::vector<Partition> parts, const TsdfGrid& grid, const DecompConfig& cfg) {
  cfg.validate();
  std::map<int, Partition> live;
  for (auto& p : parts) live.emplace(p.id, std::move(p));
  std::map<std::pair<int, int>, double> score;
  auto rescore = [&](int id) {
    const Partition& a = live.at(id);
    for (const auto& [other, pairs] : a.neighbors) {
      const int lo = std::min(id, other), hi = std::max(id, other);
      score[{lo, hi}] = merge_score(grid, live.at(lo), live.at(hi), cfg);
    }
  };
  for (const auto& [id, p] : live)
    for (const auto& [other, pairs] : p.neighbors)
      if (id < other) score[{id, other}] = merge_score(grid, p, live.at(other), cfg);

  for (;;) {
    auto best = score.end();
    for (auto it = score.begin(); it != score.end(); ++it)
      if (it->second > cfg.tau_m && (best == score.end() || it->second > best->second)) best = it;
    if (best == score.end()) break;
    const auto [keep, gone] = best->first;
    Partition& a = live.at(keep);
    Partition b = std::move(live.at(gone));
    live.erase(gone);
    for (auto it = score.begin(); it != score.end();)
      it = (it->first.first == keep || it->first.second == keep || it->first.first == gone || it->first.second == gone)
               ? score.erase(it)
               : std::next(it);

    std::vector<std::size_t> merged;
    merged.reserve(a.voxels.size() + b.voxels.size());
    std::merge(a.voxels.begin(), a.voxels.end(), b.voxels.begin(), b.voxels.end(), std::back_inserter(merged));
    a.voxels = std::move(merged);
    std::vector<LatticePoint> pts = a.hull.vertices;
    pts.insert(pts.end(), b.hull.vertices.begin(), b.hull.vertices.end());
    a.hull = lattice_hull(std::move(pts));
    a.neighbors.erase(gone);
    for (auto& [other, pairs] : b.neighbors) {
      if (other == keep) continue;
      auto& dst = a.neighbors[other];
      dst.insert(dst.end(), pairs.begin(), pairs.end());
      auto& back = live.at(other).neighbors;
      auto& moved = back[gone];
      auto& into = back[keep];
      into.insert(into.end(), moved.begin(), moved.end());
      back.erase(gone);
    }
    rescore(keep);
  }
  std::vector<Partition> out;
  out.reserve(live.size());
  for (auto& [id, p] : live) out.push_back(std::move(p));
  return out;
}

/// Plane selection, splitting and merging in one call.
inline std::vector<Partition> decompose(const TsdfGrid& grid, const DecompConfig& cfg, const std::vector<bool>* exclude = nullptr) {
  return adaptive_merge(split(grid, select_planes(grid, cfg), exclude), grid, cfg);
}

/// Per-voxel labels: 0 outside every partition, otherwise position + 1.
inline std::vector<std::uint16_t> partition_labels(const TsdfGrid& grid, const std::vector<Partition>& parts) {
  if (parts.size() >= 65535) throw Error(ErrorCode::InvalidArgument, "too many partitions for u16 labels");
  std::vector<std::uint16_t> labels(grid.size(), 0);
  for (std::size_t p = 0; p < parts.size(); ++p)
    for (std::size_t idx : parts[p].voxels) labels[idx] = static_cast<std::uint16_t>(p + 1);
  return labels;
}

}  // namespace lightsq
