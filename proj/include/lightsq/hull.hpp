#pragma once

#include "lightsq/core.hpp"

#include <array>
#include <cstdint>
#include <numeric>
#include <unordered_map>
#include <vector>

namespace lightsq {

/// Integer lattice point (voxel corner coordinates).
using LatticePoint = std::array<std::int64_t, 3>;

struct LatticeHull {
  std::vector<LatticePoint> vertices;
  /// Outward-oriented triangles indexing into vertices.
  std::vector<std::array<int, 3>> triangles;
  /// Six times the enclosed volume, exact.
  std::int64_t volume6 = 0;

  double volume() const { return static_cast<double>(volume6) / 6.0; }
};

namespace detail {

inline std::int64_t orient3d(const LatticePoint& a, const LatticePoint& b, const LatticePoint& c, const LatticePoint& d) {
  const std::int64_t bx = b[0] - a[0], by = b[1] - a[1], bz = b[2] - a[2];
  const std::int64_t cx = c[0] - a[0], cy = c[1] - a[1], cz = c[2] - a[2];
  const std::int64_t dx = d[0] - a[0], dy = d[1] - a[1], dz = d[2] - a[2];
  return bx * (cy * dz - cz * dy) - by * (cx * dz - cz * dx) + bz * (cx * dy - cy * dx);
}

inline std::uint64_t edge_key(int a, int b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

}  // namespace detail

/// Quickhull on integer points with exact orientation tests. Coordinates must
/// stay below ~2^20 in magnitude so the determinants fit in 64 bits. Returns an
/// empty hull (volume 0) when the points are coplanar.
inline LatticeHull lattice_hull(std::vector<LatticePoint> pts) {
  std::sort(pts.begin(), pts.end());
  pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
  LatticeHull hull;
  const int n = static_cast<int>(pts.size());
  if (n < 4) return hull;

  // Initial simplex: extreme x pair, farthest from their line, farthest from that plane.
  int i0 = 0, i1 = n - 1;
  auto cross_len2 = [&](int k) {
    const auto& a = pts[i0];
    const auto& b = pts[i1];
    const auto& c = pts[k];
    const std::int64_t ux = b[0] - a[0], uy = b[1] - a[1], uz = b[2] - a[2];
    const std::int64_t vx = c[0] - a[0], vy = c[1] - a[1], vz = c[2] - a[2];
    const std::int64_t cx = uy * vz - uz * vy, cy = uz * vx - ux * vz, cz = ux * vy - uy * vx;
    return cx * cx + cy * cy + cz * cz;
  };
  int i2 = -1;
  std::int64_t best = 0;
  for (int k = 0; k < n; ++k)
    if (const auto v = cross_len2(k); v > best) best = v, i2 = k;
  if (i2 < 0) return hull;
  int i3 = -1;
  best = 0;
  for (int k = 0; k < n; ++k)
    if (const auto v = std::abs(detail::orient3d(pts[i0], pts[i1], pts[i2], pts[k])); v > best) best = v, i3 = k;
  if (i3 < 0) return hull;
  if (detail::orient3d(pts[i0], pts[i1], pts[i2], pts[i3]) > 0) std::swap(i1, i2);

  struct Face {
    std::array<int, 3> v;
    std::vector<int> outside;
    bool alive = true;
  };
  std::vector<Face> faces;
  std::unordered_map<std::uint64_t, int> edge_face;
  auto add_face = [&](int a, int b, int c) {
    const int id = static_cast<int>(faces.size());
    faces.push_back({{a, b, c}, {}, true});
    edge_face[detail::edge_key(a, b)] = id;
    edge_face[detail::edge_key(b, c)] = id;
    edge_face[detail::edge_key(c, a)] = id;
    return id;
  };
  auto above = [&](const Face& f, int p) { return detail::orient3d(pts[f.v[0]], pts[f.v[1]], pts[f.v[2]], pts[p]); };

  // With orient(i0,i1,i2,i3) < 0, (i0,i1,i2) faces away from i3.
  const int base[4] = {add_face(i0, i1, i2), add_face(i0, i3, i1), add_face(i1, i3, i2), add_face(i2, i3, i0)};
  for (int p = 0; p < n; ++p) {
    if (p == i0 || p == i1 || p == i2 || p == i3) continue;
    for (int f : base)
      if (above(faces[f], p) > 0) {
        faces[f].outside.push_back(p);
        break;
      }
  }

  std::vector<int> stack(base, base + 4);
  std::vector<int> visible;
  std::vector<std::pair<int, int>> horizon;
  std::vector<int> visit_mark;
  int epoch = 0;
  while (!stack.empty()) {
    const int fid = stack.back();
    stack.pop_back();
    if (!faces[fid].alive || faces[fid].outside.empty()) continue;

    int eye = faces[fid].outside.front();
    std::int64_t far = above(faces[fid], eye);
    for (int p : faces[fid].outside)
      if (const auto d = above(faces[fid], p); d > far) far = d, eye = p;

    // Visible region by flood fill; the horizon keeps the visible faces' edge order.
    ++epoch;
    visit_mark.resize(faces.size(), 0);
    visible.clear();
    horizon.clear();
    std::vector<int> todo{fid};
    visit_mark[fid] = epoch;
    while (!todo.empty()) {
      const int f = todo.back();
      todo.pop_back();
      visible.push_back(f);
      for (int e = 0; e < 3; ++e) {
        const int a = faces[f].v[e], b = faces[f].v[(e + 1) % 3];
        const int g = edge_face.at(detail::edge_key(b, a));
        if (visit_mark[g] == epoch) continue;
        if (above(faces[g], eye) > 0) {
          visit_mark[g] = epoch;
          todo.push_back(g);
        } else {
          horizon.emplace_back(a, b);
        }
      }
    }
    std::vector<int> orphans;
    for (int f : visible) {
      faces[f].alive = false;
      for (int p : faces[f].outside)
        if (p != eye) orphans.push_back(p);
      faces[f].outside.clear();
      faces[f].outside.shrink_to_fit();
    }
    for (int f : visible)
      for (int e = 0; e < 3; ++e) {
        const auto key = detail::edge_key(faces[f].v[e], faces[f].v[(e + 1) % 3]);
        if (auto it = edge_face.find(key); it != edge_face.end() && it->second == f) edge_face.erase(it);
      }
    std::vector<int> fresh;
    fresh.reserve(horizon.size());
    for (const auto& [a, b] : horizon) fresh.push_back(add_face(a, b, eye));
    visit_mark.resize(faces.size(), 0);
    std::sort(orphans.begin(), orphans.end());
    for (int p : orphans)
      for (int f : fresh)
        if (above(faces[f], p) > 0) {
          faces[f].outside.push_back(p);
          break;
        }
    for (int f : fresh) stack.push_back(f);
  }

  std::vector<int> remap(n, -1);
  for (const auto& f : faces) {
    if (!f.alive) continue;
    std::array<int, 3> t{};
    for (int e = 0; e < 3; ++e) {
      int& r = remap[f.v[e]];
      if (r < 0) {
        r = static_cast<int>(hull.vertices.size());
        hull.vertices.push_back(pts[f.v[e]]);
      }
      t[e] = r;
    }
    hull.triangles.push_back(t);
    const auto& a = pts[f.v[0]];
    const auto& b = pts[f.v[1]];
    const auto& c = pts[f.v[2]];
    hull.volume6 += a[0] * (b[1] * c[2] - b[2] * c[1]) - a[1] * (b[0] * c[2] - b[2] * c[0]) +
                    a[2] * (b[0] * c[1] - b[1] * c[0]);
  }
  return hull;
}

/// Hull of the union of unit voxel cubes. Only corners that are extreme along
/// their x row and then their y row can be hull vertices, so the candidate set
/// is pruned before running quickhull.
inline LatticeHull voxel_hull(const std::vector<std::array<int, 3>>& voxels) {
  if (voxels.empty()) return {};
  std::unordered_map<std::uint64_t, std::pair<std::int64_t, std::int64_t>> by_yz;
  auto key2 = [](std::int64_t a, std::int64_t b) {
    return (static_cast<std::uint64_t>(a + (1 << 20)) << 32) | static_cast<std::uint64_t>(b + (1 << 20));
  };
  for (const auto& v : voxels)
    for (int dy = 0; dy < 2; ++dy)
      for (int dz = 0; dz < 2; ++dz) {
        const auto k = key2(v[1] + dy, v[2] + dz);
        auto [it, fresh] = by_yz.try_emplace(k, v[0], v[0] + 1);
        if (!fresh) {
          it->second.first = std::min<std::int64_t>(it->second.first, v[0]);
          it->second.second = std::max<std::int64_t>(it->second.second, v[0] + 1);
        }
      }
  std::vector<LatticePoint> stage;
  stage.reserve(2 * by_yz.size());
  for (const auto& [k, range] : by_yz) {
    const std::int64_t y = static_cast<std::int64_t>(k >> 32) - (1 << 20);
    const std::int64_t z = static_cast<std::int64_t>(k & 0xffffffffu) - (1 << 20);
    stage.push_back({range.first, y, z});
    stage.push_back({range.second, y, z});
  }
  std::unordered_map<std::uint64_t, std::pair<std::int64_t, std::int64_t>> by_xz;
  for (const auto& p : stage) {
    auto [it, fresh] = by_xz.try_emplace(key2(p[0], p[2]), p[1], p[1]);
    if (!fresh) {
      it->second.first = std::min(it->second.first, p[1]);
      it->second.second = std::max(it->second.second, p[1]);
    }
  }
  std::vector<LatticePoint> pts;
  pts.reserve(2 * by_xz.size());
  for (const auto& [k, range] : by_xz) {
    const std::int64_t x = static_cast<std::int64_t>(k >> 32) - (1 << 20);
    const std::int64_t z = static_cast<std::int64_t>(k & 0xffffffffu) - (1 << 20);
    pts.push_back({x, range.first, z});
    if (range.second != range.first) pts.push_back({x, range.second, z});
  }
  return lattice_hull(std::move(pts));
}

}  // namespace lightsq
