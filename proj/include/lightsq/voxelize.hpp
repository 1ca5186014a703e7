#pragma once

#include "lightsq/grid.hpp"

namespace lightsq {

struct VoxelizeOptions {
  int resolution = 100;
  double tau_factor = 1.0;
  /// Sign by crossing parity even when the mesh has open edges.
  bool force_parity = false;
  /// Half-extent of the normalized bounding box, in voxels short of 1.
  int margin_voxels = 2;
};

struct VoxelizedMesh {
  TsdfGrid grid;
  Normalization normalization;
};

namespace detail {

// Closest point on triangle abc to p (Ericson, Real-Time Collision Detection 5.1.5).
inline Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return a;
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + (d1 / (d1 - d3)) * ab;
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + (d2 / (d2 - d6)) * ac;
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0) return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

// Edge ownership for points lying exactly on a projected edge: of the two
// opposite traversals of a shared edge exactly one owns it.
inline bool owns_edge(double du, double dv) { return dv > 0.0 || (dv == 0.0 && du < 0.0); }

// If the +x ray through (y, z) crosses triangle abc, returns the crossing x.
inline std::optional<double> ray_x_crossing(double y, double z, const Vec3& a, const Vec3& b, const Vec3& c) {
  Eigen::Vector2d p0(a.y(), a.z()), p1(b.y(), b.z()), p2(c.y(), c.z());
  double area = (p1 - p0).x() * (p2 - p0).y() - (p1 - p0).y() * (p2 - p0).x();
  if (area == 0.0) return std::nullopt;
  const Vec3* va = &a;
  const Vec3* vb = &b;
  const Vec3* vc = &c;
  if (area < 0.0) {
    std::swap(p1, p2);
    std::swap(vb, vc);
    area = -area;
  }
  const Eigen::Vector2d q(y, z);
  const Eigen::Vector2d* pts[3] = {&p0, &p1, &p2};
  double w[3];
  for (int e = 0; e < 3; ++e) {
    const auto& s = *pts[(e + 1) % 3];
    const auto& t = *pts[(e + 2) % 3];
    const double du = t.x() - s.x(), dv = t.y() - s.y();
    const double ew = du * (q.y() - s.y()) - dv * (q.x() - s.x());
    if (ew < 0.0 || (ew == 0.0 && !owns_edge(du, dv))) return std::nullopt;
    w[e] = ew;  // barycentric weight of vertex e
  }
  return (w[0] * va->x() + w[1] * vb->x() + w[2] * vc->x()) / area;
}

}  // namespace detail

/// Point-in-mesh test by crossing parity of the +x ray (used for signing and
/// as a reference in tests).
inline bool inside_by_parity(const TriangleMesh& mesh, const Vec3& p) {
  int crossings = 0;
  for (const auto& t : mesh.triangles) {
    const auto x = detail::ray_x_crossing(p.y(), p.z(), mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]);
    if (x && *x > p.x()) ++crossings;
  }
  return crossings % 2 == 1;
}

/// Clamped signed distance grid of a closed triangle mesh. The mesh is first
/// normalized so its bounding box fits inside [-1, 1]^3 with a margin of
/// margin_voxels voxels. Inside/outside comes from +x ray crossing parity per
/// lattice row; magnitudes are exact point-triangle distances inside the tau
/// band, found by splatting each triangle over its tau-padded bounding box.
inline VoxelizedMesh voxelize_mesh(const TriangleMesh& input, const VoxelizeOptions& opt = {}) {
  if (input.triangles.empty() || input.vertices.empty()) throw Error(ErrorCode::EmptyMesh, "mesh is empty");
  if (!opt.force_parity && !is_watertight(input))
    throw Error(ErrorCode::NonWatertightMesh, "mesh has open or non-manifold edges");
  const int n = opt.resolution;
  VoxelizedMesh out;
  out.grid = TsdfGrid::normalized(n, opt.tau_factor);
  TsdfGrid& g = out.grid;
  out.normalization = normalization_for(input, 1.0 - opt.margin_voxels * g.voxel_size);
  const TriangleMesh mesh = apply(out.normalization, input);

  // Crossing lists per (j, k) row.
  std::vector<std::vector<double>> rows(static_cast<std::size_t>(n) * n);
  for (const auto& t : mesh.triangles) {
    const Vec3 &a = mesh.vertices[t[0]], &b = mesh.vertices[t[1]], &c = mesh.vertices[t[2]];
    const Vec3 lo = a.cwiseMin(b).cwiseMin(c), hi = a.cwiseMax(b).cwiseMax(c);
    const auto [ilo, ihi] = g.index_range({lo, hi});
    for (int k = ilo[2]; k <= ihi[2]; ++k)
      for (int j = ilo[1]; j <= ihi[1]; ++j) {
        const Vec3 cen = g.center(0, j, k);
        if (auto x = detail::ray_x_crossing(cen.y(), cen.z(), a, b, c)) rows[j + static_cast<std::size_t>(n) * k].push_back(*x);
      }
  }
  const auto tau = static_cast<float>(g.tau);
  parallel_chunks(rows.size(), 64, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t r = b; r < e; ++r) {
      auto& xs = rows[r];
      std::sort(xs.begin(), xs.end());
      const int j = static_cast<int>(r % n), k = static_cast<int>(r / n);
      std::size_t passed = 0;
      for (int i = 0; i < n; ++i) {
        const double x = g.center(i, j, k).x();
        while (passed < xs.size() && xs[passed] < x) ++passed;
        g.values[g.index(i, j, k)] = (passed % 2 == 1) ? -tau : tau;
      }
    }
  });

  std::vector<float> best(g.size(), std::numeric_limits<float>::infinity());
  for (const auto& t : mesh.triangles) {
    const Vec3 &a = mesh.vertices[t[0]], &b = mesh.vertices[t[1]], &c = mesh.vertices[t[2]];
    Aabb box{a.cwiseMin(b).cwiseMin(c), a.cwiseMax(b).cwiseMax(c)};
    box.lo.array() -= g.tau;
    box.hi.array() += g.tau;
    const auto [ilo, ihi] = g.index_range(box);
    for (int k = ilo[2]; k <= ihi[2]; ++k)
      for (int j = ilo[1]; j <= ihi[1]; ++j)
        for (int i = ilo[0]; i <= ihi[0]; ++i) {
          const Vec3 p = g.center(i, j, k);
          const auto d = static_cast<float>((p - detail::closest_point_on_triangle(p, a, b, c)).norm());
          float& slot = best[g.index(i, j, k)];
          slot = std::min(slot, d);
        }
  }
  for (std::size_t idx = 0; idx < g.size(); ++idx) {
    if (best[idx] < tau) g.values[idx] = g.values[idx] < 0.0f ? -best[idx] : best[idx];
  }
  return out;
}

}  // namespace lightsq
