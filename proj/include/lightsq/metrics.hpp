#pragma once

#include "lightsq/pipeline.hpp"

#include <limits>
#include <numeric>
#include <random>

namespace lightsq {

using PointSet = std::vector<Vec3>;

/// Static 3-d tree over a point set for nearest-neighbor queries.
class KdTree {
 public:
  explicit KdTree(const PointSet& pts) : pts_(pts), order_(pts.size()) {
    std::iota(order_.begin(), order_.end(), 0);
    nodes_.reserve(pts.size());
    if (!pts.empty()) build(0, pts.size(), 0);
  }

  /// Distance to the nearest stored point; infinity when empty.
  double nearest(const Vec3& q) const {
    double best = std::numeric_limits<double>::infinity();
    if (!nodes_.empty()) search(0, q, best);
    return std::sqrt(best);
  }

 private:
  struct Node {
    std::size_t point;
    int axis;
    int left = -1, right = -1;
  };

  int build(std::size_t b, std::size_t e, int depth) {
    if (b >= e) return -1;
    Vec3 lo = pts_[order_[b]], hi = lo;
    for (std::size_t i = b; i < e; ++i) {
      lo = lo.cwiseMin(pts_[order_[i]]);
      hi = hi.cwiseMax(pts_[order_[i]]);
    }
    int axis = 0;
    (hi - lo).maxCoeff(&axis);
    const std::size_t mid = b + (e - b) / 2;
    std::nth_element(order_.begin() + b, order_.begin() + mid, order_.begin() + e,
                     [&](std::size_t x, std::size_t y) { return pts_[x][axis] < pts_[y][axis]; });
    const int id = static_cast<int>(nodes_.size());
    nodes_.push_back({order_[mid], axis});
    const int l = build(b, mid, depth + 1);
    const int r = build(mid + 1, e, depth + 1);
    nodes_[id].left = l;
    nodes_[id].right = r;
    return id;
  }

  void search(int id, const Vec3& q, double& best) const {
    const Node& n = nodes_[id];
    const Vec3& p = pts_[n.point];
    best = std::min(best, (p - q).squaredNorm());
    const double d = q[n.axis] - p[n.axis];
    const int near = d < 0 ? n.left : n.right;
    const int far = d < 0 ? n.right : n.left;
    if (near >= 0) search(near, q, best);
    if (far >= 0 && d * d < best) search(far, q, best);
  }

  const PointSet& pts_;
  std::vector<std::size_t> order_;
  std::vector<Node> nodes_;
};

namespace detail {

inline double mean_nearest(const PointSet& from, const PointSet& to) {
  const KdTree tree(to);
  std::vector<double> part((from.size() + 1023) / 1024, 0.0);
  parallel_chunks(from.size(), 1024, [&](std::size_t c, std::size_t b, std::size_t e) {
    double s = 0.0;
    for (std::size_t i = b; i < e; ++i) s += tree.nearest(from[i]);
    part[c] = s;
  });
  return std::accumulate(part.begin(), part.end(), 0.0) / static_cast<double>(from.size());
}

}  // namespace detail

/// Symmetric Chamfer distance: half the sum of both mean nearest distances.
inline double chamfer(const PointSet& p, const PointSet& q) {
  if (p.empty() || q.empty()) throw Error(ErrorCode::InvalidArgument, "chamfer needs two non-empty point sets");
  return 0.5 * (detail::mean_nearest(p, q) + detail::mean_nearest(q, p));
}

/// Seeded uniform subsample without replacement; returns everything when n
/// covers the set. Order of the kept points follows the input.
inline PointSet subsample(const PointSet& pts, std::size_t n, std::uint64_t seed) {
  if (pts.size() <= n) return pts;
  std::vector<std::size_t> idx(pts.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed);
  for (std::size_t i = 0; i < n; ++i) {
    std::uniform_int_distribution<std::size_t> pick(i, idx.size() - 1);
    std::swap(idx[i], idx[pick(rng)]);
  }
  idx.resize(n);
  std::sort(idx.begin(), idx.end());
  PointSet out;
  out.reserve(n);
  for (std::size_t i : idx) out.push_back(pts[i]);
  return out;
}

/// Minimum-cost perfect matching on a square cost matrix (row-major) by
/// shortest augmenting paths with potentials. Returns the row assigned to each
/// column.
inline std::vector<int> hungarian(const std::vector<double>& cost, int n) {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    p[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = p[j0];
      double delta = inf;
      int j1 = 0;
      const double* row = cost.data() + static_cast<std::size_t>(i0 - 1) * n;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = row[j - 1] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const int j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> row_of(n);
  for (int j = 1; j <= n; ++j) row_of[j - 1] = p[j] - 1;
  return row_of;
}

/// Earth Mover's distance: both sets subsampled to at most max_points, then
/// the mean Euclidean distance of the exact optimal assignment. Sets of
/// different size are cut to the smaller one.
inline double emd(const PointSet& p, const PointSet& q, std::size_t max_points = 1024, std::uint64_t seed = 0) {
  if (p.empty() || q.empty()) throw Error(ErrorCode::InvalidArgument, "emd needs two non-empty point sets");
  const std::size_t m = std::min({max_points, p.size(), q.size()});
  const PointSet a = subsample(p, m, seed);
  const PointSet b = subsample(q, m, seed + 1);
  const int n = static_cast<int>(m);
  std::vector<double> cost(m * m);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < m; ++j) cost[i * m + j] = (a[i] - b[j]).norm();
  const auto row_of = hungarian(cost, n);
  double total = 0.0;
  for (int j = 0; j < n; ++j) total += cost[static_cast<std::size_t>(row_of[j]) * m + j];
  return total / n;
}

/// Per-voxel count of primitives whose srdf is negative at the voxel center.
inline std::vector<std::uint16_t> coverage_counts(const TsdfGrid& lattice, const std::vector<Superquadric>& prims) {
  std::vector<std::uint16_t> count(lattice.size(), 0);
  for (const auto& sq : prims) {
    const SrdfEvaluator eval(sq);
    const auto [lo, hi] = lattice.index_range(world_aabb(sq, 0.0));
    for (int k = lo[2]; k <= hi[2]; ++k)
      for (int j = lo[1]; j <= hi[1]; ++j)
        for (int i = lo[0]; i <= hi[0]; ++i)
          if (eval(lattice.center(i, j, k)) < 0.0) ++count[lattice.index(i, j, k)];
  }
  return count;
}

inline std::vector<Superquadric> shapes_of(const Abstraction& abs) {
  std::vector<Superquadric> out;
  out.reserve(abs.primitives.size());
  for (const auto& p : abs.primitives) out.push_back(p.sq);
  return out;
}

/// |interior(reference) n union| / |interior(reference) u union|, counted on
/// the reference lattice. Voxels outside box (when given) are ignored.
inline double voxel_iou(const TsdfGrid& reference, const std::vector<Superquadric>& prims, const std::optional<Aabb>& box = std::nullopt) {
  const auto count = coverage_counts(reference, prims);
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    if (box && !box->contains(reference.center(i))) continue;
    const bool a = reference.interior(i), b = count[i] > 0;
    inter += a && b;
    uni += a || b;
  }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

inline double voxel_iou(const TsdfGrid& reference, const Abstraction& abs) { return voxel_iou(reference, shapes_of(abs)); }

struct OverlapRate {
  double value = std::numeric_limits<double>::quiet_NaN();
  /// False when no primitive covers any voxel.
  bool defined = false;
};

/// Mean number of primitives covering each covered voxel.
inline OverlapRate overlap_rate(const std::vector<Superquadric>& prims, const TsdfGrid& lattice) {
  const auto count = coverage_counts(lattice, prims);
  std::size_t total = 0, covered = 0;
  for (auto c : count) {
    total += c;
    covered += c > 0;
  }
  OverlapRate r;
  if (covered == 0) return r;
  r.value = static_cast<double>(total) / static_cast<double>(covered);
  r.defined = true;
  return r;
}

namespace detail {

// First inside crossing along every lattice ray in the six axis directions,
// given a per-voxel field and a refinement of the crossing position.
template <typename Refine>
PointSet scan_field(const TsdfGrid& lattice, std::span<const float> field, Refine&& refine) {
  const int n = lattice.resolution;
  PointSet pts;
  for (int axis = 0; axis < 3; ++axis) {
    const int ua = (axis + 1) % 3, va = (axis + 2) % 3;
    for (int dir : {1, -1})
      for (int v = 0; v < n; ++v)
        for (int u = 0; u < n; ++u) {
          std::array<int, 3> c{};
          c[ua] = u;
          c[va] = v;
          double prev = 0.0;
          Vec3 prev_x;
          for (int s = 0; s < n; ++s) {
            c[axis] = dir > 0 ? s : n - 1 - s;
            const std::size_t idx = lattice.index(c[0], c[1], c[2]);
            const double cur = field[idx];
            const Vec3 x = lattice.center(idx);
            if (cur < 0.0) {
              if (s == 0) {
                Vec3 face = x;
                face[axis] -= dir * 0.5 * lattice.voxel_size;
                pts.push_back(face);
              } else {
                pts.push_back(refine(prev_x, prev, x, cur));
              }
              break;
            }
            prev = cur;
            prev_x = x;
          }
        }
  }
  return pts;
}

}  // namespace detail

/// Surface points of a field grid from six-axis orthographic scanning, with
/// linear interpolation of the zero crossing; subsampled to n with seed.
inline PointSet scan_points(const TsdfGrid& grid, std::size_t n, std::uint64_t seed) {
  auto pts = detail::scan_field(grid, grid.values, [](const Vec3& a, double fa, const Vec3& b, double fb) {
    const double t = fa / (fa - fb);
    return Vec3(a + t * (b - a));
  });
  return subsample(pts, n, seed);
}

/// Surface points of the primitive union from six-axis orthographic scanning
/// on lattice's rays; crossings are bracketed on the lattice and refined by
/// bisection on the analytic union.
inline PointSet scan_points(const std::vector<Superquadric>& prims, const TsdfGrid& lattice, std::size_t n, std::uint64_t seed) {
  std::vector<float> field(lattice.size(), static_cast<float>(lattice.voxel_size));
  std::vector<SrdfEvaluator> evals;
  for (const auto& sq : prims) evals.emplace_back(sq);
  for (std::size_t p = 0; p < prims.size(); ++p) {
    const auto [lo, hi] = lattice.index_range(world_aabb(prims[p], lattice.voxel_size));
    for (int k = lo[2]; k <= hi[2]; ++k)
      for (int j = lo[1]; j <= hi[1]; ++j)
        for (int i = lo[0]; i <= hi[0]; ++i) {
          const std::size_t idx = lattice.index(i, j, k);
          field[idx] = std::min(field[idx], static_cast<float>(evals[p](lattice.center(idx))));
        }
  }
  auto union_at = [&](const Vec3& x) {
    double d = std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < prims.size(); ++p) d = std::min(d, evals[p](x));
    return d;
  };
  auto pts = detail::scan_field(lattice, field, [&](Vec3 a, double, Vec3 b, double) {
    for (int it = 0; it < 30; ++it) {
      const Vec3 m = 0.5 * (a + b);
      (union_at(m) < 0.0 ? b : a) = m;
    }
    return Vec3(0.5 * (a + b));
  });
  return subsample(pts, n, seed);
}

struct MetricConfig {
  std::size_t scan_points = 8192;
  std::size_t emd_points = 1024;
  std::uint64_t seed = 0;
};

struct MetricReport {
  double cd = 0.0;
  double emd = 0.0;
  double voxel_iou = 0.0;
  double overlap_rate = std::numeric_limits<double>::quiet_NaN();
  bool overlap_defined = false;
  int n_primitives = 0;
  std::size_t reference_points = 0;
  std::size_t abstraction_points = 0;
  std::size_t emd_points = 0;
  std::uint64_t seed = 0;
};

/// Full metric suite of primitives against a reference field, all in the
/// normalized frame. Point metrics are NaN when either scan is empty.
inline MetricReport evaluate(const TsdfGrid& reference, const std::vector<Superquadric>& prims, const MetricConfig& cfg = {}) {
  MetricReport r;
  r.seed = cfg.seed;
  r.n_primitives = static_cast<int>(prims.size());
  r.voxel_iou = voxel_iou(reference, prims);
  const auto orate = overlap_rate(prims, reference);
  r.overlap_rate = orate.value;
  r.overlap_defined = orate.defined;
  const auto ref = scan_points(reference, cfg.scan_points, cfg.seed);
  const auto abs = scan_points(prims, reference, cfg.scan_points, cfg.seed + 1);
  r.reference_points = ref.size();
  r.abstraction_points = abs.size();
  if (ref.empty() || abs.empty()) {
    r.cd = r.emd = std::numeric_limits<double>::quiet_NaN();
    return r;
  }
  r.cd = chamfer(ref, abs);
  r.emd_points = std::min({cfg.emd_points, ref.size(), abs.size()});
  r.emd = emd(ref, abs, cfg.emd_points, cfg.seed + 2);
  return r;
}

inline MetricReport evaluate(const TsdfGrid& reference, const Abstraction& abs, const MetricConfig& cfg = {}) {
  return evaluate(reference, shapes_of(abs), cfg);
}

}  // namespace lightsq
