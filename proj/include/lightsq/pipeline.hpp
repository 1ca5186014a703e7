#pragma once

#include "lightsq/decomp.hpp"
#include "lightsq/fitter.hpp"

#include <optional>
#include <string>

namespace lightsq {

struct LabeledSuperquadric {
  Superquadric sq;
  int id = 0;
  Stage stage = Stage::Main;
  std::optional<int> parent;

  bool operator==(const LabeledSuperquadric&) const = default;
};

struct PruneConfig {
  double p_m = 0.5;
  double p_c = 0.5;
  double p_o = 0.5;
  /// Minimum inscribed radius per category, in normalized units.
  double t_m = 0.02;
  double t_c = 0.03;
  double t_o = 0.05;

  double threshold(Stage s) const { return s == Stage::Connector ? t_c : s == Stage::Offcut ? t_o : t_m; }

  void validate() const {
    for (double p : {p_m, p_c, p_o})
      if (!(p > 0.0 && p <= 1.0)) throw Error(ErrorCode::InvalidArgument, "prune fractions must lie in (0, 1]");
    if (!(t_m >= 0.0 && t_m <= t_c && t_c <= t_o)) throw Error(ErrorCode::InvalidArgument, "prune thresholds must satisfy 0 <= t_m <= t_c <= t_o");
  }

  static PruneConfig disabled() {
    PruneConfig p;
    p.t_m = p.t_c = p.t_o = 0.0;
    return p;
  }
};

struct PipelineConfig {
  FitConfig fit;
  DecompConfig decomp;
  PruneConfig prune;
  /// Primitives per partition in the block stage.
  int block_k = 1;
  /// Upper bound on fill-stage primitives per run.
  int max_fill = 128;
  /// Dilation of the refined primitive; 0 selects two voxels.
  double dilation = 0.0;
  int local_resolution = 64;

  void validate() const {
    fit.validate();
    decomp.validate();
    prune.validate();
    if (block_k < 1 || max_fill < 0) throw Error(ErrorCode::InvalidArgument, "block_k must be >= 1 and max_fill >= 0");
    if (dilation < 0.0 || local_resolution < 8) throw Error(ErrorCode::InvalidArgument, "dilation must be >= 0 and local_resolution >= 8");
  }
};

struct Abstraction {
  std::vector<LabeledSuperquadric> primitives;
  Normalization normalization;
  int resolution = 0;
  double tau = 0.0;
  PipelineConfig config;

  int next_id() const {
    int id = 0;
    for (const auto& p : primitives) id = std::max(id, p.id + 1);
    return id;
  }
  const LabeledSuperquadric* find(int id) const {
    for (const auto& p : primitives)
      if (p.id == id) return &p;
    return nullptr;
  }
};

/// Mutable state shared by the fitting stages: the carved field, its history
/// and the mask of pruned voxels that component extraction ignores.
struct WorkState {
  TsdfGrid field;
  UpdateHistory history;
  std::vector<bool> skipped;

  explicit WorkState(TsdfGrid g) : field(std::move(g)), history(field.size()), skipped(field.size(), false) {}
};

/// Non-fatal events of a run (skipped partitions, failed fits).
struct RunLog {
  std::vector<std::string> warnings;
  void warn(std::string w) { warnings.push_back(std::move(w)); }
};

namespace detail {

inline Superquadric init_for(const VoxelComponent& comp, const TsdfGrid& grid, InscribedSphere* out = nullptr) {
  const InscribedSphere s = max_inscribed_sphere(comp, grid);
  if (out) *out = s;
  return Superquadric::sphere(s.center, std::max(s.radius, 0.5 * grid.voxel_size));
}

}  // namespace detail

/// Block stage: every partition becomes a standalone field (partition voxels
/// inside, everything else outside) and receives up to k primitives. The
/// global field is not touched.
inline std::vector<LabeledSuperquadric> block(const TsdfGrid& grid, const std::vector<Partition>& parts, int k,
                                              const FitConfig& cfg, RunLog* log = nullptr, int first_id = 0) {
  std::vector<std::vector<Superquadric>> fits(parts.size());
  std::vector<std::string> notes(parts.size());
  parallel_chunks(parts.size(), 1, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t p = b; p < e; ++p) {
      if (parts[p].voxels.size() <= 1) {
        notes[p] = "partition " + std::to_string(parts[p].id) + " too small to initialize";
        continue;
      }
      TsdfGrid local = tsdf_from_occupancy(grid, parts[p].voxels);
      for (int round = 0; round < k; ++round) {
        const auto comps = connected_components(local);
        if (comps.empty()) break;
        try {
          const FitResult r = fit_one(local, detail::init_for(comps.front(), local), cfg);
          if (carve(local, r.sq).flipped == 0) break;
          fits[p].push_back(r.sq);
        } catch (const Error& e) {
          notes[p] = "partition " + std::to_string(parts[p].id) + ": " + e.what();
          break;
        }
      }
    }
  });
  std::vector<LabeledSuperquadric> out;
  int id = first_id;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    if (log && !notes[p].empty()) log->warn(notes[p]);
    for (const auto& sq : fits[p]) out.push_back({sq, id++, Stage::Block, std::nullopt});
  }
  return out;
}

/// Regrow stage. Primitive i is refit on the field carved by the already
/// regrown 0..i-1 and the original i+1..N-1, starting from itself. Afterwards
/// the working state is carved by every regrown primitive.
inline std::vector<LabeledSuperquadric> regrow(WorkState& state, const std::vector<LabeledSuperquadric>& blocks,
                                               const FitConfig& cfg, RunLog* log = nullptr) {
  std::vector<LabeledSuperquadric> out = blocks;
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    TsdfGrid target = state.field;
    for (std::size_t j = 0; j < blocks.size(); ++j)
      if (j != i) carve(target, j < i ? out[j].sq : blocks[j].sq);
    try {
      out[i].sq = fit_one(target, blocks[i].sq, cfg, &state.skipped).sq;
    } catch (const Error& e) {
      if (log) log->warn("regrow " + std::to_string(blocks[i].id) + " kept at init: " + e.what());
    }
    out[i].stage = Stage::Regrow;
  }
  for (const auto& p : out) {
    state.history.stage_of[p.id] = Stage::Regrow;
    carve(state.field, p.sq, &state.history, p.id);
  }
  return out;
}

struct Classification {
  Stage stage = Stage::Main;
  InscribedSphere sphere;
  double untouched = 0.0;
  double updated = 0.0;
  int main_updaters = 0;
};

/// Residual classification from the voxels inside the component's inscribed
/// ball (radius grown by half a voxel) that were interior in the original
/// field. A voxel counts as updated when any carve changed it.
inline Classification classify_component(const VoxelComponent& comp, const TsdfGrid& field, const TsdfGrid& original,
                                         const UpdateHistory& history, const PruneConfig& prune) {
  Classification c;
  c.sphere = max_inscribed_sphere(comp, field);
  // Reaches the centers of the nearest carved voxels; the slack absorbs rounding.
  const double r = c.sphere.radius + (0.5 + 1e-6) * field.voxel_size;
  Aabb box{c.sphere.center - Vec3::Constant(r), c.sphere.center + Vec3::Constant(r)};
  const auto [lo, hi] = field.index_range(box);
  std::size_t total = 0, touched = 0;
  std::set<int> updaters;
  for (int k = lo[2]; k <= hi[2]; ++k)
    for (int j = lo[1]; j <= hi[1]; ++j)
      for (int i = lo[0]; i <= hi[0]; ++i) {
        const std::size_t idx = field.index(i, j, k);
        if (!original.interior(idx) || (field.center(idx) - c.sphere.center).norm() > r) continue;
        ++total;
        const int who = history.touched_by[idx] != UpdateHistory::kNone ? history.touched_by[idx] : history.claimed_by[idx];
        if (who == UpdateHistory::kNone) continue;
        ++touched;
        if (auto it = history.stage_of.find(who); it != history.stage_of.end() && is_main_stage(it->second)) updaters.insert(who);
      }
  if (total == 0) total = 1;
  c.untouched = static_cast<double>(total - touched) / static_cast<double>(total);
  c.updated = static_cast<double>(touched) / static_cast<double>(total);
  c.main_updaters = static_cast<int>(updaters.size());
  if (c.untouched > prune.p_m) c.stage = Stage::Main;
  else if (c.main_updaters >= 2 && c.updated > prune.p_c) c.stage = Stage::Connector;
  else c.stage = Stage::Offcut;
  return c;
}

/// True when carving sq would flip at least one interior voxel.
inline bool covers_interior(const TsdfGrid& field, const Superquadric& sq) {
  const auto [lo, hi] = field.index_range(world_aabb(sq, 0.0));
  for (int k = lo[2]; k <= hi[2]; ++k)
    for (int j = lo[1]; j <= hi[1]; ++j)
      for (int i = lo[0]; i <= hi[0]; ++i) {
        const std::size_t idx = field.index(i, j, k);
        if (field.interior(idx) && srdf(sq, field.center(idx)) <= 0.0) return true;
      }
  return false;
}

/// Fill stage: fit the largest remaining component until none is left.
/// Components whose inscribed radius falls under their category threshold,
/// or whose fit carves nothing, are marked skipped.
inline std::vector<LabeledSuperquadric> fill(WorkState& state, const TsdfGrid& original, const FitConfig& cfg,
                                             const PruneConfig& prune, int first_id, int max_fill = 128,
                                             RunLog* log = nullptr) {
  std::vector<LabeledSuperquadric> out;
  int id = first_id;
  for (;;) {
    const auto comps = connected_components(state.field, &state.skipped);
    if (comps.empty()) break;
    const VoxelComponent& comp = comps.front();
    auto skip = [&] {
      for (std::size_t idx : comp.voxel_indices) state.skipped[idx] = true;
    };
    if (static_cast<int>(out.size()) >= max_fill) {
      if (log) log->warn("fill limit reached");
      break;
    }
    const Classification cls = classify_component(comp, state.field, original, state.history, prune);
    if (cls.sphere.radius < prune.threshold(cls.stage)) {
      skip();
      continue;
    }
    FitResult r;
    try {
      r = fit_one(state.field, Superquadric::sphere(cls.sphere.center, std::max(cls.sphere.radius, 0.5 * state.field.voxel_size)),
                  cfg, &state.skipped);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::EmptyNeighborhood && e.code() != ErrorCode::DegenerateWeights) throw;
      skip();
      continue;
    }
    if (!covers_interior(state.field, r.sq)) {
      skip();
      continue;
    }
    state.history.stage_of[id] = cls.stage;
    carve(state.field, r.sq, &state.history, id);
    out.push_back({r.sq, id++, cls.stage, std::nullopt});
  }
  return out;
}

/// Block, regrow and fill on one field. Returns the primitives; state holds
/// the carved field and history afterwards.
inline std::vector<LabeledSuperquadric> block_regrow_fill(WorkState& state, const std::vector<Partition>& parts,
                                                          const PipelineConfig& cfg, int first_id, RunLog* log = nullptr) {
  const TsdfGrid original = state.field;
  const auto blocks = block(original, parts, cfg.block_k, cfg.fit, log, first_id);
  auto prims = regrow(state, blocks, cfg.fit, log);
  int next = first_id;
  for (const auto& p : prims) next = std::max(next, p.id + 1);
  auto extra = fill(state, original, cfg.fit, cfg.prune, next, cfg.max_fill, log);
  prims.insert(prims.end(), extra.begin(), extra.end());
  return prims;
}

struct RunResult {
  Abstraction abstraction;
  std::vector<Partition> partitions;
  RunLog log;
};

/// Full pipeline: decompose, block, regrow, fill.
inline RunResult run(const TsdfGrid& grid, const PipelineConfig& cfg, const Normalization& norm = {}) {
  cfg.validate();
  RunResult res;
  res.abstraction.normalization = norm;
  res.abstraction.resolution = grid.resolution;
  res.abstraction.tau = grid.tau;
  res.abstraction.config = cfg;
  if (grid.interior_count() == 0) return res;
  res.partitions = decompose(grid, cfg.decomp);
  WorkState state(grid);
  res.abstraction.primitives = block_regrow_fill(state, res.partitions, cfg, 0, &res.log);
  return res;
}

/// Carves the primitives into a copy of grid in list order, recording history.
/// Interior voxels that survive are marked skipped.
inline WorkState replay(const TsdfGrid& grid, const Abstraction& abs) {
  WorkState state(grid);
  for (const auto& p : abs.primitives) {
    state.history.stage_of[p.id] = p.stage;
    carve(state.field, p.sq, &state.history, p.id);
  }
  for (std::size_t i = 0; i < state.field.size(); ++i) state.skipped[i] = state.field.interior(i);
  return state;
}

/// Trilinear interpolation of per-voxel values at a world point; points
/// outside the lattice read as outside.
inline double sample_trilinear(const TsdfGrid& g, std::span<const float> values, const Vec3& x, double outside) {
  const Vec3 u = (x - g.origin) / g.voxel_size;
  const int n = g.resolution;
  if ((u.array() < 0.0).any() || (u.array() > n - 1).any()) return outside;
  int i0[3];
  double f[3];
  for (int a = 0; a < 3; ++a) {
    i0[a] = std::min(n - 2, static_cast<int>(std::floor(u[a])));
    f[a] = u[a] - i0[a];
  }
  double acc = 0.0;
  for (int c = 0; c < 8; ++c) {
    const int di = c & 1, dj = (c >> 1) & 1, dk = (c >> 2) & 1;
    const double w = (di ? f[0] : 1 - f[0]) * (dj ? f[1] : 1 - f[1]) * (dk ? f[2] : 1 - f[2]);
    if (w != 0.0) acc += w * values[g.index(i0[0] + di, i0[1] + dj, i0[2] + dk)];
  }
  return acc;
}

/// Lattice region a primitive owns: voxels it claimed while carving, plus
/// skipped voxels within dilation of those.
inline std::vector<bool> ownership_mask(const WorkState& state, int id, double dilation) {
  const TsdfGrid& g = state.field;
  std::vector<bool> own(g.size(), false);
  std::vector<std::size_t> claimed;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (state.history.claimed_by[i] == id) {
      own[i] = true;
      claimed.push_back(i);
    }
  if (claimed.empty() || dilation <= 0.0) return own;
  const int reach = static_cast<int>(std::floor(dilation / g.voxel_size + 1e-9));
  const auto [lo, hi] = voxel_bounds(g, claimed, reach);
  const std::array<int, 3> dims{hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1};
  const std::size_t cells = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  std::unique_ptr<bool[]> seed(new bool[cells]());
  for (std::size_t idx : claimed) {
    const auto c = g.coords(idx);
    seed[(c[0] - lo[0]) + dims[0] * (static_cast<std::size_t>(c[1] - lo[1]) + dims[1] * static_cast<std::size_t>(c[2] - lo[2]))] = true;
  }
  const auto d2 = squared_edt(std::span<const bool>(seed.get(), cells), dims);
  for (int k = std::max(0, lo[2]); k <= std::min(g.resolution - 1, hi[2]); ++k)
    for (int j = std::max(0, lo[1]); j <= std::min(g.resolution - 1, hi[1]); ++j)
      for (int i = std::max(0, lo[0]); i <= std::min(g.resolution - 1, hi[0]); ++i) {
        const std::size_t idx = g.index(i, j, k);
        if (!state.skipped[idx]) continue;
        const std::size_t c = (i - lo[0]) + dims[0] * (static_cast<std::size_t>(j - lo[1]) + dims[1] * static_cast<std::size_t>(k - lo[2]));
        if (std::sqrt(d2[c]) * g.voxel_size <= dilation + 1e-12) own[idx] = true;
      }
  return own;
}

struct LocalField {
  /// Lattice in the target's local frame.
  TsdfGrid grid;
  /// Dilated, axis-aligned copy of the target.
  Superquadric dilated;
};

/// Resamples the field owned by one primitive into its local frame. Owned
/// voxels keep their original values; everything else reads as outside by its
/// distance to the owned set.
inline LocalField local_field(const TsdfGrid& grid, const std::vector<bool>& own, const Superquadric& target,
                              double dilation, int resolution) {
  std::vector<std::size_t> owned;
  for (std::size_t i = 0; i < own.size(); ++i)
    if (own[i] && grid.interior(i)) owned.push_back(i);
  if (owned.empty()) throw Error(ErrorCode::DegenerateRegion, "primitive owns no interior voxels");
  TsdfGrid masked = tsdf_from_occupancy(grid, owned);
  for (std::size_t idx : owned) masked.values[idx] = std::min(masked.values[idx], grid.values[idx]);

  LocalField out;
  out.dilated = target;
  out.dilated.scale = target.scale + Vec3::Constant(dilation);
  out.dilated.rotation = Quat::Identity();
  out.dilated.translation = Vec3::Zero();
  const double half = out.dilated.scale.maxCoeff();
  const double h = 2.0 * half / resolution;
  out.grid = TsdfGrid(resolution, Vec3::Constant(-half + 0.5 * h), h, h, static_cast<float>(h));
  const auto t = static_cast<float>(h);
  const auto fine = std::span<const float>(masked.values);
  const double far = grid.tau;
  parallel_chunks(out.grid.size(), 4096, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t idx = b; idx < e; ++idx) {
      const Vec3 x = out.grid.center(idx);
      if ((x.cwiseAbs().array() > out.dilated.scale.array()).any()) continue;
      const double v = sample_trilinear(grid, fine, target.to_world(x), far);
      out.grid.values[idx] = std::clamp(static_cast<float>(v), -t, t);
    }
  });
  return out;
}

struct RefineResult {
  Abstraction abstraction;
  std::vector<int> children;
  RunLog log;
};

/// Multiscale refinement of one primitive: resample the field it owns into its
/// frame, cut that into splits^3 boxes, run block-regrow-fill there and put the
/// mapped-back children in place of the target.
inline RefineResult multiscale_refine(const Abstraction& abs, const TsdfGrid& grid, int target_id, int splits) {
  if (splits < 1) throw Error(ErrorCode::InvalidArgument, "splits must be >= 1");
  const auto pos = std::find_if(abs.primitives.begin(), abs.primitives.end(), [&](const auto& p) { return p.id == target_id; });
  if (pos == abs.primitives.end()) throw Error(ErrorCode::UnknownPrimitive, "no primitive with id " + std::to_string(target_id));
  const PipelineConfig& cfg = abs.config;
  const double dilation = cfg.dilation > 0.0 ? cfg.dilation : 2.0 * grid.voxel_size;

  const WorkState replayed = replay(grid, abs);
  const auto own = ownership_mask(replayed, target_id, dilation);
  const LocalField local = local_field(grid, own, pos->sq, dilation, cfg.local_resolution);
  if (local.grid.interior_count() == 0) throw Error(ErrorCode::DegenerateRegion, "no interior voxels recovered");

  std::vector<SlicePlane> planes;
  const int n = local.grid.resolution;
  for (int axis = 0; axis < 3; ++axis) {
    const double ext = local.dilated.scale[axis];
    for (int s = 1; s < splits; ++s) {
      const double x = -ext + 2.0 * ext * s / splits;
      const int idx = static_cast<int>(std::ceil((x - local.grid.origin[axis]) / local.grid.voxel_size - 1e-9));
      if (idx > 0 && idx < n) planes.push_back({axis, idx, 0.0});
    }
  }
  const auto parts = split(local.grid, planes);

  RefineResult res;
  WorkState state(local.grid);
  const int first = abs.next_id();
  auto prims = block_regrow_fill(state, parts, cfg, first, &res.log);
  if (prims.empty()) throw Error(ErrorCode::DegenerateRegion, "refinement produced no primitives");

  res.abstraction = abs;
  auto& list = res.abstraction.primitives;
  const auto at = list.begin() + (pos - abs.primitives.begin());
  std::vector<LabeledSuperquadric> mapped;
  for (auto& p : prims) {
    LabeledSuperquadric c = p;
    c.sq.rotation = (pos->sq.rotation * p.sq.rotation).normalized();
    c.sq.translation = pos->sq.to_world(p.sq.translation);
    c.parent = target_id;
    res.children.push_back(c.id);
    mapped.push_back(c);
  }
  const auto slot = list.erase(at);
  list.insert(slot, mapped.begin(), mapped.end());
  return res;
}

}  // namespace lightsq
