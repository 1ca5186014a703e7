#pragma once

#include "lightsq/distance_transform.hpp"
#include "lightsq/mesh_io.hpp"
#include "lightsq/superquadric.hpp"

#include <array>
#include <bit>
#include <memory>
#include <span>
#include <cmath>
#include <cstring>
#include <deque>
#include <fstream>
#include <functional>
#include <map>
#include <optional>

namespace lightsq {

/// Dense cubic grid of truncated signed distances, negative inside.
/// Voxel (i, j, k) is stored at i + n * (j + n * k) and centered at
/// origin + voxel_size * (i, j, k).
struct TsdfGrid {
  int resolution = 0;
  Vec3 origin = Vec3::Zero();
  double voxel_size = 0.0;
  double tau = 0.0;
  std::vector<float> values;
  /// Unclamped distances; only valid until the first carve.
  std::optional<std::vector<float>> raw_sdf;

  TsdfGrid() = default;
  TsdfGrid(int n, Vec3 org, double h, double truncation, float fill)
      : resolution(n), origin(std::move(org)), voxel_size(h), tau(truncation),
        values(static_cast<std::size_t>(n) * n * n, fill) {}

  /// Lattice spanning [-1, 1]^3 with voxel centers at the cell midpoints.
  static TsdfGrid normalized(int n, double tau_factor = 1.0) {
    const double h = 2.0 / n;
    return TsdfGrid(n, Vec3::Constant(-1.0 + 0.5 * h), h, tau_factor * h, static_cast<float>(tau_factor * h));
  }

  std::size_t size() const { return values.size(); }
  std::size_t index(int i, int j, int k) const {
    return static_cast<std::size_t>(i) + static_cast<std::size_t>(resolution) * (j + static_cast<std::size_t>(resolution) * k);
  }
  std::array<int, 3> coords(std::size_t idx) const {
    const auto n = static_cast<std::size_t>(resolution);
    return {static_cast<int>(idx % n), static_cast<int>((idx / n) % n), static_cast<int>(idx / (n * n))};
  }
  bool in_bounds(int i, int j, int k) const {
    return i >= 0 && j >= 0 && k >= 0 && i < resolution && j < resolution && k < resolution;
  }
  Vec3 center(int i, int j, int k) const { return origin + voxel_size * Vec3(i, j, k); }
  Vec3 center(std::size_t idx) const {
    const auto c = coords(idx);
    return center(c[0], c[1], c[2]);
  }
  bool interior(std::size_t idx) const { return values[idx] < 0.0f; }
  double voxel_volume() const { return voxel_size * voxel_size * voxel_size; }

  /// Inclusive index range of voxels whose centers fall in box, clipped to the grid.
  std::pair<std::array<int, 3>, std::array<int, 3>> index_range(const Aabb& box) const {
    std::array<int, 3> lo{}, hi{};
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::max(0, static_cast<int>(std::ceil((box.lo[a] - origin[a]) / voxel_size - 1e-9)));
      hi[a] = std::min(resolution - 1, static_cast<int>(std::floor((box.hi[a] - origin[a]) / voxel_size + 1e-9)));
    }
    return {lo, hi};
  }

  void clamp_all() {
    const auto t = static_cast<float>(tau);
    for (auto& v : values) v = std::clamp(v, -t, t);
  }

  std::size_t interior_count() const {
    return static_cast<std::size_t>(std::count_if(values.begin(), values.end(), [](float v) { return v < 0.0f; }));
  }
};

/// Grid sampled from an analytic signed distance function; raw_sdf keeps the
/// unclamped samples.
inline TsdfGrid grid_from_sdf(int n, const std::function<double(const Vec3&)>& sdf, double tau_factor = 1.0) {
  TsdfGrid g = TsdfGrid::normalized(n, tau_factor);
  std::vector<float> raw(g.size());
  parallel_chunks(g.size(), 4096, [&](std::size_t, std::size_t b, std::size_t e) {
    for (std::size_t i = b; i < e; ++i) raw[i] = static_cast<float>(sdf(g.center(i)));
  });
  const auto t = static_cast<float>(g.tau);
  for (std::size_t i = 0; i < g.size(); ++i) g.values[i] = std::clamp(raw[i], -t, t);
  g.raw_sdf = std::move(raw);
  return g;
}

enum class Stage { Block, Regrow, Main, Connector, Offcut };

inline const char* to_string(Stage s) {
  switch (s) {
    case Stage::Block: return "Block";
    case Stage::Regrow: return "Regrow";
    case Stage::Main: return "Main";
    case Stage::Connector: return "Connector";
    case Stage::Offcut: return "Offcut";
  }
  return "?";
}

inline Stage stage_from_string(const std::string& s) {
  for (Stage st : {Stage::Block, Stage::Regrow, Stage::Main, Stage::Connector, Stage::Offcut})
    if (s == to_string(st)) return st;
  throw Error(ErrorCode::MalformedFile, "unknown stage " + s);
}

/// Block/Regrow/Main primitives all count as main-stage updaters for residual
/// classification.
inline bool is_main_stage(Stage s) { return s == Stage::Regrow || s == Stage::Main || s == Stage::Block; }

/// Per-voxel carving provenance. claimed_by records the last primitive that
/// flipped the voxel from inside to outside; touched_by records the last
/// primitive that changed the voxel's value while it was inside (a sign flip
/// or a magnitude raise).
struct UpdateHistory {
  static constexpr std::int32_t kNone = -1;
  std::vector<std::int32_t> claimed_by;
  std::vector<std::int32_t> touched_by;
  std::map<int, Stage> stage_of;

  UpdateHistory() = default;
  explicit UpdateHistory(std::size_t n) : claimed_by(n, kNone), touched_by(n, kNone) {}
};

struct VoxelComponent {
  int id = 0;
  std::vector<std::size_t> voxel_indices;
};

/// Summary of a carve: how many voxels flipped sign and how many were touched.
struct CarveStats {
  std::size_t flipped = 0;
  std::size_t touched = 0;
};

/// SDF carving: the primitive's interior becomes exterior, surviving interior
/// voxels near it are raised toward -srdf, exterior voxels never change.
/// The result is re-clamped to [-tau, tau].
inline CarveStats carve(TsdfGrid& grid, const Superquadric& sq, UpdateHistory* history = nullptr, int id = -1) {
  CarveStats stats;
  grid.raw_sdf.reset();
  // Outside this box srdf > tau >= -phi, so case 2 cannot change anything.
  const auto [lo, hi] = grid.index_range(world_aabb(sq, grid.tau));
  const auto t = static_cast<float>(grid.tau);
  for (int k = lo[2]; k <= hi[2]; ++k) {
    for (int j = lo[1]; j <= hi[1]; ++j) {
      for (int i = lo[0]; i <= hi[0]; ++i) {
        const std::size_t idx = grid.index(i, j, k);
        const float phi = grid.values[idx];
        if (!(phi < 0.0f)) continue;
        const double d = srdf(sq, grid.center(i, j, k));
        float next;
        if (d <= 0.0) {
          next = static_cast<float>(-d);
        } else {
          next = static_cast<float>(std::max(-d, static_cast<double>(phi)));
        }
        next = std::clamp(next, -t, t);
        if (next == phi) continue;
        grid.values[idx] = next;
        ++stats.touched;
        const bool flipped = !(next < 0.0f);
        if (flipped) ++stats.flipped;
        if (history != nullptr) {
          history->touched_by[idx] = id;
          if (flipped) history->claimed_by[idx] = id;
        }
      }
    }
  }
  return stats;
}

/// 6-connected components of {phi < 0}, largest first (ties: lowest seed
/// index). Voxels flagged in exclude are ignored.
inline std::vector<VoxelComponent> connected_components(const TsdfGrid& grid,
                                                        const std::vector<bool>* exclude = nullptr) {
  const int n = grid.resolution;
  std::vector<std::int32_t> label(grid.size(), -1);
  std::vector<VoxelComponent> comps;
  std::vector<std::size_t> stack;
  for (std::size_t seed = 0; seed < grid.size(); ++seed) {
    if (label[seed] >= 0 || !grid.interior(seed) || (exclude && (*exclude)[seed])) continue;
    VoxelComponent comp;
    comp.id = static_cast<int>(comps.size());
    label[seed] = comp.id;
    stack.assign(1, seed);
    while (!stack.empty()) {
      const std::size_t cur = stack.back();
      stack.pop_back();
      comp.voxel_indices.push_back(cur);
      const auto c = grid.coords(cur);
      static constexpr int off[6][3] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0}, {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
      for (const auto& o : off) {
        const int i = c[0] + o[0], j = c[1] + o[1], k = c[2] + o[2];
        if (i < 0 || j < 0 || k < 0 || i >= n || j >= n || k >= n) continue;
        const std::size_t nb = grid.index(i, j, k);
        if (label[nb] >= 0 || !grid.interior(nb) || (exclude && (*exclude)[nb])) continue;
        label[nb] = comp.id;
        stack.push_back(nb);
      }
    }
    std::sort(comp.voxel_indices.begin(), comp.voxel_indices.end());
    comps.push_back(std::move(comp));
  }
  std::stable_sort(comps.begin(), comps.end(),
                   [](const auto& a, const auto& b) { return a.voxel_indices.size() > b.voxel_indices.size(); });
  for (std::size_t i = 0; i < comps.size(); ++i) comps[i].id = static_cast<int>(i);
  return comps;
}

/// Voxel-index bounding box of a set of voxels, grown by pad and clipped.
inline std::pair<std::array<int, 3>, std::array<int, 3>> voxel_bounds(const TsdfGrid& grid,
                                                                      std::span<const std::size_t> voxels, int pad) {
  std::array<int, 3> lo{grid.resolution, grid.resolution, grid.resolution}, hi{-1, -1, -1};
  for (std::size_t idx : voxels) {
    const auto c = grid.coords(idx);
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], c[a]);
      hi[a] = std::max(hi[a], c[a]);
    }
  }
  for (int a = 0; a < 3; ++a) {
    lo[a] -= pad;
    hi[a] += pad;
  }
  return {lo, hi};
}

struct InscribedSphere {
  Vec3 center = Vec3::Zero();
  double radius = 0.0;
  std::size_t voxel = 0;
};

/// Deepest voxel of a component. Uses raw_sdf while it is valid; otherwise the
/// depth is the distance from the voxel center to the nearest voxel center
/// outside the component, minus half a voxel.
inline InscribedSphere max_inscribed_sphere(const VoxelComponent& comp, const TsdfGrid& grid) {
  if (comp.voxel_indices.empty()) throw Error(ErrorCode::InvalidArgument, "empty component");
  InscribedSphere best;
  if (grid.raw_sdf) {
    float deepest = std::numeric_limits<float>::infinity();
    for (std::size_t idx : comp.voxel_indices) {
      if ((*grid.raw_sdf)[idx] < deepest) {
        deepest = (*grid.raw_sdf)[idx];
        best.voxel = idx;
      }
    }
    best.center = grid.center(best.voxel);
    best.radius = std::abs(static_cast<double>(deepest));
    return best;
  }
  // Padded box: every boundary cell is outside the component.
  const auto [lo, hi] = voxel_bounds(grid, comp.voxel_indices, 1);
  const std::array<int, 3> dims{hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1};
  const std::size_t cells = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  auto local = [&](std::size_t idx) {
    const auto c = grid.coords(idx);
    return static_cast<std::size_t>(c[0] - lo[0]) + dims[0] * (static_cast<std::size_t>(c[1] - lo[1]) + dims[1] * static_cast<std::size_t>(c[2] - lo[2]));
  };
  std::unique_ptr<bool[]> outside(new bool[cells]);
  std::fill_n(outside.get(), cells, true);
  for (std::size_t idx : comp.voxel_indices) outside[local(idx)] = false;
  const auto d2 = squared_edt(std::span<const bool>(outside.get(), cells), dims);
  double best_d2 = -1.0;
  for (std::size_t idx : comp.voxel_indices) {
    const double v = d2[local(idx)];
    if (v > best_d2) {
      best_d2 = v;
      best.voxel = idx;
    }
  }
  best.center = grid.center(best.voxel);
  best.radius = (std::sqrt(best_d2) - 0.5) * grid.voxel_size;
  return best;
}

/// Clamped signed distance of a voxel occupancy mask. Distances run between
/// voxel centers, shifted by half a voxel so the zero level sits on the faces.
/// Only cells within the padded bounding box of the occupied set are computed;
/// everything else is +tau.
inline TsdfGrid tsdf_from_occupancy(const TsdfGrid& lattice, std::span<const std::size_t> occupied) {
  TsdfGrid out(lattice.resolution, lattice.origin, lattice.voxel_size, lattice.tau, static_cast<float>(lattice.tau));
  if (occupied.empty()) return out;
  const int pad = static_cast<int>(std::ceil(lattice.tau / lattice.voxel_size)) + 2;
  auto [lo, hi] = voxel_bounds(lattice, occupied, pad);
  const std::array<int, 3> dims{hi[0] - lo[0] + 1, hi[1] - lo[1] + 1, hi[2] - lo[2] + 1};
  const std::size_t cells = static_cast<std::size_t>(dims[0]) * dims[1] * dims[2];
  std::unique_ptr<bool[]> inside(new bool[cells]());
  std::unique_ptr<bool[]> outside(new bool[cells]);
  for (std::size_t c = 0; c < cells; ++c) outside[c] = true;
  auto local = [&](int i, int j, int k) {
    return static_cast<std::size_t>(i - lo[0]) + dims[0] * (static_cast<std::size_t>(j - lo[1]) + dims[1] * static_cast<std::size_t>(k - lo[2]));
  };
  for (std::size_t idx : occupied) {
    const auto c = lattice.coords(idx);
    inside[local(c[0], c[1], c[2])] = true;
    outside[local(c[0], c[1], c[2])] = false;
  }
  const auto to_inside = squared_edt(std::span<const bool>(inside.get(), cells), dims);
  const auto to_outside = squared_edt(std::span<const bool>(outside.get(), cells), dims);
  const double h = lattice.voxel_size;
  const auto t = static_cast<float>(lattice.tau);
  for (int k = std::max(0, lo[2]); k <= std::min(lattice.resolution - 1, hi[2]); ++k)
    for (int j = std::max(0, lo[1]); j <= std::min(lattice.resolution - 1, hi[1]); ++j)
      for (int i = std::max(0, lo[0]); i <= std::min(lattice.resolution - 1, hi[0]); ++i) {
        const std::size_t c = local(i, j, k);
        const double d = inside[c] ? -(std::sqrt(to_outside[c]) - 0.5) * h : (std::sqrt(to_inside[c]) - 0.5) * h;
        out.values[out.index(i, j, k)] = std::clamp(static_cast<float>(d), -t, t);
      }
  return out;
}

// ---------------------------------------------------------------------------
// Binary grid files.

inline constexpr char kGridMagic[4] = {'L', 'S', 'Q', 'G'};
inline constexpr char kLabelMagic[4] = {'L', 'S', 'Q', 'L'};
inline constexpr std::uint32_t kGridVersion = 1;

namespace detail {

struct GridHeader {
  std::uint32_t resolution = 0;
  float origin[3] = {};
  float voxel_size = 0;
  float tau = 0;
};

template <typename T>
void write_le(std::ostream& out, T v) {
  static_assert(std::endian::native == std::endian::little, "big-endian hosts not supported");
  out.write(reinterpret_cast<const char*>(&v), sizeof v);
}

template <typename T>
bool read_le(std::istream& in, T& v) {
  return static_cast<bool>(in.read(reinterpret_cast<char*>(&v), sizeof v));
}

inline void write_header(std::ostream& out, const char (&magic)[4], const TsdfGrid& g) {
  out.write(magic, 4);
  write_le(out, kGridVersion);
  write_le(out, static_cast<std::uint32_t>(g.resolution));
  for (int a = 0; a < 3; ++a) write_le(out, static_cast<float>(g.origin[a]));
  write_le(out, static_cast<float>(g.voxel_size));
  write_le(out, static_cast<float>(g.tau));
}

inline GridHeader read_header(std::istream& in, const char (&magic)[4]) {
  char got[4];
  std::uint32_t version = 0;
  GridHeader h;
  if (!in.read(got, 4) || !read_le(in, version) || !read_le(in, h.resolution) || !read_le(in, h.origin[0]) ||
      !read_le(in, h.origin[1]) || !read_le(in, h.origin[2]) || !read_le(in, h.voxel_size) || !read_le(in, h.tau))
    throw Error(ErrorCode::MalformedFile, "grid header truncated");
  if (std::memcmp(got, magic, 4) != 0) throw Error(ErrorCode::MalformedFile, "bad magic");
  if (version != kGridVersion) throw Error(ErrorCode::MalformedFile, "unsupported version " + std::to_string(version));
  if (h.resolution == 0 || h.resolution > 2048) throw Error(ErrorCode::MalformedFile, "implausible resolution");
  return h;
}

// Payload element count actually present after the header.
inline std::uint64_t remaining_bytes(std::istream& in) {
  const auto here = in.tellg();
  in.seekg(0, std::ios::end);
  const auto end = in.tellg();
  in.seekg(here);
  return static_cast<std::uint64_t>(end - here);
}

}  // namespace detail

inline void save_grid(const TsdfGrid& grid, std::ostream& out) {
  detail::write_header(out, kGridMagic, grid);
  out.write(reinterpret_cast<const char*>(grid.values.data()),
            static_cast<std::streamsize>(grid.values.size() * sizeof(float)));
}

inline void save_grid(const TsdfGrid& grid, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  save_grid(grid, out);
}

/// Reads a grid file. A payload whose length differs from resolution^3
/// floats is a ResolutionMismatch, unless it is a partial trailing value
/// (MalformedFile).
inline TsdfGrid load_grid(std::istream& in) {
  const auto h = detail::read_header(in, kGridMagic);
  const std::uint64_t n = h.resolution;
  const std::uint64_t expected = n * n * n;
  const std::uint64_t bytes = detail::remaining_bytes(in);
  if (bytes % sizeof(float) != 0) throw Error(ErrorCode::MalformedFile, "payload truncated mid-value");
  if (bytes / sizeof(float) != expected)
    throw Error(ErrorCode::ResolutionMismatch,
                "header says " + std::to_string(expected) + " values, payload has " + std::to_string(bytes / 4));
  TsdfGrid g;
  g.resolution = static_cast<int>(n);
  g.origin = Vec3(h.origin[0], h.origin[1], h.origin[2]);
  g.voxel_size = h.voxel_size;
  g.tau = h.tau;
  g.values.resize(expected);
  if (!in.read(reinterpret_cast<char*>(g.values.data()), static_cast<std::streamsize>(expected * sizeof(float))))
    throw Error(ErrorCode::MalformedFile, "payload truncated");
  return g;
}

inline TsdfGrid load_grid(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  return load_grid(in);
}

/// Label grid: same header with magic "LSQL", then resolution^3 u16 labels
/// (0 = exterior, partition id + 1 otherwise).
inline void save_labels(const TsdfGrid& lattice, std::span<const std::uint16_t> labels, std::ostream& out) {
  detail::write_header(out, kLabelMagic, lattice);
  out.write(reinterpret_cast<const char*>(labels.data()), static_cast<std::streamsize>(labels.size() * 2));
}

inline std::vector<std::uint16_t> load_labels(std::istream& in, TsdfGrid* lattice = nullptr) {
  const auto h = detail::read_header(in, kLabelMagic);
  const std::uint64_t expected = std::uint64_t(h.resolution) * h.resolution * h.resolution;
  if (detail::remaining_bytes(in) != expected * 2) throw Error(ErrorCode::ResolutionMismatch, "label payload size");
  std::vector<std::uint16_t> labels(expected);
  in.read(reinterpret_cast<char*>(labels.data()), static_cast<std::streamsize>(expected * 2));
  if (lattice) {
    *lattice = TsdfGrid(static_cast<int>(h.resolution), Vec3(h.origin[0], h.origin[1], h.origin[2]), h.voxel_size,
                        h.tau, h.tau);
  }
  return labels;
}

}  // namespace lightsq
