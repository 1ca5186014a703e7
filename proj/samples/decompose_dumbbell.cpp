// Saliency planes and merged partitions of a dumbbell.

#include "lightsq/lightsq.hpp"

#include <cstdio>

namespace {

double dumbbell(const lightsq::Vec3& p) {
  using lightsq::Vec3;
  const double left = (p - Vec3(-0.5, 0.0, 0.0)).norm() - 0.35;
  const double right = (p - Vec3(0.5, 0.0, 0.0)).norm() - 0.35;
  const double t = std::clamp(p.x(), -0.5, 0.5);
  const double bar = (p - Vec3(t, 0.0, 0.0)).norm() - 0.1;
  return std::min({left, right, bar});
}

}  // namespace

int main() {
  using namespace lightsq;

  const TsdfGrid grid = grid_from_sdf(100, dumbbell);
  const DecompConfig cfg;

  std::printf("planes:\n");
  for (const auto& pl : select_planes(grid, cfg))
    std::printf("  axis %c  index %2d  x = %+.3f  score %.3f\n", "xyz"[pl.axis], pl.index,
                grid.origin[pl.axis] + pl.index * grid.voxel_size, pl.score);

  const auto parts = decompose(grid, cfg);
  std::printf("%zu partitions after merging\n", parts.size());
  for (const auto& p : parts) {
    std::printf("  partition %d: %zu voxels, neighbors", p.id, p.voxels.size());
    for (const auto& [other, pairs] : p.neighbors) std::printf(" %d(%zu)", other, pairs.size());
    std::printf("\n");
  }
  return 0;
}
