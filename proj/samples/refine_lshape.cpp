// Refine a single coarse box fitted over an L-shaped region.

#include "lightsq/lightsq.hpp"

#include <cstdio>

using namespace lightsq;

namespace {

double box(const Vec3& p, const Vec3& c, const Vec3& half) {
  const Vec3 d = (p - c).cwiseAbs() - half;
  return std::min(d.maxCoeff(), 0.0) + d.cwiseMax(0.0).norm();
}

double lshape(const Vec3& p) {
  return std::min(box(p, Vec3(0.0, -0.4, 0.0), Vec3(0.6, 0.2, 0.3)), box(p, Vec3(-0.4, 0.2, 0.0), Vec3(0.2, 0.4, 0.3)));
}

}  // namespace

int main() {
  const TsdfGrid grid = grid_from_sdf(100, lshape);

  Abstraction abs;
  abs.resolution = grid.resolution;
  abs.tau = grid.tau;
  Superquadric coarse;
  coarse.eps1 = coarse.eps2 = 0.3;
  coarse.scale = Vec3(0.6, 0.6, 0.3);
  coarse.translation = Vec3(0.0, 0.0, 0.0);
  abs.primitives.push_back({coarse, 0, Stage::Block, std::nullopt});

  const Aabb region = world_aabb(coarse, 0.0);
  const double before = voxel_iou(grid, shapes_of(abs), region);

  const RefineResult r = multiscale_refine(abs, grid, 0, 2);
  const double after = voxel_iou(grid, shapes_of(r.abstraction), region);

  std::printf("children:");
  for (int id : r.children) std::printf(" %d", id);
  std::printf("\nlocal iou %.4f -> %.4f\n", before, after);
  return 0;
}
