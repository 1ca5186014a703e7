// Voxelize a tessellated sphere and abstract it. Expect one primitive.

#include "lightsq/lightsq.hpp"

#include <cstdio>

int main() {
  using namespace lightsq;

  const TriangleMesh mesh = tessellate(Superquadric::sphere(Vec3(1.0, 2.0, 3.0), 5.0), 48);
  VoxelizeOptions opt;
  opt.resolution = 64;
  const VoxelizedMesh vox = voxelize_mesh(mesh, opt);

  const RunResult result = run(vox.grid, PipelineConfig{}, vox.normalization);
  for (const auto& p : result.abstraction.primitives) {
    const Vec3 c = vox.normalization.invert(p.sq.translation);
    std::printf("id %d  %-9s eps (%.2f, %.2f)  scale (%.3f, %.3f, %.3f)  center (%.2f, %.2f, %.2f)\n", p.id,
                to_string(p.stage), p.sq.eps1, p.sq.eps2, p.sq.scale.x(), p.sq.scale.y(), p.sq.scale.z(), c.x(), c.y(),
                c.z());
  }

  const MetricReport m = evaluate(vox.grid, result.abstraction);
  std::printf("iou %.4f  cd %.5f  emd %.5f\n", m.voxel_iou, m.cd, m.emd);
  return 0;
}
