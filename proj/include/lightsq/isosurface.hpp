#pragma once

#include "lightsq/grid.hpp"

#include <unordered_map>

namespace lightsq {

/// Zero level set of the grid as a triangle mesh, by marching tetrahedra over
/// the cells between voxel centers. Every cell is cut into the same six
/// tetrahedra around its main diagonal, so neighboring cells agree on shared
/// faces and the mesh is closed wherever the set does not reach the border.
/// Values >= 0 count as outside; triangles face the outside.
inline TriangleMesh isosurface(const TsdfGrid& grid) {
  TriangleMesh mesh;
  const int n = grid.resolution;
  if (n < 2) return mesh;
  std::unordered_map<std::uint64_t, int> edge_vertex;
  auto vertex_on = [&](std::size_t a, std::size_t b) {
    if (a > b) std::swap(a, b);
    const std::uint64_t key = static_cast<std::uint64_t>(a) * grid.size() + b;
    if (auto it = edge_vertex.find(key); it != edge_vertex.end()) return it->second;
    const double fa = grid.values[a], fb = grid.values[b];
    const double t = fa / (fa - fb);
    const Vec3 pa = grid.center(a), pb = grid.center(b);
    const int id = static_cast<int>(mesh.vertices.size());
    mesh.vertices.push_back(pa + t * (pb - pa));
    edge_vertex.emplace(key, id);
    return id;
  };
  // Corner c of a cell is offset (c & 1, c >> 1 & 1, c >> 2 & 1). Each
  // tetrahedron walks from corner 0 to corner 7 along one axis order.
  static constexpr int kTets[6][4] = {{0, 1, 3, 7}, {0, 1, 5, 7}, {0, 2, 3, 7}, {0, 2, 6, 7}, {0, 4, 5, 7}, {0, 4, 6, 7}};
  std::size_t corner[8];
  for (int k = 0; k + 1 < n; ++k)
    for (int j = 0; j + 1 < n; ++j)
      for (int i = 0; i + 1 < n; ++i) {
        int inside = 0;
        for (int c = 0; c < 8; ++c) {
          corner[c] = grid.index(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1));
          inside += grid.values[corner[c]] < 0.0f;
        }
        if (inside == 0 || inside == 8) continue;
        for (const auto& tet : kTets) {
          std::size_t in[4], out[4];
          int ni = 0, no = 0;
          for (int v : tet) (grid.values[corner[v]] < 0.0f ? in[ni++] : out[no++]) = corner[v];
          if (ni == 0 || no == 0) continue;
          Vec3 toward = Vec3::Zero();
          for (int a = 0; a < no; ++a) toward += grid.center(out[a]) / no;
          for (int a = 0; a < ni; ++a) toward -= grid.center(in[a]) / ni;
          auto emit = [&](int a, int b, int c) {
            const Vec3 nrm = (mesh.vertices[b] - mesh.vertices[a]).cross(mesh.vertices[c] - mesh.vertices[a]);
            if (nrm.dot(toward) < 0.0) std::swap(b, c);
            mesh.triangles.push_back({a, b, c});
          };
          if (ni == 1 || no == 1) {
            const bool lone_in = ni == 1;
            const std::size_t apex = lone_in ? in[0] : out[0];
            const std::size_t* rest = lone_in ? out : in;
            emit(vertex_on(apex, rest[0]), vertex_on(apex, rest[1]), vertex_on(apex, rest[2]));
          } else {
            const int a = vertex_on(in[0], out[0]), b = vertex_on(in[0], out[1]);
            const int c = vertex_on(in[1], out[1]), d = vertex_on(in[1], out[0]);
            emit(a, b, c);
            emit(a, c, d);
          }
        }
      }
  return mesh;
}

}  // namespace lightsq
