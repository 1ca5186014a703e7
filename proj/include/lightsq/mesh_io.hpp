#pragma once

#include "lightsq/superquadric.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <tuple>

namespace lightsq {

/// Uniform scale + translation taking input coordinates into the normalized
/// frame: x_norm = scale * x + translate.
struct Normalization {
  double scale = 1.0;
  Vec3 translate = Vec3::Zero();

  Vec3 apply(const Vec3& x) const { return scale * x + translate; }
  Vec3 invert(const Vec3& x) const { return (x - translate) / scale; }
  bool operator==(const Normalization& o) const { return scale == o.scale && translate == o.translate; }
};

/// Fit the mesh bounding box inside [-fill, fill]^3, centered at the origin.
inline Normalization normalization_for(const TriangleMesh& mesh, double fill) {
  if (mesh.vertices.empty()) throw Error(ErrorCode::EmptyMesh, "mesh has no vertices");
  Vec3 lo = mesh.vertices.front(), hi = lo;
  for (const auto& v : mesh.vertices) {
    lo = lo.cwiseMin(v);
    hi = hi.cwiseMax(v);
  }
  const double half = 0.5 * (hi - lo).maxCoeff();
  Normalization n;
  n.scale = half > 0.0 ? fill / half : 1.0;
  n.translate = -n.scale * 0.5 * (lo + hi);
  return n;
}

inline TriangleMesh apply(const Normalization& n, TriangleMesh mesh) {
  for (auto& v : mesh.vertices) v = n.apply(v);
  return mesh;
}

/// Every undirected edge shared by exactly two triangles.
inline bool is_watertight(const TriangleMesh& mesh) {
  std::map<std::pair<int, int>, int> edges;
  for (const auto& t : mesh.triangles) {
    for (int e = 0; e < 3; ++e) {
      int a = t[e], b = t[(e + 1) % 3];
      if (a > b) std::swap(a, b);
      ++edges[{a, b}];
    }
  }
  if (edges.empty()) return false;
  return std::all_of(edges.begin(), edges.end(), [](const auto& kv) { return kv.second == 2; });
}

/// Merge bitwise-identical vertex positions (STL files repeat them per face).
inline TriangleMesh weld_vertices(const TriangleMesh& in) {
  TriangleMesh out;
  std::map<std::tuple<double, double, double>, int> index;
  std::vector<int> remap(in.vertices.size());
  for (std::size_t i = 0; i < in.vertices.size(); ++i) {
    const auto& v = in.vertices[i];
    auto [it, inserted] = index.try_emplace({v.x(), v.y(), v.z()}, static_cast<int>(out.vertices.size()));
    if (inserted) out.vertices.push_back(v);
    remap[i] = it->second;
  }
  for (const auto& t : in.triangles) {
    std::array<int, 3> r{remap[t[0]], remap[t[1]], remap[t[2]]};
    if (r[0] == r[1] || r[1] == r[2] || r[0] == r[2]) continue;
    out.triangles.push_back(r);
  }
  return out;
}

inline TriangleMesh read_obj(std::istream& in) {
  TriangleMesh mesh;
  std::string line;
  while (std::getline(in, line)) {
    std::istringstream ls(line);
    std::string tag;
    ls >> tag;
    if (tag == "v") {
      Vec3 v;
      if (!(ls >> v.x() >> v.y() >> v.z())) throw Error(ErrorCode::MalformedFile, "bad OBJ vertex: " + line);
      mesh.vertices.push_back(v);
    } else if (tag == "f") {
      std::vector<int> poly;
      std::string tok;
      while (ls >> tok) {
        const int idx = std::stoi(tok.substr(0, tok.find('/')));
        const int n = static_cast<int>(mesh.vertices.size());
        const int resolved = idx > 0 ? idx - 1 : n + idx;
        if (resolved < 0 || resolved >= n) throw Error(ErrorCode::MalformedFile, "OBJ face index out of range");
        poly.push_back(resolved);
      }
      for (std::size_t k = 1; k + 1 < poly.size(); ++k) mesh.triangles.push_back({poly[0], poly[k], poly[k + 1]});
    }
  }
  return mesh;
}

inline TriangleMesh read_stl_binary(std::istream& in) {
  char header[80];
  std::uint32_t count = 0;
  if (!in.read(header, 80) || !in.read(reinterpret_cast<char*>(&count), 4))
    throw Error(ErrorCode::MalformedFile, "STL header truncated");
  TriangleMesh soup;
  soup.vertices.reserve(3 * count);
  for (std::uint32_t i = 0; i < count; ++i) {
    float rec[12];
    std::uint16_t attr;
    if (!in.read(reinterpret_cast<char*>(rec), sizeof rec) || !in.read(reinterpret_cast<char*>(&attr), 2))
      throw Error(ErrorCode::MalformedFile, "STL payload truncated");
    const int base = static_cast<int>(soup.vertices.size());
    for (int v = 0; v < 3; ++v) soup.vertices.emplace_back(rec[3 + 3 * v], rec[4 + 3 * v], rec[5 + 3 * v]);
    soup.triangles.push_back({base, base + 1, base + 2});
  }
  return weld_vertices(soup);
}

/// Loads .obj or binary .stl by extension.
inline TriangleMesh load_mesh(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  auto ends_with = [&](const char* ext) {
    const std::size_t n = std::strlen(ext);
    if (path.size() < n) return false;
    std::string tail = path.substr(path.size() - n);
    std::transform(tail.begin(), tail.end(), tail.begin(), ::tolower);
    return tail == ext;
  };
  TriangleMesh mesh;
  if (ends_with(".obj")) {
    mesh = read_obj(in);
  } else if (ends_with(".stl")) {
    mesh = read_stl_binary(in);
  } else {
    throw Error(ErrorCode::Io, "unsupported mesh extension: " + path);
  }
  if (mesh.triangles.empty()) throw Error(ErrorCode::EmptyMesh, path + " has no triangles");
  return mesh;
}

inline void write_obj(std::ostream& out, const TriangleMesh& mesh) {
  out.precision(9);
  for (const auto& v : mesh.vertices) out << "v " << v.x() << ' ' << v.y() << ' ' << v.z() << '\n';
  for (const auto& t : mesh.triangles) out << "f " << t[0] + 1 << ' ' << t[1] + 1 << ' ' << t[2] + 1 << '\n';
}

inline void write_stl_binary(std::ostream& out, const TriangleMesh& mesh) {
  char header[80] = {};
  out.write(header, 80);
  const auto count = static_cast<std::uint32_t>(mesh.triangles.size());
  out.write(reinterpret_cast<const char*>(&count), 4);
  for (const auto& t : mesh.triangles) {
    const Vec3 n = (mesh.vertices[t[1]] - mesh.vertices[t[0]]).cross(mesh.vertices[t[2]] - mesh.vertices[t[0]]).normalized();
    float rec[12] = {float(n.x()), float(n.y()), float(n.z())};
    for (int v = 0; v < 3; ++v)
      for (int c = 0; c < 3; ++c) rec[3 + 3 * v + c] = static_cast<float>(mesh.vertices[t[v]][c]);
    out.write(reinterpret_cast<const char*>(rec), sizeof rec);
    const std::uint16_t attr = 0;
    out.write(reinterpret_cast<const char*>(&attr), 2);
  }
}

inline void append(TriangleMesh& dst, const TriangleMesh& src) {
  const int base = static_cast<int>(dst.vertices.size());
  dst.vertices.insert(dst.vertices.end(), src.vertices.begin(), src.vertices.end());
  for (const auto& t : src.triangles) dst.triangles.push_back({t[0] + base, t[1] + base, t[2] + base});
}

}  // namespace lightsq
