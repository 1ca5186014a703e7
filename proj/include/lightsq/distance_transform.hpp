#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <vector>

namespace lightsq {

namespace detail {

// Felzenszwalb-Huttenlocher lower envelope of parabolas, in place over a
// strided line of n samples.
inline void edt_1d(double* f, std::size_t n, std::size_t stride, std::vector<double>& d, std::vector<int>& v,
                   std::vector<double>& z) {
  constexpr double inf = std::numeric_limits<double>::infinity();
  d.resize(n);
  v.resize(n);
  z.resize(n + 1);
  int k = 0;
  std::size_t first = 0;
  while (first < n && !std::isfinite(f[first * stride])) ++first;
  if (first == n) return;  // line has no features; stays infinite
  v[0] = static_cast<int>(first);
  z[0] = -inf;
  z[1] = inf;
  for (std::size_t q = first + 1; q < n; ++q) {
    const double fq = f[q * stride];
    if (!std::isfinite(fq)) continue;
    double s;
    while (true) {
      const int p = v[k];
      const double fp = f[p * stride];
      s = ((fq + double(q) * double(q)) - (fp + double(p) * double(p))) / (2.0 * (double(q) - double(p)));
      if (s <= z[k] && k > 0) {
        --k;
        continue;
      }
      break;
    }
    ++k;
    v[k] = static_cast<int>(q);
    z[k] = s;
    z[k + 1] = inf;
  }
  k = 0;
  for (std::size_t q = 0; q < n; ++q) {
    while (z[k + 1] < double(q)) ++k;
    const double dq = double(q) - v[k];
    d[q] = dq * dq + f[v[k] * stride];
  }
  for (std::size_t q = 0; q < n; ++q) f[q * stride] = d[q];
}

}  // namespace detail

/// Exact squared Euclidean distance (in voxel units) from every cell of a
/// dims[0] x dims[1] x dims[2] box (x fastest) to the nearest feature cell.
/// Cells with no feature anywhere get +inf.
inline std::vector<double> squared_edt(std::span<const bool> feature, std::array<int, 3> dims) {
  const std::size_t nx = dims[0], ny = dims[1], nz = dims[2];
  std::vector<double> f(feature.size());
  for (std::size_t i = 0; i < f.size(); ++i) f[i] = feature[i] ? 0.0 : std::numeric_limits<double>::infinity();
  std::vector<double> d;
  std::vector<int> v;
  std::vector<double> z;
  for (std::size_t k = 0; k < nz; ++k)
    for (std::size_t j = 0; j < ny; ++j) detail::edt_1d(&f[nx * (j + ny * k)], nx, 1, d, v, z);
  for (std::size_t k = 0; k < nz; ++k)
    for (std::size_t i = 0; i < nx; ++i) detail::edt_1d(&f[i + nx * ny * k], ny, nx, d, v, z);
  for (std::size_t j = 0; j < ny; ++j)
    for (std::size_t i = 0; i < nx; ++i) detail::edt_1d(&f[i + nx * j], nz, nx * ny, d, v, z);
  return f;
}

}  // namespace lightsq
