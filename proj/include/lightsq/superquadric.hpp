#pragma once

#include "lightsq/core.hpp"

#include <array>
#include <cmath>
#include <numbers>

namespace lightsq {

inline constexpr double kEpsMin = 0.1;
inline constexpr double kEpsMax = 1.9;

/// Superquadric primitive: shape exponents, semi-axis scales and a rigid
/// transform g mapping local coordinates to world (x_world = R x_local + t).
struct Superquadric {
  double eps1 = 1.0;
  double eps2 = 1.0;
  Vec3 scale = Vec3::Constant(1.0);
  Quat rotation = Quat::Identity();
  Vec3 translation = Vec3::Zero();

  static Superquadric sphere(const Vec3& center, double radius) {
    Superquadric sq;
    sq.scale = Vec3::Constant(radius);
    sq.translation = center;
    return sq;
  }

  /// g^{-1} applied to a world point.
  Vec3 to_local(const Vec3& x) const { return rotation.conjugate() * (x - translation); }
  Vec3 to_world(const Vec3& p) const { return rotation * p + translation; }

  bool valid() const {
    return eps1 >= kEpsMin - 1e-12 && eps1 <= kEpsMax + 1e-12 && eps2 >= kEpsMin - 1e-12 &&
           eps2 <= kEpsMax + 1e-12 && (scale.array() > 0.0).all() &&
           std::abs(rotation.norm() - 1.0) < 1e-9 && translation.allFinite();
  }

  bool operator==(const Superquadric& o) const {
    return eps1 == o.eps1 && eps2 == o.eps2 && scale == o.scale &&
           rotation.coeffs() == o.rotation.coeffs() && translation == o.translation;
  }
};

/// sign(u) * |u|^p, defined in every octant.
inline double signed_pow(double u, double p) {
  return std::copysign(std::pow(std::abs(u), p), u);
}

namespace detail {

// Inside-outside function of an axis-aligned superquadric at a local point.
inline double implicit_local(double e1, double e2, const Vec3& a, const Vec3& p) {
  const double xx = std::pow(std::abs(p.x() / a.x()), 2.0 / e2);
  const double yy = std::pow(std::abs(p.y() / a.y()), 2.0 / e2);
  const double zz = std::pow(std::abs(p.z() / a.z()), 2.0 / e1);
  return std::pow(xx + yy, e2 / e1) + zz;
}

inline double srdf_local(double e1, double e2, const Vec3& a, const Vec3& p) {
  const double r = p.norm();
  if (r == 0.0) return -a.minCoeff();
  const double f = implicit_local(e1, e2, a, p);
  if (f == 0.0) return -a.minCoeff();
  return (1.0 - std::pow(f, -0.5 * e1)) * r;
}

}  // namespace detail

/// Inside-outside value f: < 1 inside, 1 on the surface, > 1 outside.
inline double implicit(const Superquadric& sq, const Vec3& x) {
  return detail::implicit_local(sq.eps1, sq.eps2, sq.scale, sq.to_local(x));
}

/// Signed radial distance. At the local origin the value is the limit along
/// the shortest semi-axis, -min(a).
inline double srdf(const Superquadric& sq, const Vec3& x) {
  return detail::srdf_local(sq.eps1, sq.eps2, sq.scale, sq.to_local(x));
}

inline double srdf_truncated(const Superquadric& sq, const Vec3& x, double tau) {
  return std::clamp(srdf(sq, x), -tau, tau);
}

/// Precomputed form of one primitive for evaluating srdf at many points.
class SrdfEvaluator {
 public:
  explicit SrdfEvaluator(const Superquadric& sq)
      : rt_(sq.rotation.toRotationMatrix().transpose()),
        t_(sq.translation),
        inv_a_(sq.scale.cwiseInverse()),
        p_xy_(2.0 / sq.eps2),
        p_z_(2.0 / sq.eps1),
        p_c_(sq.eps2 / sq.eps1),
        p_f_(-0.5 * sq.eps1),
        min_a_(sq.scale.minCoeff()) {}

  double operator()(const Vec3& x) const {
    const Vec3 p = rt_ * (x - t_);
    const double r = p.norm();
    if (r == 0.0) return -min_a_;
    const double xx = std::pow(std::abs(p.x() * inv_a_.x()), p_xy_);
    const double yy = std::pow(std::abs(p.y() * inv_a_.y()), p_xy_);
    const double zz = std::pow(std::abs(p.z() * inv_a_.z()), p_z_);
    const double f = std::pow(xx + yy, p_c_) + zz;
    if (f == 0.0) return -min_a_;
    return (1.0 - std::pow(f, p_f_)) * r;
  }

  double truncated(const Vec3& x, double tau) const { return std::clamp((*this)(x), -tau, tau); }

  /// Vectorized srdf over structure-of-arrays points, clamped to [-tau, tau].
  /// Powers go through exp/log, so results can differ from operator() in the
  /// last bits. T is float or double.
  template <typename T>
  void truncated_batch(const T* xs, const T* ys, const T* zs, std::size_t n, T tau, T* out) const {
    using Arr = Eigen::Array<T, Eigen::Dynamic, 1>;
    constexpr std::size_t kChunk = 128;
    alignas(64) T b0[kChunk], b1[kChunk], b2[kChunk], b3[kChunk], b4[kChunk];
    const auto r = rt_.cast<T>().eval();
    const auto t = t_.cast<T>().eval();
    const auto ia = inv_a_.cast<T>().eval();
    const T pxy = static_cast<T>(p_xy_), pz = static_cast<T>(p_z_), pc = static_cast<T>(p_c_), pf = static_cast<T>(p_f_);
    const T inner = std::clamp(static_cast<T>(-min_a_), -tau, tau);
    for (std::size_t s = 0; s < n; s += kChunk) {
      const auto m = static_cast<Eigen::Index>(std::min(kChunk, n - s));
      Eigen::Map<const Arr> X(xs + s, m), Y(ys + s, m), Z(zs + s, m);
      Eigen::Map<Arr> lx(b0, m), ly(b1, m), lz(b2, m), f(b3, m), rad(b4, m);
      Eigen::Map<Arr> o(out + s, m);
      lx = (X - t.x()) * r(0, 0) + (Y - t.y()) * r(0, 1) + (Z - t.z()) * r(0, 2);
      ly = (X - t.x()) * r(1, 0) + (Y - t.y()) * r(1, 1) + (Z - t.z()) * r(1, 2);
      lz = (X - t.x()) * r(2, 0) + (Y - t.y()) * r(2, 1) + (Z - t.z()) * r(2, 2);
      rad = (lx.square() + ly.square() + lz.square()).sqrt();
      f = ((lx * ia.x()).abs().log() * pxy).exp() + ((ly * ia.y()).abs().log() * pxy).exp();
      f = (f.log() * pc).exp() + ((lz * ia.z()).abs().log() * pz).exp();
      o = ((T(1) - (f.log() * pf).exp()) * rad).max(-tau).min(tau);
      for (Eigen::Index i = 0; i < m; ++i)
        if (rad[i] == T(0) || f[i] == T(0)) o[i] = inner;
    }
  }

 private:
  Mat3 rt_;
  Vec3 t_;
  Vec3 inv_a_;
  double p_xy_, p_z_, p_c_, p_f_, min_a_;
};

/// World-space box containing {f <= 1}, grown by margin on every face.
inline Aabb world_aabb(const Superquadric& sq, double margin) {
  const Mat3 r = sq.rotation.toRotationMatrix();
  const Vec3 half = r.cwiseAbs() * sq.scale;
  return {sq.translation - half - Vec3::Constant(margin), sq.translation + half + Vec3::Constant(margin)};
}

struct TriangleMesh {
  std::vector<Vec3> vertices;
  std::vector<std::array<int, 3>> triangles;
};

/// Watertight UV triangulation of the superquadric surface. Poles are single
/// vertices; there are subdivisions - 1 latitude rings of 2 * subdivisions
/// vertices each.
inline TriangleMesh tessellate(const Superquadric& sq, int subdivisions) {
  if (subdivisions < 2) throw Error(ErrorCode::InvalidArgument, "tessellate needs subdivisions >= 2");
  const int rings = subdivisions - 1;
  const int lon = 2 * subdivisions;
  const double pi = std::numbers::pi;
  TriangleMesh mesh;
  mesh.vertices.reserve(2 + rings * lon);

  auto point = [&](double eta, double omega) {
    const double ce = signed_pow(std::cos(eta), sq.eps1);
    const double se = signed_pow(std::sin(eta), sq.eps1);
    const double cw = signed_pow(std::cos(omega), sq.eps2);
    const double sw = signed_pow(std::sin(omega), sq.eps2);
    const Vec3 local(sq.scale.x() * ce * cw, sq.scale.y() * ce * sw, sq.scale.z() * se);
    return sq.to_world(local);
  };

  mesh.vertices.push_back(sq.to_world(Vec3(0, 0, -sq.scale.z())));
  for (int r = 1; r <= rings; ++r) {
    const double eta = -pi / 2 + pi * r / subdivisions;
    for (int j = 0; j < lon; ++j) {
      const double omega = -pi + 2.0 * pi * j / lon;
      mesh.vertices.push_back(point(eta, omega));
    }
  }
  mesh.vertices.push_back(sq.to_world(Vec3(0, 0, sq.scale.z())));

  const int south = 0;
  const int north = static_cast<int>(mesh.vertices.size()) - 1;
  auto ring_vertex = [&](int r, int j) { return 1 + (r - 1) * lon + (j % lon); };
  for (int j = 0; j < lon; ++j) mesh.triangles.push_back({south, ring_vertex(1, j + 1), ring_vertex(1, j)});
  for (int r = 1; r < rings; ++r) {
    for (int j = 0; j < lon; ++j) {
      const int a = ring_vertex(r, j), b = ring_vertex(r, j + 1);
      const int c = ring_vertex(r + 1, j), d = ring_vertex(r + 1, j + 1);
      mesh.triangles.push_back({a, b, d});
      mesh.triangles.push_back({a, d, c});
    }
  }
  for (int j = 0; j < lon; ++j) mesh.triangles.push_back({north, ring_vertex(rings, j), ring_vertex(rings, j + 1)});
  return mesh;
}

/// Euler angles (rx, ry, rz) with R = Rz(rz) * Ry(ry) * Rx(rx).
inline Vec3 to_euler_xyz(const Quat& q) {
  const Vec3 zyx = q.toRotationMatrix().eulerAngles(2, 1, 0);
  return {zyx[2], zyx[1], zyx[0]};
}

inline Quat from_euler_xyz(const Vec3& e) {
  return Quat(Eigen::AngleAxisd(e.z(), Vec3::UnitZ()) * Eigen::AngleAxisd(e.y(), Vec3::UnitY()) *
              Eigen::AngleAxisd(e.x(), Vec3::UnitX()))
      .normalized();
}

}  // namespace lightsq
