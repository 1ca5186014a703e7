#pragma once

#include "lightsq/lightsq.hpp"

#include <functional>
#include <random>

namespace lightsq::testing {

using Sdf = std::function<double(const Vec3&)>;

inline double box_sdf(const Vec3& p, const Vec3& c, const Vec3& half) {
  const Vec3 d = (p - c).cwiseAbs() - half;
  return std::min(d.maxCoeff(), 0.0) + d.cwiseMax(0.0).norm();
}

inline double ball_sdf(const Vec3& p, const Vec3& c, double r) { return (p - c).norm() - r; }

inline double rod_sdf(const Vec3& p, const Vec3& a, const Vec3& b, double r) {
  const Vec3 ab = b - a;
  const double t = std::clamp((p - a).dot(ab) / ab.squaredNorm(), 0.0, 1.0);
  return (p - a - t * ab).norm() - r;
}

inline Sdf dumbbell() {
  return [](const Vec3& p) {
    return std::min({ball_sdf(p, {-0.5, 0, 0}, 0.35), ball_sdf(p, {0.5, 0, 0}, 0.35), rod_sdf(p, {-0.5, 0, 0}, {0.5, 0, 0}, 0.1)});
  };
}

inline Sdf lshape() {
  return [](const Vec3& p) { return std::min(box_sdf(p, {0, -0.4, 0}, {0.6, 0.2, 0.3}), box_sdf(p, {-0.4, 0.2, 0}, {0.2, 0.4, 0.3})); };
}

/// Fixed synthetic suite: dumbbells, L-shapes, sphere clusters, boxes with
/// bumps, a cross bar and a ball-box-rod chain.
inline Sdf suite_shape(int s) {
  switch (s) {
    case 0: return dumbbell();
    case 1:
      return [](const Vec3& p) {
        return std::min({ball_sdf(p, {0, -0.55, 0.1}, 0.3), ball_sdf(p, {0, 0.5, -0.1}, 0.4),
                         rod_sdf(p, {0, -0.55, 0.1}, {0, 0.5, -0.1}, 0.12)});
      };
    case 2:
      return [](const Vec3& p) { return std::min(box_sdf(p, {-0.3, -0.3, 0}, {0.55, 0.15, 0.2}), box_sdf(p, {0.1, 0.25, 0}, {0.15, 0.45, 0.2})); };
    case 3:
      return [](const Vec3& p) { return std::min(box_sdf(p, {0, -0.5, 0}, {0.6, 0.2, 0.3}), box_sdf(p, {-0.45, 0.15, 0}, {0.15, 0.6, 0.3})); };
    case 4:
      return [](const Vec3& p) {
        return std::min({ball_sdf(p, {0, 0, 0}, 0.4), ball_sdf(p, {0.55, 0, 0}, 0.25), ball_sdf(p, {-0.2, 0.55, 0}, 0.25),
                         ball_sdf(p, {0, -0.2, 0.6}, 0.2)});
      };
    case 5:
      return [](const Vec3& p) {
        return std::min({ball_sdf(p, {-0.4, -0.4, 0}, 0.3), ball_sdf(p, {0.4, -0.4, 0}, 0.3), ball_sdf(p, {0, 0.35, 0}, 0.35)});
      };
    case 6:
      return [](const Vec3& p) {
        return std::min({box_sdf(p, {0, 0, 0}, {0.6, 0.4, 0.3}), ball_sdf(p, {0, 0, 0.3}, 0.2), ball_sdf(p, {0.6, 0.1, 0}, 0.15)});
      };
    case 7:
      return [](const Vec3& p) {
        return std::min({box_sdf(p, {0, 0, -0.2}, {0.7, 0.5, 0.15}), box_sdf(p, {0.3, 0.2, 0.1}, {0.12, 0.12, 0.2}),
                         box_sdf(p, {-0.35, -0.2, 0.05}, {0.15, 0.1, 0.12})});
      };
    case 8:
      return [](const Vec3& p) { return std::min(box_sdf(p, {0, 0, 0}, {0.15, 0.15, 0.7}), box_sdf(p, {0, 0, 0.55}, {0.6, 0.12, 0.12})); };
    default:
      return [](const Vec3& p) {
        return std::min({ball_sdf(p, {-0.55, 0.2, 0}, 0.3), box_sdf(p, {0.2, 0, 0}, {0.45, 0.25, 0.25}),
                         rod_sdf(p, {-0.55, 0.2, 0}, {0.2, 0, 0}, 0.1)});
      };
  }
}

inline constexpr int kSuiteSize = 10;

/// Rigidly rotated and uniformly scaled copy of an sdf.
inline Sdf posed(Sdf f, const Vec3& euler, double scale) {
  const Mat3 r = from_euler_xyz(euler).toRotationMatrix();
  return [f = std::move(f), r, scale](const Vec3& p) { return scale * f(r.transpose() * p / scale); };
}

/// Suite shape in a generic pose, so that no part lines up with the lattice.
inline Sdf tilted_suite_shape(int s) { return posed(suite_shape(s), Vec3(0.35, 0.25, 0.45), 0.9); }

/// Grid whose field is the exact srdf of one primitive.
inline TsdfGrid grid_of(const Superquadric& sq, int n) {
  return grid_from_sdf(n, [&](const Vec3& p) { return srdf(sq, p); });
}

inline Quat random_rotation(std::mt19937_64& rng) {
  std::normal_distribution<double> g;
  Quat q(g(rng), g(rng), g(rng), g(rng));
  q.normalize();
  return q;
}

inline Superquadric random_superquadric(std::mt19937_64& rng, double eps_lo, double eps_hi, double a_lo, double a_hi,
                                        double t_max) {
  std::uniform_real_distribution<double> e(eps_lo, eps_hi), a(a_lo, a_hi), t(-t_max, t_max);
  Superquadric sq;
  sq.eps1 = e(rng);
  sq.eps2 = e(rng);
  sq.scale = Vec3(a(rng), a(rng), a(rng));
  sq.rotation = random_rotation(rng);
  sq.translation = Vec3(t(rng), t(rng), t(rng));
  return sq;
}

/// IoU of two primitives on the centers of a lattice.
inline double primitive_iou(const Superquadric& a, const Superquadric& b, const TsdfGrid& lattice) {
  std::size_t both = 0, either = 0;
  for (std::size_t i = 0; i < lattice.size(); ++i) {
    const Vec3 x = lattice.center(i);
    const bool in_a = srdf(a, x) < 0.0, in_b = srdf(b, x) < 0.0;
    both += in_a && in_b;
    either += in_a || in_b;
  }
  return either == 0 ? 0.0 : static_cast<double>(both) / static_cast<double>(either);
}

}  // namespace lightsq::testing
