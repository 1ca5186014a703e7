#include "shapes.hpp"

#include <gtest/gtest.h>

using namespace lightsq;
using namespace lightsq::testing;

TEST(LambdaWeight, OutsideVoxelIsOne) {
  const FitConfig cfg;
  EXPECT_EQ(lambda_weight(0.01, -0.01, 1e-4, cfg), 1.0);
  EXPECT_EQ(lambda_weight(0.0, 5.0, 1e-4, cfg), 1.0);
}

TEST(LambdaWeight, InsidePerfectMatchIsPrior) {
  const FitConfig cfg;
  // C (1 - w) / w = 49, kernel 1.
  EXPECT_NEAR(lambda_weight(-0.01, -0.01, 1e-4, cfg), 1.0 / 50.0, 1e-15);
}

TEST(LambdaWeight, InsideLargeMismatchVanishes) {
  const FitConfig cfg;
  EXPECT_LT(lambda_weight(-0.02, 0.02, 1e-6, cfg), 1e-100);
  EXPECT_GE(lambda_weight(-0.02, 0.02, 1e-6, cfg), 0.0);
}

TEST(LambdaWeight, InUnitIntervalProperty) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> v(-0.05, 0.05), s(1e-5, 1e-2), w(0.01, 0.99), c(0.1, 10.0);
  for (int t = 0; t < 10000; ++t) {
    FitConfig cfg;
    cfg.w = w(rng);
    cfg.c = c(rng);
    const double l = lambda_weight(v(rng), v(rng), s(rng), cfg);
    ASSERT_GE(l, 0.0);
    ASSERT_LE(l, 1.0);
  }
}

TEST(LambdaWeights, MatchesScalarFormula) {
  const TsdfGrid g = grid_from_sdf(16, [](const Vec3& p) { return p.norm() - 0.5; });
  const Superquadric s = Superquadric::sphere(Vec3(0.05, 0, 0), 0.45);
  std::vector<std::size_t> voxels(g.size());
  std::iota(voxels.begin(), voxels.end(), std::size_t{0});
  const FitConfig cfg;
  const double sigma2 = 2.0 * g.tau * g.tau;
  const auto l = lambda_weights(g, s, cfg, voxels, sigma2);
  for (std::size_t i = 0; i < g.size(); ++i) {
    const double target = g.values[i];
    const double pred = srdf_truncated(s, g.center(i), g.tau);
    const double p = std::exp(-(target - pred) * (target - pred) / (2 * sigma2));
    const double expected = target < 0 ? p / (49.0 + p) : 1.0;
    EXPECT_NEAR(l[i], expected, 1e-12);
  }
}

TEST(UpdateSigma, FloorAndHandCases) {
  const double tau = 0.02;
  const std::vector<double> zeros(5, 0.0), ones(5, 1.0);
  EXPECT_DOUBLE_EQ(update_sigma(zeros, ones, tau), tau * tau);
  const std::vector<double> one_r{3 * tau}, one_w{1.0};
  EXPECT_NEAR(update_sigma(one_r, one_w, tau), 9 * tau * tau, 1e-15);
  const std::vector<double> mixed_r{0.0, 2 * tau}, mixed_w{1.0, 1.0};
  EXPECT_NEAR(update_sigma(mixed_r, mixed_w, tau), 2 * tau * tau, 1e-15);
}

TEST(UpdateSigma, ZeroWeightsAreDegenerate) {
  const std::vector<double> r{1.0, 2.0}, w{0.0, 0.0};
  try {
    update_sigma(r, w, 0.02);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DegenerateWeights);
  }
}

TEST(JacobianProbe, SphereOnAxis) {
  const Superquadric s = Superquadric::sphere(Vec3::Zero(), 0.3);
  const ParamVec j = clamped_jacobian_probe(s, Vec3(0.31, 0, 0), 0.05);
  EXPECT_NEAR(j[2], -1.0, 1e-6);  // d/d a_x
  EXPECT_NEAR(j[3], 0.0, 1e-9);   // d/d a_y
  EXPECT_NEAR(j[4], 0.0, 1e-9);   // d/d a_z
  EXPECT_NEAR(j[8], -1.0, 1e-6);  // d/d t_x
  for (int p = 5; p < 8; ++p) EXPECT_NEAR(j[p], 0.0, 1e-9);
}

TEST(JacobianProbe, SaturatedRegionIsZero) {
  const Superquadric s = Superquadric::sphere(Vec3::Zero(), 0.3);
  EXPECT_TRUE(clamped_jacobian_probe(s, Vec3(0.9, 0, 0), 0.05).isZero());
}

TEST(JacobianProbe, RichardsonAgreement) {
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> u(-0.8, 0.8);
  int compared = 0;
  for (int t = 0; t < 200 && compared < 100; ++t) {
    const Superquadric s = random_superquadric(rng, 0.4, 1.6, 0.2, 0.5, 0.1);
    const Vec3 x = s.to_world(Vec3(u(rng), u(rng), u(rng)).normalized() * 0.9 * s.scale.minCoeff());
    const double tau = 1.0;  // wide enough that nothing saturates
    const ParamVec full = clamped_jacobian_probe(s, x, tau);
    const ParamVec half = clamped_jacobian_probe(s, x, tau, 0.5);
    for (int p = 0; p < kParamCount; ++p) {
      const double scale = std::max(1e-3, std::abs(half[p]));
      EXPECT_LE(std::abs(full[p] - half[p]), 1e-3 * scale) << "param " << p;
    }
    ++compared;
  }
  EXPECT_EQ(compared, 100);
}

TEST(FitOne, SphereFromSmallerSphere) {
  const TsdfGrid g = grid_from_sdf(64, [](const Vec3& p) { return p.norm() - 0.5; });
  const FitResult r = fit_one(g, Superquadric::sphere(Vec3::Zero(), 0.3), FitConfig{});
  for (int a = 0; a < 3; ++a) EXPECT_NEAR(r.sq.scale[a], 0.5, 1.5 * g.voxel_size);
  EXPECT_NEAR(r.sq.eps1, 1.0, 0.15);
  EXPECT_NEAR(r.sq.eps2, 1.0, 0.15);
  EXPECT_TRUE(r.sq.valid());
  EXPECT_GE(r.final_residual, 0.0);
}

TEST(FitOne, RecoversExactSuperquadric) {
  Superquadric truth;
  truth.eps1 = 0.4;
  truth.eps2 = 1.2;
  truth.scale = Vec3(0.5, 0.3, 0.25);
  truth.rotation = from_euler_xyz(Vec3(0.2, 0.5, -0.3));
  truth.translation = Vec3(0.1, -0.05, 0.0);
  const TsdfGrid g = grid_of(truth, 64);
  const auto comp = connected_components(g).front();
  const auto init = max_inscribed_sphere(comp, g);
  const FitResult r = fit_one(g, Superquadric::sphere(init.center, init.radius), FitConfig{});
  EXPECT_GE(primitive_iou(r.sq, truth, g), 0.95);
}

TEST(FitOne, EmptyNeighborhood) {
  const TsdfGrid g = grid_from_sdf(32, [](const Vec3& p) { return ball_sdf(p, {-0.6, 0, 0}, 0.2); });
  try {
    fit_one(g, Superquadric::sphere(Vec3(0.6, 0.6, 0.6), 0.1), FitConfig{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyNeighborhood);
  }
}

TEST(FitOne, Deterministic) {
  const TsdfGrid g = grid_from_sdf(40, lshape());
  const Superquadric init = Superquadric::sphere(Vec3(0.0, -0.4, 0.0), 0.2);
  const FitResult a = fit_one(g, init, FitConfig{});
  const FitResult b = fit_one(g, init, FitConfig{});
  EXPECT_EQ(a.sq, b.sq);
  EXPECT_EQ(a.final_residual, b.final_residual);
  EXPECT_EQ(a.iters, b.iters);
}

TEST(FitOne, IgnoredVoxelsAreNotFitted) {
  // Two touching boxes; masking the right one keeps the fit on the left.
  const TsdfGrid g = grid_from_sdf(40, [](const Vec3& p) {
    return std::min(box_sdf(p, {-0.3, 0, 0}, {0.3, 0.2, 0.2}), box_sdf(p, {0.3, 0, 0}, {0.3, 0.2, 0.2}));
  });
  std::vector<bool> ignore(g.size(), false);
  for (std::size_t i = 0; i < g.size(); ++i) ignore[i] = g.center(i).x() > 0.0;
  const FitResult r = fit_one(g, Superquadric::sphere(Vec3(-0.3, 0, 0), 0.15), FitConfig{}, &ignore);
  EXPECT_LT(world_aabb(r.sq, 0.0).hi.x(), 0.2);
}

TEST(FitConfig, Validation) {
  FitConfig cfg;
  EXPECT_NO_THROW(cfg.validate());
  cfg.w = 1.0;
  EXPECT_THROW(cfg.validate(), Error);
  cfg.w = 0.5;
  cfg.c = 0.0;
  EXPECT_THROW(cfg.validate(), Error);
}
