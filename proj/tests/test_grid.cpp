#include "oracles.hpp"

#include <gtest/gtest.h>

#include <sstream>

using namespace lightsq;
using namespace lightsq::testing;

namespace {

// 5^3 lattice with unit voxels and a wide truncation, so carve values are
// visible before clamping.
TsdfGrid wide_grid(float fill) { return TsdfGrid(5, Vec3::Zero(), 1.0, 10.0, fill); }

}  // namespace

TEST(Carve, InsideInsideFlipsToPositive) {
  TsdfGrid g = wide_grid(-0.5f);
  // srdf at the center voxel of a sphere of radius 0.2 centered there is -0.2.
  const Superquadric s = Superquadric::sphere(Vec3(2, 2, 2), 0.2);
  UpdateHistory h(g.size());
  carve(g, s, &h, 7);
  const std::size_t c = g.index(2, 2, 2);
  EXPECT_FLOAT_EQ(g.values[c], 0.2f);
  EXPECT_EQ(h.claimed_by[c], 7);
  EXPECT_EQ(h.touched_by[c], 7);
}

TEST(Carve, InsideOutsideRaisesTowardPrimitive) {
  TsdfGrid g = wide_grid(-0.5f);
  // Voxel (4, 2, 2) is 2 from the center; radius 1.7 gives srdf +0.3.
  const Superquadric s = Superquadric::sphere(Vec3(2, 2, 2), 1.7);
  UpdateHistory h(g.size());
  carve(g, s, &h, 3);
  const std::size_t x = g.index(4, 2, 2);
  EXPECT_FLOAT_EQ(g.values[x], -0.3f);
  EXPECT_EQ(h.claimed_by[x], UpdateHistory::kNone);
  EXPECT_EQ(h.touched_by[x], 3);
  // Voxel (4, 4, 4) sits 2*sqrt(3) away: srdf 1.764 leaves -0.5 in place.
  EXPECT_FLOAT_EQ(g.values[g.index(4, 4, 4)], -0.5f);
  EXPECT_EQ(h.touched_by[g.index(4, 4, 4)], UpdateHistory::kNone);
}

TEST(Carve, OutsideVoxelUnchanged) {
  TsdfGrid g = wide_grid(0.4f);
  const auto stats = carve(g, Superquadric::sphere(Vec3(2, 2, 2), 1.5));
  for (float v : g.values) EXPECT_EQ(v, 0.4f);
  EXPECT_EQ(stats.touched, 0u);
  EXPECT_EQ(stats.flipped, 0u);
}

TEST(Carve, ReclampsToTau) {
  TsdfGrid g = TsdfGrid::normalized(20);
  for (auto& v : g.values) v = -static_cast<float>(g.tau);
  carve(g, Superquadric::sphere(Vec3::Zero(), 0.5));
  for (float v : g.values) {
    EXPECT_LE(v, static_cast<float>(g.tau));
    EXPECT_GE(v, -static_cast<float>(g.tau));
  }
  EXPECT_EQ(g.values[g.index(10, 10, 10)], static_cast<float>(g.tau));
}

TEST(Carve, DropsRawSdf) {
  TsdfGrid g = grid_from_sdf(16, [](const Vec3& p) { return p.norm() - 0.5; });
  ASSERT_TRUE(g.raw_sdf.has_value());
  carve(g, Superquadric::sphere(Vec3::Zero(), 0.2));
  EXPECT_FALSE(g.raw_sdf.has_value());
}

TEST(Carve, FuzzedAlgebra) {
  std::mt19937_64 rng(11);
  for (int t = 0; t < 200; ++t) {
    const TsdfGrid g0 = random_grid(rng, 24);
    const Superquadric s = random_superquadric(rng, 0.2, 1.8, 0.1, 0.6, 0.5);
    ASSERT_EQ(carve_violation(g0, s), "") << "pair " << t;
  }
}

TEST(Components, TwoSpheresAreTwo) {
  const TsdfGrid g = grid_from_sdf(40, [](const Vec3& p) {
    return std::min(ball_sdf(p, {-0.5, 0, 0}, 0.3), ball_sdf(p, {0.5, 0, 0}, 0.2));
  });
  const auto comps = connected_components(g);
  ASSERT_EQ(comps.size(), 2u);
  EXPECT_GT(comps[0].voxel_indices.size(), comps[1].voxel_indices.size());
  EXPECT_LT(g.center(comps[0].voxel_indices.front()).x(), 0.0);
}

TEST(Components, EmptyGridHasNone) {
  EXPECT_TRUE(connected_components(TsdfGrid::normalized(10)).empty());
}

TEST(Components, DumbbellIsOneAndMatchesFloodFill) {
  const TsdfGrid g = grid_from_sdf(40, dumbbell());
  const auto comps = connected_components(g);
  ASSERT_EQ(comps.size(), 1u);
  EXPECT_EQ(comps[0].voxel_indices.size(), g.interior_count());
}

TEST(Components, SixConnectivityOnly) {
  TsdfGrid g = TsdfGrid::normalized(4);
  g.values[g.index(0, 0, 0)] = -0.1f;
  g.values[g.index(1, 1, 0)] = -0.1f;  // edge-adjacent only
  g.values[g.index(1, 0, 0)] = 0.1f;
  EXPECT_EQ(connected_components(g).size(), 2u);
  std::vector<bool> exclude(g.size(), false);
  exclude[g.index(0, 0, 0)] = true;
  EXPECT_EQ(connected_components(g, &exclude).size(), 1u);
}

TEST(InscribedSphere, SolidSphere) {
  const TsdfGrid g = grid_from_sdf(64, [](const Vec3& p) { return p.norm() - 0.7; });
  const auto s = max_inscribed_sphere(connected_components(g).front(), g);
  EXPECT_LE(s.center.norm(), g.voxel_size * std::sqrt(3.0));
  EXPECT_NEAR(s.radius, 0.7, g.voxel_size);
}

TEST(InscribedSphere, BoxInradiusWithAndWithoutRawSdf) {
  TsdfGrid g = grid_from_sdf(60, [](const Vec3& p) { return box_sdf(p, Vec3::Zero(), {0.4, 0.2, 0.2}); });
  const auto comp = connected_components(g).front();
  EXPECT_NEAR(max_inscribed_sphere(comp, g).radius, 0.2, g.voxel_size);
  g.raw_sdf.reset();
  EXPECT_NEAR(max_inscribed_sphere(comp, g).radius, 0.2, g.voxel_size);
}

TEST(InscribedSphere, SingleVoxel) {
  TsdfGrid g = TsdfGrid::normalized(8);
  g.values[g.index(3, 4, 5)] = -0.1f;
  const auto s = max_inscribed_sphere(connected_components(g).front(), g);
  EXPECT_TRUE(s.center.isApprox(g.center(3, 4, 5)));
  EXPECT_LE(s.radius, g.voxel_size);
}

TEST(GridFromSdf, ClampsAndKeepsRaw) {
  const TsdfGrid g = grid_from_sdf(20, [](const Vec3& p) { return p.norm() - 0.5; });
  EXPECT_DOUBLE_EQ(g.tau, g.voxel_size);
  for (std::size_t i = 0; i < g.size(); ++i)
    EXPECT_EQ(g.values[i], std::clamp((*g.raw_sdf)[i], -static_cast<float>(g.tau), static_cast<float>(g.tau)));
}

TEST(DistanceTransform, MatchesBruteForce) {
  std::mt19937_64 rng(12);
  std::bernoulli_distribution coin(0.05);
  const std::array<int, 3> dims{7, 5, 6};
  const std::size_t cells = 7 * 5 * 6;
  std::unique_ptr<bool[]> feature(new bool[cells]);
  std::vector<std::array<int, 3>> points;
  for (int k = 0; k < dims[2]; ++k)
    for (int j = 0; j < dims[1]; ++j)
      for (int i = 0; i < dims[0]; ++i) {
        const bool f = coin(rng);
        feature[i + dims[0] * (j + dims[1] * k)] = f;
        if (f) points.push_back({i, j, k});
      }
  ASSERT_FALSE(points.empty());
  const auto d2 = squared_edt(std::span<const bool>(feature.get(), cells), dims);
  for (int k = 0; k < dims[2]; ++k)
    for (int j = 0; j < dims[1]; ++j)
      for (int i = 0; i < dims[0]; ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (const auto& p : points) best = std::min<double>(best, (i - p[0]) * (i - p[0]) + (j - p[1]) * (j - p[1]) + (k - p[2]) * (k - p[2]));
        EXPECT_EQ(d2[i + dims[0] * (j + dims[1] * k)], best);
      }
}

TEST(TsdfFromOccupancy, SignsMatchMask) {
  const TsdfGrid g = grid_from_sdf(30, [](const Vec3& p) { return box_sdf(p, {0.1, 0, 0}, {0.3, 0.2, 0.25}); });
  std::vector<std::size_t> occ;
  for (std::size_t i = 0; i < g.size(); ++i)
    if (g.interior(i)) occ.push_back(i);
  const TsdfGrid t = tsdf_from_occupancy(g, occ);
  for (std::size_t i = 0; i < g.size(); ++i) EXPECT_EQ(t.interior(i), g.interior(i));
  // Face neighbors across the boundary sit half a voxel from it.
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!t.interior(i) && t.values[i] < t.tau) EXPECT_GE(t.values[i], 0.5 * g.voxel_size - 1e-6);
}

TEST(GridIo, RoundTripIsBitwise) {
  const TsdfGrid g = grid_from_sdf(17, [](const Vec3& p) { return p.norm() - 0.4; });
  std::stringstream buf;
  save_grid(g, buf);
  const TsdfGrid back = load_grid(buf);
  EXPECT_EQ(back.resolution, 17);
  EXPECT_EQ(back.values, g.values);
  EXPECT_FLOAT_EQ(static_cast<float>(back.voxel_size), static_cast<float>(g.voxel_size));
  EXPECT_FLOAT_EQ(static_cast<float>(back.tau), static_cast<float>(g.tau));
}

TEST(GridIo, TruncatedIsMalformed) {
  const TsdfGrid g = TsdfGrid::normalized(6);
  std::stringstream buf;
  save_grid(g, buf);
  std::string bytes = buf.str();
  for (std::size_t cut : {bytes.size() - 2, std::size_t{10}}) {
    std::stringstream in(bytes.substr(0, cut));
    try {
      load_grid(in);
      FAIL() << "expected MalformedFile at " << cut;
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::MalformedFile);
    }
  }
}

TEST(GridIo, PayloadLengthMismatch) {
  const TsdfGrid g = TsdfGrid::normalized(6);
  std::stringstream buf;
  save_grid(g, buf);
  std::string bytes = buf.str();
  for (std::string payload : {bytes.substr(0, bytes.size() - 4), bytes + std::string(8, '\0')}) {
    std::stringstream in(payload);
    try {
      load_grid(in);
      FAIL() << "expected ResolutionMismatch";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::ResolutionMismatch);
    }
  }
}

TEST(GridIo, BadMagic) {
  std::stringstream in("NOPE and some more bytes to fill the header up");
  EXPECT_THROW(load_grid(in), Error);
}

TEST(LabelIo, RoundTrip) {
  const TsdfGrid g = TsdfGrid::normalized(5);
  std::vector<std::uint16_t> labels(g.size());
  for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<std::uint16_t>(i % 7);
  std::stringstream buf;
  save_labels(g, labels, buf);
  TsdfGrid lattice;
  EXPECT_EQ(load_labels(buf, &lattice), labels);
  EXPECT_EQ(lattice.resolution, 5);
}

TEST(Stage, StringRoundTrip) {
  for (Stage s : {Stage::Block, Stage::Regrow, Stage::Main, Stage::Connector, Stage::Offcut})
    EXPECT_EQ(stage_from_string(to_string(s)), s);
  EXPECT_THROW(stage_from_string("Bogus"), Error);
  EXPECT_TRUE(is_main_stage(Stage::Regrow));
  EXPECT_FALSE(is_main_stage(Stage::Connector));
  EXPECT_FALSE(is_main_stage(Stage::Offcut));
}
