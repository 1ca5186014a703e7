#include "shapes.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <sstream>

using namespace lightsq;
using namespace lightsq::testing;

namespace {

Abstraction random_abstraction(std::mt19937_64& rng) {
  Abstraction abs;
  std::uniform_int_distribution<int> count(0, 6), stage(1, 4);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  abs.normalization.scale = std::exp(u(rng));
  abs.normalization.translate = Vec3(u(rng), u(rng), u(rng));
  abs.resolution = 32 + count(rng);
  abs.tau = 2.0 / abs.resolution;
  abs.config.fit.w = 0.1;
  abs.config.prune.t_o = 0.07;
  const int n = count(rng);
  for (int i = 0; i < n; ++i) {
    LabeledSuperquadric p{random_superquadric(rng, 0.1, 1.9, 0.02, 0.9, 0.8), 3 * i + 1, static_cast<Stage>(stage(rng)), std::nullopt};
    if (i % 2) p.parent = 100 + i;
    abs.primitives.push_back(p);
  }
  return abs;
}

void expect_same(const Abstraction& a, const Abstraction& b) {
  EXPECT_EQ(a.normalization, b.normalization);
  EXPECT_EQ(a.resolution, b.resolution);
  EXPECT_EQ(a.tau, b.tau);
  ASSERT_EQ(a.primitives.size(), b.primitives.size());
  for (std::size_t i = 0; i < a.primitives.size(); ++i) {
    const auto &p = a.primitives[i], &q = b.primitives[i];
    EXPECT_EQ(p.id, q.id);
    EXPECT_EQ(p.stage, q.stage);
    EXPECT_EQ(p.parent, q.parent);
    EXPECT_EQ(p.sq, q.sq);
  }
  EXPECT_EQ(a.config.fit.w, b.config.fit.w);
  EXPECT_EQ(a.config.prune.t_o, b.config.prune.t_o);
}

Json one_primitive() {
  return Json::parse(R"({"version":1,"normalization":{"scale":1.0,"translate":[0,0,0]},"grid":{"resolution":100,"tau":0.02},
    "primitives":[{"id":0,"stage":"Main","parent":null,"eps":[1,1],"scale":[0.5,0.5,0.5],
    "rotation_quat":[1,0,0,0],"translation":[0,0,0]}]})");
}

void expect_malformed(const std::string& text) {
  try {
    parse_abstraction(text);
    ADD_FAILURE() << "accepted " << text;
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MalformedFile) << text;
  }
}

}  // namespace

TEST(AbstractionJson, RoundTripIsExact) {
  std::mt19937_64 rng(61);
  for (int t = 0; t < 50; ++t) {
    const Abstraction abs = random_abstraction(rng);
    expect_same(abs, parse_abstraction(serialize(abs)));
    expect_same(abs, parse_abstraction(serialize(abs, -1)));
  }
}

TEST(AbstractionJson, Layout) {
  Abstraction abs;
  abs.primitives.push_back({Superquadric::sphere(Vec3(0.1, 0.2, 0.3), 0.4), 7, Stage::Connector, 2});
  const Json j = to_json(abs);
  EXPECT_EQ(j["version"], 1);
  const Json& p = j["primitives"][0];
  EXPECT_EQ(p["id"], 7);
  EXPECT_EQ(p["stage"], "Connector");
  EXPECT_EQ(p["parent"], 2);
  EXPECT_EQ(p["rotation_quat"], Json::parse("[1.0,0.0,0.0,0.0]"));
  EXPECT_EQ(p["rotation_euler_xyz"], Json::parse("[0.0,0.0,0.0]"));
  EXPECT_EQ(p["translation"][2], 0.3);
  EXPECT_TRUE(j["config"].contains("fit.w"));
  EXPECT_FALSE(j["config"].contains("grid.resolution"));
}

TEST(AbstractionJson, EulerOnlyPrimitive) {
  Json j = one_primitive();
  auto& p = j["primitives"][0];
  p.erase("rotation_quat");
  p["rotation_euler_xyz"] = {0.1, 0.2, 0.3};
  const Abstraction abs = abstraction_from_json(j);
  EXPECT_TRUE(abs.primitives[0].sq.rotation.isApprox(from_euler_xyz(Vec3(0.1, 0.2, 0.3)), 1e-15));
}

TEST(AbstractionJson, RejectsMalformedInput) {
  expect_malformed("{not json");
  expect_malformed("[]");
  Json j = one_primitive();
  j["version"] = 2;
  expect_malformed(j.dump());
  j = one_primitive();
  j["primitives"][0]["eps"] = {1.0};
  expect_malformed(j.dump());
  j = one_primitive();
  j["primitives"][0]["eps"] = {5.0, 1.0};
  expect_malformed(j.dump());
  j = one_primitive();
  j["primitives"][0]["rotation_quat"] = {2, 0, 0, 0};
  expect_malformed(j.dump());
  j = one_primitive();
  j["primitives"][0]["stage"] = "Sideways";
  expect_malformed(j.dump());
  j = one_primitive();
  j["primitives"].push_back(j["primitives"][0]);
  expect_malformed(j.dump());
  j = one_primitive();
  j["normalization"]["scale"] = 0.0;
  expect_malformed(j.dump());
  j = one_primitive();
  j["primitives"][0]["scale"] = "big";
  expect_malformed(j.dump());
}

TEST(AbstractionJson, FileRoundTripAndMissingFile) {
  std::mt19937_64 rng(62);
  const Abstraction abs = random_abstraction(rng);
  const auto path = std::filesystem::temp_directory_path() / "lightsq_serialization_test.json";
  save_abstraction(abs, path.string());
  expect_same(abs, load_abstraction(path.string()));
  std::filesystem::remove(path);
  try {
    load_abstraction(path.string());
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Io);
  }
}

TEST(Config, KeyValueFile) {
  RunConfig cfg;
  std::istringstream in("# comment\n\nfit.w = 0.5   # trailing\ngrid.resolution=64\ndecomp.planes_global = true\nprune.t_o = \"0.08\"\n");
  apply_config(cfg, in);
  EXPECT_EQ(cfg.pipeline.fit.w, 0.5);
  EXPECT_EQ(cfg.resolution, 64);
  EXPECT_TRUE(cfg.pipeline.decomp.planes_global);
  EXPECT_EQ(cfg.pipeline.prune.t_o, 0.08);
}

TEST(Config, LaterValuesOverride) {
  RunConfig cfg;
  std::istringstream in("fit.w = 0.5\n");
  apply_config(cfg, in);
  apply_setting(cfg, "fit.w", "0.3");
  EXPECT_EQ(cfg.pipeline.fit.w, 0.3);
}

TEST(Config, Errors) {
  RunConfig cfg;
  std::istringstream no_eq("fit.w 0.5\n");
  EXPECT_THROW(apply_config(cfg, no_eq), Error);
  EXPECT_THROW(apply_setting(cfg, "fit.nope", "1"), Error);
  EXPECT_THROW(apply_setting(cfg, "fit.w", "half"), Error);
  EXPECT_THROW(apply_setting(cfg, "grid.resolution", "64.5"), Error);
  EXPECT_THROW(apply_setting(cfg, "decomp.planes_global", "maybe"), Error);
  EXPECT_THROW(apply_config_file(cfg, "/nonexistent/lightsq.cfg"), Error);
}

TEST(Config, FormatRoundTrips) {
  RunConfig cfg;
  cfg.pipeline.fit.w = 0.123456789012345;
  cfg.pipeline.decomp.k = 7;
  cfg.force_parity = true;
  cfg.metrics.seed = 99;
  std::istringstream in(format_config(cfg));
  RunConfig back;
  apply_config(back, in);
  EXPECT_EQ(format_config(back), format_config(cfg));
  EXPECT_EQ(back.pipeline.fit.w, cfg.pipeline.fit.w);
}

TEST(Config, KeysAreUnique) {
  std::set<std::string> keys;
  for (const auto& s : settings()) EXPECT_TRUE(keys.insert(s.key).second) << s.key;
}

TEST(Csv, HeaderAndRow) {
  MetricReport r;
  r.cd = 0.25;
  r.emd = 0.5;
  r.voxel_iou = 0.75;
  r.overlap_rate = 1.0;
  r.n_primitives = 3;
  EXPECT_EQ(csv_header(), "name,cd,emd,voxel_iou,overlap_rate,n_primitives");
  EXPECT_EQ(csv_row("cube", r), "cube,0.25,0.5,0.75,1,3");
}

TEST(MetricJson, NonFiniteBecomesNull) {
  MetricReport r;
  r.cd = std::numeric_limits<double>::quiet_NaN();
  const Json j = to_json(r);
  EXPECT_TRUE(j["cd"].is_null());
  EXPECT_TRUE(j["overlap_rate"].is_null());
  EXPECT_EQ(j["overlap_defined"], false);
}

TEST(MeshJson, Layout) {
  const TriangleMesh m = tessellate(Superquadric::sphere(Vec3::Zero(), 0.5), 4);
  const Json j = to_json(m);
  EXPECT_EQ(j["vertices"].size(), m.vertices.size());
  EXPECT_EQ(j["triangles"].size(), m.triangles.size());
  EXPECT_EQ(j["triangles"][0][1], m.triangles[0][1]);
}
