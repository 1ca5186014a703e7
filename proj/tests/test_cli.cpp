#include "shapes.hpp"

#include <gtest/gtest.h>

#include <sys/wait.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace lightsq;
using namespace lightsq::testing;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class CliTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = fs::temp_directory_path() / ("lightsq_cli_" + std::to_string(::getpid()));
    fs::create_directories(dir_);
    std::ofstream sphere(dir_ / "sphere.obj");
    write_obj(sphere, tessellate(Superquadric::sphere(Vec3(1, 2, 3), 5.0), 48));
    Superquadric box;
    box.eps1 = box.eps2 = 0.1;
    const TriangleMesh cube = tessellate(box, 8);
    TriangleMesh open = cube;
    open.triangles.pop_back();
    std::ofstream o(dir_ / "open.obj");
    write_obj(o, open);
    TriangleMesh flat = cube;
    for (auto& v : flat.vertices) v.z() *= 1e-4;
    std::ofstream f(dir_ / "flat.obj");
    write_obj(f, flat);
  }

  static void TearDownTestSuite() { fs::remove_all(dir_); }

  static Outcome cli(const std::string& args, const std::string& env = "") {
    static int counter = 0;
    const fs::path out = dir_ / ("out" + std::to_string(counter) + ".txt");
    const fs::path err = dir_ / ("err" + std::to_string(counter++) + ".txt");
    const std::string cmd = env + " \"" LIGHTSQ_CLI_PATH "\" " + args + " > \"" + out.string() + "\" 2> \"" + err.string() + "\"";
    const int status = std::system(cmd.c_str());
    Outcome o;
    o.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    o.out = slurp(out);
    o.err = slurp(err);
    return o;
  }

  static std::string path(const std::string& name) { return "\"" + (dir_ / name).string() + "\""; }

  // Shared fitted sphere so that eval/refine tests do not refit.
  static const Abstraction& sphere_fit() {
    static const Abstraction abs = [] {
      const Outcome o = cli("fit " + path("sphere.obj") + " -o " + path("sphere.json") + " --res 64");
      EXPECT_EQ(o.code, 0) << o.err;
      return load_abstraction((dir_ / "sphere.json").string());
    }();
    return abs;
  }

  static inline fs::path dir_;
};

}  // namespace

TEST_F(CliTest, FitSphereGivesOnePrimitive) {
  const Abstraction& abs = sphere_fit();
  ASSERT_EQ(abs.primitives.size(), 1u);
  EXPECT_EQ(abs.resolution, 64);
  EXPECT_NEAR(abs.tau, 2.0 / 64, 1e-12);
  const Json meta = Json::parse(slurp(dir_ / "sphere.json"));
  EXPECT_EQ(meta["grid"]["resolution"], 64);
  // The primitive maps back onto the input sphere.
  const Vec3 c = abs.normalization.invert(abs.primitives[0].sq.translation);
  EXPECT_LT((c - Vec3(1, 2, 3)).norm(), 0.1);
}

TEST_F(CliTest, MissingInputIsIoError) {
  const Outcome o = cli("fit " + path("nope.obj") + " -o " + path("nope.json"));
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.err.find("error"), std::string::npos);
  EXPECT_EQ(cli("fit " + path("sphere.obj") + " -o x.json --config " + path("nope.cfg")).code, 2);
}

TEST_F(CliTest, OpenMeshNeedsForceParity) {
  EXPECT_EQ(cli("fit " + path("open.obj") + " -o " + path("open.json") + " --res 24").code, 3);
  EXPECT_EQ(cli("fit " + path("open.obj") + " -o " + path("open.json") + " --res 24 --force-parity").code, 0);
}

TEST_F(CliTest, EmptyResultExitCode) {
  EXPECT_EQ(cli("fit " + path("flat.obj") + " -o " + path("flat.json") + " --res 24").code, 4);
  EXPECT_FALSE(fs::exists(dir_ / "flat.json"));
}

TEST_F(CliTest, ConfigFileAndFlagPrecedence) {
  std::ofstream(dir_ / "run.cfg") << "grid.resolution = 20\nfit.w = 0.3\n";
  Outcome o = cli("fit " + path("sphere.obj") + " -o " + path("cfg.json") + " --config " + path("run.cfg"));
  ASSERT_EQ(o.code, 0) << o.err;
  Abstraction abs = load_abstraction((dir_ / "cfg.json").string());
  EXPECT_EQ(abs.resolution, 20);
  EXPECT_EQ(abs.config.fit.w, 0.3);
  o = cli("fit " + path("sphere.obj") + " -o " + path("cfg.json") + " --config " + path("run.cfg") + " --res 24 --set fit.w=0.2");
  ASSERT_EQ(o.code, 0) << o.err;
  abs = load_abstraction((dir_ / "cfg.json").string());
  EXPECT_EQ(abs.resolution, 24);
  EXPECT_EQ(abs.config.fit.w, 0.2);
  EXPECT_EQ(cli("fit " + path("sphere.obj") + " -o x.json --set fit.bogus=1").code, 1);
}

TEST_F(CliTest, EvalSelf) {
  sphere_fit();
  const Outcome o = cli("eval " + path("sphere.json") + " " + path("sphere.obj"));
  ASSERT_EQ(o.code, 0) << o.err;
  const Json r = Json::parse(o.out);
  EXPECT_GE(r["voxel_iou"].get<double>(), 0.98);
  EXPECT_EQ(r["n_primitives"], 1);
  EXPECT_EQ(o.err.find("warning"), std::string::npos);
}

TEST_F(CliTest, EvalRenormalizesWithWarning) {
  Abstraction shifted = sphere_fit();
  // Same primitive, expressed under a different normalization.
  const Normalization other{2.0 * shifted.normalization.scale, Vec3(0.1, 0.2, 0.3)};
  for (auto& p : shifted.primitives) {
    const Vec3 world = shifted.normalization.invert(p.sq.translation);
    p.sq.translation = other.apply(world);
    p.sq.scale *= other.scale / shifted.normalization.scale;
  }
  shifted.normalization = other;
  save_abstraction(shifted, (dir_ / "shifted.json").string());
  const Outcome o = cli("eval " + path("shifted.json") + " " + path("sphere.obj"));
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_NE(o.err.find("warning"), std::string::npos);
  EXPECT_GE(Json::parse(o.out)["voxel_iou"].get<double>(), 0.98);
}

TEST_F(CliTest, EvalCsvAppendsOneRow) {
  sphere_fit();
  const std::string csv = path("scores.csv");
  ASSERT_EQ(cli("eval " + path("sphere.json") + " " + path("sphere.obj") + " --csv " + csv + " --name first").code, 0);
  ASSERT_EQ(cli("eval " + path("sphere.json") + " " + path("sphere.obj") + " --csv " + csv).code, 0);
  std::istringstream lines(slurp(dir_ / "scores.csv"));
  std::vector<std::string> rows;
  for (std::string l; std::getline(lines, l);) rows.push_back(l);
  ASSERT_EQ(rows.size(), 3u);
  EXPECT_EQ(rows[0], csv_header());
  EXPECT_EQ(rows[1].rfind("first,", 0), 0u);
  EXPECT_EQ(rows[2].rfind("sphere,", 0), 0u);
}

TEST_F(CliTest, RefineAndResolutionMismatch) {
  Abstraction abs = sphere_fit();
  abs.config.local_resolution = 24;
  save_abstraction(abs, (dir_ / "coarse.json").string());
  const int id = abs.primitives[0].id;
  const Outcome o = cli("refine " + path("coarse.json") + " " + path("sphere.obj") + " --id " + std::to_string(id) +
                        " --splits 2 -o " + path("refined.json"));
  ASSERT_EQ(o.code, 0) << o.err;
  const Abstraction refined = load_abstraction((dir_ / "refined.json").string());
  ASSERT_FALSE(refined.primitives.empty());
  for (const auto& p : refined.primitives) EXPECT_EQ(p.parent, std::optional<int>(id));
  EXPECT_EQ(cli("refine " + path("sphere.json") + " " + path("sphere.obj") + " --id 77").code, 1);
  EXPECT_EQ(cli("refine " + path("sphere.json") + " " + path("sphere.obj") + " --id 0 --res 32").code, 2);
}

TEST_F(CliTest, VoxelizeThenFitGrid) {
  ASSERT_EQ(cli("voxelize " + path("sphere.obj") + " -o " + path("sphere.lsqg") + " --res 32").code, 0);
  const TsdfGrid g = load_grid((dir_ / "sphere.lsqg").string());
  EXPECT_EQ(g.resolution, 32);
  const Outcome o = cli("fit " + path("sphere.lsqg") + " -o " + path("grid.json"), "LIGHTSQ_THREADS=1");
  ASSERT_EQ(o.code, 0) << o.err;
  EXPECT_EQ(load_abstraction((dir_ / "grid.json").string()).primitives.size(), 1u);
}

TEST_F(CliTest, DecomposeWritesLabels) {
  const Outcome o = cli("decompose " + path("sphere.obj") + " -o " + path("labels.lsql") + " --res 32");
  ASSERT_EQ(o.code, 0) << o.err;
  const Json parts = Json::parse(o.out);
  EXPECT_EQ(parts.size(), 1u);
  EXPECT_TRUE(fs::exists(dir_ / "labels.lsql"));
}

TEST_F(CliTest, ExportObjInInputFrame) {
  ASSERT_EQ(cli("fit " + path("sphere.obj") + " -o " + path("e.json") + " --res 32 --export-obj " + path("e.obj")).code, 0);
  std::ifstream in(dir_ / "e.obj");
  const TriangleMesh m = read_obj(in);
  ASSERT_FALSE(m.vertices.empty());
  for (const auto& v : m.vertices) EXPECT_NEAR((v - Vec3(1, 2, 3)).norm(), 5.0, 0.5);
}

TEST_F(CliTest, UsageErrors) {
  EXPECT_NE(cli("").code, 0);
  EXPECT_NE(cli("fit").code, 0);
  EXPECT_EQ(cli("--help").code, 0);
}
