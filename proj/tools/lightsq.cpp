// lightsq: command-line front end for superquadric abstraction.

#include "lightsq/lightsq.hpp"
#include "lightsq/service.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace lightsq;

namespace {

enum Exit { kOk = 0, kFailure = 1, kIoError = 2, kNotWatertight = 3, kEmptyResult = 4 };

int exit_code_for(const Error& e) {
  switch (e.code()) {
    case ErrorCode::Io:
    case ErrorCode::MalformedFile:
    case ErrorCode::ResolutionMismatch:
    case ErrorCode::EmptyMesh: return kIoError;
    case ErrorCode::NonWatertightMesh: return kNotWatertight;
    default: return kFailure;
  }
}

bool is_grid_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  char magic[4] = {};
  in.read(magic, 4);
  return in.gcount() == 4 && std::equal(magic, magic + 4, kGridMagic);
}

// A mesh is voxelized into the unit cube; a grid file is taken as is.
VoxelizedMesh load_input(const std::string& path, const RunConfig& cfg) {
  if (is_grid_file(path)) return {load_grid(path), Normalization{}};
  VoxelizeOptions opt;
  opt.resolution = cfg.resolution;
  opt.tau_factor = cfg.tau_factor;
  opt.force_parity = cfg.force_parity;
  return voxelize_mesh(load_mesh(path), opt);
}

void warn(const std::string& msg) { std::cerr << "warning: " << msg << '\n'; }

// Re-expresses primitives in the frame `to`.
Abstraction renormalize(Abstraction abs, const Normalization& to) {
  const double k = to.scale / abs.normalization.scale;
  for (auto& p : abs.primitives) {
    p.sq.translation = to.apply(abs.normalization.invert(p.sq.translation));
    p.sq.scale *= k;
  }
  abs.normalization = to;
  return abs;
}

void print_summary(const MetricReport& r) {
  std::cout << "primitives " << r.n_primitives << "  iou " << r.voxel_iou << "  cd " << r.cd << "  emd " << r.emd
            << "  or ";
  if (r.overlap_defined) {
    std::cout << r.overlap_rate;
  } else {
    std::cout << "n/a";
  }
  std::cout << '\n';
}

TriangleMesh union_tessellation(const Abstraction& abs, int subdivisions) {
  TriangleMesh out;
  for (const auto& p : abs.primitives) {
    TriangleMesh m = tessellate(p.sq, subdivisions);
    for (auto& v : m.vertices) v = abs.normalization.invert(v);
    append(out, m);
  }
  return out;
}

struct ConfigArgs {
  std::string file;
  std::vector<std::string> overrides;
  std::optional<int> resolution;
  std::optional<double> w, c;
  bool planes_global = false;
  bool no_prune = false;
  bool force_parity = false;

  void attach(CLI::App* app) {
    app->add_option("--config", file, "key=value config file");
    app->add_option("--set", overrides, "override one config key, e.g. --set fit.w=0.5");
    app->add_option("--res", resolution, "grid resolution for mesh input")->check(CLI::Range(8, 1024));
    app->add_option("--w", w, "outlier weight w");
    app->add_option("--c", c, "sigma update scale C");
    app->add_flag("--planes-global", planes_global, "pick the top K planes over all axes");
    app->add_flag("--no-prune", no_prune, "disable primitive pruning");
    app->add_flag("--force-parity", force_parity, "voxelize open meshes by crossing parity");
  }

  RunConfig resolve() const {
    RunConfig cfg;
    if (!file.empty()) apply_config_file(cfg, file);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw Error(ErrorCode::InvalidArgument, "--set expects key=value, got " + kv);
      apply_setting(cfg, detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1)));
    }
    if (resolution) cfg.resolution = *resolution;
    if (w) cfg.pipeline.fit.w = *w;
    if (c) cfg.pipeline.fit.c = *c;
    if (planes_global) cfg.pipeline.decomp.planes_global = true;
    if (no_prune) cfg.pipeline.prune = PruneConfig::disabled();
    if (force_parity) cfg.force_parity = true;
    return cfg;
  }
};

int cmd_fit(const std::string& input, const std::string& output, const std::string& obj, const ConfigArgs& args) {
  const RunConfig cfg = args.resolve();
  const auto t0 = std::chrono::steady_clock::now();
  const VoxelizedMesh in = load_input(input, cfg);
  RunResult result = run(in.grid, cfg.pipeline, in.normalization);
  for (const auto& w : result.log.warnings) warn(w);
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (result.abstraction.primitives.empty()) {
    std::cerr << "error: pipeline produced no primitives\n";
    return kEmptyResult;
  }
  save_abstraction(result.abstraction, output);
  if (!obj.empty()) {
    std::ofstream out(obj);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + obj);
    write_obj(out, union_tessellation(result.abstraction, 32));
  }
  print_summary(evaluate(in.grid, result.abstraction, cfg.metrics));
  std::cout << "wrote " << output << " in " << secs << " s\n";
  return kOk;
}

int cmd_eval(const std::string& abs_path, const std::string& reference, const std::string& csv, const std::string& name,
             const ConfigArgs& args) {
  RunConfig cfg = args.resolve();
  Abstraction abs = load_abstraction(abs_path);
  if (!args.resolution && abs.resolution > 0) cfg.resolution = abs.resolution;
  const VoxelizedMesh ref = load_input(reference, cfg);
  if (!is_grid_file(reference) && !(ref.normalization == abs.normalization)) {
    warn("abstraction normalization differs from the reference; re-expressing primitives in the reference frame");
    abs = renormalize(std::move(abs), ref.normalization);
  }
  if (abs.resolution != 0 && abs.resolution != ref.grid.resolution)
    warn("abstraction was fitted at " + std::to_string(abs.resolution) + "^3, evaluating at " +
         std::to_string(ref.grid.resolution) + "^3");
  const MetricReport report = evaluate(ref.grid, abs, cfg.metrics);
  std::cout << to_json(report).dump(2) << '\n';
  if (!csv.empty()) {
    const bool fresh = !fs::exists(csv) || fs::file_size(csv) == 0;
    std::ofstream out(csv, std::ios::app);
    if (!out) throw Error(ErrorCode::Io, "cannot write " + csv);
    if (fresh) out << csv_header() << '\n';
    out << csv_row(name.empty() ? fs::path(abs_path).stem().string() : name, report) << '\n';
  }
  return kOk;
}

int cmd_refine(const std::string& abs_path, const std::string& reference, int id, int splits, const std::string& output,
               const ConfigArgs& args) {
  RunConfig cfg = args.resolve();
  const Abstraction abs = load_abstraction(abs_path);
  if (!args.resolution && abs.resolution > 0) cfg.resolution = abs.resolution;
  const VoxelizedMesh ref = load_input(reference, cfg);
  if (abs.resolution != ref.grid.resolution)
    throw Error(ErrorCode::ResolutionMismatch, "abstraction resolution " + std::to_string(abs.resolution) +
                                                   " does not match grid resolution " +
                                                   std::to_string(ref.grid.resolution));
  RefineResult r = multiscale_refine(abs, ref.grid, id, splits);
  for (const auto& w : r.log.warnings) warn(w);
  if (output.empty()) {
    std::cout << serialize(r.abstraction) << '\n';
  } else {
    save_abstraction(r.abstraction, output);
    std::cout << "replaced " << id << " with " << r.children.size() << " primitives, wrote " << output << '\n';
  }
  return kOk;
}

int cmd_decompose(const std::string& input, const std::string& output, const ConfigArgs& args) {
  const RunConfig cfg = args.resolve();
  const VoxelizedMesh in = load_input(input, cfg);
  const auto parts = decompose(in.grid, cfg.pipeline.decomp);
  if (parts.size() >= 0xffff) throw Error(ErrorCode::InvalidArgument, "too many partitions for u16 labels");
  const auto labels = partition_labels(in.grid, parts);
  std::ofstream out(output, std::ios::binary);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + output);
  save_labels(in.grid, labels, out);
  Json summary = Json::array();
  for (const auto& p : parts) summary.push_back({{"id", p.id}, {"voxels", p.voxels.size()}, {"neighbors", p.neighbors.size()}});
  std::cout << summary.dump(2) << '\n';
  return kOk;
}

int cmd_voxelize(const std::string& input, const std::string& output, const ConfigArgs& args) {
  const RunConfig cfg = args.resolve();
  const VoxelizedMesh in = load_input(input, cfg);
  save_grid(in.grid, output);
  std::cout << Json{{"scale", in.normalization.scale},
                    {"translate", {in.normalization.translate.x(), in.normalization.translate.y(),
                                   in.normalization.translate.z()}}}
                   .dump()
            << '\n';
  return kOk;
}

httplib::Server* g_server = nullptr;

int cmd_serve(const std::string& reference, const std::string& abs_path, const std::string& host, int port,
              const ConfigArgs& args) {
  RunConfig cfg = args.resolve();
  Abstraction abs = load_abstraction(abs_path);
  if (!args.resolution && abs.resolution > 0) cfg.resolution = abs.resolution;
  const VoxelizedMesh ref = load_input(reference, cfg);
  if (abs.resolution != ref.grid.resolution)
    throw Error(ErrorCode::ResolutionMismatch, "abstraction and grid resolutions differ");
  Session session(ref.grid, std::move(abs), cfg.metrics);
  httplib::Server server;
  mount(server, session);
  g_server = &server;
  std::signal(SIGINT, [](int) {
    if (g_server) g_server->stop();
  });
  std::signal(SIGTERM, [](int) {
    if (g_server) g_server->stop();
  });
  std::cerr << "listening on http://" << host << ':' << port << '\n';
  if (!server.listen(host, port)) throw Error(ErrorCode::Io, "cannot bind " + host + ":" + std::to_string(port));
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Superquadric abstraction of voxelized shapes"};
  app.require_subcommand(1);

  std::string input, output, obj, abs_path, reference, csv, name, host = "127.0.0.1";
  int id = -1, splits = 2, port = 8080;

  ConfigArgs fit_args, eval_args, refine_args, decomp_args, vox_args, serve_args;

  auto* fit = app.add_subcommand("fit", "run the full pipeline on a mesh or grid");
  fit->add_option("input", input, "mesh (.obj/.stl) or grid (.lsqg)")->required();
  fit->add_option("-o,--output", output, "abstraction JSON")->required();
  fit->add_option("--export-obj", obj, "write the union tessellation as OBJ");
  fit_args.attach(fit);

  auto* eval = app.add_subcommand("eval", "score an abstraction against a reference");
  eval->add_option("abstraction", abs_path)->required();
  eval->add_option("reference", reference, "mesh or grid")->required();
  eval->add_option("--csv", csv, "append one CSV row to this file");
  eval->add_option("--name", name, "row label for --csv");
  eval_args.attach(eval);

  auto* refine = app.add_subcommand("refine", "split one primitive and refit it locally");
  refine->add_option("abstraction", abs_path)->required();
  refine->add_option("reference", reference, "grid or mesh the abstraction was fitted to")->required();
  refine->add_option("--id", id, "primitive id")->required();
  refine->add_option("--splits", splits, "splits per axis")->check(CLI::PositiveNumber);
  refine->add_option("-o,--output", output, "output JSON (stdout if omitted)");
  refine_args.attach(refine);

  auto* decomp = app.add_subcommand("decompose", "dump partitions as a u16 label grid");
  decomp->add_option("input", input)->required();
  decomp->add_option("-o,--output", output, "label grid (.lsql)")->required();
  decomp_args.attach(decomp);

  auto* vox = app.add_subcommand("voxelize", "write the TSDF grid of a mesh");
  vox->add_option("input", input)->required();
  vox->add_option("-o,--output", output, "grid file (.lsqg)")->required();
  vox_args.attach(vox);

  auto* serve = app.add_subcommand("serve", "host the refinement endpoints over HTTP");
  serve->add_option("reference", reference, "grid or mesh")->required();
  serve->add_option("abstraction", abs_path)->required();
  serve->add_option("--host", host);
  serve->add_option("--port", port)->check(CLI::Range(0, 65535));
  serve_args.attach(serve);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*fit) return cmd_fit(input, output, obj, fit_args);
    if (*eval) return cmd_eval(abs_path, reference, csv, name, eval_args);
    if (*refine) return cmd_refine(abs_path, reference, id, splits, output, refine_args);
    if (*decomp) return cmd_decompose(input, output, decomp_args);
    if (*vox) return cmd_voxelize(input, output, vox_args);
    if (*serve) return cmd_serve(reference, abs_path, host, port, serve_args);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code_for(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kFailure;
  }
  return kFailure;
}
