#pragma once

#include "lightsq/metrics.hpp"

#include <json.hpp>

#include <charconv>
#include <fstream>
#include <sstream>

namespace lightsq {

using Json = nlohmann::json;

/// Everything a CLI run can be configured with.
struct RunConfig {
  PipelineConfig pipeline;
  MetricConfig metrics;
  int resolution = 100;
  double tau_factor = 1.0;
  bool force_parity = false;
};

namespace detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T v{};
  const char* end = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(text.data(), end, v);
  if (ec != std::errc() || ptr != end) throw Error(ErrorCode::InvalidArgument, "bad value for " + key + ": '" + text + "'");
  return v;
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "on") return true;
  if (text == "false" || text == "0" || text == "off") return false;
  throw Error(ErrorCode::InvalidArgument, "bad value for " + key + ": '" + text + "'");
}

template <typename T>
std::string format_value(const T& v) {
  if constexpr (std::is_same_v<T, bool>) {
    return v ? "true" : "false";
  } else if constexpr (std::is_floating_point_v<T>) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
  } else {
    return std::to_string(v);
  }
}

struct Setting {
  std::string key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

template <typename T>
Setting field(std::string key, T RunConfig::*outer, auto inner) {
  return {key,
          [key, outer, inner](RunConfig& c, const std::string& text) {
            auto& slot = (c.*outer).*inner;
            using V = std::remove_reference_t<decltype(slot)>;
            if constexpr (std::is_same_v<V, bool>) slot = parse_bool(key, text);
            else slot = parse_number<V>(key, text);
          },
          [outer, inner](const RunConfig& c) { return format_value((c.*outer).*inner); }};
}

template <typename T>
Setting top(std::string key, T RunConfig::*member) {
  return {key,
          [key, member](RunConfig& c, const std::string& text) {
            if constexpr (std::is_same_v<T, bool>) c.*member = parse_bool(key, text);
            else c.*member = parse_number<T>(key, text);
          },
          [member](const RunConfig& c) { return format_value(c.*member); }};
}

template <typename Sub, typename T>
Setting nested(std::string key, Sub PipelineConfig::*sub, T Sub::*member) {
  return {key,
          [key, sub, member](RunConfig& c, const std::string& text) {
            auto& slot = c.pipeline.*sub.*member;
            if constexpr (std::is_same_v<T, bool>) slot = parse_bool(key, text);
            else slot = parse_number<T>(key, text);
          },
          [sub, member](const RunConfig& c) { return format_value(c.pipeline.*sub.*member); }};
}

}  // namespace detail

/// Flat key registry shared by the config file, the CLI and the JSON snapshot.
inline const std::vector<detail::Setting>& settings() {
  using detail::nested;
  static const std::vector<detail::Setting> all = {
      nested("fit.w", &PipelineConfig::fit, &FitConfig::w),
      nested("fit.c", &PipelineConfig::fit, &FitConfig::c),
      nested("fit.max_outer_iters", &PipelineConfig::fit, &FitConfig::max_outer_iters),
      nested("fit.max_inner_iters", &PipelineConfig::fit, &FitConfig::max_inner_iters),
      nested("fit.param_tol", &PipelineConfig::fit, &FitConfig::param_tol),
      nested("fit.neighborhood_scale", &PipelineConfig::fit, &FitConfig::neighborhood_scale),
      nested("fit.sigma_floor", &PipelineConfig::fit, &FitConfig::sigma_floor),
      nested("fit.max_rejects", &PipelineConfig::fit, &FitConfig::max_rejects),
      nested("fit.axis_restarts", &PipelineConfig::fit, &FitConfig::axis_restarts),
      nested("fit.coarse_stride", &PipelineConfig::fit, &FitConfig::coarse_stride),
      nested("fit.restart_rounds", &PipelineConfig::fit, &FitConfig::restart_rounds),
      nested("decomp.alpha", &PipelineConfig::decomp, &DecompConfig::alpha),
      nested("decomp.k", &PipelineConfig::decomp, &DecompConfig::k),
      nested("decomp.min_spacing", &PipelineConfig::decomp, &DecompConfig::min_spacing),
      nested("decomp.beta", &PipelineConfig::decomp, &DecompConfig::beta),
      nested("decomp.gamma", &PipelineConfig::decomp, &DecompConfig::gamma),
      nested("decomp.tau_m", &PipelineConfig::decomp, &DecompConfig::tau_m),
      nested("decomp.h_max", &PipelineConfig::decomp, &DecompConfig::h_max),
      nested("decomp.planes_global", &PipelineConfig::decomp, &DecompConfig::planes_global),
      nested("prune.p_m", &PipelineConfig::prune, &PruneConfig::p_m),
      nested("prune.p_c", &PipelineConfig::prune, &PruneConfig::p_c),
      nested("prune.p_o", &PipelineConfig::prune, &PruneConfig::p_o),
      nested("prune.t_m", &PipelineConfig::prune, &PruneConfig::t_m),
      nested("prune.t_c", &PipelineConfig::prune, &PruneConfig::t_c),
      nested("prune.t_o", &PipelineConfig::prune, &PruneConfig::t_o),
      detail::Setting{"pipeline.block_k",
                      [](RunConfig& c, const std::string& t) { c.pipeline.block_k = detail::parse_number<int>("pipeline.block_k", t); },
                      [](const RunConfig& c) { return detail::format_value(c.pipeline.block_k); }},
      detail::Setting{"pipeline.max_fill",
                      [](RunConfig& c, const std::string& t) { c.pipeline.max_fill = detail::parse_number<int>("pipeline.max_fill", t); },
                      [](const RunConfig& c) { return detail::format_value(c.pipeline.max_fill); }},
      detail::Setting{"refine.dilation",
                      [](RunConfig& c, const std::string& t) { c.pipeline.dilation = detail::parse_number<double>("refine.dilation", t); },
                      [](const RunConfig& c) { return detail::format_value(c.pipeline.dilation); }},
      detail::Setting{"refine.local_resolution",
                      [](RunConfig& c, const std::string& t) {
                        c.pipeline.local_resolution = detail::parse_number<int>("refine.local_resolution", t);
                      },
                      [](const RunConfig& c) { return detail::format_value(c.pipeline.local_resolution); }},
      detail::top("grid.resolution", &RunConfig::resolution),
      detail::top("grid.tau_factor", &RunConfig::tau_factor),
      detail::top("grid.force_parity", &RunConfig::force_parity),
      detail::field("metrics.scan_points", &RunConfig::metrics, &MetricConfig::scan_points),
      detail::field("metrics.emd_points", &RunConfig::metrics, &MetricConfig::emd_points),
      detail::field("metrics.seed", &RunConfig::metrics, &MetricConfig::seed),
  };
  return all;
}

inline void apply_setting(RunConfig& cfg, const std::string& key, const std::string& value) {
  for (const auto& s : settings())
    if (s.key == key) return s.set(cfg, value);
  throw Error(ErrorCode::InvalidArgument, "unknown config key " + key);
}

/// Reads key = value lines; '#' starts a comment, values may be quoted.
inline void apply_config(RunConfig& cfg, std::istream& in) {
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const std::string body = detail::trim(line);
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string::npos) throw Error(ErrorCode::MalformedFile, "line " + std::to_string(lineno) + ": expected key = value");
    const std::string key = detail::trim(std::string_view(body).substr(0, eq));
    std::string value = detail::trim(std::string_view(body).substr(eq + 1));
    if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
    apply_setting(cfg, key, value);
  }
}

inline void apply_config_file(RunConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  apply_config(cfg, in);
}

inline std::string format_config(const RunConfig& cfg) {
  std::string out;
  for (const auto& s : settings()) out += s.key + " = " + s.get(cfg) + "\n";
  return out;
}

// ---------------------------------------------------------------------------
// Abstraction JSON.

inline Json to_json(const LabeledSuperquadric& p) {
  const Superquadric& sq = p.sq;
  const Vec3 e = to_euler_xyz(sq.rotation);
  return Json{{"id", p.id},
              {"stage", to_string(p.stage)},
              {"parent", p.parent ? Json(*p.parent) : Json(nullptr)},
              {"eps", {sq.eps1, sq.eps2}},
              {"scale", {sq.scale.x(), sq.scale.y(), sq.scale.z()}},
              {"rotation_quat", {sq.rotation.w(), sq.rotation.x(), sq.rotation.y(), sq.rotation.z()}},
              {"rotation_euler_xyz", {e.x(), e.y(), e.z()}},
              {"translation", {sq.translation.x(), sq.translation.y(), sq.translation.z()}}};
}

inline Json to_json(const Abstraction& abs) {
  RunConfig rc;
  rc.pipeline = abs.config;
  Json config = Json::object();
  for (const auto& s : settings())
    if (s.key.rfind("grid.", 0) != 0 && s.key.rfind("metrics.", 0) != 0) config[s.key] = s.get(rc);
  Json prims = Json::array();
  for (const auto& p : abs.primitives) prims.push_back(to_json(p));
  const Vec3& t = abs.normalization.translate;
  return Json{{"version", 1},
              {"normalization", {{"scale", abs.normalization.scale}, {"translate", {t.x(), t.y(), t.z()}}}},
              {"grid", {{"resolution", abs.resolution}, {"tau", abs.tau}}},
              {"primitives", std::move(prims)},
              {"config", std::move(config)}};
}

namespace detail {

inline Vec3 vec3_from(const Json& j, const char* what) {
  if (!j.is_array() || j.size() != 3) throw Error(ErrorCode::MalformedFile, std::string(what) + " must be a 3-array");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace detail

inline LabeledSuperquadric primitive_from_json(const Json& j) {
  try {
    LabeledSuperquadric p;
    p.id = j.at("id").get<int>();
    p.stage = stage_from_string(j.at("stage").get<std::string>());
    if (j.contains("parent") && !j.at("parent").is_null()) p.parent = j.at("parent").get<int>();
    const auto& eps = j.at("eps");
    if (!eps.is_array() || eps.size() != 2) throw Error(ErrorCode::MalformedFile, "eps must be a 2-array");
    p.sq.eps1 = eps[0].get<double>();
    p.sq.eps2 = eps[1].get<double>();
    p.sq.scale = detail::vec3_from(j.at("scale"), "scale");
    if (j.contains("rotation_quat")) {
      const auto& q = j.at("rotation_quat");
      if (!q.is_array() || q.size() != 4) throw Error(ErrorCode::MalformedFile, "rotation_quat must be a 4-array");
      p.sq.rotation = Quat(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(), q[3].get<double>());
      if (std::abs(p.sq.rotation.norm() - 1.0) > 1e-6) throw Error(ErrorCode::MalformedFile, "rotation_quat is not unit length");
    } else {
      p.sq.rotation = from_euler_xyz(detail::vec3_from(j.at("rotation_euler_xyz"), "rotation_euler_xyz"));
    }
    p.sq.translation = detail::vec3_from(j.at("translation"), "translation");
    if (!p.sq.valid()) throw Error(ErrorCode::MalformedFile, "primitive " + std::to_string(p.id) + " violates parameter bounds");
    return p;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::MalformedFile, e.what());
  }
}

inline Abstraction abstraction_from_json(const Json& j) {
  try {
    if (j.at("version").get<int>() != 1) throw Error(ErrorCode::MalformedFile, "unsupported abstraction version");
    Abstraction abs;
    const auto& n = j.at("normalization");
    abs.normalization.scale = n.at("scale").get<double>();
    abs.normalization.translate = detail::vec3_from(n.at("translate"), "translate");
    if (!(abs.normalization.scale > 0.0)) throw Error(ErrorCode::MalformedFile, "normalization scale must be positive");
    abs.resolution = j.at("grid").at("resolution").get<int>();
    abs.tau = j.at("grid").at("tau").get<double>();
    if (j.contains("config")) {
      RunConfig rc;
      for (const auto& [key, value] : j.at("config").items())
        apply_setting(rc, key, value.is_string() ? value.get<std::string>() : value.dump());
      abs.config = rc.pipeline;
    }
    std::set<int> ids;
    for (const auto& p : j.at("primitives")) {
      abs.primitives.push_back(primitive_from_json(p));
      if (!ids.insert(abs.primitives.back().id).second) throw Error(ErrorCode::MalformedFile, "duplicate primitive id");
    }
    return abs;
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::MalformedFile, e.what());
  }
}

inline Abstraction parse_abstraction(const std::string& text) {
  Json j;
  try {
    j = Json::parse(text);
  } catch (const Json::exception& e) {
    throw Error(ErrorCode::MalformedFile, e.what());
  }
  return abstraction_from_json(j);
}

inline std::string serialize(const Abstraction& abs, int indent = 2) { return to_json(abs).dump(indent); }

inline Abstraction load_abstraction(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_abstraction(ss.str());
}

inline void save_abstraction(const Abstraction& abs, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out << serialize(abs) << "\n";
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path);
}

inline Json to_json(const MetricReport& r) {
  auto num = [](double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); };
  return Json{{"cd", num(r.cd)},
              {"emd", num(r.emd)},
              {"voxel_iou", r.voxel_iou},
              {"overlap_rate", num(r.overlap_rate)},
              {"overlap_defined", r.overlap_defined},
              {"n_primitives", r.n_primitives},
              {"sample_counts", {{"reference", r.reference_points}, {"abstraction", r.abstraction_points}, {"emd", r.emd_points}}},
              {"seed", r.seed}};
}

inline std::string csv_header() { return "name,cd,emd,voxel_iou,overlap_rate,n_primitives"; }

inline std::string csv_row(const std::string& name, const MetricReport& r) {
  std::ostringstream os;
  os.precision(10);
  os << name << ',' << r.cd << ',' << r.emd << ',' << r.voxel_iou << ',' << r.overlap_rate << ',' << r.n_primitives;
  return os.str();
}

inline Json to_json(const TriangleMesh& mesh) {
  Json v = Json::array(), t = Json::array();
  for (const auto& p : mesh.vertices) v.push_back({p.x(), p.y(), p.z()});
  for (const auto& f : mesh.triangles) t.push_back({f[0], f[1], f[2]});
  return Json{{"vertices", std::move(v)}, {"triangles", std::move(t)}};
}

}  // namespace lightsq
