#pragma once

// Run configuration files and grid export.
//
// Configs are JSON. Complex numbers are [re, im] pairs, matrices are
// row-major nested arrays of complex numbers. Every load error names the
// offending field by its path, e.g. "solution.data.mu[1]".

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <optional>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "toda/dressing.hpp"
#include "toda/harness.hpp"
#include "toda/solitons.hpp"
#include "toda/system.hpp"

namespace toda {

using json = nlohmann::json;

enum class SolutionKind { vacuum, dressing, soliton_e28, one_soliton, multi_soliton };
enum class ExportFormat { csv, json };

inline std::string to_string(SolutionKind k) {
  switch (k) {
    case SolutionKind::vacuum: return "vacuum";
    case SolutionKind::dressing: return "dressing";
    case SolutionKind::soliton_e28: return "soliton_e28";
    case SolutionKind::one_soliton: return "one_soliton";
    case SolutionKind::multi_soliton: return "multi_soliton";
  }
  return "?";
}

inline std::string to_string(ExportFormat f) { return f == ExportFormat::csv ? "csv" : "json"; }

/// Names accepted in the "checks" list of a run config.
inline const std::vector<std::string>& known_checks() {
  static const std::vector<std::string> names{"residual", "inverse_pair", "equivalence",
                                              "residue_relations", "grading", "reality"};
  return names;
}

struct SolutionConfig {
  SolutionKind kind = SolutionKind::vacuum;
  bool normalize = false;
  DressingData dressing;  // kind == dressing
  SolitonData soliton;    // soliton kinds

  bool operator==(const SolutionConfig&) const = default;
};

struct OutputConfig {
  std::string grid_path;
  std::string report_path;
  ExportFormat format = ExportFormat::csv;

  bool operator==(const OutputConfig&) const = default;
};

struct RunConfig {
  std::optional<std::pair<int, int>> system;  // (p, n_star)
  std::optional<SolutionConfig> solution;
  std::optional<GridSpec> grid;
  std::vector<std::string> checks;
  OutputConfig outputs;
  std::optional<CampaignSettings> campaign;

  bool operator==(const RunConfig&) const = default;
};

namespace detail {

[[noreturn]] inline void fail(const std::string& path, const std::string& msg) {
  throw ValidationError(path + ": " + msg);
}

inline std::string at(const std::string& path, std::size_t i) { return path + "[" + std::to_string(i) + "]"; }

inline void allow_keys(const json& o, const std::string& path, std::initializer_list<const char*> keys) {
  if (!o.is_object()) fail(path, "expected an object");
  for (const auto& [k, v] : o.items()) {
    bool known = false;
    for (const char* key : keys) known = known || k == key;
    if (!known) fail(path.empty() ? k : path + "." + k, "unknown field");
  }
}

inline const json& require(const json& o, const char* key, const std::string& path) {
  const auto it = o.find(key);
  if (it == o.end()) fail(path.empty() ? key : path + "." + key, "missing required field");
  return *it;
}

inline std::string join(const std::string& path, const char* key) { return path.empty() ? key : path + "." + key; }

inline double get_double(const json& v, const std::string& path) {
  if (!v.is_number()) fail(path, "expected a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) fail(path, "expected a finite number");
  return d;
}

inline int get_int(const json& v, const std::string& path) {
  if (!v.is_number_integer()) fail(path, "expected an integer");
  const auto i = v.get<std::int64_t>();
  if (i < std::numeric_limits<int>::min() || i > std::numeric_limits<int>::max()) fail(path, "integer out of range");
  return static_cast<int>(i);
}

inline std::uint64_t get_u64(const json& v, const std::string& path) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
    fail(path, "expected a nonnegative integer");
  }
  return v.get<std::uint64_t>();
}

inline bool get_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) fail(path, "expected true or false");
  return v.get<bool>();
}

inline std::string get_string(const json& v, const std::string& path) {
  if (!v.is_string()) fail(path, "expected a string");
  return v.get<std::string>();
}

inline const json& get_array(const json& v, const std::string& path) {
  if (!v.is_array()) fail(path, "expected an array");
  return v;
}

inline Complex get_complex(const json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 2) fail(path, "expected a complex number [re, im]");
  return {get_double(v[0], at(path, 0)), get_double(v[1], at(path, 1))};
}

inline ComplexMatrix get_matrix(const json& v, const std::string& path) {
  const json& rows = get_array(v, path);
  if (rows.empty()) fail(path, "matrix needs at least one row");
  std::size_t cols = 0;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!rows[i].is_array() || rows[i].empty()) fail(at(path, i), "expected a non-empty row of [re, im] entries");
    if (i == 0) cols = rows[i].size();
    if (rows[i].size() != cols) fail(at(path, i), "row length differs from row 0");
  }
  ComplexMatrix m(rows.size(), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < cols; ++j) m(i, j) = get_complex(rows[i][j], at(at(path, i), j));
  }
  return m;
}

template <class F>
auto get_list(const json& v, const std::string& path, F&& item) {
  const json& a = get_array(v, path);
  std::vector<decltype(item(a, path))> out;
  for (std::size_t i = 0; i < a.size(); ++i) out.push_back(item(a[i], at(path, i)));
  return out;
}

inline std::pair<double, double> get_range(const json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 2) fail(path, "expected a range [min, max]");
  return {get_double(v[0], at(path, 0)), get_double(v[1], at(path, 1))};
}

inline std::pair<int, int> get_int_range(const json& v, const std::string& path) {
  if (!v.is_array() || v.size() != 2) fail(path, "expected a range [min, max]");
  return {get_int(v[0], at(path, 0)), get_int(v[1], at(path, 1))};
}

inline json complex_json(Complex c) { return json::array({c.real(), c.imag()}); }

inline json matrix_json(const ComplexMatrix& m) {
  json rows = json::array();
  for (std::size_t i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (std::size_t j = 0; j < m.cols(); ++j) row.push_back(complex_json(m(i, j)));
    rows.push_back(row);
  }
  return rows;
}

template <class T, class F>
json list_json(const std::vector<T>& v, F&& f) {
  json a = json::array();
  for (const auto& x : v) a.push_back(f(x));
  return a;
}

/// Prefixes a validation message from a library routine with a config path.
template <class F>
void with_path(const std::string& path, F&& f) {
  try {
    f();
  } catch (const ValidationError& e) {
    fail(path, e.what());
  }
}

}  // namespace detail

inline SolutionKind parse_solution_kind(const std::string& s, const std::string& path = "solution.kind") {
  for (auto k : {SolutionKind::vacuum, SolutionKind::dressing, SolutionKind::soliton_e28, SolutionKind::one_soliton,
                 SolutionKind::multi_soliton}) {
    if (to_string(k) == s) return k;
  }
  detail::fail(path, "unknown solution kind '" + s + "'");
}

inline bool is_soliton_kind(SolutionKind k) {
  return k == SolutionKind::soliton_e28 || k == SolutionKind::one_soliton || k == SolutionKind::multi_soliton;
}

/// Checks the referenced invariants of every section. Throws ValidationError
/// naming the section or field.
inline void validate(const RunConfig& c) {
  using detail::fail;
  std::optional<TodaSystem> system;
  if (c.system) detail::with_path("system", [&] { system = build_system(c.system->first, c.system->second); });
  if (c.solution) {
    if (!system) fail("system", "missing required section (needed by solution)");
    const auto& s = *c.solution;
    if (s.kind == SolutionKind::dressing) {
      detail::with_path("solution.data", [&] { validate(*system, s.dressing); });
    } else if (is_soliton_kind(s.kind)) {
      detail::with_path("solution.data", [&] { validate(*system, s.soliton); });
      if (s.kind == SolutionKind::one_soliton && s.soliton.r != 1) {
        fail("solution.data.r", "one_soliton needs r = 1, got " + std::to_string(s.soliton.r));
      }
    }
  }
  if (c.grid) detail::with_path("grid", [&] { validate(*c.grid); });
  for (std::size_t i = 0; i < c.checks.size(); ++i) {
    const std::string path = detail::at("checks", i);
    const auto& name = c.checks[i];
    const auto& known = known_checks();
    if (std::find(known.begin(), known.end(), name) == known.end()) fail(path, "unknown check '" + name + "'");
    if (!c.solution) fail(path, "check '" + name + "' needs a solution section");
    if (!c.grid) fail(path, "check '" + name + "' needs a grid section");
    const auto kind = c.solution->kind;
    if (name == "equivalence" && !is_soliton_kind(kind)) {
      fail(path, "check 'equivalence' needs a soliton kind, got " + to_string(kind));
    }
    if ((name == "residue_relations" || name == "grading") && kind == SolutionKind::vacuum) {
      fail(path, "check '" + name + "' needs dressing data, got vacuum");
    }
    if (name == "reality" && !(is_soliton_kind(kind) && c.solution->soliton.r == 1)) {
      fail(path, "check 'reality' needs soliton data with r = 1");
    }
  }
  if (!c.outputs.grid_path.empty() && !(c.solution && c.grid)) {
    fail("outputs.grid_path", "grid export needs solution and grid sections");
  }
  if (c.campaign) detail::with_path("campaign", [&] { validate(*c.campaign); });
}

inline DressingData parse_dressing_data(const json& v, const std::string& path) {
  using namespace detail;
  allow_keys(v, path, {"r", "mu", "nu", "c_init", "d_init"});
  auto matrices = [](const json& x, const std::string& p) { return get_list(x, p, get_matrix); };
  DressingData d;
  d.mu = get_list(require(v, "mu", path), join(path, "mu"), get_complex);
  d.nu = get_list(require(v, "nu", path), join(path, "nu"), get_complex);
  d.c_init = get_list(require(v, "c_init", path), join(path, "c_init"), matrices);
  d.d_init = get_list(require(v, "d_init", path), join(path, "d_init"), matrices);
  d.r = v.contains("r") ? get_int(v["r"], join(path, "r")) : static_cast<int>(d.mu.size());
  return d;
}

inline SolitonData parse_soliton_data(const json& v, const std::string& path) {
  using namespace detail;
  allow_keys(v, path, {"r", "mu", "nu", "I", "J", "K", "c_I", "d_J", "d_K"});
  SolitonData d;
  d.mu = get_list(require(v, "mu", path), join(path, "mu"), get_complex);
  d.nu = get_list(require(v, "nu", path), join(path, "nu"), get_complex);
  d.I = get_list(require(v, "I", path), join(path, "I"), get_int);
  d.J = get_list(require(v, "J", path), join(path, "J"), get_int);
  d.K = get_list(require(v, "K", path), join(path, "K"), get_int);
  d.c_I = get_list(require(v, "c_I", path), join(path, "c_I"), get_matrix);
  d.d_J = get_list(require(v, "d_J", path), join(path, "d_J"), get_matrix);
  d.d_K = get_list(require(v, "d_K", path), join(path, "d_K"), get_matrix);
  d.r = v.contains("r") ? get_int(v["r"], join(path, "r")) : static_cast<int>(d.mu.size());
  return d;
}

inline GridSpec parse_grid(const json& v) {
  using namespace detail;
  allow_keys(v, "grid", {"mode", "x_range", "t_range", "nx", "nt", "fd_step"});
  GridSpec g;
  if (v.contains("mode")) {
    with_path("grid.mode", [&] { g.mode = parse_coordinate_mode(get_string(v["mode"], "grid.mode")); });
  }
  std::tie(g.x_min, g.x_max) = get_range(require(v, "x_range", "grid"), "grid.x_range");
  std::tie(g.t_min, g.t_max) = get_range(require(v, "t_range", "grid"), "grid.t_range");
  g.nx = get_int(require(v, "nx", "grid"), "grid.nx");
  g.nt = get_int(require(v, "nt", "grid"), "grid.nt");
  if (v.contains("fd_step")) g.fd_step = get_double(v["fd_step"], "grid.fd_step");
  return g;
}

inline CampaignSettings parse_campaign(const json& v) {
  using namespace detail;
  const std::string path = "campaign";
  allow_keys(v, path,
             {"seed", "trials", "p", "n_star", "r", "radius", "points_per_trial", "fd_step", "grading_step",
              "grading_points", "lambda_samples", "box", "connection_band", "data_condition_max",
              "point_condition_max", "max_point_attempts", "inject_pole_collision"});
  CampaignSettings s;
  auto opt = [&](const char* key, auto&& apply) {
    if (v.contains(key)) apply(v[key], join(path, key));
  };
  opt("seed", [&](const json& x, const std::string& p) { s.seed = get_u64(x, p); });
  opt("trials", [&](const json& x, const std::string& p) { s.trials = get_int(x, p); });
  opt("p", [&](const json& x, const std::string& p) { std::tie(s.p_min, s.p_max) = get_int_range(x, p); });
  opt("n_star", [&](const json& x, const std::string& p) { std::tie(s.n_star_min, s.n_star_max) = get_int_range(x, p); });
  opt("r", [&](const json& x, const std::string& p) { std::tie(s.r_min, s.r_max) = get_int_range(x, p); });
  opt("radius", [&](const json& x, const std::string& p) { std::tie(s.radius_min, s.radius_max) = get_range(x, p); });
  opt("points_per_trial", [&](const json& x, const std::string& p) { s.points_per_trial = get_int(x, p); });
  opt("fd_step", [&](const json& x, const std::string& p) { s.fd_step = get_double(x, p); });
  opt("grading_step", [&](const json& x, const std::string& p) { s.grading_step = get_double(x, p); });
  opt("grading_points", [&](const json& x, const std::string& p) { s.grading_points = get_int(x, p); });
  opt("lambda_samples", [&](const json& x, const std::string& p) { s.lambda_samples = get_int(x, p); });
  opt("box", [&](const json& x, const std::string& p) { s.box = get_double(x, p); });
  opt("connection_band",
      [&](const json& x, const std::string& p) { std::tie(s.connection_min, s.connection_max) = get_range(x, p); });
  opt("data_condition_max", [&](const json& x, const std::string& p) { s.data_condition_max = get_double(x, p); });
  opt("point_condition_max", [&](const json& x, const std::string& p) { s.point_condition_max = get_double(x, p); });
  opt("max_point_attempts", [&](const json& x, const std::string& p) { s.max_point_attempts = get_int(x, p); });
  opt("inject_pole_collision",
      [&](const json& x, const std::string& p) { s.inject_pole_collision = get_list(x, p, get_int); });
  return s;
}

/// Parses and validates a config document.
inline RunConfig parse_config(const json& root) {
  using namespace detail;
  allow_keys(root, "", {"system", "solution", "grid", "checks", "outputs", "campaign"});
  RunConfig c;
  if (root.contains("system")) {
    const json& s = root["system"];
    allow_keys(s, "system", {"p", "n_star"});
    c.system = std::pair{get_int(require(s, "p", "system"), "system.p"),
                         get_int(require(s, "n_star", "system"), "system.n_star")};
  }
  if (root.contains("solution")) {
    const json& s = root["solution"];
    allow_keys(s, "solution", {"kind", "data", "normalize"});
    SolutionConfig sol;
    sol.kind = parse_solution_kind(get_string(require(s, "kind", "solution"), "solution.kind"));
    if (s.contains("normalize")) sol.normalize = get_bool(s["normalize"], "solution.normalize");
    if (sol.kind == SolutionKind::vacuum) {
      if (s.contains("data")) fail("solution.data", "vacuum takes no data");
    } else if (sol.kind == SolutionKind::dressing) {
      sol.dressing = parse_dressing_data(require(s, "data", "solution"), "solution.data");
    } else {
      sol.soliton = parse_soliton_data(require(s, "data", "solution"), "solution.data");
    }
    c.solution = std::move(sol);
  }
  if (root.contains("grid")) c.grid = parse_grid(root["grid"]);
  if (root.contains("checks")) c.checks = get_list(root["checks"], "checks", get_string);
  if (root.contains("outputs")) {
    const json& o = root["outputs"];
    allow_keys(o, "outputs", {"grid_path", "report_path", "format"});
    if (o.contains("grid_path")) c.outputs.grid_path = get_string(o["grid_path"], "outputs.grid_path");
    if (o.contains("report_path")) c.outputs.report_path = get_string(o["report_path"], "outputs.report_path");
    if (o.contains("format")) {
      const auto f = get_string(o["format"], "outputs.format");
      if (f == "csv") {
        c.outputs.format = ExportFormat::csv;
      } else if (f == "json") {
        c.outputs.format = ExportFormat::json;
      } else {
        fail("outputs.format", "expected 'csv' or 'json', got '" + f + "'");
      }
    }
  }
  if (root.contains("campaign")) c.campaign = parse_campaign(root["campaign"]);
  validate(c);
  return c;
}

/// Parses config text; JSON syntax errors carry line and column.
inline RunConfig parse_config_text(const std::string& text) {
  json root;
  try {
    root = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  return parse_config(root);
}

inline std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  if (in.bad()) throw IoError("error while reading " + path.string());
  return ss.str();
}

inline RunConfig load_config(const std::filesystem::path& path) { return parse_config_text(read_file(path)); }

inline json to_json(const RunConfig& c) {
  using namespace detail;
  json root = json::object();
  if (c.system) root["system"] = {{"p", c.system->first}, {"n_star", c.system->second}};
  if (c.solution) {
    const auto& s = *c.solution;
    json sol = {{"kind", to_string(s.kind)}, {"normalize", s.normalize}};
    auto matrices = [](const std::vector<ComplexMatrix>& v) { return list_json(v, matrix_json); };
    if (s.kind == SolutionKind::dressing) {
      const auto& d = s.dressing;
      sol["data"] = {{"r", d.r},
                     {"mu", list_json(d.mu, complex_json)},
                     {"nu", list_json(d.nu, complex_json)},
                     {"c_init", list_json(d.c_init, matrices)},
                     {"d_init", list_json(d.d_init, matrices)}};
    } else if (is_soliton_kind(s.kind)) {
      const auto& d = s.soliton;
      sol["data"] = {{"r", d.r},
                     {"mu", list_json(d.mu, complex_json)},
                     {"nu", list_json(d.nu, complex_json)},
                     {"I", d.I},
                     {"J", d.J},
                     {"K", d.K},
                     {"c_I", matrices(d.c_I)},
                     {"d_J", matrices(d.d_J)},
                     {"d_K", matrices(d.d_K)}};
    }
    root["solution"] = sol;
  }
  if (c.grid) {
    const auto& g = *c.grid;
    root["grid"] = {{"mode", to_string(g.mode)},
                    {"x_range", {g.x_min, g.x_max}},
                    {"t_range", {g.t_min, g.t_max}},
                    {"nx", g.nx},
                    {"nt", g.nt},
                    {"fd_step", g.fd_step}};
  }
  if (!c.checks.empty()) root["checks"] = c.checks;
  root["outputs"] = {{"grid_path", c.outputs.grid_path},
                     {"report_path", c.outputs.report_path},
                     {"format", to_string(c.outputs.format)}};
  if (c.campaign) {
    const auto& s = *c.campaign;
    root["campaign"] = {{"seed", s.seed},
                        {"trials", s.trials},
                        {"p", {s.p_min, s.p_max}},
                        {"n_star", {s.n_star_min, s.n_star_max}},
                        {"r", {s.r_min, s.r_max}},
                        {"radius", {s.radius_min, s.radius_max}},
                        {"points_per_trial", s.points_per_trial},
                        {"fd_step", s.fd_step},
                        {"grading_step", s.grading_step},
                        {"grading_points", s.grading_points},
                        {"lambda_samples", s.lambda_samples},
                        {"box", s.box},
                        {"connection_band", {s.connection_min, s.connection_max}},
                        {"data_condition_max", s.data_condition_max},
                        {"point_condition_max", s.point_condition_max},
                        {"max_point_attempts", s.max_point_attempts},
                        {"inject_pole_collision", s.inject_pole_collision}};
  }
  return root;
}

inline std::string serialize(const RunConfig& c) { return to_json(c).dump(2) + "\n"; }

/// The field described by a solution section.
inline GammaField build_field(const TodaSystem& system, const SolutionConfig& s) {
  switch (s.kind) {
    case SolutionKind::vacuum: return vacuum_field(system);
    case SolutionKind::dressing: return gamma_dressing(system, s.dressing);
    case SolutionKind::soliton_e28: return gamma_soliton_e28(system, s.soliton);
    case SolutionKind::one_soliton: return gamma_one_soliton(system, s.soliton).field;
    case SolutionKind::multi_soliton: return gamma_multi_soliton(system, s.soliton, s.normalize);
  }
  throw ValidationError("solution.kind: unhandled kind");
}

/// Shortest decimal with 17 significant digits; parses back to the same double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 17);
  return std::string(buf, res.ptr);
}

/// Writes to a temporary sibling and renames it into place.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw IoError("error while writing " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot move output into place at " + path.string());
  }
}

/// Coordinate column names: (z_plus_re, z_minus_re) in independent mode,
/// (x, t) otherwise.
inline std::pair<const char*, const char*> grid_columns(CoordinateMode mode) {
  if (mode == CoordinateMode::independent) return {"z_plus_re", "z_minus_re"};
  return {"x", "t"};
}

/// One row per matrix entry per point per alpha, x-major point order.
inline std::string grid_csv(const FieldGrid& g) {
  const auto [xc, tc] = grid_columns(g.spec.mode);
  std::string out = std::string("alpha,") + xc + "," + tc + ",block_row,block_col,re,im,valid\n";
  const auto ns = static_cast<std::size_t>(g.n_star);
  for (std::size_t a = 0; a < static_cast<std::size_t>(g.p); ++a) {
    for (std::size_t k = 0; k < g.spec.size(); ++k) {
      const auto [x, t] = g.spec.point(k);
      const bool ok = g.valid[a][k];
      const std::string prefix = std::to_string(a + 1) + "," + format_double(x) + "," + format_double(t) + ",";
      for (std::size_t i = 0; i < ns; ++i) {
        for (std::size_t j = 0; j < ns; ++j) {
          const Complex v = ok ? g.values[a][k](i, j) : Complex(std::nan(""), std::nan(""));
          out += prefix + std::to_string(i + 1) + "," + std::to_string(j + 1) + "," + format_double(v.real()) + "," +
                 format_double(v.imag()) + "," + (ok ? "true" : "false") + "\n";
        }
      }
    }
  }
  return out;
}

/// Same rows as the CSV; invalid values are null.
inline json grid_json(const FieldGrid& g) {
  const auto [xc, tc] = grid_columns(g.spec.mode);
  json rows = json::array();
  const auto ns = static_cast<std::size_t>(g.n_star);
  for (std::size_t a = 0; a < static_cast<std::size_t>(g.p); ++a) {
    for (std::size_t k = 0; k < g.spec.size(); ++k) {
      const auto [x, t] = g.spec.point(k);
      const bool ok = g.valid[a][k];
      for (std::size_t i = 0; i < ns; ++i) {
        for (std::size_t j = 0; j < ns; ++j) {
          json row = {{"alpha", a + 1}, {xc, x}, {tc, t}, {"block_row", i + 1}, {"block_col", j + 1}};
          row["re"] = ok ? json(g.values[a][k](i, j).real()) : json(nullptr);
          row["im"] = ok ? json(g.values[a][k](i, j).imag()) : json(nullptr);
          row["valid"] = ok;
          rows.push_back(row);
        }
      }
    }
  }
  return {{"mode", to_string(g.spec.mode)}, {"p", g.p}, {"n_star", g.n_star}, {"rows", rows}};
}

inline void export_grid(const FieldGrid& g, const std::filesystem::path& path, ExportFormat format) {
  write_atomic(path, format == ExportFormat::csv ? grid_csv(g) : grid_json(g).dump(1) + "\n");
}

}  // namespace toda
