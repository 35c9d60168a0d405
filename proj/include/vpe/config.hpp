#pragma once

// Run configuration (JSON), CSV and SVG emission for experiment results.

#include "vpe/experiments.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

namespace vpe {

/// Malformed or invalid configuration; the message starts with a field path.
struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct RunConfig {
  std::string experiment = "custom";  // preset the plan starts from, or "custom"
  ExperimentPlan plan;
  std::string out_dir = ".";
  bool svg = false;
};

namespace detail {

using json = nlohmann::json;

[[noreturn]] inline void config_fail(const std::string& path, const std::string& why) {
  throw ConfigError(path + ": " + why);
}

inline void reject_unknown(const json& j, const std::string& path, const std::set<std::string>& known) {
  if (!j.is_object()) config_fail(path.empty() ? "<root>" : path, "expected an object");
  for (const auto& [k, v] : j.items())
    if (!known.contains(k)) config_fail(path.empty() ? k : path + "." + k, "unknown key");
}

inline double read_number(const json& j, const std::string& path) {
  if (!j.is_number()) config_fail(path, "expected a number");
  return j.get<double>();
}

inline long long read_integer(const json& j, const std::string& path) {
  if (!j.is_number_integer()) config_fail(path, "expected an integer");
  return j.get<long long>();
}

inline bool read_bool(const json& j, const std::string& path) {
  if (!j.is_boolean()) config_fail(path, "expected true or false");
  return j.get<bool>();
}

inline std::string read_string(const json& j, const std::string& path) {
  if (!j.is_string()) config_fail(path, "expected a string");
  return j.get<std::string>();
}

template <class E>
E read_enum(const json& j, const std::string& path) {
  const auto text = read_string(j, path);
  if (auto v = parse_enum<E>(text)) return *v;
  std::string options;
  for (const auto& n : enum_names<E>()) options += (options.empty() ? "" : ", ") + n;
  config_fail(path, "unknown value '" + text + "' (expected one of: " + options + ")");
}

template <class T, class Read>
std::vector<T> read_list(const json& j, const std::string& path, Read read) {
  if (!j.is_array()) config_fail(path, "expected an array");
  std::vector<T> out;
  for (std::size_t i = 0; i < j.size(); ++i) out.push_back(read(j[i], path + "[" + std::to_string(i) + "]"));
  return out;
}

inline const std::set<std::string>& plan_keys() {
  static const std::set<std::string> keys{
      "kind",         "system",       "noise",  "rates",  "replicates", "seed",       "shots",
      "post",         "basis_flip",   "z_quarter", "mask", "compensate_bias", "include_tomography",
      "include_floor", "threads",     "optimizer", "shot_counts", "trials", "fixed_rate", "t_points"};
  return keys;
}

inline void apply_optimizer(OptimizerConfig& o, const json& j, const std::string& path) {
  reject_unknown(j, path, {"kind", "max_evaluations", "initial_step", "x_tolerance", "f_tolerance"});
  for (const auto& [k, v] : j.items()) {
    const auto p = path + "." + k;
    if (k == "kind") o.kind = read_enum<OptimizerKind>(v, p);
    else if (k == "max_evaluations") o.max_evaluations = static_cast<int>(read_integer(v, p));
    else if (k == "initial_step") o.initial_step = read_number(v, p);
    else if (k == "x_tolerance") o.x_tolerance = read_number(v, p);
    else if (k == "f_tolerance") o.f_tolerance = read_number(v, p);
  }
}

}  // namespace detail

/// Overrides the fields of `plan` present in `j`; `path` prefixes error messages.
inline void apply_plan_overrides(ExperimentPlan& plan, const nlohmann::json& j, const std::string& path = "plan") {
  using namespace detail;
  reject_unknown(j, path, plan_keys());
  for (const auto& [k, v] : j.items()) {
    const auto p = path + "." + k;
    if (k == "kind") plan.kind = read_enum<ExperimentKind>(v, p);
    else if (k == "system") plan.system = read_enum<SystemKind>(v, p);
    else if (k == "noise") plan.noise = read_enum<NoiseKind>(v, p);
    else if (k == "rates") plan.rates = read_list<double>(v, p, read_number);
    else if (k == "replicates") plan.replicates = static_cast<int>(read_integer(v, p));
    else if (k == "seed") {
      const auto s = read_integer(v, p);
      if (s < 0) config_fail(p, "must be non-negative");
      plan.seed = static_cast<std::uint64_t>(s);
    } else if (k == "shots") plan.shots = read_integer(v, p);
    else if (k == "post") plan.post = read_enum<PostProcessor>(v, p);
    else if (k == "basis_flip") plan.basis_flip = read_bool(v, p);
    else if (k == "z_quarter") plan.z_quarter = read_bool(v, p);
    else if (k == "mask") plan.mask = read_enum<NoiseMask>(v, p);
    else if (k == "compensate_bias") plan.compensate_bias = read_bool(v, p);
    else if (k == "include_tomography") plan.include_tomography = read_bool(v, p);
    else if (k == "include_floor") plan.include_floor = read_bool(v, p);
    else if (k == "threads") plan.threads = static_cast<int>(read_integer(v, p));
    else if (k == "optimizer") apply_optimizer(plan.optimizer, v, p);
    else if (k == "shot_counts") plan.shot_counts = read_list<long long>(v, p, read_integer);
    else if (k == "trials") plan.trials = static_cast<int>(read_integer(v, p));
    else if (k == "fixed_rate") plan.fixed_rate = read_number(v, p);
    else if (k == "t_points") plan.t_points = static_cast<int>(read_integer(v, p));
  }
}

/// Validates the plan, re-prefixing its field paths with `path`.
inline void validate_plan(const ExperimentPlan& plan, const std::string& path = "plan") {
  try {
    plan.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(path + "." + e.what());
  }
}

/// Parses and validates a run configuration document.
inline RunConfig parse_run_config(const nlohmann::json& j) {
  using namespace detail;
  reject_unknown(j, "", {"experiment", "plan", "out", "svg"});
  RunConfig cfg;
  if (j.contains("experiment")) {
    cfg.experiment = read_string(j.at("experiment"), "experiment");
    if (cfg.experiment != "custom") {
      const auto preset = find_preset(cfg.experiment);
      if (!preset) config_fail("experiment", "unknown experiment '" + cfg.experiment + "'");
      cfg.plan = preset->plan;
    }
  }
  if (j.contains("plan")) apply_plan_overrides(cfg.plan, j.at("plan"));
  if (j.contains("out")) cfg.out_dir = read_string(j.at("out"), "out");
  if (j.contains("svg")) cfg.svg = read_bool(j.at("svg"), "svg");
  validate_plan(cfg.plan);
  return cfg;
}

inline RunConfig parse_run_config_text(const std::string& text, const std::string& source = "<config>") {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(source + ": invalid JSON: " + e.what());
  }
  return parse_run_config(j);
}

inline RunConfig load_run_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path + ": cannot open config file");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_run_config_text(ss.str(), path);
}

inline nlohmann::json plan_to_json(const ExperimentPlan& p) {
  nlohmann::json j;
  j["kind"] = enum_name(p.kind);
  j["system"] = enum_name(p.system);
  j["noise"] = enum_name(p.noise);
  j["rates"] = p.rates;
  j["replicates"] = p.replicates;
  j["seed"] = p.seed;
  j["shots"] = p.shots;
  j["post"] = enum_name(p.post);
  j["basis_flip"] = p.basis_flip;
  j["z_quarter"] = p.z_quarter;
  j["mask"] = enum_name(p.mask);
  j["compensate_bias"] = p.compensate_bias;
  j["include_tomography"] = p.include_tomography;
  j["include_floor"] = p.include_floor;
  j["threads"] = p.threads;
  j["optimizer"] = {{"kind", enum_name(p.optimizer.kind)},
                    {"max_evaluations", p.optimizer.max_evaluations},
                    {"initial_step", p.optimizer.initial_step},
                    {"x_tolerance", p.optimizer.x_tolerance},
                    {"f_tolerance", p.optimizer.f_tolerance}};
  j["shot_counts"] = p.shot_counts;
  j["trials"] = p.trials;
  j["fixed_rate"] = p.fixed_rate;
  j["t_points"] = p.t_points;
  return j;
}

// ---------------------------------------------------------------------------
// Output.

/// 12 significant digits, shortest form.
inline std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline const char* kCsvHeader = "rate,replicate,estimator,abs_error";

inline void write_csv(std::ostream& os, const SweepResult& r) {
  auto records = r.records;
  detail::sort_records(records);
  os << kCsvHeader << '\n';
  for (const auto& rec : records)
    os << format_number(rec.rate) << ',' << rec.replicate << ',' << rec.estimator << ',' << format_number(rec.abs_error)
       << '\n';
}

namespace detail {

inline std::string svg_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '<') out += "&lt;";
    else if (c == '>') out += "&gt;";
    else if (c == '&') out += "&amp;";
    else if (c == '"') out += "&quot;";
    else out += c;
  }
  return out;
}

}  // namespace detail

/// Log-log plot: faint per-replicate points, a median line per estimator, and
/// dashed guides of slope 1 (red), 2 (black) and 3 (blue). Each series and
/// each guide is its own path element.
inline void write_svg(std::ostream& os, const SweepResult& r, const std::string& x_label = "rate") {
  constexpr double W = 640, H = 480, L = 70, R = 150, T = 30, B = 50;
  double xmin = 1e300, xmax = -1e300, ymin = 1e300, ymax = -1e300;
  for (const auto& rec : r.records) {
    if (!(rec.rate > 0) || !(rec.abs_error > 0) || !std::isfinite(rec.abs_error)) continue;
    xmin = std::min(xmin, std::log10(rec.rate));
    xmax = std::max(xmax, std::log10(rec.rate));
    ymin = std::min(ymin, std::log10(rec.abs_error));
    ymax = std::max(ymax, std::log10(rec.abs_error));
  }
  if (xmin > xmax) xmin = -4, xmax = -2, ymin = -8, ymax = 0;
  if (xmax - xmin < 1e-9) xmin -= 0.5, xmax += 0.5;
  if (ymax - ymin < 1e-9) ymin -= 0.5, ymax += 0.5;
  xmin = std::floor(xmin), xmax = std::ceil(xmax), ymin = std::floor(ymin), ymax = std::ceil(ymax);
  auto px = [&](double lx) { return L + (lx - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double ly) { return H - B - (ly - ymin) / (ymax - ymin) * (H - T - B); };
  auto num = [](double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", v);
    return std::string(buf);
  };
  static const char* palette[] = {"#000000", "#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
     << ' ' << H << "\">\n";
  os << "<title>" << detail::svg_escape(r.name) << "</title>\n";
  os << "<rect x=\"" << L << "\" y=\"" << T << "\" width=\"" << W - L - R << "\" height=\"" << H - T - B
     << "\" fill=\"none\" stroke=\"#444\"/>\n";
  for (int e = static_cast<int>(xmin); e <= static_cast<int>(xmax); ++e)
    os << "<text x=\"" << num(px(e)) << "\" y=\"" << H - B + 18 << "\" font-size=\"11\" text-anchor=\"middle\">1e" << e
       << "</text>\n";
  for (int e = static_cast<int>(ymin); e <= static_cast<int>(ymax); ++e)
    os << "<text x=\"" << L - 6 << "\" y=\"" << num(py(e) + 4) << "\" font-size=\"11\" text-anchor=\"end\">1e" << e
       << "</text>\n";
  os << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12 << "\" font-size=\"12\" text-anchor=\"middle\">"
     << detail::svg_escape(x_label) << "</text>\n";
  os << "<text x=\"16\" y=\"" << (T + H - B) / 2 << "\" font-size=\"12\" text-anchor=\"middle\" transform=\"rotate(-90 16 "
     << (T + H - B) / 2 << ")\">absolute error</text>\n";

  // guides through the lower-left corner of the data box
  const char* guide_colour[] = {"#d62728", "#000000", "#1f77b4"};
  for (int s = 1; s <= 3; ++s) {
    const double y0 = ymin + 0.5;
    double x1 = xmax, y1 = y0 + s * (xmax - xmin);
    if (y1 > ymax) x1 = xmin + (ymax - y0) / s, y1 = ymax;
    os << "<path class=\"guide\" data-slope=\"" << s << "\" d=\"M" << num(px(xmin)) << ' ' << num(py(y0)) << " L"
       << num(px(x1)) << ' ' << num(py(y1)) << "\" stroke=\"" << guide_colour[s - 1]
       << "\" stroke-dasharray=\"6 4\" fill=\"none\"/>\n";
  }

  for (std::size_t i = 0; i < r.estimator_order.size(); ++i) {
    const auto& est = r.estimator_order[i];
    const char* colour = palette[i % std::size(palette)];
    os << "<g class=\"points\" data-estimator=\"" << detail::svg_escape(est) << "\" fill=\"" << colour
       << "\" fill-opacity=\"0.25\">\n";
    for (const auto& rec : r.records)
      if (rec.estimator == est && rec.rate > 0 && rec.abs_error > 0 && std::isfinite(rec.abs_error))
        os << "<circle cx=\"" << num(px(std::log10(rec.rate))) << "\" cy=\"" << num(py(std::log10(rec.abs_error)))
           << "\" r=\"2\"/>\n";
    os << "</g>\n";
    std::string d;
    for (double rate : r.rates()) {
      const double m = r.statistic(est, rate, Statistic::Median);
      if (!(rate > 0) || !(m > 0) || !std::isfinite(m)) continue;
      d += (d.empty() ? "M" : " L") + num(px(std::log10(rate))) + ' ' + num(py(std::log10(m)));
    }
    os << "<path class=\"series\" data-estimator=\"" << detail::svg_escape(est) << "\" d=\"" << d << "\" stroke=\""
       << colour << "\" stroke-width=\"2\" fill=\"none\"/>\n";
    os << "<text x=\"" << W - R + 10 << "\" y=\"" << T + 16 * (i + 1) << "\" font-size=\"12\" fill=\"" << colour << "\">"
       << detail::svg_escape(est) << "</text>\n";
  }
  os << "</svg>\n";
}

}  // namespace vpe
