#pragma once

// Experiment configuration: a JSON document (comments allowed) with the
// blocks cellSystem, weight, grids, sampling, render, check and output.
// Unknown keys are rejected and every error names the offending key path.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "carpetmf/error.hpp"
#include "carpetmf/gibbs.hpp"
#include "carpetmf/io.hpp"
#include "carpetmf/pressure.hpp"
#include "carpetmf/symbolic.hpp"
#include "carpetmf/weights.hpp"

namespace carpetmf {

enum class WeightKind { cell_masses, constant_cell, matrix_cocycle };

struct WeightSpec {
  WeightKind kind = WeightKind::cell_masses;
  int depth = 1;
  std::vector<double> masses;                    // cellMasses
  std::vector<double> table;                     // constantCell, |A|^depth log values
  std::vector<std::vector<double>> truncated;    // constantCell, lengths |A|^j for j < depth
  int dimension = 1;                             // matrixCocycle
  std::vector<std::vector<double>> matrices;     // matrixCocycle, one d*d row-major per cell
  bool normalize = true;
};

struct GridSpec {
  std::vector<double> q = default_q_grid();
  std::vector<int> depths = default_depth_schedule();
};

struct SamplingSpec {
  std::uint64_t samples = 1000;
  std::size_t depth = 12;
  std::uint64_t seed = 1;
  double q = 1.0;
  AuxVariant variant = AuxVariant::psi_tilde_q;
};

struct RenderSpec {
  std::size_t depth = 4;
};

struct CheckSpec {
  std::vector<double> q{0.5, 1.0, 2.0};
  std::vector<int> depths = default_depth_schedule();
  double tolerance = 1e-6;
};

struct OutputSpec {
  std::string directory = "out";
  bool csv = true;
  bool json = true;
};

struct ExperimentConfig {
  int r1 = 2, r2 = 4;
  std::vector<Cell> allowed;
  WeightSpec weight;
  GridSpec grids;
  SamplingSpec sampling;
  RenderSpec render;
  CheckSpec check;
  OutputSpec output;
  std::uint64_t cap = kDefaultEnumerationCap;

  CellSystem system() const { return CellSystem(r1, r2, allowed); }
};

namespace detail {

class Reader {
 public:
  Reader(const nlohmann::json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail("expected an object");
  }

  void allow(std::initializer_list<const char*> keys) const {
    std::set<std::string> ok(keys.begin(), keys.end());
    for (const auto& [k, v] : j_.items())
      if (!ok.count(k)) throw ConfigError(where(k) + ": unknown key");
  }

  bool has(const char* key) const { return j_.contains(key); }
  const nlohmann::json& raw(const char* key) const {
    if (!j_.contains(key)) throw ConfigError(where(key) + ": missing");
    return j_.at(key);
  }
  Reader block(const char* key) const { return Reader(raw(key), where(key)); }

  double number(const char* key) const { return as_number(raw(key), where(key)); }
  long long integer(const char* key) const { return as_integer(raw(key), where(key)); }
  bool boolean(const char* key) const {
    const auto& v = raw(key);
    if (!v.is_boolean()) throw ConfigError(where(key) + ": expected true or false");
    return v.get<bool>();
  }
  std::string string(const char* key) const {
    const auto& v = raw(key);
    if (!v.is_string()) throw ConfigError(where(key) + ": expected a string");
    return v.get<std::string>();
  }
  std::vector<double> numbers(const char* key) const { return as_numbers(raw(key), where(key)); }
  std::vector<long long> integers(const char* key) const {
    const auto& v = raw(key);
    if (!v.is_array()) throw ConfigError(where(key) + ": expected an array of integers");
    std::vector<long long> out;
    for (std::size_t i = 0; i < v.size(); ++i)
      out.push_back(as_integer(v[i], where(key) + "[" + std::to_string(i) + "]"));
    return out;
  }
  std::vector<std::vector<double>> number_lists(const char* key) const {
    const auto& v = raw(key);
    if (!v.is_array()) throw ConfigError(where(key) + ": expected an array of arrays");
    std::vector<std::vector<double>> out;
    for (std::size_t i = 0; i < v.size(); ++i)
      out.push_back(as_numbers(v[i], where(key) + "[" + std::to_string(i) + "]"));
    return out;
  }

  std::string where(const std::string& key) const { return path_ + "." + key; }
  [[noreturn]] void fail(const std::string& what) const { throw ConfigError(path_ + ": " + what); }

  static double as_number(const nlohmann::json& v, const std::string& at) {
    if (!v.is_number()) throw ConfigError(at + ": expected a number");
    const double x = v.get<double>();
    if (!std::isfinite(x)) throw ConfigError(at + ": not finite");
    return x;
  }
  static long long as_integer(const nlohmann::json& v, const std::string& at) {
    if (!v.is_number_integer()) throw ConfigError(at + ": expected an integer");
    return v.get<long long>();
  }
  static std::vector<double> as_numbers(const nlohmann::json& v, const std::string& at) {
    if (!v.is_array()) throw ConfigError(at + ": expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_number(v[i], at + "[" + std::to_string(i) + "]"));
    return out;
  }

 private:
  const nlohmann::json& j_;
  std::string path_;
};

inline std::size_t line_of(const std::string& text, std::size_t byte) {
  return 1 + static_cast<std::size_t>(
                 std::count(text.begin(), text.begin() + static_cast<std::ptrdiff_t>(std::min(byte, text.size())), '\n'));
}

/// q grid: an array of values, "default", or {from, to, step, refine?}.
inline std::vector<double> read_q_grid(const nlohmann::json& v, const std::string& at) {
  std::vector<double> q;
  if (v.is_string()) {
    if (v.get<std::string>() != "default") throw ConfigError(at + ": the only named grid is \"default\"");
    return default_q_grid();
  }
  if (v.is_array()) {
    q = Reader::as_numbers(v, at);
  } else if (v.is_object()) {
    Reader g(v, at);
    g.allow({"from", "to", "step", "refine"});
    const double lo = g.number("from"), hi = g.number("to"), step = g.number("step");
    if (!(step > 0) || hi < lo) throw ConfigError(at + ": need from <= to and step > 0");
    const auto m = static_cast<long long>(std::floor((hi - lo) / step + 1e-9));
    if (m > 100000) throw ConfigError(at + ": too many grid points");
    for (long long i = 0; i <= m; ++i) q.push_back(lo + step * static_cast<double>(i));
    if (g.has("refine"))
      for (double x : g.numbers("refine")) q.push_back(x);
  } else {
    throw ConfigError(at + ": expected an array, \"default\" or {from, to, step}");
  }
  if (q.empty()) throw ConfigError(at + ": empty grid");
  std::sort(q.begin(), q.end());
  q.erase(std::unique(q.begin(), q.end()), q.end());
  return q;
}

inline std::vector<int> read_depths(const Reader& r, const char* key) {
  std::vector<int> out;
  for (long long n : r.integers(key)) {
    if (n < 1 || n > 4096) throw ConfigError(r.where(key) + ": depths must lie in [1, 4096]");
    out.push_back(static_cast<int>(n));
  }
  if (out.empty()) throw ConfigError(r.where(key) + ": empty schedule");
  return out;
}

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& root) {
  ExperimentConfig c;
  detail::Reader top(root, "config");
  top.allow({"cellSystem", "weight", "grids", "sampling", "render", "check", "output", "cap"});

  const auto cs = top.block("cellSystem");
  cs.allow({"r1", "r2", "allowed"});
  const auto r1 = cs.integer("r1"), r2 = cs.integer("r2");
  if (r1 < 2 || r2 < r1 || r2 > 256) throw ConfigError("cellSystem: need 2 <= r1 <= r2 <= 256");
  c.r1 = static_cast<int>(r1);
  c.r2 = static_cast<int>(r2);
  const auto& allowed = cs.raw("allowed");
  if (!allowed.is_array() || allowed.empty()) throw ConfigError("cellSystem.allowed: expected a nonempty array of [a1, a2]");
  for (std::size_t i = 0; i < allowed.size(); ++i) {
    const std::string at = "cellSystem.allowed[" + std::to_string(i) + "]";
    const auto& p = allowed[i];
    if (!p.is_array() || p.size() != 2) throw ConfigError(at + ": expected [a1, a2]");
    const auto a1 = detail::Reader::as_integer(p[0], at), a2 = detail::Reader::as_integer(p[1], at);
    if (a1 < 0 || a1 >= r1 || a2 < 0 || a2 >= r2) throw ConfigError(at + ": digit out of range");
    c.allowed.push_back({static_cast<Letter>(a1), static_cast<Letter>(a2)});
  }
  CellSystem sys = [&] {
    try {
      return c.system();
    } catch (const Error& e) {
      throw ConfigError(std::string("cellSystem: ") + e.what());
    }
  }();
  const std::size_t cells = sys.size();

  const auto w = top.block("weight");
  w.allow({"kind", "depth", "masses", "table", "truncated", "dimension", "matrices", "normalize"});
  const std::string kind = w.string("kind");
  if (w.has("normalize")) c.weight.normalize = w.boolean("normalize");
  if (kind == "cellMasses") {
    c.weight.kind = WeightKind::cell_masses;
    c.weight.masses = w.numbers("masses");
    if (c.weight.masses.size() != cells)
      throw ConfigError("weight.masses: " + std::to_string(c.weight.masses.size()) + " entries, expected " +
                        std::to_string(cells) + " (one per allowed cell)");
    for (double m : c.weight.masses)
      if (!(m > 0)) throw ConfigError("weight.masses: entries must be positive");
  } else if (kind == "constantCell") {
    c.weight.kind = WeightKind::constant_cell;
    const auto k = w.has("depth") ? w.integer("depth") : 1;
    if (k < 1 || k > 8) throw ConfigError("weight.depth: must lie in [1, 8]");
    c.weight.depth = static_cast<int>(k);
    c.weight.table = w.numbers("table");
    const auto expected = saturating_pow(cells, static_cast<std::uint64_t>(k));
    if (c.weight.table.size() != expected)
      throw ConfigError("weight.table: " + std::to_string(c.weight.table.size()) + " entries, expected " +
                        std::to_string(expected) + " (|A|^depth)");
    if (w.has("truncated")) {
      c.weight.truncated = w.number_lists("truncated");
      if (c.weight.truncated.size() != static_cast<std::size_t>(k - 1))
        throw ConfigError("weight.truncated: expected depth - 1 tables");
      for (std::size_t j = 0; j < c.weight.truncated.size(); ++j)
        if (c.weight.truncated[j].size() != saturating_pow(cells, j + 1))
          throw ConfigError("weight.truncated[" + std::to_string(j) + "]: expected " +
                            std::to_string(saturating_pow(cells, j + 1)) + " entries");
    }
  } else if (kind == "matrixCocycle") {
    c.weight.kind = WeightKind::matrix_cocycle;
    const auto d = w.integer("dimension");
    if (d < 1 || d > 16) throw ConfigError("weight.dimension: must lie in [1, 16]");
    c.weight.dimension = static_cast<int>(d);
    c.weight.matrices = w.number_lists("matrices");
    if (c.weight.matrices.size() != cells)
      throw ConfigError("weight.matrices: expected one matrix per allowed cell (" + std::to_string(cells) + ")");
    for (std::size_t i = 0; i < cells; ++i)
      if (c.weight.matrices[i].size() != static_cast<std::size_t>(d * d))
        throw ConfigError("weight.matrices[" + std::to_string(i) + "]: expected " + std::to_string(d * d) +
                          " entries (row-major)");
  } else {
    throw ConfigError("weight.kind: unknown kind \"" + kind + "\" (cellMasses, constantCell, matrixCocycle)");
  }

  if (top.has("grids")) {
    const auto g = top.block("grids");
    g.allow({"q", "depthSchedule"});
    if (g.has("q")) c.grids.q = detail::read_q_grid(g.raw("q"), "grids.q");
    if (g.has("depthSchedule")) c.grids.depths = detail::read_depths(g, "depthSchedule");
  }
  if (top.has("sampling")) {
    const auto s = top.block("sampling");
    s.allow({"nSamples", "depth", "masterSeed", "q", "variant"});
    if (s.has("nSamples")) {
      const auto v = s.integer("nSamples");
      if (v < 0 || v > 100000000) throw ConfigError("sampling.nSamples: must lie in [0, 1e8]");
      c.sampling.samples = static_cast<std::uint64_t>(v);
    }
    if (s.has("depth")) {
      const auto v = s.integer("depth");
      if (v < 1 || v > 4096) throw ConfigError("sampling.depth: must lie in [1, 4096]");
      c.sampling.depth = static_cast<std::size_t>(v);
    }
    if (s.has("masterSeed")) {
      const auto& v = s.raw("masterSeed");
      if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
        throw ConfigError("sampling.masterSeed: expected a nonnegative integer");
      c.sampling.seed = v.get<std::uint64_t>();
    }
    if (s.has("q")) c.sampling.q = s.number("q");
    if (s.has("variant")) {
      const auto v = s.string("variant");
      if (v == "psiQ") c.sampling.variant = AuxVariant::psi_q;
      else if (v == "psiTildeQ") c.sampling.variant = AuxVariant::psi_tilde_q;
      else throw ConfigError("sampling.variant: expected psiQ or psiTildeQ");
    }
  }
  if (top.has("render")) {
    const auto r = top.block("render");
    r.allow({"depth"});
    const auto v = r.integer("depth");
    if (v < 1 || v > 64) throw ConfigError("render.depth: must lie in [1, 64]");
    c.render.depth = static_cast<std::size_t>(v);
  }
  if (top.has("check")) {
    const auto k = top.block("check");
    k.allow({"q", "depthSchedule", "tolerance"});
    if (k.has("q")) {
      c.check.q = k.numbers("q");
      for (double q : c.check.q)
        if (!(q > 0)) throw ConfigError("check.q: values must be positive");
    }
    if (k.has("depthSchedule")) c.check.depths = detail::read_depths(k, "depthSchedule");
    if (k.has("tolerance")) c.check.tolerance = k.number("tolerance");
  }
  if (top.has("output")) {
    const auto o = top.block("output");
    o.allow({"directory", "formats"});
    if (o.has("directory")) c.output.directory = o.string("directory");
    if (o.has("formats")) {
      const auto& f = o.raw("formats");
      if (!f.is_array()) throw ConfigError("output.formats: expected an array");
      c.output.csv = c.output.json = false;
      for (const auto& x : f) {
        if (x == "csv") c.output.csv = true;
        else if (x == "json") c.output.json = true;
        else throw ConfigError("output.formats: expected \"csv\" or \"json\"");
      }
    }
  }
  if (top.has("cap")) {
    const auto v = top.integer("cap");
    if (v < 1) throw ConfigError("config.cap: must be positive");
    c.cap = static_cast<std::uint64_t>(v);
  }
  return c;
}

/// Parses config text; syntax errors report the line.
inline ExperimentConfig parse_config_text(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text, nullptr, true, /*ignore_comments=*/true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config: syntax error at line " + std::to_string(detail::line_of(text, e.byte)) + ": " +
                      e.what());
  }
  return parse_config(j);
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  return parse_config_text(read_text_file(path));
}

/// Canonical JSON of the effective settings (output location excluded).
inline nlohmann::json config_to_json(const ExperimentConfig& c) {
  nlohmann::json j;
  nlohmann::json cells = nlohmann::json::array();
  for (const auto& a : c.allowed) cells.push_back({a.a1, a.a2});
  j["cellSystem"] = {{"r1", c.r1}, {"r2", c.r2}, {"allowed", cells}};
  nlohmann::json w;
  w["normalize"] = c.weight.normalize;
  switch (c.weight.kind) {
    case WeightKind::cell_masses:
      w["kind"] = "cellMasses";
      w["masses"] = c.weight.masses;
      break;
    case WeightKind::constant_cell:
      w["kind"] = "constantCell";
      w["depth"] = c.weight.depth;
      w["table"] = c.weight.table;
      if (!c.weight.truncated.empty()) w["truncated"] = c.weight.truncated;
      break;
    case WeightKind::matrix_cocycle:
      w["kind"] = "matrixCocycle";
      w["dimension"] = c.weight.dimension;
      w["matrices"] = c.weight.matrices;
      break;
  }
  j["weight"] = w;
  j["grids"] = {{"q", c.grids.q}, {"depthSchedule", c.grids.depths}};
  j["sampling"] = {{"nSamples", c.sampling.samples},
                   {"depth", c.sampling.depth},
                   {"masterSeed", c.sampling.seed},
                   {"q", c.sampling.q},
                   {"variant", c.sampling.variant == AuxVariant::psi_q ? "psiQ" : "psiTildeQ"}};
  j["render"] = {{"depth", c.render.depth}};
  j["check"] = {{"q", c.check.q}, {"depthSchedule", c.check.depths}, {"tolerance", c.check.tolerance}};
  j["cap"] = c.cap;
  return j;
}

inline std::string config_hash(const ExperimentConfig& c) { return hex64(fnv1a64(config_to_json(c).dump())); }

/// The weight the config describes, before normalization.
inline WeightPtr build_weight(const ExperimentConfig& c) {
  const auto sys = c.system();
  switch (c.weight.kind) {
    case WeightKind::cell_masses: return make_cell_masses(sys, c.weight.masses);
    case WeightKind::constant_cell: return make_constant_cell(sys, c.weight.depth, c.weight.table, c.weight.truncated);
    case WeightKind::matrix_cocycle: return make_matrix_cocycle(sys, c.weight.dimension, c.weight.matrices);
  }
  throw ConfigError("weight: unknown kind");
}

/// The built-in reference experiment: r1 = 2, r2 = 4, five probability cells.
inline ExperimentConfig reference_config() {
  ExperimentConfig c;
  c.allowed = {{0, 0}, {0, 1}, {1, 0}, {1, 1}, {1, 2}};
  c.weight.masses = {0.2, 0.3, 0.1, 0.15, 0.25};
  return c;
}

}  // namespace carpetmf
