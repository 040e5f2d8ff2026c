#pragma once

// One function per CLI stage. Each reads an Experiment and writes its files
// under the output directory; nothing depends on the worker count or clock.

#include <filesystem>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "carpetmf/carpet.hpp"
#include "carpetmf/config.hpp"
#include "carpetmf/gibbs.hpp"
#include "carpetmf/pressure.hpp"
#include "carpetmf/spectra.hpp"

namespace carpetmf {

struct RunOptions {
  unsigned workers = 1;
  std::optional<std::string> out;
  std::optional<std::uint64_t> seed;
  std::optional<int> depth_max;
};

struct Experiment {
  ExperimentConfig config;
  CellSystem sys;
  WeightPtr raw;
  WeightPtr psi;  // normalized when config.weight.normalize
  Extrapolation pressure;
  std::vector<int> depths;  // feasible pressure schedule
  SumOptions sums;
  std::filesystem::path out;
  OutputMeta meta;
};

/// Depths of `schedule` whose row words fit the cap; throws when none do.
inline std::vector<int> usable_depths(const CellSystem& sys, const std::vector<int>& schedule, int depth_max,
                                      std::uint64_t cap, const char* what) {
  auto d = feasible_depths(sys, schedule, depth_max, cap);
  if (d.empty())
    throw CapExceeded(std::string(what) + ": no depth of the schedule fits the enumeration cap " +
                      std::to_string(cap) + "; lower the depths or pass --depth-max");
  return d;
}

/// Pressure of psi: exact for depth-1 forms, otherwise extrapolated over `depths`.
inline Extrapolation estimate_pressure(const CylinderWeight& psi, const std::vector<int>& depths,
                                       const SumOptions& opt) {
  if (auto p = depth1_pressure(psi)) return {*p, 0.0};
  std::map<int, double> vals;
  for (int n : depths) vals[n] = finite_pressure(psi, static_cast<std::size_t>(n), opt);
  if (vals.size() == 1) return {vals.begin()->second, 0.0};
  return extrapolate_pressure(vals);
}

inline Experiment make_experiment(ExperimentConfig config, const RunOptions& run = {}) {
  const int depth_max = run.depth_max.value_or(std::numeric_limits<int>::max());
  if (run.seed) config.sampling.seed = *run.seed;
  if (run.depth_max) {
    auto clip = [&](std::vector<int>& v) {
      std::erase_if(v, [&](int n) { return n > depth_max; });
      if (v.empty()) v.push_back(depth_max);
    };
    if (depth_max < 1) throw InvalidArgument("--depth-max must be >= 1");
    clip(config.grids.depths);
    clip(config.check.depths);
    config.sampling.depth = std::min<std::size_t>(config.sampling.depth, static_cast<std::size_t>(depth_max));
    config.render.depth = std::min<std::size_t>(config.render.depth, static_cast<std::size_t>(depth_max));
  }
  Experiment e{config, config.system(), nullptr, nullptr, {}, {}, {}, {}, {}};
  e.sums.workers = run.workers;
  e.sums.cap = config.cap;
  e.raw = build_weight(config);
  e.depths = usable_depths(e.sys, config.grids.depths, depth_max, config.cap, "grids.depthSchedule");
  e.pressure = estimate_pressure(*e.raw, e.depths, e.sums);
  e.psi = config.weight.normalize ? normalize_to_gibbs(e.raw, e.pressure.value) : e.raw;
  e.out = run.out ? std::filesystem::path(*run.out) : std::filesystem::path(config.output.directory);
  e.meta.config_hash = config_hash(config);
  return e;
}

/// T(q) or beta(q): closed form for depth-1 forms, else extrapolated.
inline Extrapolation level_constant(const CylinderWeight& psi, double q, PressureKind kind,
                                    const std::vector<int>& depths, const SumOptions& opt) {
  const auto f = psi.birkhoff_form();
  if (f && f->potential->depth() == 1)
    return {kind == PressureKind::T ? closed_form_T(psi, q) : closed_form_beta(psi, q), 0.0};
  const auto c = pressure_curve(psi, {q}, depths, kind, opt);
  return {c.extrapolated[0], c.error[0]};
}

namespace detail {

inline void emit(const Experiment& e, const std::string& name, const std::string& body) {
  write_text_file(e.out / name, body);
}

inline std::string json_text(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

}  // namespace detail

struct PressureSummary {
  PressureCurve t, beta;
  double support_dimension = 0.0;
  double beta1_residual = 0.0;
};

inline PressureSummary compute_pressure(const Experiment& e) {
  PressureSummary s;
  s.t = pressure_curve(*e.psi, e.config.grids.q, e.depths, PressureKind::T, e.sums);
  s.beta = pressure_curve(*e.psi, e.config.grids.q, e.depths, PressureKind::beta, e.sums);
  s.support_dimension = s.t.index_of(0.0)
                            ? support_dimension(s.t)
                            : -level_constant(*e.psi, 0.0, PressureKind::T, e.depths, e.sums).value;
  s.beta1_residual = std::abs(s.beta.index_of(1.0)
                                  ? s.beta.value_at(1.0)
                                  : level_constant(*e.psi, 1.0, PressureKind::beta, e.depths, e.sums).value);
  return s;
}

inline PressureSummary run_pressure(const Experiment& e, std::ostream& log) {
  auto s = compute_pressure(e);
  for (const auto* c : {&s.t, &s.beta}) {
    const std::string stem = "pressure_" + to_string(c->kind);
    if (e.config.output.csv) {
      std::ostringstream o;
      write_curve_csv(o, *c, e.meta);
      detail::emit(e, stem + ".csv", o.str());
    }
    if (e.config.output.json) detail::emit(e, stem + ".json", detail::json_text(curve_to_json(*c, e.meta)));
  }
  log << "support dimension -T(0) = " << format_double(s.support_dimension) << '\n'
      << "beta(1) residual = " << format_double(s.beta1_residual) << '\n';
  if (!s.t.concave() || !s.beta.concave())
    log << "warning: a finite slice is not concave on the grid\n";
  return s;
}

struct SpectrumSummary {
  Spectrum t, beta, carpet;
};

inline SpectrumSummary run_spectrum(const Experiment& e, std::ostream& log) {
  const auto p = compute_pressure(e);
  SpectrumSummary s{legendre(p.t), legendre(p.beta), {}};
  s.carpet = birkhoff_spectrum_carpet(s.t, e.sys);
  const std::pair<const Spectrum*, std::string> items[] = {
      {&s.t, "spectrum_T"}, {&s.beta, "spectrum_beta"}, {&s.carpet, "spectrum_carpet"}};
  for (const auto& [sp, stem] : items) {
    if (e.config.output.csv) {
      std::ostringstream o;
      write_spectrum_csv(o, *sp, e.meta);
      detail::emit(e, stem + ".csv", o.str());
      detail::emit(e, stem + ".gp", spectrum_plot_script(*sp, stem + ".csv", e.meta));
    }
    if (e.config.output.json) detail::emit(e, stem + ".json", detail::json_text(spectrum_to_json(*sp, e.meta)));
  }
  const auto& top = s.beta.maximum();
  log << "max dimension " << format_double(top.dimension) << " at q = " << format_double(top.q) << '\n';
  for (const auto& pt : s.beta.points)
    if (pt.q == 1.0)
      log << "q = 1: alpha = " << format_double(pt.alpha) << ", dimension = " << format_double(pt.dimension)
          << '\n';
  return s;
}

struct SampleSummary {
  double level = 0.0;
  McEstimate birkhoff, local;
};

inline SampleSummary run_sample(const Experiment& e, std::ostream& log) {
  const auto& sp = e.config.sampling;
  const std::size_t n = sp.depth;
  const std::size_t g = e.sys.depth(n);
  const auto kind = sp.variant == AuxVariant::psi_q ? PressureKind::beta : PressureKind::T;
  SampleSummary s;
  s.level = level_constant(*e.psi, sp.q, kind, e.depths, e.sums).value;
  const auto aux = make_auxiliary(e.psi, sp.q, s.level, sp.variant);
  const PathSampler sampler(aux, g, e.config.cap);
  const BallMass mu(e.psi, e.sums);
  if (sp.samples > 0) mu.log_normalizer(g - n);
  std::vector<double> birk(sp.samples), local(sp.samples);
  const double scale = -static_cast<double>(n) * e.sys.log_r2();
  parallel_for(sp.samples, e.sums.workers, [&](std::uint64_t i) {
    auto rng = sample_stream(sp.seed, i);
    const auto w = sampler.draw(rng);
    birk[i] = e.psi->log_weight(w.prefix(n)) / static_cast<double>(n);
    local[i] = mu(std::span<const Letter>(w.w1), std::span<const Letter>(w.w2).first(n)) / scale;
  });
  s.birkhoff = summarize(birk);
  s.local = summarize(local);
  if (e.config.output.csv) {
    std::ostringstream o;
    o << e.meta.header() << " q=" << format_double(sp.q) << " variant=" << to_string(sp.variant)
      << " depth=" << n << " seed=" << sp.seed << '\n'
      << "index,birkhoffAverage,localDimension\n";
    for (std::size_t i = 0; i < birk.size(); ++i)
      o << i << ',' << format_double(birk[i]) << ',' << format_double(local[i]) << '\n';
    detail::emit(e, "samples.csv", o.str());
  }
  if (e.config.output.json) {
    nlohmann::ordered_json j;
    j["meta"] = {{"tool", e.meta.tool}, {"version", e.meta.version}, {"config_hash", e.meta.config_hash}};
    j["q"] = sp.q;
    j["variant"] = to_string(sp.variant);
    j["depth"] = n;
    j["nSamples"] = sp.samples;
    j["masterSeed"] = sp.seed;
    j["levelConstant"] = s.level;
    j["birkhoffAverage"] = {{"mean", s.birkhoff.mean}, {"stderr", s.birkhoff.stderr_}};
    j["localDimension"] = {{"mean", s.local.mean}, {"stderr", s.local.stderr_}};
    detail::emit(e, "samples.json", detail::json_text(j));
  }
  log << "local dimension " << format_double(s.local.mean) << " +- " << format_double(s.local.stderr_) << " ("
      << sp.samples << " samples, depth " << n << ")\n";
  return s;
}

inline CarpetRender run_render(const Experiment& e, std::ostream& log) {
  const BallMass mu(e.psi, e.sums);
  const auto r = render_measure(mu, e.config.render.depth, e.sums);
  const std::string stem = "render_" + std::to_string(r.depth);
  detail::emit(e, stem + ".pgm", render_pgm(r, e.meta));
  if (e.config.output.csv) {
    std::ostringstream o;
    write_render_csv(o, r, e.meta);
    detail::emit(e, stem + ".csv", o.str());
  }
  log << "rendered " << r.columns << " x " << r.rows << " cells, log total mass "
      << format_double(r.log_total()) << '\n';
  return r;
}

inline std::vector<double> run_boxcount(const Experiment& e, std::ostream& log) {
  const BallMass mu(e.psi, e.sums);
  const auto r = render_measure(mu, e.config.render.depth, e.sums);
  const auto tau = box_count_tau(r, e.config.grids.q, e.sys);
  if (e.config.output.csv) {
    std::ostringstream o;
    write_tau_csv(o, r.depth, e.config.grids.q, tau, e.meta);
    detail::emit(e, "boxcount.csv", o.str());
  }
  if (e.config.output.json) {
    nlohmann::ordered_json j;
    j["meta"] = {{"tool", e.meta.tool}, {"version", e.meta.version}, {"config_hash", e.meta.config_hash}};
    j["depth"] = r.depth;
    j["q"] = e.config.grids.q;
    j["tau"] = tau;
    detail::emit(e, "boxcount.json", detail::json_text(j));
  }
  log << "box-counting moments at depth " << r.depth << " over " << tau.size() << " q values\n";
  return tau;
}

inline nlohmann::ordered_json run_check(const Experiment& e, std::ostream& log) {
  const auto depths = usable_depths(e.sys, e.config.check.depths, std::numeric_limits<int>::max(), e.config.cap,
                                    "check.depthSchedule");
  const auto p3 = check_P3(*e.psi, e.config.check.q, depths, e.config.check.tolerance);
  const auto j = predicates_to_json(e.sys, p3, e.meta);
  detail::emit(e, "predicates.json", detail::json_text(j));
  log << "P1 " << (j["P1"].get<bool>() ? "true" : "false") << ", P2 " << (j["P2"].get<bool>() ? "true" : "false")
      << ", P3 " << j["P3"].get<std::string>() << '\n';
  return j;
}

}  // namespace carpetmf
