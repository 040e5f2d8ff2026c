#pragma once

// Finite-depth pressure sums and the two pressure functions
//   T_psi(q)    = -P(s log I_{psi,q}) / log r1
//   beta_psi(q) = -P(q(1-s) log I_{psi,1} + s log I_{psi,q}) / log r1
// together with their two-depth extrapolation.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "carpetmf/error.hpp"
#include "carpetmf/io.hpp"
#include "carpetmf/logsum.hpp"
#include "carpetmf/parallel.hpp"
#include "carpetmf/symbolic.hpp"
#include "carpetmf/weights.hpp"

namespace carpetmf {

/// How sums over words are evaluated. `automatic` uses transfer recursions
/// and delegated row sums; `enumeration` sums psi word by word.
enum class Route { automatic, enumeration };

struct SumOptions {
  Route route = Route::automatic;
  unsigned workers = 1;
  std::uint64_t cap = kDefaultEnumerationCap;
};

inline double row_sum(const CylinderWeight& psi, std::span<const Letter> w1, double q,
                      const SumOptions& opt = {}) {
  if (opt.route == Route::enumeration) return enumerate_log_row_sum(psi, w1, q, opt.cap);
  return psi.log_row_sum(w1, q);
}

/// log sum_{w1 in A1^n} exp(summand(w1)), reduced in a fixed tree order.
template <class Summand>
double row_reduce(const CellSystem& sys, std::size_t n, const SumOptions& opt,
                  Summand&& summand) {
  RowWords rows(sys, n, opt.cap);
  const LogSumExp acc = tree_reduce<LogSumExp>(
      rows.size(), opt.workers,
      [&](std::uint64_t begin, std::uint64_t end) {
        LogSumExp leaf;
        rows.for_each(begin, end, [&](const Word& w1) { leaf.add(summand(w1)); });
        return leaf;
      },
      [](LogSumExp a, const LogSumExp& b) {
        a.merge(b);
        return a;
      });
  return acc.value();
}

/// log sum over admissible w of length n of psi(w)^q.
inline double log_total_mass(const CylinderWeight& psi, std::size_t n, double q = 1.0,
                             const SumOptions& opt = {}) {
  const auto& sys = psi.system();
  if (opt.route == Route::enumeration) {
    AdmissibleWords words(sys, n, opt.cap);
    const LogSumExp acc = tree_reduce<LogSumExp>(
        words.size(), opt.workers,
        [&](std::uint64_t begin, std::uint64_t end) {
          LogSumExp leaf;
          words.for_each(begin, end, [&](const ProductWord& w, const auto&) {
            leaf.add(log_pow(psi.log_weight(w), q));
          });
          return leaf;
        },
        [](LogSumExp a, const LogSumExp& b) {
          a.merge(b);
          return a;
        });
    return acc.value();
  }
  if (auto form = psi.birkhoff_form()) return transfer_log_total(sys, *form, n, q);
  return row_reduce(sys, n, opt, [&](const Word& w1) { return psi.log_row_sum(w1, q); });
}

/// (1/n) log sum_{|w| = n} psi(w).
inline double finite_pressure(const CylinderWeight& psi, std::size_t n, const SumOptions& opt = {}) {
  if (n == 0) throw InvalidArgument("finite_pressure: n must be >= 1");
  return log_total_mass(psi, n, 1.0, opt) / static_cast<double>(n);
}

inline double finite_T(const CylinderWeight& psi, double q, std::size_t n,
                       const SumOptions& opt = {}) {
  if (n == 0) throw InvalidArgument("finite_T: n must be >= 1");
  const auto& sys = psi.system();
  const double s = sys.s();
  const double total = row_reduce(sys, n, opt, [&](const Word& w1) {
    return log_pow(row_sum(psi, w1, q, opt), s);
  });
  if (total == neg_inf) throw EmptySupport("finite_T: every row sum vanishes");
  return -total / (static_cast<double>(n) * sys.log_r1());
}

inline double finite_beta(const CylinderWeight& psi, double q, std::size_t n,
                          const SumOptions& opt = {}) {
  if (n == 0) throw InvalidArgument("finite_beta: n must be >= 1");
  const auto& sys = psi.system();
  const double s = sys.s();
  const double total = row_reduce(sys, n, opt, [&](const Word& w1) {
    const double i1 = row_sum(psi, w1, 1.0, opt);
    if (i1 == neg_inf) return neg_inf;
    const double iq = row_sum(psi, w1, q, opt);
    if (iq == neg_inf) return neg_inf;
    return q * (1.0 - s) * i1 + s * iq;
  });
  if (total == neg_inf) throw EmptySupport("finite_beta: every row sum vanishes");
  return -total / (static_cast<double>(n) * sys.log_r1());
}

/// (1/n) log sum_w psi(w)^q, the pressure of q log psi.
inline double finite_raw(const CylinderWeight& psi, double q, std::size_t n,
                         const SumOptions& opt = {}) {
  if (n == 0) throw InvalidArgument("finite_raw: n must be >= 1");
  const double total = row_reduce(psi.system(), n, opt, [&](const Word& w1) {
    return row_sum(psi, w1, q, opt);
  });
  if (total == neg_inf) throw EmptySupport("finite_raw: every row sum vanishes");
  return total / static_cast<double>(n);
}

namespace detail {

// Per-row log sums of exp(q f) for a depth-1 Birkhoff form; -inf on empty rows.
inline std::vector<double> depth1_row_sums(const CellSystem& sys, const BirkhoffForm& form,
                                           double q) {
  if (form.potential->depth() != 1)
    throw InvalidArgument("closed form requires a dependence depth of exactly 1");
  std::vector<LogSumExp> rows(static_cast<std::size_t>(sys.r1()));
  for (std::size_t i = 0; i < sys.size(); ++i)
    rows[sys.cell(i).a1].add(q * (form.potential->window(i) + form.shift));
  std::vector<double> out(rows.size());
  for (std::size_t a = 0; a < rows.size(); ++a) out[a] = rows[a].value();
  return out;
}

inline BirkhoffForm require_depth1(const CylinderWeight& psi) {
  auto form = psi.birkhoff_form();
  if (!form || form->potential->depth() != 1)
    throw InvalidArgument("closed form requires a depth-1 constant-cell weight");
  return *form;
}

}  // namespace detail

/// -log_{r1} sum_{a1} [sum_{a2} exp(q phi(a1,a2))]^s, non-allowed cells contributing 0.
inline double closed_form_T(const CellSystem& sys, const BirkhoffForm& form, double q) {
  const auto iq = detail::depth1_row_sums(sys, form, q);
  LogSumExp acc;
  for (double r : iq) acc.add(log_pow(r, sys.s()));
  return -acc.value() / sys.log_r1();
}

inline double closed_form_T(const CylinderWeight& psi, double q) {
  return closed_form_T(psi.system(), detail::require_depth1(psi), q);
}

/// -log_{r1} sum_{a1} (sum_{a2} e^phi)^{q(1-s)} (sum_{a2} e^{q phi})^s.
inline double closed_form_beta(const CellSystem& sys, const BirkhoffForm& form, double q) {
  const auto i1 = detail::depth1_row_sums(sys, form, 1.0);
  const auto iq = detail::depth1_row_sums(sys, form, q);
  const double s = sys.s();
  LogSumExp acc;
  for (std::size_t a = 0; a < i1.size(); ++a) {
    if (i1[a] == neg_inf || iq[a] == neg_inf) continue;
    acc.add(q * (1.0 - s) * i1[a] + s * iq[a]);
  }
  return -acc.value() / sys.log_r1();
}

inline double closed_form_beta(const CylinderWeight& psi, double q) {
  return closed_form_beta(psi.system(), detail::require_depth1(psi), q);
}

struct Extrapolation {
  double value = 0.0;
  double error = 0.0;
};

/// Two-depth extrapolation (n2 v2 - n1 v1) / (n2 - n1) from the two deepest
/// depths; the bounded offset in n v_n cancels. The error proxy is the
/// largest departure of n v_n from affine over consecutive depth triples,
/// divided by the deepest depth, and never smaller than the distance to the
/// deepest slice.
inline Extrapolation extrapolate_pressure(const std::map<int, double>& values) {
  if (values.size() < 2) throw InvalidArgument("extrapolate_pressure: need at least two depths");
  std::vector<std::pair<double, double>> pts;  // (n, n v_n)
  for (const auto& [n, v] : values) {
    if (n < 1) throw InvalidArgument("extrapolate_pressure: depths must be >= 1");
    pts.emplace_back(static_cast<double>(n), static_cast<double>(n) * v);
  }
  const auto& [n1, m1] = pts[pts.size() - 2];
  const auto& [n2, m2] = pts.back();
  Extrapolation out;
  out.value = (m2 - m1) / (n2 - n1);
  double defect = 0.0;
  for (std::size_t i = 0; i + 2 < pts.size(); ++i) {
    const auto& [a, ma] = pts[i];
    const auto& [b, mb] = pts[i + 1];
    const auto& [c, mc] = pts[i + 2];
    const double affine = ((c - b) * ma + (b - a) * mc) / (c - a);
    defect = std::max(defect, std::abs(mb - affine));
  }
  const double deepest = values.rbegin()->second;
  const double floor = 4.0 * std::numeric_limits<double>::epsilon() *
                       std::max({1.0, std::abs(out.value), std::abs(deepest)});
  out.error = std::max({defect / n2, std::abs(out.value - deepest), floor});
  return out;
}

enum class PressureKind { T, beta, raw };

inline std::string to_string(PressureKind k) {
  switch (k) {
    case PressureKind::T: return "T";
    case PressureKind::beta: return "beta";
    case PressureKind::raw: return "raw";
  }
  return "?";
}

struct PressureCurve {
  PressureKind kind = PressureKind::T;
  std::vector<double> q;
  std::vector<int> depths;
  std::vector<std::vector<double>> finite;  // finite[d][i] = value at depths[d], q[i]
  std::vector<double> extrapolated;
  std::vector<double> error;
  double concavity_violation = 0.0;     // largest slope increase beyond tolerance, 0 if concave
  double monotonicity_violation = 0.0;  // largest decrease beyond the error bands

  bool concave() const { return concavity_violation == 0.0; }
  bool monotone() const { return monotonicity_violation == 0.0; }

  std::optional<std::size_t> index_of(double qv) const {
    for (std::size_t i = 0; i < q.size(); ++i)
      if (q[i] == qv) return i;
    return std::nullopt;
  }
  double value_at(double qv) const {
    auto i = index_of(qv);
    if (!i) throw InvalidArgument("pressure curve: q not on the grid");
    return extrapolated[*i];
  }
};

inline std::vector<double> default_q_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 80; ++i) g.push_back(-10.0 + 0.25 * i);
  for (double r : {-0.1, -0.05, 0.05, 0.1, 0.9, 0.95, 1.05, 1.1}) g.push_back(r);
  std::sort(g.begin(), g.end());
  g.erase(std::unique(g.begin(), g.end()), g.end());
  return g;
}

inline constexpr double kDefaultGridStep = 0.25;

inline std::vector<int> default_depth_schedule() { return {4, 6, 8, 10, 12}; }

/// Depths of `schedule` that are <= depth_max and enumerable by row words.
inline std::vector<int> feasible_depths(const CellSystem& sys, const std::vector<int>& schedule,
                                        int depth_max, std::uint64_t cap = kDefaultEnumerationCap) {
  std::vector<int> out;
  for (int n : schedule)
    if (n >= 1 && n <= depth_max &&
        saturating_pow(static_cast<std::uint64_t>(sys.r1()), static_cast<std::uint64_t>(n)) <= cap)
      out.push_back(n);
  return out;
}

/// Max slope increase on a grid beyond 1e-9 relative tolerance (0 when concave).
inline double concavity_violation(std::span<const double> q, std::span<const double> f) {
  double worst = 0.0;
  for (std::size_t i = 1; i + 1 < q.size(); ++i) {
    const double left = (f[i] - f[i - 1]) / (q[i] - q[i - 1]);
    const double right = (f[i + 1] - f[i]) / (q[i + 1] - q[i]);
    const double scale = std::max({1.0, std::abs(f[i - 1]), std::abs(f[i]), std::abs(f[i + 1])});
    const double excess = (right - left) - 1e-9 * scale;
    if (excess > worst) worst = excess;
  }
  return worst;
}

inline PressureCurve pressure_curve(const CylinderWeight& psi, std::vector<double> q_grid,
                                    std::vector<int> depths, PressureKind kind,
                                    const SumOptions& opt = {}) {
  if (q_grid.empty()) throw InvalidArgument("pressure_curve: empty q grid");
  if (depths.empty()) throw InvalidArgument("pressure_curve: empty depth schedule");
  std::sort(q_grid.begin(), q_grid.end());
  q_grid.erase(std::unique(q_grid.begin(), q_grid.end()), q_grid.end());
  std::sort(depths.begin(), depths.end());
  depths.erase(std::unique(depths.begin(), depths.end()), depths.end());

  PressureCurve c;
  c.kind = kind;
  c.q = q_grid;
  c.depths = depths;
  for (int n : depths) {
    std::vector<double> slice(q_grid.size());
    for (std::size_t i = 0; i < q_grid.size(); ++i) {
      const auto nn = static_cast<std::size_t>(n);
      switch (kind) {
        case PressureKind::T: slice[i] = finite_T(psi, q_grid[i], nn, opt); break;
        case PressureKind::beta: slice[i] = finite_beta(psi, q_grid[i], nn, opt); break;
        case PressureKind::raw: slice[i] = finite_raw(psi, q_grid[i], nn, opt); break;
      }
    }
    c.concavity_violation = std::max(
        c.concavity_violation,
        kind == PressureKind::raw ? 0.0 : concavity_violation(q_grid, slice));
    c.finite.push_back(std::move(slice));
  }
  c.extrapolated.resize(q_grid.size());
  c.error.resize(q_grid.size());
  for (std::size_t i = 0; i < q_grid.size(); ++i) {
    if (depths.size() == 1) {
      c.extrapolated[i] = c.finite[0][i];
      c.error[i] = 0.0;
      continue;
    }
    std::map<int, double> vals;
    for (std::size_t d = 0; d < depths.size(); ++d) vals[depths[d]] = c.finite[d][i];
    const auto ex = extrapolate_pressure(vals);
    c.extrapolated[i] = ex.value;
    c.error[i] = ex.error;
  }
  if (kind != PressureKind::raw) {
    for (std::size_t i = 0; i + 1 < q_grid.size(); ++i) {
      const double drop = c.extrapolated[i] - c.extrapolated[i + 1];
      const double band = c.error[i] + c.error[i + 1] +
                          1e-12 * std::max({1.0, std::abs(c.extrapolated[i]),
                                            std::abs(c.extrapolated[i + 1])});
      c.monotonicity_violation = std::max(c.monotonicity_violation, drop - band);
    }
  }
  return c;
}

/// A curve holding exact values (no finite slices), e.g. a closed form.
inline PressureCurve exact_curve(PressureKind kind, std::vector<double> q,
                                 std::vector<double> values) {
  PressureCurve c;
  c.kind = kind;
  c.q = std::move(q);
  c.extrapolated = std::move(values);
  c.error.assign(c.q.size(), 0.0);
  c.concavity_violation = kind == PressureKind::raw ? 0.0 : concavity_violation(c.q, c.extrapolated);
  return c;
}

inline void write_curve_csv(std::ostream& out, const PressureCurve& c, const OutputMeta& meta) {
  out << meta.header() << " kind=" << to_string(c.kind) << '\n';
  out << 'q';
  for (int n : c.depths) out << ",value_" << n;
  out << ",extrapolated,error\n";
  for (std::size_t i = 0; i < c.q.size(); ++i) {
    out << format_double(c.q[i]);
    for (const auto& slice : c.finite) out << ',' << format_double(slice[i]);
    out << ',' << format_double(c.extrapolated[i]) << ',' << format_double(c.error[i]) << '\n';
  }
}

inline nlohmann::ordered_json curve_to_json(const PressureCurve& c, const OutputMeta& meta) {
  nlohmann::ordered_json j;
  j["meta"] = {{"tool", meta.tool}, {"version", meta.version}, {"config_hash", meta.config_hash}};
  j["kind"] = to_string(c.kind);
  j["q"] = c.q;
  j["depths"] = c.depths;
  nlohmann::ordered_json slices = nlohmann::ordered_json::object();
  for (std::size_t d = 0; d < c.depths.size(); ++d)
    slices[std::to_string(c.depths[d])] = c.finite[d];
  j["finite"] = slices;
  j["extrapolated"] = c.extrapolated;
  j["error"] = c.error;
  j["concave"] = c.concave();
  j["monotone"] = c.monotone();
  return j;
}

}  // namespace carpetmf
