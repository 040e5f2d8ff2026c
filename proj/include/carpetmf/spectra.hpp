#pragma once

// Legendre conjugates of pressure curves, parametrized by q.

#include <algorithm>
#include <cmath>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "carpetmf/gibbs.hpp"
#include "carpetmf/io.hpp"
#include "carpetmf/pressure.hpp"

namespace carpetmf {

struct Derivative {
  double value = 0.0;
  double tolerance = 0.0;  // h^2 |f''| at the point
};

namespace detail {

inline bool grid_has(std::span<const double> q, double x, std::size_t& at) {
  const double tol = 1e-12 * std::max(1.0, std::abs(x));
  auto it = std::lower_bound(q.begin(), q.end(), x - tol);
  if (it == q.end() || std::abs(*it - x) > tol) return false;
  at = static_cast<std::size_t>(it - q.begin());
  return true;
}

}  // namespace detail

/// Derivative of grid data at q[i]. A symmetric h / 2h stencil present in the
/// grid gets Richardson refinement; otherwise the nonuniform three-point
/// formula, one-sided at the ends. `q` must be strictly increasing.
inline Derivative grid_derivative(std::span<const double> q, std::span<const double> f,
                                  std::size_t i) {
  const std::size_t m = q.size();
  if (m != f.size()) throw InvalidArgument("grid_derivative: size mismatch");
  if (m < 2) return {};
  if (m == 2) return {(f[1] - f[0]) / (q[1] - q[0]), 0.0};

  double second = 0.0;  // |f''| estimate for the tolerance
  auto three_point = [&](std::size_t a, std::size_t b, std::size_t c, double x) {
    // Derivative at x of the parabola through (q_a, q_b, q_c).
    const double xa = q[a], xb = q[b], xc = q[c];
    const double da = ((x - xb) + (x - xc)) / ((xa - xb) * (xa - xc));
    const double db = ((x - xa) + (x - xc)) / ((xb - xa) * (xb - xc));
    const double dc = ((x - xa) + (x - xb)) / ((xc - xa) * (xc - xb));
    second = std::abs(2.0 * (f[a] / ((xa - xb) * (xa - xc)) + f[b] / ((xb - xa) * (xb - xc)) +
                             f[c] / ((xc - xa) * (xc - xb))));
    return da * f[a] + db * f[b] + dc * f[c];
  };

  if (i == 0) {
    const double d = three_point(0, 1, 2, q[0]);
    return {d, second * (q[1] - q[0]) * (q[2] - q[0])};
  }
  if (i == m - 1) {
    const double d = three_point(m - 3, m - 2, m - 1, q[m - 1]);
    return {d, second * (q[m - 1] - q[m - 2]) * (q[m - 1] - q[m - 3])};
  }
  const double h = std::min(q[i] - q[i - 1], q[i + 1] - q[i]);
  std::size_t lo = 0, hi = 0, lo2 = 0, hi2 = 0;
  if (detail::grid_has(q, q[i] - h, lo) && detail::grid_has(q, q[i] + h, hi)) {
    const double d1 = (f[hi] - f[lo]) / (q[hi] - q[lo]);
    const double curv = std::abs(f[hi] - 2.0 * f[i] + f[lo]) / (h * h);
    if (detail::grid_has(q, q[i] - 2 * h, lo2) && detail::grid_has(q, q[i] + 2 * h, hi2)) {
      const double d2 = (f[hi2] - f[lo2]) / (q[hi2] - q[lo2]);
      return {(4.0 * d1 - d2) / 3.0, curv * h * h};
    }
    return {d1, curv * h * h};
  }
  const double d = three_point(i - 1, i, i + 1, q[i]);
  return {d, second * (q[i] - q[i - 1]) * (q[i + 1] - q[i])};
}

enum class SpectrumSource { birkhoff_symbolic, gibbs_symbolic, birkhoff_carpet };

inline std::string to_string(SpectrumSource s) {
  switch (s) {
    case SpectrumSource::birkhoff_symbolic: return "birkhoffSymbolic";
    case SpectrumSource::gibbs_symbolic: return "gibbsSymbolic";
    case SpectrumSource::birkhoff_carpet: return "birkhoffCarpet";
  }
  return "?";
}

/// nonempty: dimension > tol; boundary: |dimension| <= tol; empty: dimension < -tol.
enum class PointFlag { nonempty, boundary, empty };

inline std::string to_string(PointFlag f) {
  switch (f) {
    case PointFlag::nonempty: return "nonempty";
    case PointFlag::boundary: return "boundary";
    case PointFlag::empty: return "empty";
  }
  return "?";
}

struct SpectrumPoint {
  double q = 0.0;
  double alpha = 0.0;  // the Birkhoff level beta for carpet spectra
  double dimension = 0.0;
  double tolerance = 0.0;
  PointFlag flag = PointFlag::nonempty;
};

struct Spectrum {
  SpectrumSource source = SpectrumSource::birkhoff_symbolic;
  std::vector<SpectrumPoint> points;
  double tolerance = 1e-6;     // max(1e-6, h^2 curvature) over the grid
  double direct_defect = 0.0;  // max |grid infimum - parametric value|

  std::vector<double> q() const {
    std::vector<double> out;
    for (const auto& p : points) out.push_back(p.q);
    return out;
  }
  const SpectrumPoint& at(double qv) const {
    for (const auto& p : points)
      if (p.q == qv) return p;
    throw InvalidArgument("spectrum: q not on the grid");
  }
  const SpectrumPoint& maximum() const {
    if (points.empty()) throw InvalidArgument("spectrum: no points");
    return *std::max_element(points.begin(), points.end(), [](const auto& a, const auto& b) {
      return a.dimension < b.dimension;
    });
  }
};

inline PointFlag classify(double dimension, double tol) {
  if (dimension < -tol) return PointFlag::empty;
  if (dimension <= tol) return PointFlag::boundary;
  return PointFlag::nonempty;
}

/// min_i alpha q_i - f_i over the grid.
inline double legendre_direct(std::span<const double> q, std::span<const double> f, double alpha) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < q.size(); ++i) best = std::min(best, alpha * q[i] - f[i]);
  return best;
}

/// Parametric conjugate of a grid function: alpha = f'(q), d = q alpha - f.
inline Spectrum legendre(std::span<const double> q, std::span<const double> f,
                         SpectrumSource source, double allowed_violation = 0.0) {
  if (q.empty() || q.size() != f.size()) throw InvalidArgument("legendre: bad grid");
  for (std::size_t i = 1; i < q.size(); ++i)
    if (!(q[i] > q[i - 1])) throw InvalidArgument("legendre: q grid must increase strictly");
  const double violation = concavity_violation(q, f);
  if (violation > allowed_violation)
    throw NotConcave("legendre: slope increases by " + format_double(violation) +
                     " beyond tolerance");
  Spectrum s;
  s.source = source;
  std::vector<Derivative> ds;
  for (std::size_t i = 0; i < q.size(); ++i) {
    ds.push_back(grid_derivative(q, f, i));
    s.tolerance = std::max(s.tolerance, ds.back().tolerance);
  }
  for (std::size_t i = 0; i < q.size(); ++i) {
    SpectrumPoint p;
    p.q = q[i];
    p.alpha = ds[i].value;
    p.dimension = q[i] * p.alpha - f[i];
    p.tolerance = std::max(1e-6, ds[i].tolerance);
    p.flag = classify(p.dimension, p.tolerance);
    s.direct_defect = std::max(s.direct_defect, std::abs(legendre_direct(q, f, p.alpha) - p.dimension));
    s.points.push_back(p);
  }
  return s;
}

/// Slope increase tolerated from extrapolation noise: error bands across the
/// finest spacing.
inline double curve_concavity_allowance(const PressureCurve& c) {
  double h = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < c.q.size(); ++i) h = std::min(h, c.q[i] - c.q[i - 1]);
  const double err = c.error.empty() ? 0.0 : *std::max_element(c.error.begin(), c.error.end());
  return std::isfinite(h) ? 4.0 * err / h : 0.0;
}

inline Spectrum legendre(const PressureCurve& c) {
  SpectrumSource source;
  switch (c.kind) {
    case PressureKind::T: source = SpectrumSource::birkhoff_symbolic; break;
    case PressureKind::beta: source = SpectrumSource::gibbs_symbolic; break;
    default: throw InvalidArgument("legendre: raw pressure has no spectrum");
  }
  return legendre(c.q, c.extrapolated, source, curve_concavity_allowance(c));
}

/// max_j |f**(q_j) - f(q_j)| with f** the infimum of the tangent lines.
inline double legendre_involution_check(std::span<const double> q, std::span<const double> f,
                                        const Spectrum& s) {
  double defect = 0.0;
  for (std::size_t j = 0; j < q.size(); ++j) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& p : s.points) best = std::min(best, p.alpha * q[j] - p.dimension);
    defect = std::max(defect, std::abs(best - f[j]));
  }
  return defect;
}

inline double legendre_involution_check(const PressureCurve& c) {
  return legendre_involution_check(c.q, c.extrapolated, legendre(c));
}

/// Symbolic T spectrum reparametrized by the Birkhoff level beta = -alpha log r2.
inline Spectrum birkhoff_spectrum_carpet(const Spectrum& symbolic, const CellSystem& sys) {
  if (symbolic.source != SpectrumSource::birkhoff_symbolic)
    throw InvalidArgument("birkhoff_spectrum_carpet: needs the spectrum of a T curve");
  Spectrum out = symbolic;
  out.source = SpectrumSource::birkhoff_carpet;
  // + 0.0 turns -0 into 0 so alpha = 0 prints as 0.
  for (auto& p : out.points) p.alpha = -p.alpha * sys.log_r2() + 0.0;
  return out;
}

inline Spectrum birkhoff_spectrum_carpet(const PressureCurve& t_curve, const CellSystem& sys) {
  if (t_curve.kind != PressureKind::T)
    throw InvalidArgument("birkhoff_spectrum_carpet: curve kind must be T");
  return birkhoff_spectrum_carpet(legendre(t_curve), sys);
}

/// tau_n(q) = -(1/n) log_{r2} sum over the balls of F_n of mu(B)^q, mu the
/// ball-mass approximation of the normalized weight. The automatic route
/// factors the sum into the head total and the column-marginal moments of the
/// tail; the enumeration route weighs every ball.
inline double lq_spectrum_empirical(const BallMass& mu, double q, std::size_t n,
                                    const SumOptions& opt = {}) {
  if (n == 0) throw InvalidArgument("lq_spectrum_empirical: depth must be >= 1");
  const auto& psi = mu.weight();
  const auto& sys = psi.system();
  const std::size_t g = sys.depth(n);
  double log_sum;
  if (opt.route == Route::enumeration) {
    RowWords columns(sys.r1(), g, opt.cap);
    RowWords rows(sys.r2(), n, opt.cap);
    if (columns.size() > opt.cap / std::max<std::uint64_t>(1, rows.size()))
      throw CapExceeded("lq_spectrum_empirical: " + std::to_string(columns.size()) + " x " +
                        std::to_string(rows.size()) + " balls exceed the cap");
    const LogSumExp acc = tree_reduce<LogSumExp>(
        columns.size(), opt.workers,
        [&](std::uint64_t begin, std::uint64_t end) {
          LogSumExp leaf;
          columns.for_each(begin, end, [&](const Word& col) {
            rows.for_each([&](const Word& row) { leaf.add(log_pow(mu(col, row), q)); });
          });
          return leaf;
        },
        [](LogSumExp a, const LogSumExp& b) {
          a.merge(b);
          return a;
        });
    log_sum = acc.value();
  } else {
    const std::size_t tail = g - n;
    const double head = log_total_mass(psi, n, q, opt);
    double moments = 0.0;
    if (tail > 0) {
      const double z = mu.log_normalizer(tail);
      moments = row_reduce(sys, tail, opt, [&](const Word& w) {
        return log_pow(psi.log_row_sum(w, 1.0) - z, q);
      });
    }
    log_sum = head + moments;
  }
  if (log_sum == neg_inf) throw EmptySupport("lq_spectrum_empirical: no charged ball");
  return -log_sum / (static_cast<double>(n) * sys.log_r2());
}

/// -value at q = 0.
inline double support_dimension(const PressureCurve& c) { return -c.value_at(0.0); }

/// log_{r1} sum_{a1} N_{a1}^s from the fiber counts.
inline double mcmullen_dimension(const CellSystem& sys) {
  LogSumExp acc;
  for (Letter a : sys.row_alphabet())
    acc.add(sys.s() * std::log(static_cast<double>(sys.row_fiber(a).size())));
  return acc.value() / sys.log_r1();
}

inline void write_spectrum_csv(std::ostream& out, const Spectrum& s, const OutputMeta& meta) {
  out << meta.header() << " source=" << to_string(s.source) << '\n';
  out << "q," << (s.source == SpectrumSource::birkhoff_carpet ? "beta" : "alpha")
      << ",dimension,emptyFlag\n";
  for (const auto& p : s.points)
    out << format_double(p.q) << ',' << format_double(p.alpha) << ','
        << format_double(p.dimension) << ',' << to_string(p.flag) << '\n';
}

inline nlohmann::ordered_json spectrum_to_json(const Spectrum& s, const OutputMeta& meta) {
  nlohmann::ordered_json j;
  j["meta"] = {{"tool", meta.tool}, {"version", meta.version}, {"config_hash", meta.config_hash}};
  j["source"] = to_string(s.source);
  j["tolerance"] = s.tolerance;
  j["direct_defect"] = s.direct_defect;
  const char* key = s.source == SpectrumSource::birkhoff_carpet ? "beta" : "alpha";
  auto pts = nlohmann::ordered_json::array();
  for (const auto& p : s.points)
    pts.push_back({{"q", p.q}, {key, p.alpha}, {"dimension", p.dimension}, {"flag", to_string(p.flag)}});
  j["points"] = pts;
  return j;
}

/// Gnuplot commands plotting dimension against alpha (or beta) from `csv_name`.
inline std::string spectrum_plot_script(const Spectrum& s, const std::string& csv_name,
                                        const OutputMeta& meta) {
  const bool carpet = s.source == SpectrumSource::birkhoff_carpet;
  std::ostringstream o;
  o << meta.header() << '\n'
    << "set datafile separator ','\n"
    << "set key off\n"
    << "set xlabel '" << (carpet ? "beta" : "alpha") << "'\n"
    << "set ylabel 'dimension'\n"
    << "set title '" << to_string(s.source) << "'\n"
    << "set yrange [0:*]\n"
    << "set terminal pngcairo size 800,600\n"
    << "set output '" << csv_name << ".png'\n"
    << "plot '" << csv_name << "' every ::1 using 2:3 with linespoints pt 7 ps 0.5\n";
  return o.str();
}

}  // namespace carpetmf
