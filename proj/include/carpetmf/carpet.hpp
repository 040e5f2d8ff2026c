#pragma once

// The carpet on the torus: projection of symbolic points, rendered ball
// masses on the almost-square grid, coarse moments, and the P1/P2/P3 checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>
#include <json.hpp>

#include "carpetmf/gibbs.hpp"
#include "carpetmf/io.hpp"
#include "carpetmf/parallel.hpp"
#include "carpetmf/pressure.hpp"

namespace carpetmf {

/// A point (X / r1^d, Y / r2^d) of the torus held exactly; d digits remain.
struct TorusPoint {
  boost::multiprecision::cpp_int x_num, y_num;
  std::size_t digits = 0;
  int r1 = 2, r2 = 2;

  double x() const { return ratio(x_num, r1); }
  double y() const { return ratio(y_num, r2); }

  /// The cell (floor(r1 x), floor(r2 y)) containing the point.
  Cell cell() const {
    if (digits == 0) throw InvalidArgument("torus point: no digits left");
    return {static_cast<Letter>(x_num / power(r1, digits - 1)),
            static_cast<Letter>(y_num / power(r2, digits - 1))};
  }

  /// The toral map (x, y) -> (r1 x mod 1, r2 y mod 1); one digit is consumed.
  TorusPoint mapped() const {
    if (digits == 0) throw InvalidArgument("torus point: no digits left");
    TorusPoint t = *this;
    t.digits = digits - 1;
    t.x_num = x_num % power(r1, t.digits);
    t.y_num = y_num % power(r2, t.digits);
    return t;
  }

  static boost::multiprecision::cpp_int power(int r, std::size_t k) {
    boost::multiprecision::cpp_int p = 1;
    for (std::size_t i = 0; i < k; ++i) p *= r;
    return p;
  }

 private:
  double ratio(const boost::multiprecision::cpp_int& num, int r) const {
    // Long division by r digit by digit keeps full double precision.
    double v = 0.0, scale = 1.0;
    auto rest = num;
    std::vector<int> ds(digits);
    for (std::size_t i = digits; i-- > 0;) {
      ds[i] = static_cast<int>(rest % r);
      rest /= r;
    }
    for (int d : ds) {
      scale /= r;
      v += d * scale;
    }
    return v;
  }
};

/// Truncated digit expansions x = sum a1_k r1^-k, y = sum a2_k r2^-k.
inline TorusPoint project_exact(const CellSystem& sys, const ProductWord& cells,
                                std::size_t precision) {
  if (cells.size() < precision) throw InvalidArgument("project_point: path shorter than the precision");
  TorusPoint p;
  p.r1 = sys.r1();
  p.r2 = sys.r2();
  p.digits = precision;
  for (std::size_t k = 0; k < precision; ++k) {
    p.x_num = p.x_num * sys.r1() + cells.w1[k];
    p.y_num = p.y_num * sys.r2() + cells.w2[k];
  }
  return p;
}

inline std::pair<double, double> project_point(const CellSystem& sys, const ProductWord& cells,
                                               std::size_t precision) {
  const auto p = project_exact(sys, cells, precision);
  return {p.x(), p.y()};
}

inline std::pair<double, double> project_point(const CellSystem& sys, const SamplePath& path,
                                               std::size_t precision) {
  return project_point(sys, path.cells, precision);
}

/// S_n phi~(z) = sum_{j<n} phi~(T^j z) for phi~ = window + shift read off the
/// first k cells of z; needs n + k - 1 digits.
inline double projected_birkhoff_sum(const CellSystem& sys, const BirkhoffForm& form,
                                     TorusPoint z, std::size_t n) {
  const auto k = static_cast<std::size_t>(form.potential->depth());
  if (z.digits + 1 < n + k) throw InvalidArgument("projected_birkhoff_sum: too few digits");
  std::vector<std::size_t> window;
  double sum = 0.0;
  for (std::size_t j = 0; j < n + k - 1; ++j) {
    const Cell c = z.cell();
    const int idx = sys.cell_index(c.a1, c.a2);
    if (idx < 0) return neg_inf;  // off the carpet
    window.push_back(static_cast<std::size_t>(idx));
    if (window.size() == k) {
      sum += form.potential->window(form.potential->window_index(std::span<const std::size_t>(window))) +
             form.shift;
      window.erase(window.begin());
    }
    z = z.mapped();
  }
  return sum;
}

/// Log ball masses of F_n on the grid of r1^g(n) x r2^n almost squares.
struct CarpetRender {
  std::size_t depth = 0;
  std::uint64_t columns = 0;  // r1^g(n), indexed by the column word (x)
  std::uint64_t rows = 0;     // r2^n, indexed by the row word (y)
  std::vector<double> log_mass;  // [row * columns + column]

  double at(std::uint64_t column, std::uint64_t row) const { return log_mass[row * columns + column]; }
  double log_total() const { return log_sum_exp(log_mass); }
  std::uint64_t charged() const {
    return static_cast<std::uint64_t>(
        std::count_if(log_mass.begin(), log_mass.end(), [](double v) { return v != neg_inf; }));
  }
};

inline std::uint64_t word_index(std::span<const Letter> w, int radix) {
  std::uint64_t v = 0;
  for (Letter a : w) v = v * static_cast<std::uint64_t>(radix) + a;
  return v;
}

/// Fills the grid with the ball masses of `mu`: the head weight over admissible
/// words of length n times the normalized column marginal of each tail.
inline CarpetRender render_measure(const BallMass& mu, std::size_t n, const SumOptions& opt = {}) {
  if (n == 0) throw InvalidArgument("render_measure: depth must be >= 1");
  const auto& psi = mu.weight();
  const auto& sys = psi.system();
  const std::size_t g = sys.depth(n);
  const std::size_t tail = g - n;
  CarpetRender r;
  r.depth = n;
  r.columns = saturating_pow(static_cast<std::uint64_t>(sys.r1()), g);
  r.rows = saturating_pow(static_cast<std::uint64_t>(sys.r2()), n);
  if (r.columns > opt.cap / std::max<std::uint64_t>(1, r.rows))
    throw CapExceeded("render_measure: " + std::to_string(r.columns) + " x " + std::to_string(r.rows) +
                      " cells exceed the cap; lower the depth");
  r.log_mass.assign(r.columns * r.rows, neg_inf);

  RowWords tails(sys.r1(), tail, opt.cap);
  std::vector<double> marginal(tails.size(), 0.0);
  const double z = mu.log_normalizer(tail);
  if (tail > 0)
    parallel_for(tails.size(), opt.workers, [&](std::uint64_t i) {
      marginal[i] = psi.log_row_sum(tails[i], 1.0);
    });

  AdmissibleWords heads(sys, n, opt.cap);
  const std::uint64_t stride = tails.size();
  parallel_for(heads.size(), opt.workers, [&](std::uint64_t i) {
    const ProductWord w = heads[i];
    const double lw = psi.log_weight(w);
    if (lw == neg_inf) return;
    const std::uint64_t col0 = word_index(w.w1, sys.r1()) * stride;
    const std::uint64_t row = word_index(w.w2, sys.r2());
    double* line = r.log_mass.data() + row * r.columns + col0;
    for (std::uint64_t t = 0; t < stride; ++t) {
      if (tail == 0) {
        line[t] = lw;
      } else if (marginal[t] != neg_inf) {
        line[t] = lw + marginal[t] - z;
      }
    }
  });
  return r;
}

/// 16-bit binary graymap, top row = largest y. Charged cells map affinely
/// from [min, max] log mass onto [1, 65535]; uncharged cells are 0.
inline std::string render_pgm(const CarpetRender& r, const OutputMeta& meta) {
  double lo = std::numeric_limits<double>::infinity(), hi = neg_inf;
  for (double v : r.log_mass)
    if (v != neg_inf) {
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
  std::string out = "P5\n" + meta.header() + " depth=" + std::to_string(r.depth) + "\n" +
                    std::to_string(r.columns) + ' ' + std::to_string(r.rows) + "\n65535\n";
  out.reserve(out.size() + 2 * r.log_mass.size());
  for (std::uint64_t row = r.rows; row-- > 0;) {
    for (std::uint64_t c = 0; c < r.columns; ++c) {
      const double v = r.at(c, row);
      unsigned level = 0;
      if (v != neg_inf)
        level = hi > lo ? 1u + static_cast<unsigned>(std::lround((v - lo) / (hi - lo) * 65534.0)) : 65535u;
      out.push_back(static_cast<char>(level >> 8));
      out.push_back(static_cast<char>(level & 0xff));
    }
  }
  return out;
}

inline void write_render_csv(std::ostream& out, const CarpetRender& r, const OutputMeta& meta) {
  out << meta.header() << " depth=" << r.depth << '\n' << "columnIndex,rowIndex,logMass\n";
  for (std::uint64_t row = 0; row < r.rows; ++row)
    for (std::uint64_t c = 0; c < r.columns; ++c)
      out << c << ',' << row << ',' << format_double(r.at(c, row)) << '\n';
}

/// tau_n(q) = -(1/n) log_{r2} sum over charged cells of mass^q.
inline double box_count_tau(const CarpetRender& r, double q, const CellSystem& sys) {
  LogSumExp acc;
  for (double v : r.log_mass) acc.add(log_pow(v, q));
  return -acc.value() / (static_cast<double>(r.depth) * sys.log_r2());
}

inline std::vector<double> box_count_tau(const CarpetRender& r, std::span<const double> q_grid,
                                         const CellSystem& sys) {
  std::vector<double> out;
  for (double q : q_grid) out.push_back(box_count_tau(r, q, sys));
  return out;
}

inline void write_tau_csv(std::ostream& out, std::size_t depth, std::span<const double> q,
                          std::span<const double> tau, const OutputMeta& meta) {
  out << meta.header() << " depth=" << depth << '\n' << "q,tau\n";
  for (std::size_t i = 0; i < q.size(); ++i) out << format_double(q[i]) << ',' << format_double(tau[i]) << '\n';
}

/// Counts of projected samples per almost square of F_n, same layout as CarpetRender.
inline std::vector<std::uint64_t> projected_histogram(const PathSampler& sampler, std::size_t n,
                                                      std::size_t count, std::uint64_t seed) {
  const auto& sys = sampler.weight().system();
  const std::size_t g = sys.depth(n);
  if (sampler.horizon() < g) throw InvalidArgument("projected_histogram: horizon below g(n)");
  const std::uint64_t columns = saturating_pow(static_cast<std::uint64_t>(sys.r1()), g);
  const std::uint64_t rows = saturating_pow(static_cast<std::uint64_t>(sys.r2()), n);
  std::vector<std::uint64_t> hist(columns * rows, 0);
  for (std::size_t i = 0; i < count; ++i) {
    auto rng = sample_stream(seed, i);
    const auto p = project_exact(sys, sampler.draw(rng), g);
    // Binning the exact point: floor(x r1^g) and floor(y r2^n).
    const auto col = static_cast<std::uint64_t>(p.x_num);
    const auto row = static_cast<std::uint64_t>(p.y_num / TorusPoint::power(sys.r2(), g - n));
    ++hist[row * columns + col];
  }
  return hist;
}

// ---- P1 / P2 / P3 ----

/// Distinct nonempty rows are at least 2 apart.
inline bool check_P1(const CellSystem& sys) {
  const auto rows = sys.row_alphabet();
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (std::size_t j = i + 1; j < rows.size(); ++j)
      if (std::abs(int(rows[i]) - int(rows[j])) < 2) return false;
  return true;
}

/// An empty row at 0 or r1 - 1.
inline bool check_P2(const CellSystem& sys) {
  const auto rows = sys.row_alphabet();
  auto empty = [&](int a) { return std::find(rows.begin(), rows.end(), a) == rows.end(); };
  return empty(0) || empty(sys.r1() - 1);
}

/// false: a boundary row is empty, so the condition cannot hold.
/// indicative: for every q the defects decay (to the tolerance, or as 1/n).
/// indeterminate: the finite schedule does not support the limit equality.
enum class P3Verdict { false_, indicative, indeterminate };

inline std::string to_string(P3Verdict v) {
  switch (v) {
    case P3Verdict::false_: return "false";
    case P3Verdict::indicative: return "indicative";
    case P3Verdict::indeterminate: return "indeterminate";
  }
  return "?";
}

struct P3Result {
  P3Verdict verdict = P3Verdict::indeterminate;
  double defect = 0.0;  // worst terminal defect over q
  std::vector<double> q;
  std::vector<int> depths;
  std::vector<std::vector<double>> defects;  // [q][depth]
};

/// |(1/n) log I_q(0^n) - (1/n) log I_q((r1-1)^n)| along the schedule for q > 0.
inline P3Result check_P3(const CylinderWeight& psi, std::vector<double> q_set, std::vector<int> depths,
                         double tolerance = 1e-6) {
  const auto& sys = psi.system();
  P3Result r;
  std::sort(depths.begin(), depths.end());
  r.q = q_set;
  r.depths = depths;
  const auto rows = sys.row_alphabet();
  const Letter top = static_cast<Letter>(sys.r1() - 1);
  const bool has0 = std::find(rows.begin(), rows.end(), 0) != rows.end();
  const bool hastop = std::find(rows.begin(), rows.end(), top) != rows.end();
  if (!has0 || !hastop) {
    r.verdict = P3Verdict::false_;
    return r;
  }
  bool support = !depths.empty() && !q_set.empty();
  for (double q : q_set) {
    if (!(q > 0)) throw InvalidArgument("check_P3: q values must be positive");
    std::vector<double> row;
    for (int n : depths) {
      if (n < 1) throw InvalidArgument("check_P3: depths must be >= 1");
      const auto nn = static_cast<std::size_t>(n);
      const double a = psi.log_row_sum(Word(nn, 0), q);
      const double b = psi.log_row_sum(Word(nn, top), q);
      row.push_back(std::abs(a - b) / n);
    }
    const double slack = 1e-12;
    bool decreasing = true, harmonic = true;
    for (std::size_t i = 1; i < row.size(); ++i) {
      decreasing = decreasing && row[i] <= row[i - 1] + slack;
      harmonic = harmonic && depths[i] * row[i] <= depths[i - 1] * row[i - 1] + slack;
    }
    const double terminal = row.empty() ? 0.0 : row.back();
    support = support && decreasing && (terminal <= tolerance || (harmonic && row.size() > 1));
    r.defect = std::max(r.defect, terminal);
    r.defects.push_back(std::move(row));
  }
  r.verdict = support ? P3Verdict::indicative : P3Verdict::indeterminate;
  return r;
}

inline nlohmann::ordered_json predicates_to_json(const CellSystem& sys, const P3Result& p3,
                                                 const OutputMeta& meta) {
  nlohmann::ordered_json j;
  j["meta"] = {{"tool", meta.tool}, {"version", meta.version}, {"config_hash", meta.config_hash}};
  j["P1"] = check_P1(sys);
  j["P2"] = check_P2(sys);
  j["P3"] = to_string(p3.verdict);
  nlohmann::ordered_json d;
  d["P3_terminal"] = p3.defect;
  d["q"] = p3.q;
  d["depths"] = p3.depths;
  d["P3"] = p3.defects;
  j["defects"] = d;
  return j;
}

}  // namespace carpetmf
