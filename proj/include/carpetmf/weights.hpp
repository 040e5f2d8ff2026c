#pragma once

// Almost-multiplicative cylinder weights psi on A1^n x A2^n, evaluated in
// log space. A value of -inf is a zero weight (the cylinder leaves the support).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "carpetmf/error.hpp"
#include "carpetmf/logsum.hpp"
#include "carpetmf/symbolic.hpp"

namespace carpetmf {

/// Locally constant potential of dependence depth k: one value per window of
/// k consecutive allowed cells. Windows are indexed in base |A|, first cell
/// most significant. Words shorter than k read the truncated tables.
class ConstantCellPotential {
 public:
  ConstantCellPotential(const CellSystem& sys, int k, std::vector<double> table,
                        std::vector<std::vector<double>> truncated = {})
      : cells_(sys.size()), k_(k), table_(std::move(table)), truncated_(std::move(truncated)) {
    if (k_ < 1) throw InvalidArgument("constant-cell potential: depth must be >= 1");
    const std::uint64_t expected = saturating_pow(cells_, static_cast<std::uint64_t>(k_));
    if (table_.size() != expected)
      throw InvalidArgument("constant-cell potential: table has " +
                            std::to_string(table_.size()) + " entries, expected " +
                            std::to_string(expected) + " (|A|^k)");
    if (truncated_.empty()) {
      for (int j = 1; j < k_; ++j)
        truncated_.emplace_back(saturating_pow(cells_, static_cast<std::uint64_t>(j)), 0.0);
    }
    if (truncated_.size() != static_cast<std::size_t>(k_ - 1))
      throw InvalidArgument("constant-cell potential: need k-1 truncated tables");
    for (int j = 1; j < k_; ++j) {
      if (truncated_[static_cast<std::size_t>(j - 1)].size() !=
          saturating_pow(cells_, static_cast<std::uint64_t>(j)))
        throw InvalidArgument("constant-cell potential: truncated table " + std::to_string(j) +
                              " has the wrong length");
    }
    for (double v : table_)
      if (!std::isfinite(v)) throw InvalidArgument("constant-cell potential: non-finite entry");
  }

  int depth() const { return k_; }
  std::size_t cells() const { return cells_; }
  std::span<const double> table() const { return table_; }
  std::span<const double> truncated(int length) const {
    return truncated_[static_cast<std::size_t>(length - 1)];
  }

  double window(std::uint64_t window_index) const { return table_[window_index]; }

  template <class Index>
  std::uint64_t window_index(std::span<const Index> idx) const {
    std::uint64_t w = 0;
    for (auto c : idx) w = w * cells_ + static_cast<std::uint64_t>(c);
    return w;
  }

  /// log psi of a word given by its cell indices: the Birkhoff sum of window
  /// values for n >= k, the truncated table otherwise.
  template <class Index>
  double evaluate(std::span<const Index> idx) const {
    const std::size_t n = idx.size();
    if (n == 0) return 0.0;
    if (n < static_cast<std::size_t>(k_))
      return truncated_[n - 1][window_index(idx)];
    double sum = 0.0;
    for (std::size_t i = 0; i + static_cast<std::size_t>(k_) <= n; ++i)
      sum += table_[window_index(idx.subspan(i, static_cast<std::size_t>(k_)))];
    return sum;
  }

  double max_abs() const {
    double m = 0.0;
    for (double v : table_) m = std::max(m, std::abs(v));
    return m;
  }

 private:
  std::size_t cells_;
  int k_;
  std::vector<double> table_;
  std::vector<std::vector<double>> truncated_;
};

/// log psi(w) = potential.evaluate(w) + |w| * shift.
struct BirkhoffForm {
  std::shared_ptr<const ConstantCellPotential> potential;
  double shift = 0.0;
};

/// For a fixed column word w1: log psi(w1, w2) = c(w1) + scale * potential(w1, w2).
/// Lets samplers draw w2 given w1 by a fiber transfer.
struct FiberForm {
  std::shared_ptr<const ConstantCellPotential> potential;
  double scale = 1.0;
};

class CylinderWeight {
 public:
  explicit CylinderWeight(CellSystem sys) : sys_(std::move(sys)) {}
  virtual ~CylinderWeight() = default;

  const CellSystem& system() const { return sys_; }

  virtual std::string kind() const = 0;

  /// log psi([w1] x [w2]); 0 on the empty word, -inf off the support.
  virtual double log_weight(const ProductWord& w) const = 0;

  /// Present when log psi is exactly a Birkhoff sum of a locally constant potential.
  virtual std::optional<BirkhoffForm> birkhoff_form() const { return std::nullopt; }

  virtual std::optional<FiberForm> fiber_form() const {
    if (auto f = birkhoff_form()) return FiberForm{f->potential, 1.0};
    return std::nullopt;
  }

  /// log I_{psi,q}(w1) by the cheapest exact route the weight knows.
  virtual double log_row_sum(std::span<const Letter> w1, double q) const;

  std::optional<int> dependence_depth() const {
    if (auto f = birkhoff_form()) return f->potential->depth();
    return std::nullopt;
  }

 private:
  CellSystem sys_;
};

using WeightPtr = std::shared_ptr<const CylinderWeight>;

/// log I_{psi,q}(w1) by summing psi^q over the words w2 admissible above w1.
inline double enumerate_log_row_sum(const CylinderWeight& psi, std::span<const Letter> w1,
                                    double q, std::uint64_t cap = kDefaultEnumerationCap) {
  const auto& sys = psi.system();
  const std::size_t n = w1.size();
  std::vector<std::vector<Letter>> fiber(n);
  std::uint64_t count = 1;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < sys.size(); ++c)
      if (sys.cell(c).a1 == w1[i]) fiber[i].push_back(sys.cell(c).a2);
    if (fiber[i].empty()) return neg_inf;
    count = count > cap / fiber[i].size() ? cap + 1 : count * fiber[i].size();
  }
  if (count > cap)
    throw CapExceeded("row sum: fiber enumeration above a column word of length " + std::to_string(n) +
                      " exceeds the cap");
  LogSumExp acc;
  ProductWord w;
  w.w1.assign(w1.begin(), w1.end());
  w.w2.resize(n);
  std::vector<std::size_t> digit(n, 0);
  for (std::size_t i = 0; i < n; ++i) w.w2[i] = fiber[i][0];
  for (std::uint64_t k = 0; k < count; ++k) {
    acc.add(log_pow(psi.log_weight(w), q));
    // last position varies fastest
    for (std::size_t i = n; i-- > 0;) {
      if (++digit[i] < fiber[i].size()) {
        w.w2[i] = fiber[i][digit[i]];
        break;
      }
      digit[i] = 0;
      w.w2[i] = fiber[i][0];
    }
  }
  return acc.value();
}

inline double CylinderWeight::log_row_sum(std::span<const Letter> w1, double q) const {
  return enumerate_log_row_sum(*this, w1, q);
}

namespace detail {

// Runs the window transfer recursion for a Birkhoff form. options(i) gives
// the cell indices allowed at position i. Returns log sum over admissible
// words of exp(q * potential) (shift excluded).
template <class Options>
double birkhoff_transfer(const ConstantCellPotential& pot, std::size_t n, double q,
                         Options&& options) {
  if (n == 0) return 0.0;
  const auto cells = static_cast<std::uint64_t>(pot.cells());
  const int k = pot.depth();
  for (std::size_t i = 0; i < n; ++i)
    if (options(i).empty()) return neg_inf;

  // Prefixes of length min(n, k-1) enumerated explicitly.
  const std::size_t head = std::min<std::size_t>(n, static_cast<std::size_t>(k - 1));
  const std::uint64_t states = saturating_pow(cells, static_cast<std::uint64_t>(k - 1));
  std::vector<double> cur(n < static_cast<std::size_t>(k) ? 1 : states, neg_inf);
  LogSumExp short_total;
  {
    std::vector<std::size_t> pos(head, 0);
    std::vector<int> idx(head);
    for (bool more = true; more;) {
      for (std::size_t i = 0; i < head; ++i) idx[i] = options(i)[pos[i]];
      if (n < static_cast<std::size_t>(k)) {
        short_total.add(q * pot.evaluate(std::span<const int>(idx)));
      } else {
        cur[pot.window_index(std::span<const int>(idx))] = 0.0;
      }
      more = false;
      for (std::size_t j = head; j-- > 0;) {
        if (++pos[j] < options(j).size()) {
          more = true;
          break;
        }
        pos[j] = 0;
      }
    }
  }
  if (n < static_cast<std::size_t>(k)) return short_total.value();

  std::vector<LogSumExp> next(states);
  for (std::size_t i = head; i < n; ++i) {
    std::fill(next.begin(), next.end(), LogSumExp{});
    const auto& opts = options(i);
    for (std::uint64_t s = 0; s < states; ++s) {
      if (cur[s] == neg_inf) continue;
      for (int c : opts) {
        const std::uint64_t window = s * cells + static_cast<std::uint64_t>(c);
        next[window % states].add(cur[s] + q * pot.window(window));
      }
    }
    for (std::uint64_t s = 0; s < states; ++s) cur[s] = next[s].value();
  }
  return log_sum_exp(cur);
}

inline std::vector<std::vector<int>> fiber_cells(const CellSystem& sys) {
  std::vector<std::vector<int>> out(static_cast<std::size_t>(sys.r1()));
  for (std::size_t i = 0; i < sys.size(); ++i) out[sys.cell(i).a1].push_back(static_cast<int>(i));
  return out;
}

}  // namespace detail

/// log I_{psi,q}(w1) for a Birkhoff form by transfer over the last k-1 cells
/// of the fiber: O(n |states| r2) instead of O(r2^n).
inline double transfer_log_row_sum(const CellSystem& sys, const BirkhoffForm& form,
                                   std::span<const Letter> w1, double q) {
  const auto fibers = detail::fiber_cells(sys);
  const double body = detail::birkhoff_transfer(
      *form.potential, w1.size(), q,
      [&](std::size_t i) -> const std::vector<int>& { return fibers[w1[i]]; });
  if (body == neg_inf) return neg_inf;
  return body + q * static_cast<double>(w1.size()) * form.shift;
}

/// log sum over admissible words of length n of psi^q, by transfer.
inline double transfer_log_total(const CellSystem& sys, const BirkhoffForm& form, std::size_t n,
                                 double q) {
  std::vector<int> all(sys.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = static_cast<int>(i);
  const double body = detail::birkhoff_transfer(
      *form.potential, n, q, [&](std::size_t) -> const std::vector<int>& { return all; });
  if (body == neg_inf) return neg_inf;
  return body + q * static_cast<double>(n) * form.shift;
}

// ---------------------------------------------------------------------------
// Concrete weights

class ConstantCellWeight final : public CylinderWeight {
 public:
  ConstantCellWeight(const CellSystem& sys, std::shared_ptr<const ConstantCellPotential> pot)
      : CylinderWeight(sys), pot_(std::move(pot)), fibers_(detail::fiber_cells(sys)) {}

  std::string kind() const override { return "constant_cell"; }

  double log_weight(const ProductWord& w) const override {
    thread_local std::vector<int> idx;
    if (!cell_indices(system(), w, idx)) return neg_inf;
    return pot_->evaluate(std::span<const int>(idx));
  }

  std::optional<BirkhoffForm> birkhoff_form() const override { return BirkhoffForm{pot_, 0.0}; }

  double log_row_sum(std::span<const Letter> w1, double q) const override {
    const double body = detail::birkhoff_transfer(
        *pot_, w1.size(), q,
        [&](std::size_t i) -> const std::vector<int>& { return fibers_[w1[i]]; });
    return body;
  }

  const ConstantCellPotential& potential() const { return *pot_; }

 private:
  std::shared_ptr<const ConstantCellPotential> pot_;
  std::vector<std::vector<int>> fibers_;
};

/// psi(w) = 1^T M(w_n) ... M(w_1) 1 with strictly positive d x d matrices.
class MatrixCocycleWeight final : public CylinderWeight {
 public:
  MatrixCocycleWeight(const CellSystem& sys, int d, std::vector<std::vector<double>> matrices)
      : CylinderWeight(sys), d_(d), matrices_(std::move(matrices)) {
    if (d_ < 1) throw InvalidArgument("matrix cocycle: dimension must be >= 1");
    if (matrices_.size() != sys.size())
      throw InvalidArgument("matrix cocycle: need one matrix per allowed cell");
    for (const auto& m : matrices_) {
      if (m.size() != static_cast<std::size_t>(d_ * d_))
        throw InvalidArgument("matrix cocycle: matrix must have d*d entries");
      for (double v : m)
        if (!(v > 0.0) || !std::isfinite(v))
          throw InvalidArgument("matrix cocycle: entries must be strictly positive");
    }
  }

  std::string kind() const override { return "matrix_cocycle"; }
  int dimension() const { return d_; }
  const std::vector<double>& matrix(std::size_t cell) const { return matrices_[cell]; }

  double log_weight(const ProductWord& w) const override {
    if (w.empty()) return 0.0;
    const auto d = static_cast<std::size_t>(d_);
    thread_local std::vector<double> v, tmp;
    v.assign(d, 1.0);
    tmp.assign(d, 0.0);
    double log_scale = 0.0;
    for (std::size_t i = 0; i < w.size(); ++i) {
      const int idx = system().cell_index(w.w1[i], w.w2[i]);
      if (idx < 0) return neg_inf;
      const auto& m = matrices_[static_cast<std::size_t>(idx)];
      double total = 0.0;
      for (std::size_t r = 0; r < d; ++r) {
        double acc = 0.0;
        for (std::size_t c = 0; c < d; ++c) acc += m[r * d + c] * v[c];
        tmp[r] = acc;
        total += acc;
      }
      for (std::size_t r = 0; r < d; ++r) v[r] = tmp[r] / total;
      log_scale += std::log(total);
    }
    return log_scale;
  }

  std::optional<BirkhoffForm> birkhoff_form() const override {
    if (d_ != 1) return std::nullopt;
    std::vector<double> table(matrices_.size());
    for (std::size_t i = 0; i < table.size(); ++i) table[i] = std::log(matrices_[i][0]);
    return BirkhoffForm{std::make_shared<ConstantCellPotential>(system(), 1, std::move(table)),
                        0.0};
  }

 private:
  int d_;
  std::vector<std::vector<double>> matrices_;
};

// ---------------------------------------------------------------------------
// Row weights: functions on column cylinders [w1].

class RowWeight {
 public:
  virtual ~RowWeight() = default;
  virtual double log_value(std::span<const Letter> w1) const = 0;
  /// Per-letter log factors when the row weight is a product over letters.
  virtual std::optional<std::vector<double>> letter_factors() const { return std::nullopt; }
};

using RowWeightPtr = std::shared_ptr<const RowWeight>;

class LetterRowWeight final : public RowWeight {
 public:
  explicit LetterRowWeight(std::vector<double> log_factors) : f_(std::move(log_factors)) {}
  double log_value(std::span<const Letter> w1) const override {
    double s = 0.0;
    for (Letter a : w1) {
      if (a >= f_.size() || f_[a] == neg_inf) return neg_inf;
      s += f_[a];
    }
    return s;
  }
  std::optional<std::vector<double>> letter_factors() const override { return f_; }

 private:
  std::vector<double> f_;
};

/// lambda-like uniform row weight r1^-n.
inline RowWeightPtr uniform_row_weight(int r1) {
  return std::make_shared<LetterRowWeight>(
      std::vector<double>(static_cast<std::size_t>(r1), -std::log(static_cast<double>(r1))));
}

/// w1 -> I_{rho,q}(w1).
class RowSumRowWeight final : public RowWeight {
 public:
  RowSumRowWeight(WeightPtr rho, double q) : rho_(std::move(rho)), q_(q) {}
  double log_value(std::span<const Letter> w1) const override {
    return rho_->log_row_sum(w1, q_);
  }

 private:
  WeightPtr rho_;
  double q_;
};

/// psi(w) = theta1(w1) rho(w) / I_{rho,1}(w1).
class SkewProductWeight final : public CylinderWeight {
 public:
  SkewProductWeight(WeightPtr rho, RowWeightPtr theta1)
      : CylinderWeight(rho->system()), rho_(std::move(rho)), theta_(std::move(theta1)) {}

  std::string kind() const override { return "skew_product"; }

  double log_weight(const ProductWord& w) const override {
    if (w.empty()) return 0.0;
    const double lr = rho_->log_weight(w);
    if (lr == neg_inf) return neg_inf;
    const double row = rho_->log_row_sum(w.w1, 1.0);
    if (row == neg_inf)
      throw InvalidArgument("skew product: I_{rho,1}(w1) vanishes on an evaluated row");
    const double th = theta_->log_value(w.w1);
    if (th == neg_inf) return neg_inf;
    return th + lr - row;
  }

  double log_row_sum(std::span<const Letter> w1, double q) const override {
    if (w1.empty()) return 0.0;
    const double th = theta_->log_value(w1);
    const double i1 = rho_->log_row_sum(w1, 1.0);
    const double iq = rho_->log_row_sum(w1, q);
    if (th == neg_inf || i1 == neg_inf || iq == neg_inf) return neg_inf;
    return q * (th - i1) + iq;
  }

  std::optional<BirkhoffForm> birkhoff_form() const override {
    auto base = rho_->birkhoff_form();
    auto letters = theta_->letter_factors();
    if (!base || !letters || base->potential->depth() != 1) return std::nullopt;
    const auto& sys = system();
    std::vector<double> row_log_sum(static_cast<std::size_t>(sys.r1()), neg_inf);
    for (std::size_t i = 0; i < sys.size(); ++i) {
      auto& r = row_log_sum[sys.cell(i).a1];
      r = log_add(r, base->potential->window(i) + base->shift);
    }
    std::vector<double> table(sys.size());
    for (std::size_t i = 0; i < sys.size(); ++i) {
      const Letter a1 = sys.cell(i).a1;
      const double th = a1 < letters->size() ? (*letters)[a1] : neg_inf;
      if (th == neg_inf) return std::nullopt;
      table[i] = th + base->potential->window(i) + base->shift - row_log_sum[a1];
    }
    return BirkhoffForm{std::make_shared<ConstantCellPotential>(sys, 1, std::move(table)), 0.0};
  }

  std::optional<FiberForm> fiber_form() const override { return rho_->fiber_form(); }

 private:
  WeightPtr rho_;
  RowWeightPtr theta_;
};

/// log psi'(w) = log psi(w) - |w| * shift.
class NormalizedWeight final : public CylinderWeight {
 public:
  NormalizedWeight(WeightPtr base, double shift)
      : CylinderWeight(base->system()), base_(std::move(base)), shift_(shift) {}

  std::string kind() const override { return "normalized"; }
  const WeightPtr& base() const { return base_; }
  double shift() const { return shift_; }

  double log_weight(const ProductWord& w) const override {
    const double lw = base_->log_weight(w);
    if (lw == neg_inf) return neg_inf;
    return lw - static_cast<double>(w.size()) * shift_;
  }

  double log_row_sum(std::span<const Letter> w1, double q) const override {
    const double r = base_->log_row_sum(w1, q);
    if (r == neg_inf) return neg_inf;
    return r - q * static_cast<double>(w1.size()) * shift_;
  }

  std::optional<BirkhoffForm> birkhoff_form() const override {
    auto f = base_->birkhoff_form();
    if (!f) return std::nullopt;
    f->shift -= shift_;
    return f;
  }

  std::optional<FiberForm> fiber_form() const override { return base_->fiber_form(); }

 private:
  WeightPtr base_;
  double shift_;
};

// ---------------------------------------------------------------------------
// Factories

inline WeightPtr make_constant_cell(const CellSystem& sys, int k, std::vector<double> table,
                                    std::vector<std::vector<double>> truncated = {}) {
  return std::make_shared<ConstantCellWeight>(
      sys, std::make_shared<ConstantCellPotential>(sys, k, std::move(table), std::move(truncated)));
}

/// Depth-1 weight from positive cell masses (one per allowed cell, sorted order).
inline WeightPtr make_cell_masses(const CellSystem& sys, const std::vector<double>& masses) {
  std::vector<double> table(masses.size());
  for (std::size_t i = 0; i < masses.size(); ++i) {
    if (!(masses[i] > 0.0)) throw InvalidArgument("cell masses must be strictly positive");
    table[i] = std::log(masses[i]);
  }
  return make_constant_cell(sys, 1, std::move(table));
}

inline WeightPtr make_matrix_cocycle(const CellSystem& sys, int d,
                                     std::vector<std::vector<double>> matrices) {
  return std::make_shared<MatrixCocycleWeight>(sys, d, std::move(matrices));
}

inline WeightPtr make_skew_product(WeightPtr rho, RowWeightPtr theta1) {
  return std::make_shared<SkewProductWeight>(std::move(rho), std::move(theta1));
}

/// Subtracts n * pressure_estimate from log psi. Repeated shifts collapse
/// onto the original base.
inline WeightPtr normalize_to_gibbs(const WeightPtr& psi, double pressure_estimate) {
  if (auto norm = std::dynamic_pointer_cast<const NormalizedWeight>(psi))
    return std::make_shared<NormalizedWeight>(norm->base(), norm->shift() + pressure_estimate);
  return std::make_shared<NormalizedWeight>(psi, pressure_estimate);
}

/// Exact pressure log sum_cells exp(f(cell)) when psi is a depth-1 Birkhoff weight.
inline std::optional<double> depth1_pressure(const CylinderWeight& psi) {
  auto f = psi.birkhoff_form();
  if (!f || f->potential->depth() != 1) return std::nullopt;
  LogSumExp acc;
  for (double v : f->potential->table()) acc.add(v);
  return acc.value() + f->shift;
}

struct AmEstimate {
  double log_c = 0.0;   // lower bound for log C
  int attained_at = 0;  // |u| + |v| where the maximum occurred
};

/// max |log psi(uv) - log psi(u) - log psi(v)| over admissible u, v with
/// |u|, |v| >= 1 and |u| + |v| <= max_depth.
inline AmEstimate estimate_am_constant(const CylinderWeight& psi, int max_depth,
                                       std::uint64_t cap = kDefaultEnumerationCap) {
  const auto& sys = psi.system();
  const auto cells = static_cast<std::uint64_t>(sys.size());
  std::uint64_t total = 0;
  for (int L = 1; L <= max_depth; ++L) {
    const std::uint64_t c = saturating_pow(cells, static_cast<std::uint64_t>(L));
    total = (c > cap || total + c > cap) ? cap + 1 : total + c;
  }
  if (total > cap) throw CapExceeded("estimate_am_constant: too many words at this depth");

  std::vector<std::vector<double>> lw(static_cast<std::size_t>(max_depth) + 1);
  for (int L = 1; L <= max_depth; ++L) {
    AdmissibleWords words(sys, static_cast<std::size_t>(L), cap);
    auto& t = lw[static_cast<std::size_t>(L)];
    t.resize(words.size());
    std::uint64_t i = 0;
    words.for_each([&](const ProductWord& w, const auto&) { t[i++] = psi.log_weight(w); });
  }
  AmEstimate best;
  for (int L = 2; L <= max_depth; ++L) {
    const auto& t = lw[static_cast<std::size_t>(L)];
    for (std::uint64_t idx = 0; idx < t.size(); ++idx) {
      for (int j = 1; j < L; ++j) {
        const std::uint64_t tail = saturating_pow(cells, static_cast<std::uint64_t>(L - j));
        const double u = lw[static_cast<std::size_t>(j)][idx / tail];
        const double v = lw[static_cast<std::size_t>(L - j)][idx % tail];
        const double uv = t[idx];
        if (uv == neg_inf && (u == neg_inf || v == neg_inf)) continue;
        const double defect = std::abs(uv - u - v);
        if (defect > best.log_c) {
          best.log_c = defect;
          best.attained_at = L;
        }
      }
    }
  }
  return best;
}

}  // namespace carpetmf
