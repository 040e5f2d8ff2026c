#pragma once

// Tilted auxiliary weights psi_q and psi~_q, ball masses through the column
// marginal, and exact sampling of finite-depth Gibbs approximations.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <span>
#include <unordered_map>
#include <string>
#include <vector>

#include "carpetmf/error.hpp"
#include "carpetmf/logsum.hpp"
#include "carpetmf/parallel.hpp"
#include "carpetmf/pressure.hpp"
#include "carpetmf/symbolic.hpp"
#include "carpetmf/weights.hpp"

namespace carpetmf {

enum class AuxVariant { psi_q, psi_tilde_q };

inline std::string to_string(AuxVariant v) {
  return v == AuxVariant::psi_q ? "psi_q" : "psi_tilde_q";
}

/// psi_q  = theta_q  psi^q / I_q,  theta_q  = r1^{nL} I_1^{q(1-s)} I_q^s  (L = beta(q))
/// psi~_q = theta~_q psi^q / I_q,  theta~_q = r1^{nL} I_q^s               (L = T(q))
class AuxiliaryWeight final : public CylinderWeight {
 public:
  AuxiliaryWeight(WeightPtr base, double q, double level, AuxVariant variant)
      : CylinderWeight(base->system()),
        base_(std::move(base)),
        q_(q),
        level_(level),
        variant_(variant) {}

  std::string kind() const override { return "auxiliary"; }
  const WeightPtr& base() const { return base_; }
  double q() const { return q_; }
  double level() const { return level_; }
  AuxVariant variant() const { return variant_; }

  /// Base row sums, memoized: enumeration strategies revisit each w1 many times.
  double base_row_sum(std::span<const Letter> w1, double r) const {
    std::string key(reinterpret_cast<const char*>(w1.data()), w1.size());
    key.append(reinterpret_cast<const char*>(&r), sizeof r);
    {
      std::lock_guard lock(memo_mutex_);
      if (auto it = memo_.find(key); it != memo_.end()) return it->second;
    }
    const double v = base_->log_row_sum(w1, r);
    std::lock_guard lock(memo_mutex_);
    if (memo_.size() < kMemoLimit) memo_.emplace(std::move(key), v);
    return v;
  }

  /// log theta(w1) given log I_q(w1); -inf when a factor vanishes.
  double log_theta(std::span<const Letter> w1, double log_iq) const {
    if (log_iq == neg_inf) return neg_inf;
    const auto& sys = system();
    double t = static_cast<double>(w1.size()) * level_ * sys.log_r1() + sys.s() * log_iq;
    if (variant_ == AuxVariant::psi_q) {
      const double i1 = base_row_sum(w1, 1.0);
      if (i1 == neg_inf) return neg_inf;
      t += q_ * (1.0 - sys.s()) * i1;
    }
    return t;
  }
  double log_theta(std::span<const Letter> w1) const {
    return log_theta(w1, base_row_sum(w1, q_));
  }

  double log_weight(const ProductWord& w) const override {
    if (w.empty()) return 0.0;
    const double lw = base_->log_weight(w);
    if (lw == neg_inf) return neg_inf;
    const double iq = base_row_sum(w.w1, q_);
    const double th = log_theta(w.w1, iq);
    if (th == neg_inf) return neg_inf;
    return th + q_ * lw - iq;
  }

  double log_row_sum(std::span<const Letter> w1, double r) const override {
    if (w1.empty()) return 0.0;
    const double iq = base_row_sum(w1, q_);
    const double th = log_theta(w1, iq);
    if (th == neg_inf) return neg_inf;
    const double iqr = base_row_sum(w1, q_ * r);
    if (iqr == neg_inf) return neg_inf;
    return r * (th - iq) + iqr;
  }

  std::optional<BirkhoffForm> birkhoff_form() const override {
    auto f = base_->birkhoff_form();
    if (!f || f->potential->depth() != 1) return std::nullopt;
    const auto& sys = system();
    const auto r1 = detail::depth1_row_sums(sys, *f, 1.0);
    const auto rq = detail::depth1_row_sums(sys, *f, q_);
    std::vector<double> table(sys.size());
    for (std::size_t i = 0; i < sys.size(); ++i) {
      const Letter a = sys.cell(i).a1;
      double v = level_ * sys.log_r1() + (sys.s() - 1.0) * rq[a] +
                 q_ * (f->potential->window(i) + f->shift);
      if (variant_ == AuxVariant::psi_q) v += q_ * (1.0 - sys.s()) * r1[a];
      table[i] = v;
    }
    return BirkhoffForm{std::make_shared<ConstantCellPotential>(sys, 1, std::move(table)), 0.0};
  }

  std::optional<FiberForm> fiber_form() const override {
    auto f = base_->fiber_form();
    if (!f) return std::nullopt;
    f->scale *= q_;
    return f;
  }

 private:
  static constexpr std::size_t kMemoLimit = std::size_t{1} << 18;

  WeightPtr base_;
  double q_;
  double level_;
  AuxVariant variant_;
  mutable std::mutex memo_mutex_;
  mutable std::unordered_map<std::string, double> memo_;
};

inline std::shared_ptr<const AuxiliaryWeight> make_auxiliary(WeightPtr base, double q,
                                                             double level, AuxVariant variant) {
  auto aux = std::make_shared<const AuxiliaryWeight>(std::move(base), q, level, variant);
  bool any = false;
  for (Letter a : aux->system().row_alphabet()) {
    const Letter w[1] = {a};
    if (aux->log_theta(w) != neg_inf) any = true;
  }
  if (!any) throw EmptySupport("auxiliary weight: every row vanishes at q = " + format_double(q));
  return aux;
}

/// log u_n(x) (psi_q) or log u~_n(x) (psi~_q) along a column word.
inline double log_u(const CylinderWeight& psi, std::span<const Letter> w1, double q,
                    AuxVariant variant) {
  const double iq = psi.log_row_sum(w1, q);
  if (variant == AuxVariant::psi_tilde_q) return iq;
  return iq - q * psi.log_row_sum(w1, 1.0);
}

// ---------------------------------------------------------------------------
// Ball masses

/// log mu(B) ~ log psi(w1 x w2) + log I_1(w~1) - log Z_{g(n)-n} for the ball
/// [w1 . w~1] x [w2]; Z_L is the total mass of psi at length L.
class BallMass {
 public:
  explicit BallMass(WeightPtr psi, SumOptions opt = {}) : psi_(std::move(psi)), opt_(opt) {}

  const CylinderWeight& weight() const { return *psi_; }

  double log_normalizer(std::size_t length) const {
    std::lock_guard lock(mutex_);
    auto it = cache_.find(length);
    if (it != cache_.end()) return it->second;
    const double z = length == 0 ? 0.0 : log_total_mass(*psi_, length, 1.0, opt_);
    cache_.emplace(length, z);
    return z;
  }

  double operator()(std::span<const Letter> column, std::span<const Letter> row) const {
    const auto& sys = psi_->system();
    const std::size_t n = row.size();
    if (column.size() != sys.depth(n))
      throw InvalidArgument("ball mass: column word length must equal g(n)");
    ProductWord head(Word(column.begin(), column.begin() + static_cast<std::ptrdiff_t>(n)),
                     Word(row.begin(), row.end()));
    const double lw = psi_->log_weight(head);
    if (lw == neg_inf) return neg_inf;
    const auto tail = column.subspan(n);
    const double marginal = tail.empty() ? 0.0 : psi_->log_row_sum(tail, 1.0);
    if (marginal == neg_inf) return neg_inf;
    return lw + marginal - log_normalizer(tail.size());
  }

  double operator()(const Ball& b) const { return (*this)(b.column, b.row); }

 private:
  WeightPtr psi_;
  SumOptions opt_;
  mutable std::mutex mutex_;
  mutable std::map<std::size_t, double> cache_;
};

// ---------------------------------------------------------------------------
// Random streams

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

/// Independent stream for sample `index` under `master`; depends on nothing else.
inline std::mt19937_64 sample_stream(std::uint64_t master, std::uint64_t index) {
  return std::mt19937_64(splitmix64(splitmix64(master) ^ index));
}

/// Uniform on [0, 1) from the top 53 bits; portable across standard libraries.
inline double uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

namespace detail {

// Index i with probability proportional to exp(logw[i]).
inline std::size_t draw_log_weighted(std::span<const double> logw, double u) {
  const double total = log_sum_exp(logw);
  if (total == neg_inf) throw EmptySupport("sampler: every continuation has zero weight");
  double target = u;
  std::size_t last = 0;
  for (std::size_t i = 0; i < logw.size(); ++i) {
    if (logw[i] == neg_inf) continue;
    const double p = std::exp(logw[i] - total);
    if (target < p) return i;
    target -= p;
    last = i;
  }
  return last;
}

// Cumulative table for large categorical draws.
class CumulativeTable {
 public:
  CumulativeTable() = default;
  explicit CumulativeTable(std::span<const double> logw) {
    const double total = log_sum_exp(logw);
    if (total == neg_inf) throw EmptySupport("sampler: total weight is zero");
    cum_.resize(logw.size());
    double acc = 0.0;
    for (std::size_t i = 0; i < logw.size(); ++i) {
      acc += logw[i] == neg_inf ? 0.0 : std::exp(logw[i] - total);
      cum_[i] = acc;
    }
  }
  // The first entry whose cumulative mass exceeds u * total always has
  // positive weight.
  std::uint64_t draw(double u) const {
    auto it = std::upper_bound(cum_.begin(), cum_.end(), u * cum_.back());
    if (it == cum_.end()) {
      auto i = cum_.size() - 1;
      while (i > 0 && cum_[i] == cum_[i - 1]) --i;
      return i;
    }
    return static_cast<std::uint64_t>(it - cum_.begin());
  }

 private:
  std::vector<double> cum_;
};

// Backward partition sums of a window potential over words of length m whose
// i-th cell is drawn from options(i); draws exact sequential conditionals.
class WindowChain {
 public:
  template <class Options>
  WindowChain(const ConstantCellPotential& pot, std::size_t m, double scale, Options&& options)
      : pot_(&pot), m_(m), scale_(scale) {
    const auto cells = static_cast<std::uint64_t>(pot.cells());
    const auto k = static_cast<std::size_t>(pot.depth());
    head_ = std::min(m, k - 1);
    states_ = saturating_pow(cells, static_cast<std::uint64_t>(k - 1));
    full_ = m >= k;
    if (full_) {
      values_.assign((m - head_ + 1) * states_, neg_inf);
      for (std::uint64_t s = 0; s < states_; ++s) value(m, s) = 0.0;
      for (std::size_t t = m; t-- > head_;) {
        const auto& opts = options(t);
        for (std::uint64_t s = 0; s < states_; ++s) {
          LogSumExp acc;
          for (int c : opts) {
            const std::uint64_t window = s * cells + static_cast<std::uint64_t>(c);
            const double after = value(t + 1, window % states_);
            if (after == neg_inf) continue;
            acc.add(scale * pot.window(window) + after);
          }
          value(t, s) = acc.value();
        }
      }
    }
    // Heads: every choice of the first min(m, k-1) cells.
    std::vector<std::size_t> pos(head_, 0);
    std::vector<int> idx(head_);
    for (std::size_t i = 0; i < head_; ++i)
      if (options(i).empty()) throw EmptySupport("sampler: empty position");
    for (bool more = true; more;) {
      for (std::size_t i = 0; i < head_; ++i) idx[i] = options(i)[pos[i]];
      heads_.push_back(idx);
      head_logw_.push_back(full_ ? value(head_, pot.window_index(std::span<const int>(idx)))
                                 : scale * pot.evaluate(std::span<const int>(idx)));
      more = false;
      for (std::size_t j = head_; j-- > 0;) {
        if (++pos[j] < options(j).size()) {
          more = true;
          break;
        }
        pos[j] = 0;
      }
    }
  }

  double log_partition() const { return log_sum_exp(head_logw_); }

  template <class Options>
  std::vector<int> draw(std::mt19937_64& rng, Options&& options) const {
    std::vector<int> out = heads_[draw_log_weighted(head_logw_, uniform01(rng))];
    if (!full_) return out;
    const auto cells = static_cast<std::uint64_t>(pot_->cells());
    std::uint64_t s = pot_->window_index(std::span<const int>(out));
    std::vector<double> logits;
    for (std::size_t t = head_; t < m_; ++t) {
      const auto& opts = options(t);
      logits.assign(opts.size(), neg_inf);
      for (std::size_t j = 0; j < opts.size(); ++j) {
        const std::uint64_t window = s * cells + static_cast<std::uint64_t>(opts[j]);
        const double after = value(t + 1, window % states_);
        if (after != neg_inf) logits[j] = scale_ * pot_->window(window) + after;
      }
      const int c = opts[draw_log_weighted(logits, uniform01(rng))];
      out.push_back(c);
      s = (s * cells + static_cast<std::uint64_t>(c)) % states_;
    }
    return out;
  }

 private:
  double& value(std::size_t t, std::uint64_t s) { return values_[(t - head_) * states_ + s]; }
  double value(std::size_t t, std::uint64_t s) const {
    return values_[(t - head_) * states_ + s];
  }

  const ConstantCellPotential* pot_;
  std::size_t m_;
  double scale_;
  std::size_t head_ = 0;
  std::uint64_t states_ = 1;
  bool full_ = false;
  std::vector<double> values_;
  std::vector<std::vector<int>> heads_;
  std::vector<double> head_logw_;
};

}  // namespace detail

/// Draws words of length `horizon` with probability proportional to psi.
/// Strategies, cheapest first: a window Markov chain for Birkhoff weights;
/// column marginal by row enumeration then a fiber chain (fiber_form);
/// plain enumeration of all admissible words.
class PathSampler {
 public:
  PathSampler(WeightPtr psi, std::size_t horizon, std::uint64_t cap = kDefaultEnumerationCap)
      : psi_(std::move(psi)), horizon_(horizon) {
    const auto& sys = psi_->system();
    all_cells_.resize(sys.size());
    for (std::size_t i = 0; i < sys.size(); ++i) all_cells_[i] = static_cast<int>(i);
    fibers_ = detail::fiber_cells(sys);
    if (auto form = psi_->birkhoff_form()) {
      strategy_ = "markov";
      form_potential_ = form->potential;
      chain_.emplace(*form_potential_, horizon_, 1.0,
                     [&](std::size_t) -> const std::vector<int>& { return all_cells_; });
      return;
    }
    auto fiber = psi_->fiber_form();
    if (fiber && saturating_pow(static_cast<std::uint64_t>(sys.r1()), horizon_) <= cap) {
      strategy_ = "row_fiber";
      fiber_ = *fiber;
      rows_.emplace(sys, horizon_, cap);
      std::vector<double> logm(rows_->size());
      for (std::uint64_t i = 0; i < rows_->size(); ++i)
        logm[i] = psi_->log_row_sum((*rows_)[i], 1.0);
      table_ = detail::CumulativeTable(logm);
      return;
    }
    if (saturating_pow(sys.size(), horizon_) <= cap) {
      strategy_ = "enumeration";
      words_.emplace(sys, horizon_, cap);
      std::vector<double> logw(words_->size());
      words_->for_each([&, i = std::uint64_t{0}](const ProductWord& w, const auto&) mutable {
        logw[i++] = psi_->log_weight(w);
      });
      table_ = detail::CumulativeTable(logw);
      return;
    }
    throw CapExceeded("sampler: no transfer structure and horizon " + std::to_string(horizon_) +
                      " exceeds the enumeration cap");
  }

  const std::string& strategy() const { return strategy_; }
  std::size_t horizon() const { return horizon_; }
  const CylinderWeight& weight() const { return *psi_; }

  ProductWord draw(std::mt19937_64& rng) const {
    const auto& sys = psi_->system();
    if (horizon_ == 0) return {};
    if (chain_) {
      const auto idx = chain_->draw(rng, [&](std::size_t) -> const std::vector<int>& {
        return all_cells_;
      });
      ProductWord w;
      for (int c : idx) w.push_back(sys.cell(static_cast<std::size_t>(c)));
      return w;
    }
    if (rows_) {
      const Word w1 = (*rows_)[table_.draw(uniform01(rng))];
      auto opts = [&](std::size_t i) -> const std::vector<int>& { return fibers_[w1[i]]; };
      const detail::WindowChain fiber_chain(*fiber_.potential, horizon_, fiber_.scale, opts);
      const auto idx = fiber_chain.draw(rng, opts);
      ProductWord w;
      for (int c : idx) w.push_back(sys.cell(static_cast<std::size_t>(c)));
      return w;
    }
    return (*words_)[table_.draw(uniform01(rng))];
  }

 private:
  WeightPtr psi_;
  std::size_t horizon_;
  std::string strategy_;
  std::vector<int> all_cells_;
  std::vector<std::vector<int>> fibers_;
  std::shared_ptr<const ConstantCellPotential> form_potential_;
  std::optional<detail::WindowChain> chain_;
  FiberForm fiber_;
  std::optional<RowWords> rows_;
  std::optional<AdmissibleWords> words_;
  detail::CumulativeTable table_;
};

/// A sampled path with per-depth records against a reference weight.
struct SamplePath {
  ProductWord cells;
  std::vector<double> ball_log_mass;  // [d-1] = log mu(B_d), for d with g(d) <= horizon
  std::vector<double> birkhoff;       // [d-1] = log psi(w|d) of the reference weight
  std::uint64_t seed = 0;
  std::uint64_t index = 0;
};

/// Draws path `index` of the stream `seed` and records depths 1..n against
/// `reference` (the measure whose balls are weighed).
inline SamplePath sample_path(const PathSampler& sampler, const BallMass& reference,
                              std::size_t n, std::uint64_t seed, std::uint64_t index = 0) {
  if (n > sampler.horizon()) throw InvalidArgument("sample_path: depth exceeds the horizon");
  auto rng = sample_stream(seed, index);
  SamplePath p;
  p.seed = seed;
  p.index = index;
  p.cells = sampler.draw(rng);
  const auto& sys = sampler.weight().system();
  const auto& ref = reference.weight();
  for (std::size_t d = 1; d <= n; ++d) {
    p.birkhoff.push_back(ref.log_weight(p.cells.prefix(d)));
    const std::uint64_t g = sys.depth(d);
    if (g <= p.cells.size())
      p.ball_log_mass.push_back(reference(std::span<const Letter>(p.cells.w1).first(g),
                                          std::span<const Letter>(p.cells.w2).first(d)));
  }
  return p;
}

/// Convenience form: horizon m >= n (0 means m = n), weighed against psi itself.
inline SamplePath sample_path(const WeightPtr& psi, std::size_t n, std::size_t horizon,
                              std::uint64_t seed, std::uint64_t index = 0) {
  const PathSampler sampler(psi, horizon == 0 ? n : horizon);
  const BallMass mass(psi);
  return sample_path(sampler, mass, n, seed, index);
}

struct McEstimate {
  double mean = 0.0;
  double stderr_ = 0.0;
  std::vector<double> values;
};

/// Mean and standard error with pairwise sums (order fixed by sample index).
inline McEstimate summarize(std::vector<double> values) {
  McEstimate e;
  e.values = std::move(values);
  const auto n = static_cast<double>(e.values.size());
  if (e.values.empty()) return e;
  e.mean = pairwise_sum(e.values) / n;
  if (e.values.size() > 1) {
    std::vector<double> sq(e.values.size());
    for (std::size_t i = 0; i < sq.size(); ++i) sq[i] = (e.values[i] - e.mean) * (e.values[i] - e.mean);
    e.stderr_ = std::sqrt(pairwise_sum(sq) / (n - 1.0) / n);
  }
  return e;
}

/// f(sample word) over `count` independent draws; deterministic in (seed, count).
template <class F>
McEstimate monte_carlo(const PathSampler& sampler, std::size_t count, std::uint64_t seed,
                       unsigned workers, F&& f) {
  std::vector<double> values(count);
  parallel_for(count, workers, [&](std::uint64_t i) {
    auto rng = sample_stream(seed, i);
    values[i] = f(sampler.draw(rng));
  });
  return summarize(std::move(values));
}

/// Local dimension at depth n of samples from the auxiliary weight:
///   psi_q:   log mu(B_n) / (-n log r2), mu the Gibbs approximation of psi;
///   psi~_q:  log psi(w|n) / (-n log r2).
inline McEstimate local_dimension_mc(const WeightPtr& psi, const WeightPtr& aux,
                                     AuxVariant variant, std::size_t samples, std::size_t n,
                                     std::uint64_t seed, unsigned workers = 1,
                                     std::uint64_t cap = kDefaultEnumerationCap) {
  if (n == 0) throw InvalidArgument("local_dimension_mc: depth must be >= 1");
  const auto& sys = psi->system();
  const double scale = -static_cast<double>(n) * sys.log_r2();
  if (variant == AuxVariant::psi_tilde_q) {
    const PathSampler sampler(aux, n, cap);
    return monte_carlo(sampler, samples, seed, workers, [&](const ProductWord& w) {
      return psi->log_weight(w) / scale;
    });
  }
  const std::size_t g = sys.depth(n);
  const PathSampler sampler(aux, g, cap);
  const BallMass mass(psi);
  mass.log_normalizer(g - n);
  return monte_carlo(sampler, samples, seed, workers, [&](const ProductWord& w) {
    return mass(std::span<const Letter>(w.w1), std::span<const Letter>(w.w2).first(n)) / scale;
  });
}

}  // namespace carpetmf
