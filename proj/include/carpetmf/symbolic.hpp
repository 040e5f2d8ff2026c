#pragma once

// Alphabets, product words, balls and the anisotropic depth bookkeeping of
// the product space A1^N x A2^N with max-metric d = max(r1^-|x^x'|, r2^-|y^y'|).

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "carpetmf/error.hpp"

namespace carpetmf {

using Letter = std::uint8_t;
using Word = std::vector<Letter>;

inline constexpr std::uint64_t kDefaultEnumerationCap = std::uint64_t{1} << 24;

struct Cell {
  Letter a1 = 0;
  Letter a2 = 0;
  auto operator<=>(const Cell&) const = default;
};

// base^n, saturating at uint64 max.
inline std::uint64_t saturating_pow(std::uint64_t base, std::uint64_t n) {
  std::uint64_t out = 1;
  for (std::uint64_t i = 0; i < n; ++i) {
    if (base != 0 && out > std::numeric_limits<std::uint64_t>::max() / base)
      return std::numeric_limits<std::uint64_t>::max();
    out *= base;
  }
  return out;
}

class CellSystem {
 public:
  CellSystem(int r1, int r2, std::vector<Cell> allowed)
      : r1_(r1), r2_(r2), allowed_(std::move(allowed)) {
    if (r1_ < 2) throw InvalidArgument("cell system: r1 must be >= 2");
    if (r2_ < r1_) throw InvalidArgument("cell system: r2 must be >= r1");
    if (r2_ > 256) throw InvalidArgument("cell system: r2 must be <= 256");
    std::sort(allowed_.begin(), allowed_.end());
    allowed_.erase(std::unique(allowed_.begin(), allowed_.end()),
                   allowed_.end());
    if (allowed_.empty())
      throw InvalidArgument("cell system: allowed cell set is empty");
    index_.assign(static_cast<std::size_t>(r1_ * r2_), -1);
    fibers_.assign(static_cast<std::size_t>(r1_), {});
    for (std::size_t i = 0; i < allowed_.size(); ++i) {
      const Cell c = allowed_[i];
      if (c.a1 >= r1_ || c.a2 >= r2_)
        throw InvalidArgument("cell system: cell (" + std::to_string(c.a1) +
                              "," + std::to_string(c.a2) +
                              ") outside the alphabets");
      index_[static_cast<std::size_t>(c.a1 * r2_ + c.a2)] = static_cast<int>(i);
      fibers_[c.a1].push_back(c.a2);
    }
    for (int a1 = 0; a1 < r1_; ++a1)
      if (!fibers_[static_cast<std::size_t>(a1)].empty())
        row_alphabet_.push_back(static_cast<Letter>(a1));
    log_r1_ = std::log(static_cast<double>(r1_));
    log_r2_ = std::log(static_cast<double>(r2_));
    s_ = log_r1_ / log_r2_;
  }

  int r1() const { return r1_; }
  int r2() const { return r2_; }
  double s() const { return s_; }
  double log_r1() const { return log_r1_; }
  double log_r2() const { return log_r2_; }

  std::span<const Cell> allowed() const { return allowed_; }
  std::size_t size() const { return allowed_.size(); }
  const Cell& cell(std::size_t index) const { return allowed_[index]; }

  /// Index of (a1, a2) in the sorted allowed list, or -1.
  int cell_index(int a1, int a2) const {
    if (a1 < 0 || a2 < 0 || a1 >= r1_ || a2 >= r2_) return -1;
    return index_[static_cast<std::size_t>(a1 * r2_ + a2)];
  }
  bool is_allowed(int a1, int a2) const { return cell_index(a1, a2) >= 0; }

  std::span<const Letter> row_alphabet() const { return row_alphabet_; }
  std::span<const Letter> row_fiber(int a1) const {
    return fibers_[static_cast<std::size_t>(a1)];
  }

  /// Fewer than two allowed cells: the multifractal picture is trivial.
  bool degenerate() const { return allowed_.size() < 2; }

  /// g(n): the smallest m with r1^-m <= r2^-n.
  std::uint64_t depth(std::uint64_t n) const {
    using boost::multiprecision::cpp_int;
    if (n == 0) return 0;
    // multiprecision pow() crashes on some Boost releases; multiply by hand.
    cpp_int target = 1;
    for (std::uint64_t i = 0; i < n; ++i) target *= r2_;
    cpp_int power = 1;
    std::uint64_t m = 0;
    while (power < target) {
      power *= r1_;
      ++m;
    }
    return m;
  }

 private:
  int r1_;
  int r2_;
  std::vector<Cell> allowed_;
  std::vector<int> index_;
  std::vector<std::vector<Letter>> fibers_;
  std::vector<Letter> row_alphabet_;
  double log_r1_ = 0.0;
  double log_r2_ = 0.0;
  double s_ = 0.0;
};

inline std::uint64_t depth_map(const CellSystem& sys, std::uint64_t n) {
  return sys.depth(n);
}

/// A cylinder [w1] x [w2] with |w1| = |w2|.
struct ProductWord {
  Word w1;
  Word w2;

  ProductWord() = default;
  ProductWord(Word first, Word second) : w1(std::move(first)), w2(std::move(second)) {
    if (w1.size() != w2.size())
      throw InvalidArgument("product word: component lengths differ");
  }

  std::size_t size() const { return w1.size(); }
  bool empty() const { return w1.empty(); }
  Cell cell(std::size_t i) const { return {w1[i], w2[i]}; }
  void push_back(Cell c) {
    w1.push_back(c.a1);
    w2.push_back(c.a2);
  }

  ProductWord prefix(std::size_t n) const {
    return ProductWord(Word(w1.begin(), w1.begin() + static_cast<std::ptrdiff_t>(n)),
                       Word(w2.begin(), w2.begin() + static_cast<std::ptrdiff_t>(n)));
  }
  /// sigma^k: drop the first k letter pairs.
  ProductWord shifted(std::size_t k) const {
    return ProductWord(Word(w1.begin() + static_cast<std::ptrdiff_t>(k), w1.end()),
                       Word(w2.begin() + static_cast<std::ptrdiff_t>(k), w2.end()));
  }

  friend ProductWord operator+(const ProductWord& u, const ProductWord& v) {
    ProductWord out = u;
    out.w1.insert(out.w1.end(), v.w1.begin(), v.w1.end());
    out.w2.insert(out.w2.end(), v.w2.begin(), v.w2.end());
    return out;
  }
  bool operator==(const ProductWord&) const = default;
};

inline ProductWord make_word(std::span<const Cell> cells) {
  ProductWord w;
  for (Cell c : cells) w.push_back(c);
  return w;
}

inline bool admissible(const CellSystem& sys, const ProductWord& w) {
  for (std::size_t i = 0; i < w.size(); ++i)
    if (!sys.is_allowed(w.w1[i], w.w2[i])) return false;
  return true;
}

/// Cell indices of an admissible word; returns false if some cell is not allowed.
inline bool cell_indices(const CellSystem& sys, const ProductWord& w,
                         std::vector<int>& out) {
  out.resize(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const int idx = sys.cell_index(w.w1[i], w.w2[i]);
    if (idx < 0) return false;
    out[i] = idx;
  }
  return true;
}

/// An element of F_n: [w1 . w~1] x [w2] with |w1 w~1| = g(n), |w2| = n.
struct Ball {
  Word column;
  Word row;
  std::uint64_t depth = 0;

  Ball(const CellSystem& sys, Word column_word, Word row_word)
      : column(std::move(column_word)), row(std::move(row_word)), depth(row.size()) {
    if (column.size() != sys.depth(depth))
      throw InvalidArgument("ball: column word length must equal g(n)");
  }

  /// Radius r2^-n in the product metric.
  double diameter(const CellSystem& sys) const {
    return std::pow(static_cast<double>(sys.r2()), -static_cast<double>(depth));
  }
  std::span<const Letter> leading_column() const {
    return std::span<const Letter>(column).first(depth);
  }
  std::span<const Letter> trailing_column() const {
    return std::span<const Letter>(column).subspan(depth);
  }
};

/// The ball B_n(z) of a (long enough) word.
inline Ball ball_of(const CellSystem& sys, const ProductWord& z, std::uint64_t n) {
  const std::uint64_t g = sys.depth(n);
  if (z.size() < g) throw InvalidArgument("ball_of: word shorter than g(n)");
  return Ball(sys, Word(z.w1.begin(), z.w1.begin() + static_cast<std::ptrdiff_t>(g)),
              Word(z.w2.begin(), z.w2.begin() + static_cast<std::ptrdiff_t>(n)));
}

// Mixed-radix odometer over digit strings of length n, most significant first.
class DigitOdometer {
 public:
  DigitOdometer(std::uint64_t radix, std::size_t length, std::uint64_t index)
      : radix_(radix), digits_(length, 0) {
    for (std::size_t i = length; i-- > 0;) {
      digits_[i] = static_cast<std::uint32_t>(index % radix);
      index /= radix;
    }
  }
  const std::vector<std::uint32_t>& digits() const { return digits_; }
  void next() {
    for (std::size_t i = digits_.size(); i-- > 0;) {
      if (++digits_[i] < radix_) return;
      digits_[i] = 0;
    }
  }

 private:
  std::uint64_t radix_;
  std::vector<std::uint32_t> digits_;
};

using IndexRange = std::pair<std::uint64_t, std::uint64_t>;

// Splits [0, count) into `parts` contiguous ranges of near-equal size.
inline std::vector<IndexRange> partition_range(std::uint64_t count, std::uint64_t parts) {
  parts = std::max<std::uint64_t>(1, std::min(parts, std::max<std::uint64_t>(count, 1)));
  std::vector<IndexRange> out;
  const std::uint64_t base = count / parts, extra = count % parts;
  std::uint64_t begin = 0;
  for (std::uint64_t p = 0; p < parts; ++p) {
    const std::uint64_t len = base + (p < extra ? 1 : 0);
    out.emplace_back(begin, begin + len);
    begin += len;
  }
  return out;
}

/// All admissible product words of length n, lexicographic in the
/// interleaved letter pairs. Index ranges may be consumed independently.
class AdmissibleWords {
 public:
  AdmissibleWords(const CellSystem& sys, std::size_t n,
                  std::uint64_t cap = kDefaultEnumerationCap)
      : sys_(&sys), n_(n) {
    count_ = saturating_pow(sys.size(), n);
    if (count_ > cap)
      throw CapExceeded("enumeration of " + std::to_string(sys.size()) + "^" +
                        std::to_string(n) +
                        " product words exceeds the cap; use a transfer route");
  }

  std::uint64_t size() const { return count_; }
  std::size_t length() const { return n_; }

  ProductWord operator[](std::uint64_t index) const {
    DigitOdometer odo(sys_->size(), n_, index);
    return decode(odo.digits());
  }

  // f(const ProductWord&, const std::vector<uint32_t>& cell_indices)
  template <class F>
  void for_each(std::uint64_t begin, std::uint64_t end, F&& f) const {
    if (begin >= end) return;
    DigitOdometer odo(sys_->size(), n_, begin);
    ProductWord w;
    w.w1.resize(n_);
    w.w2.resize(n_);
    for (std::uint64_t i = begin; i < end; ++i) {
      const auto& d = odo.digits();
      for (std::size_t j = 0; j < n_; ++j) {
        const Cell c = sys_->cell(d[j]);
        w.w1[j] = c.a1;
        w.w2[j] = c.a2;
      }
      f(w, d);
      odo.next();
    }
  }
  template <class F>
  void for_each(F&& f) const {
    for_each(0, count_, std::forward<F>(f));
  }

  std::vector<IndexRange> partition(std::uint64_t parts) const {
    return partition_range(count_, parts);
  }

 private:
  ProductWord decode(const std::vector<std::uint32_t>& d) const {
    ProductWord w;
    for (auto idx : d) w.push_back(sys_->cell(idx));
    return w;
  }

  const CellSystem* sys_;
  std::size_t n_;
  std::uint64_t count_ = 0;
};

/// All r1^n words over {0..r1-1} (letters outside the row alphabet included).
class RowWords {
 public:
  RowWords(int r1, std::size_t n, std::uint64_t cap = kDefaultEnumerationCap)
      : r1_(static_cast<std::uint64_t>(r1)), n_(n) {
    count_ = saturating_pow(r1_, n);
    if (count_ > cap)
      throw CapExceeded("enumeration of " + std::to_string(r1) + "^" +
                        std::to_string(n) + " row words exceeds the cap");
  }
  RowWords(const CellSystem& sys, std::size_t n,
           std::uint64_t cap = kDefaultEnumerationCap)
      : RowWords(sys.r1(), n, cap) {}

  std::uint64_t size() const { return count_; }
  std::size_t length() const { return n_; }

  Word operator[](std::uint64_t index) const {
    DigitOdometer odo(r1_, n_, index);
    Word w(n_);
    for (std::size_t j = 0; j < n_; ++j) w[j] = static_cast<Letter>(odo.digits()[j]);
    return w;
  }

  // f(const Word&)
  template <class F>
  void for_each(std::uint64_t begin, std::uint64_t end, F&& f) const {
    if (begin >= end) return;
    DigitOdometer odo(r1_, n_, begin);
    Word w(n_);
    for (std::uint64_t i = begin; i < end; ++i) {
      for (std::size_t j = 0; j < n_; ++j) w[j] = static_cast<Letter>(odo.digits()[j]);
      f(static_cast<const Word&>(w));
      odo.next();
    }
  }
  template <class F>
  void for_each(F&& f) const {
    for_each(0, count_, std::forward<F>(f));
  }

  std::vector<IndexRange> partition(std::uint64_t parts) const {
    return partition_range(count_, parts);
  }

 private:
  std::uint64_t r1_;
  std::size_t n_;
  std::uint64_t count_ = 0;
};

inline AdmissibleWords enumerate_admissible(const CellSystem& sys, std::size_t n,
                                            std::uint64_t cap = kDefaultEnumerationCap) {
  return AdmissibleWords(sys, n, cap);
}

inline RowWords enumerate_row_words(const CellSystem& sys, std::size_t n,
                                    std::uint64_t cap = kDefaultEnumerationCap) {
  return RowWords(sys, n, cap);
}

/// Base-r reading of a word, most significant letter first.
inline std::uint64_t word_index(std::span<const Letter> w, std::uint64_t radix) {
  std::uint64_t idx = 0;
  for (Letter a : w) idx = idx * radix + a;
  return idx;
}

}  // namespace carpetmf
