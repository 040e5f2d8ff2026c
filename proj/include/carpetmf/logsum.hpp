#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>

namespace carpetmf {

inline constexpr double neg_inf = -std::numeric_limits<double>::infinity();

// Streaming log(sum_i exp(x_i)) with a running maximum.
// Terms equal to -inf are zero weights and are dropped.
class LogSumExp {
 public:
  void add(double x) {
    if (x == neg_inf) return;
    if (x <= max_) {
      sum_ += std::exp(x - max_);
    } else {
      sum_ = sum_ * std::exp(max_ - x) + 1.0;
      max_ = x;
    }
  }

  void merge(const LogSumExp& other) {
    if (other.max_ == neg_inf) return;
    if (max_ == neg_inf) {
      *this = other;
      return;
    }
    if (other.max_ <= max_) {
      sum_ += other.sum_ * std::exp(other.max_ - max_);
    } else {
      sum_ = sum_ * std::exp(max_ - other.max_) + other.sum_;
      max_ = other.max_;
    }
  }

  bool empty() const { return max_ == neg_inf; }
  double value() const { return empty() ? neg_inf : max_ + std::log(sum_); }

 private:
  double max_ = neg_inf;
  double sum_ = 0.0;
};

inline double log_sum_exp(std::span<const double> xs) {
  LogSumExp acc;
  for (double x : xs) acc.add(x);
  return acc.value();
}

inline double log_add(double a, double b) {
  LogSumExp acc;
  acc.add(a);
  acc.add(b);
  return acc.value();
}

// log(x^q) under the convention 0^q = 0 for every real q.
inline double log_pow(double log_x, double q) {
  return log_x == neg_inf ? neg_inf : q * log_x;
}

// Pairwise (cascade) summation; the split points depend only on the length.
inline double pairwise_sum(std::span<const double> xs) {
  if (xs.size() <= 8) {
    double s = 0.0;
    for (double x : xs) s += x;
    return s;
  }
  const std::size_t half = xs.size() / 2;
  return pairwise_sum(xs.first(half)) + pairwise_sum(xs.subspan(half));
}

}  // namespace carpetmf
