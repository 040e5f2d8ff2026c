#pragma once

// Brute-force oracles for the test suites. Everything here works in plain
// arithmetic over explicit loops and shares no code path with the library
// beyond the CellSystem bookkeeping.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <vector>

#include "carpetmf/symbolic.hpp"

namespace oracle {

using carpetmf::Cell;
using carpetmf::CellSystem;
using carpetmf::Letter;

inline CellSystem reference_system() {
  return CellSystem(2, 4, {{0, 0}, {0, 1}, {1, 0}, {1, 1}, {1, 2}});
}

inline std::vector<double> reference_masses() { return {0.2, 0.3, 0.1, 0.15, 0.25}; }

// All words of length n over {0..radix-1}, as digit vectors.
inline std::vector<std::vector<int>> all_words(int radix, int n) {
  std::vector<std::vector<int>> out;
  std::vector<int> w(static_cast<std::size_t>(n), 0);
  const auto total = static_cast<std::uint64_t>(std::pow(radix, n) + 0.5);
  for (std::uint64_t i = 0; i < total; ++i) {
    std::uint64_t x = i;
    for (int j = n - 1; j >= 0; --j) {
      w[static_cast<std::size_t>(j)] = static_cast<int>(x % static_cast<std::uint64_t>(radix));
      x /= static_cast<std::uint64_t>(radix);
    }
    out.push_back(w);
  }
  return out;
}

// psi as a plain function of (w1, w2); 0 means zero weight.
using PlainWeight = std::function<double(const std::vector<int>&, const std::vector<int>&)>;

// Depth-k window potential evaluated by a direct loop, exp taken at the end.
inline PlainWeight window_weight(const CellSystem& sys, int k, const std::vector<double>& table) {
  return [&sys, k, table](const std::vector<int>& w1, const std::vector<int>& w2) {
    const std::size_t n = w1.size();
    std::vector<int> idx(n);
    for (std::size_t i = 0; i < n; ++i) {
      idx[i] = sys.cell_index(w1[i], w2[i]);
      if (idx[i] < 0) return 0.0;
    }
    if (n < static_cast<std::size_t>(k)) return 1.0;  // zero truncated tables
    double sum = 0.0;
    for (std::size_t i = 0; i + static_cast<std::size_t>(k) <= n; ++i) {
      std::size_t code = 0;
      for (int j = 0; j < k; ++j) code = code * sys.size() + static_cast<std::size_t>(idx[i + static_cast<std::size_t>(j)]);
      sum += table[code];
    }
    return std::exp(sum);
  };
}

inline double row_sum(const CellSystem& sys, const PlainWeight& psi, const std::vector<int>& w1,
                      double q) {
  double total = 0.0;
  for (const auto& w2 : all_words(sys.r2(), static_cast<int>(w1.size()))) {
    const double v = psi(w1, w2);
    if (v > 0.0) total += std::pow(v, q);
  }
  return total;
}

inline double finite_T(const CellSystem& sys, const PlainWeight& psi, double q, int n) {
  double total = 0.0;
  for (const auto& w1 : all_words(sys.r1(), n)) {
    const double r = row_sum(sys, psi, w1, q);
    if (r > 0.0) total += std::pow(r, sys.s());
  }
  return -std::log(total) / (n * std::log(static_cast<double>(sys.r1())));
}

inline double finite_beta(const CellSystem& sys, const PlainWeight& psi, double q, int n) {
  double total = 0.0;
  for (const auto& w1 : all_words(sys.r1(), n)) {
    const double r1 = row_sum(sys, psi, w1, 1.0);
    const double rq = row_sum(sys, psi, w1, q);
    if (r1 > 0.0 && rq > 0.0) total += std::pow(r1, q * (1 - sys.s())) * std::pow(rq, sys.s());
  }
  return -std::log(total) / (n * std::log(static_cast<double>(sys.r1())));
}

inline double total_mass(const CellSystem& sys, const PlainWeight& psi, int n) {
  double total = 0.0;
  for (const auto& w1 : all_words(sys.r1(), n)) total += row_sum(sys, psi, w1, 1.0);
  return total;
}

inline std::vector<double> random_table(std::size_t size, std::uint64_t seed, double lo = -1.5,
                                        double hi = 0.5) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> t(size);
  for (auto& v : t) v = u(rng);
  return t;
}

// Central difference derivative of a scalar function.
inline double derivative(const std::function<double(double)>& f, double x, double h = 1e-5) {
  return (f(x + h) - f(x - h)) / (2 * h);
}

}  // namespace oracle
