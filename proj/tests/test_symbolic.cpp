#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "carpetmf/pressure.hpp"
#include "carpetmf/symbolic.hpp"
#include "oracles.hpp"

using namespace carpetmf;

TEST(DepthMap, SpecExamples) {
  const CellSystem a(2, 4, {{0, 0}, {1, 1}});
  EXPECT_EQ(depth_map(a, 3), 6u);
  const CellSystem b(2, 3, {{0, 0}, {1, 1}});
  EXPECT_EQ(depth_map(b, 1), 2u);
  EXPECT_EQ(depth_map(b, 2), 4u);
  EXPECT_EQ(depth_map(b, 0), 0u);
}

TEST(DepthMap, ExactTiesAndBruteForce) {
  // Compare against the definition with exact integer powers where they fit.
  for (auto [r1, r2] : {std::pair{2, 4}, {2, 3}, {3, 9}, {3, 5}, {4, 8}, {5, 7}}) {
    const CellSystem sys(r1, r2, {{0, 0}, {1, 1}});
    for (std::uint64_t n = 0; n <= 12; ++n) {
      long double target = std::pow(static_cast<long double>(r2), n);
      std::uint64_t m = 0;
      while (std::pow(static_cast<long double>(r1), m) < target) ++m;
      EXPECT_EQ(sys.depth(n), m) << r1 << "," << r2 << " n=" << n;
    }
  }
}

TEST(DepthMap, IncrementsAndRate) {
  for (auto [r1, r2] : {std::pair{2, 3}, {2, 4}, {3, 7}, {2, 2}, {5, 11}}) {
    const CellSystem sys(r1, r2, {{0, 0}, {1, 1}});
    const double ratio = sys.log_r2() / sys.log_r1();
    const auto lo = static_cast<std::uint64_t>(std::floor(ratio + 1e-12));
    const auto hi = static_cast<std::uint64_t>(std::ceil(ratio - 1e-12));
    std::uint64_t prev = sys.depth(1);
    for (std::uint64_t n = 1; n <= 200; ++n) {
      const std::uint64_t g = sys.depth(n);
      EXPECT_GE(g, n);
      if (n > 1) {
        const std::uint64_t step = g - prev;
        EXPECT_TRUE(step == lo || step == hi) << "n=" << n;
      }
      prev = g;
      // |n/g(n) - s| <= s^2 / n since g(n) < n/s + 1.
      const double gap = std::abs(static_cast<double>(n) / static_cast<double>(g) - sys.s());
      EXPECT_LE(static_cast<double>(n) * gap, sys.s() * sys.s() + 1e-12);
    }
  }
}

TEST(CellSystem, Invariants) {
  const auto sys = oracle::reference_system();
  EXPECT_DOUBLE_EQ(sys.s(), 0.5);
  EXPECT_EQ(sys.size(), 5u);
  ASSERT_EQ(sys.row_alphabet().size(), 2u);
  EXPECT_EQ(sys.row_fiber(0).size(), 2u);
  EXPECT_EQ(sys.row_fiber(1).size(), 3u);
  const CellSystem gap(3, 4, {{0, 1}, {2, 3}});
  EXPECT_TRUE(gap.row_fiber(1).empty());
  EXPECT_EQ(gap.row_alphabet().size(), 2u);
  EXPECT_FALSE(sys.degenerate());
  EXPECT_TRUE(CellSystem(2, 2, {{0, 0}}).degenerate());
  EXPECT_THROW(CellSystem(1, 2, {{0, 0}}), InvalidArgument);
  EXPECT_THROW(CellSystem(3, 2, {{0, 0}}), InvalidArgument);
  EXPECT_THROW(CellSystem(2, 2, {{2, 0}}), InvalidArgument);
  EXPECT_THROW(CellSystem(2, 2, {}), InvalidArgument);
}

TEST(Enumeration, Counts) {
  EXPECT_EQ(enumerate_admissible(CellSystem(2, 2, {{0, 0}, {1, 1}}), 2).size(), 4u);
  EXPECT_EQ(enumerate_admissible(CellSystem(2, 3, {{0, 0}, {0, 1}, {1, 0}, {1, 1}, {1, 2}}), 3).size(),
            125u);
  const CellSystem single(2, 2, {{0, 0}});
  auto one = enumerate_admissible(single, 5);
  ASSERT_EQ(one.size(), 1u);
  EXPECT_EQ(one[0], ProductWord(Word(5, 0), Word(5, 0)));
}

TEST(Enumeration, LexicographicUniqueAndAdmissible) {
  const auto sys = oracle::reference_system();
  auto words = enumerate_admissible(sys, 3);
  std::vector<std::vector<std::pair<int, int>>> seen;
  words.for_each([&](const ProductWord& w, const auto&) {
    EXPECT_TRUE(admissible(sys, w));
    std::vector<std::pair<int, int>> inter;
    for (std::size_t i = 0; i < w.size(); ++i) inter.emplace_back(w.w1[i], w.w2[i]);
    seen.push_back(inter);
  });
  ASSERT_EQ(seen.size(), 125u);
  for (std::size_t i = 1; i < seen.size(); ++i) EXPECT_LT(seen[i - 1], seen[i]);
  // Random access agrees with streaming.
  for (std::uint64_t i : {0ull, 17ull, 124ull}) {
    const auto w = words[i];
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_EQ(w.w1[j], seen[i][j].first);
      EXPECT_EQ(w.w2[j], seen[i][j].second);
    }
  }
}

TEST(Enumeration, PartitionCoversOnce) {
  const auto sys = oracle::reference_system();
  auto words = enumerate_admissible(sys, 4);
  std::set<std::uint64_t> hit;
  std::uint64_t visits = 0;
  for (auto [b, e] : words.partition(7)) {
    std::uint64_t i = b;
    words.for_each(b, e, [&](const ProductWord& w, const auto&) {
      EXPECT_EQ(w, words[i]);
      hit.insert(i++);
      ++visits;
    });
  }
  EXPECT_EQ(visits, words.size());
  EXPECT_EQ(hit.size(), words.size());
}

TEST(Enumeration, RowWords) {
  auto two = RowWords(2, 2);
  ASSERT_EQ(two.size(), 4u);
  EXPECT_EQ(two[0], (Word{0, 0}));
  EXPECT_EQ(two[1], (Word{0, 1}));
  EXPECT_EQ(two[2], (Word{1, 0}));
  EXPECT_EQ(two[3], (Word{1, 1}));
  EXPECT_EQ(RowWords(3, 1).size(), 3u);
  EXPECT_EQ(RowWords(2, 10).size(), 1024u);
  std::uint64_t count = 0;
  RowWords(2, 10).for_each([&](const Word&) { ++count; });
  EXPECT_EQ(count, 1024u);
}

TEST(Enumeration, CapExceeded) {
  const auto sys = oracle::reference_system();
  EXPECT_THROW(enumerate_admissible(sys, 20), CapExceeded);
  EXPECT_THROW(RowWords(2, 30), CapExceeded);
  EXPECT_NO_THROW(RowWords(2, 30, std::uint64_t{1} << 31));
  EXPECT_THROW(enumerate_admissible(sys, 4, 100), CapExceeded);
}

TEST(Enumeration, CountMatchesTransferAtZero) {
  const auto sys = oracle::reference_system();
  const auto zero = make_constant_cell(sys, 1, std::vector<double>(sys.size(), 0.0));
  for (std::size_t n = 1; n <= 7; ++n) {
    const double log_count = log_total_mass(*zero, n, 0.0);
    EXPECT_NEAR(std::exp(log_count), static_cast<double>(enumerate_admissible(sys, n).size()),
                1e-6);
  }
}

TEST(Ball, Bookkeeping) {
  const auto sys = oracle::reference_system();
  const Ball b(sys, Word{0, 1, 1, 0}, Word{1, 2});
  EXPECT_EQ(b.depth, 2u);
  EXPECT_DOUBLE_EQ(b.diameter(sys), 1.0 / 16);
  EXPECT_EQ(b.leading_column().size(), 2u);
  EXPECT_EQ(b.trailing_column().size(), 2u);
  EXPECT_THROW(Ball(sys, Word{0, 1, 1}, Word{1, 2}), InvalidArgument);
  const ProductWord z(Word{0, 1, 1, 0, 1}, Word{1, 2, 0, 0, 1});
  const Ball bz = ball_of(sys, z, 2);
  EXPECT_EQ(bz.column, (Word{0, 1, 1, 0}));
  EXPECT_EQ(bz.row, (Word{1, 2}));
}

TEST(ProductWord, ShiftAndConcat) {
  const ProductWord u(Word{0, 1}, Word{1, 2});
  const ProductWord v(Word{1}, Word{0});
  const auto uv = u + v;
  EXPECT_EQ(uv.size(), 3u);
  EXPECT_EQ(uv.shifted(2), v);
  EXPECT_EQ(uv.prefix(2), u);
  EXPECT_THROW(ProductWord(Word{0}, Word{}), InvalidArgument);
}
