#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "carpetmf/carpet.hpp"
#include "carpetmf/spectra.hpp"
#include "oracles.hpp"

using namespace carpetmf;

namespace {

WeightPtr reference_weight() {
  return make_cell_masses(oracle::reference_system(), oracle::reference_masses());
}

CellSystem full_grid(int r1, int r2) {
  std::vector<Cell> cells;
  for (int a = 0; a < r1; ++a)
    for (int b = 0; b < r2; ++b) cells.push_back({static_cast<Letter>(a), static_cast<Letter>(b)});
  return CellSystem(r1, r2, cells);
}

WeightPtr uniform_weight(const CellSystem& sys) {
  return make_cell_masses(sys, std::vector<double>(sys.size(), 1.0 / static_cast<double>(sys.size())));
}

}  // namespace

TEST(Projection, Examples) {
  const auto sys = oracle::reference_system();
  EXPECT_EQ(project_point(sys, ProductWord(Word(6, 0), Word(6, 0)), 6), std::make_pair(0.0, 0.0));
  const CellSystem four(2, 4, {{1, 3}, {1, 2}});
  const auto single = project_point(four, ProductWord(Word{1}, Word{3}), 1);
  EXPECT_EQ(single.first, 0.5);
  EXPECT_EQ(single.second, 0.75);
  const std::size_t p = 40;
  const auto far = project_point(four, ProductWord(Word(p, 1), Word(p, 2)), p);
  EXPECT_LE(1.0 - far.first, std::pow(2.0, -static_cast<double>(p)) + 1e-16);
  EXPECT_LT(far.first, 1.0);
  EXPECT_NEAR(far.second, 2.0 / 3.0, std::pow(4.0, -static_cast<double>(p)) + 1e-16);
  EXPECT_THROW(project_point(four, ProductWord(Word{1}, Word{3}), 2), InvalidArgument);
}

TEST(Projection, ExactDigitsSurviveTheToralMap) {
  const auto sys = oracle::reference_system();
  const auto psi = reference_weight();
  const auto path = sample_path(psi, 40, 0, 3);
  auto z = project_exact(sys, path.cells, 40);
  for (std::size_t k = 0; k < 40; ++k) {
    EXPECT_EQ(z.cell(), path.cells.cell(k));
    z = z.mapped();
  }
  EXPECT_THROW(z.cell(), InvalidArgument);
}

TEST(Projection, BirkhoffSumOnTorusEqualsSymbolic) {
  const auto sys = oracle::reference_system();
  const auto psi = reference_weight();
  const auto form = psi->birkhoff_form().value();
  for (std::uint64_t i = 0; i < 20; ++i) {
    const auto path = sample_path(psi, 30, 0, 8, i);
    const auto z = project_exact(sys, path.cells, 30);
    EXPECT_NEAR(projected_birkhoff_sum(sys, form, z, 30), psi->log_weight(path.cells), 1e-12);
  }
  // Depth-2 windows read one digit past n.
  const auto raw = make_constant_cell(sys, 2, oracle::random_table(25, 4));
  const auto f2 = raw->birkhoff_form().value();
  const auto path = sample_path(raw, 11, 0, 2);
  const auto z = project_exact(sys, path.cells, 11);
  EXPECT_NEAR(projected_birkhoff_sum(sys, f2, z, 10), raw->log_weight(path.cells), 1e-12);
  EXPECT_THROW(projected_birkhoff_sum(sys, f2, z, 11), InvalidArgument);
}

TEST(Render, ProbabilityCellsMatchBallMassAndSumToOne) {
  const auto sys = oracle::reference_system();
  const BallMass mu(reference_weight());
  for (std::size_t n : {1u, 2u, 4u}) {
    const auto r = render_measure(mu, n);
    EXPECT_EQ(r.columns, 1u << (2 * n));
    EXPECT_EQ(r.rows, 1u << (2 * n));
    EXPECT_NEAR(r.log_total(), 0.0, 1e-9);
    const std::size_t g = sys.depth(n);
    RowWords(2, g).for_each([&](const Word& col) {
      RowWords(4, n).for_each([&](const Word& row) {
        EXPECT_EQ(r.at(word_index(col, 2), word_index(row, 4)), mu(col, row));
      });
    });
  }
}

TEST(Render, DepthTwoWeightSumsToOne) {
  const auto raw = make_constant_cell(oracle::reference_system(), 2, oracle::random_table(25, 14));
  const BallMass mu(normalize_to_gibbs(raw, finite_pressure(*raw, 10)));
  const auto r = render_measure(mu, 3);
  // The head total is not exactly 1 at finite depth; the tail marginals are.
  EXPECT_NEAR(r.log_total(), log_total_mass(mu.weight(), 3), 1e-12);
}

TEST(Render, UniformAndSingleCell) {
  const auto grid = full_grid(2, 4);
  const auto r = render_measure(BallMass(uniform_weight(grid)), 2);
  const std::string pgm = render_pgm(r, OutputMeta{});
  const auto body = pgm.substr(pgm.size() - 2 * r.log_mass.size());
  for (std::size_t i = 0; i < body.size(); i += 2) {
    EXPECT_EQ(static_cast<unsigned char>(body[i]), 0xff);
    EXPECT_EQ(static_cast<unsigned char>(body[i + 1]), 0xff);
  }
  EXPECT_EQ(pgm.rfind("P5\n# carpetmf", 0), 0u);
  EXPECT_NE(pgm.find("\n16 16\n65535\n"), std::string::npos);

  const CellSystem single(2, 3, {{1, 2}});
  const auto one = render_measure(BallMass(make_cell_masses(single, {1.0})), 3);
  EXPECT_EQ(one.charged(), 1u);
  // Column word 1^5 and row word 2^3.
  EXPECT_EQ(one.at(31, 26), 0.0);
  const std::string img = render_pgm(one, OutputMeta{});
  int lit = 0;
  for (std::size_t i = img.size() - 2 * one.log_mass.size(); i < img.size(); i += 2)
    lit += img[i] != 0 || img[i + 1] != 0;
  EXPECT_EQ(lit, 1);
}

TEST(Render, GrayLevelsAndCsv) {
  const auto r = render_measure(BallMass(reference_weight()), 1);
  const std::string pgm = render_pgm(r, OutputMeta{});
  const auto body = pgm.substr(pgm.size() - 2 * r.log_mass.size());
  unsigned lo = 65535, hi = 0;
  for (std::size_t i = 0; i < body.size(); i += 2) {
    const unsigned v = (static_cast<unsigned char>(body[i]) << 8) | static_cast<unsigned char>(body[i + 1]);
    if (v == 0) continue;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  EXPECT_EQ(lo, 1u);
  EXPECT_EQ(hi, 65535u);
  std::ostringstream csv;
  write_render_csv(csv, r, OutputMeta{});
  EXPECT_NE(csv.str().find("columnIndex,rowIndex,logMass\n0,0,"), std::string::npos);
  EXPECT_NE(csv.str().find("\n3,3,-inf\n"), std::string::npos);
}

TEST(Render, CapExceeded) {
  SumOptions opt;
  opt.cap = 1000;
  EXPECT_THROW(render_measure(BallMass(reference_weight()), 3, opt), CapExceeded);
}

TEST(Render, WorkersDoNotChangeTheGrid) {
  SumOptions four;
  four.workers = 4;
  const BallMass mu(reference_weight());
  EXPECT_EQ(render_measure(mu, 3).log_mass, render_measure(mu, 3, four).log_mass);
}

TEST(BoxCount, TrivialAndSharedWithLqSpectrum) {
  const auto sys = oracle::reference_system();
  const BallMass mu(reference_weight());
  const auto r = render_measure(mu, 3);
  EXPECT_NEAR(box_count_tau(r, 1.0, sys), 0.0, 1e-12);
  EXPECT_NEAR(box_count_tau(r, 0.0, sys), -std::log(static_cast<double>(r.charged())) / (3 * std::log(4.0)),
              1e-14);
  for (double q : {-2.0, 0.5, 2.0, 5.0})
    EXPECT_NEAR(box_count_tau(r, q, sys), lq_spectrum_empirical(mu, q, 3), 1e-12) << q;
}

TEST(BoxCount, TwoDepthStability) {
  const auto sys = oracle::reference_system();
  const BallMass mu(reference_weight());
  const double t3 = box_count_tau(render_measure(mu, 3), 2.0, sys);
  const double t5 = box_count_tau(render_measure(mu, 5), 2.0, sys);
  EXPECT_LE(std::abs(t3 - t5), 0.05);
}

TEST(Histogram, ProjectedSamplesMatchRender) {
  const auto sys = oracle::reference_system();
  const auto psi = reference_weight();
  const std::size_t n = 3;
  const auto r = render_measure(BallMass(psi), n);
  const PathSampler sampler(psi, sys.depth(n));
  const std::size_t draws = 100000;
  const auto hist = projected_histogram(sampler, n, draws, 21);
  ASSERT_EQ(hist.size(), r.log_mass.size());
  double total = 0.0;
  for (std::size_t i = 0; i < hist.size(); ++i) {
    const double p = std::exp(r.log_mass[i]);
    total += p;
    if (p == 0.0) {
      EXPECT_EQ(hist[i], 0u);
      continue;
    }
    const double sigma = std::sqrt(draws * p * (1 - p));
    EXPECT_LE(std::abs(static_cast<double>(hist[i]) - draws * p), 4 * sigma + 1e-9) << i;
  }
  EXPECT_NEAR(total, 1.0, 1e-9);
}

TEST(Predicates, P1AndP2) {
  const CellSystem gap(3, 3, {{0, 0}, {2, 1}});
  EXPECT_TRUE(check_P1(gap));
  EXPECT_FALSE(check_P2(gap));
  const CellSystem low(3, 4, {{0, 0}, {1, 1}});
  EXPECT_FALSE(check_P1(low));
  EXPECT_TRUE(check_P2(low));
  const auto ref = oracle::reference_system();
  EXPECT_FALSE(check_P1(ref));
  EXPECT_FALSE(check_P2(ref));
}

TEST(Predicates, P3) {
  // Row swap 0 <-> r1 - 1 symmetry: equal row sums, defect 0.
  const CellSystem sym(2, 3, {{0, 0}, {0, 2}, {1, 0}, {1, 2}});
  const auto psi = make_cell_masses(sym, {0.1, 0.4, 0.1, 0.4});
  const auto ok = check_P3(*psi, {0.5, 1.0, 2.0}, {4, 6, 8});
  EXPECT_EQ(ok.verdict, P3Verdict::indicative);
  EXPECT_EQ(ok.defect, 0.0);

  // The reference system has unequal boundary rows at depth 1: a constant defect.
  const auto ref = reference_weight();
  const auto bad = check_P3(*ref, {1.0, 2.0}, {4, 8});
  EXPECT_EQ(bad.verdict, P3Verdict::indeterminate);
  EXPECT_NEAR(bad.defects[0][1], std::abs(std::log(0.5) - std::log(0.5)), 1e-12);
  EXPECT_NEAR(bad.defects[1][1], std::abs(std::log(0.13) - std::log(0.095)), 1e-12);

  const CellSystem missing(3, 3, {{0, 0}, {1, 1}});
  const auto none = check_P3(*make_cell_masses(missing, {0.5, 0.5}), {1.0}, {4});
  EXPECT_EQ(none.verdict, P3Verdict::false_);
  EXPECT_THROW(check_P3(*psi, {0.0}, {4}), InvalidArgument);

  const auto j = predicates_to_json(missing, none, OutputMeta{});
  EXPECT_EQ(j["P1"], false);
  EXPECT_EQ(j["P2"], true);
  EXPECT_EQ(j["P3"], "false");
}

TEST(Predicates, P3BoundedDefectDecays) {
  // Symmetric cells times a factor 2 whenever the column word starts with 0:
  // the boundary rows share their limit and differ by q log 2 / n.
  struct Tilted final : CylinderWeight {
    explicit Tilted(WeightPtr b) : CylinderWeight(b->system()), base(std::move(b)) {}
    std::string kind() const override { return "tilted"; }
    double log_weight(const ProductWord& w) const override {
      const double lw = base->log_weight(w);
      return !w.empty() && w.w1[0] == 0 ? lw + std::log(2.0) : lw;
    }
    WeightPtr base;
  };
  const CellSystem sym(2, 3, {{0, 0}, {0, 2}, {1, 0}, {1, 2}});
  const auto w = std::make_shared<Tilted>(make_cell_masses(sym, {0.1, 0.4, 0.1, 0.4}));
  const auto res = check_P3(*w, {1.0, 2.0}, {4, 6, 8, 10});
  EXPECT_EQ(res.verdict, P3Verdict::indicative);
  EXPECT_NEAR(res.defects[1][3], 2 * std::log(2.0) / 10, 1e-12);
  // A tolerance cannot rescue a defect that does not decay.
  EXPECT_EQ(check_P3(*w, {1.0}, {4}, 1e-6).verdict, P3Verdict::indeterminate);
}
