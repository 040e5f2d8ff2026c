// Library walk-through on the reference carpet: closed forms, finite-depth
// pressures, the Gibbs spectrum, and a small Monte Carlo estimate.

#include <iostream>

#include "carpetmf/carpetmf.hpp"

using namespace carpetmf;

int main() {
  const CellSystem sys(2, 4, {{0, 0}, {0, 1}, {1, 0}, {1, 1}, {1, 2}});
  const auto psi = make_cell_masses(sys, {0.2, 0.3, 0.1, 0.15, 0.25});

  std::cout << "g(10) = " << sys.depth(10) << ", s = " << format_double(sys.s()) << "\n";
  for (double q : {0.0, 1.0, 2.0})
    std::cout << "q = " << q << ": T = " << format_double(closed_form_T(*psi, q))
              << ", T_8 = " << format_double(finite_T(*psi, q, 8))
              << ", beta = " << format_double(closed_form_beta(*psi, q)) << "\n";

  const auto grid = default_q_grid();
  std::vector<double> beta;
  for (double q : grid) beta.push_back(closed_form_beta(*psi, q));
  const auto spectrum = legendre(exact_curve(PressureKind::beta, grid, beta));
  const auto top = spectrum.maximum();
  std::cout << "Gibbs spectrum peak: alpha = " << format_double(top.alpha)
            << ", dim = " << format_double(top.dimension) << "\n";

  // Typical local dimension of mu: beta'(1).
  const auto aux = make_auxiliary(psi, 1.0, 0.0, AuxVariant::psi_q);
  const auto est = local_dimension_mc(psi, aux, AuxVariant::psi_q, 2000, 16, 1, 2);
  std::cout << "local dimension at depth 16: " << format_double(est.mean) << " +- "
            << format_double(est.stderr_) << "\n";
}
