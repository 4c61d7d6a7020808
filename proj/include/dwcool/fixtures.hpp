#pragma once

// Reference parameter sets of the graphene double-well cooling scenario.

#include <array>
#include <utility>
#include <vector>

#include "constants.hpp"
#include "membrane.hpp"
#include "spectrum.hpp"
#include "steadystate.hpp"

namespace dwcool::fixtures {

inline constexpr double mass = 5.7e-19;                       // kg
inline constexpr double omega = constants::two_pi * 26e6;     // rad/s
inline constexpr double temperature = 15e-3;                  // K
inline constexpr double quality = 1e6;
inline constexpr double G0 = constants::two_pi * 10.0;        // rad/s
inline constexpr double kappa_over_delta10 = 0.3;
inline constexpr std::array<double, 3> nbar_c{1200.0, 1100.0, 4000.0};

/// alpha_2 = -1.000134 m omega^2 / 2, beta = 5.7e15 J/m^4.
inline DoubleWellParams main_double_well() {
  return {mass, 1.34e-4 * mass * omega * omega, 5.7e15, omega};
}

/// Parameter set used for the target cooling ratios r21, r32, r30.
inline DoubleWellParams ratio_double_well() { return {mass, 1.4e-6, 3.7e15, omega}; }

inline MembraneSpec graphene_sheet(bool tensioned = true) {
  MembraneSpec s;
  s.radius = 1e-6;
  s.thickness = 0.34e-9;
  s.young = 0.9e12;
  s.poisson = 0.24;
  s.mass_density = 7.63e-7;
  s.tension = tensioned ? 1e-5 * s.young * s.thickness : 0.0;
  return s;
}

inline TipElectrodeSpec tip_electrode(double bV1 = 4e-4) { return {bV1, 1e-6, 100e-9}; }

/// Cavity detunings -delta10, -delta30, -delta21 with kappa = 0.3 delta10.
inline std::vector<CavityModeSpec> three_mode_cavities(const MechanicalSpectrum& spec, int fock,
                                                       std::array<double, 3> nbar = nbar_c) {
  const double kappa = kappa_over_delta10 * spec.delta(1, 0);
  const std::array<std::pair<int, int>, 3> targets{{{1, 0}, {3, 0}, {2, 1}}};
  std::vector<CavityModeSpec> out;
  for (std::size_t j = 0; j < 3; ++j) {
    CavityModeSpec c;
    c.detuning = -spec.delta(targets[j].first, targets[j].second);
    c.kappa = kappa;
    c.G0 = G0;
    c.nbar_c = nbar[j];
    c.fock_truncation = fock;
    out.push_back(c);
  }
  return out;
}

inline SystemSpec three_mode_system(const DoubleWellParams& params, int fock, int n_levels = 12,
                                    std::array<double, 3> nbar = nbar_c) {
  SystemSpec sys;
  BasisSpec basis;
  basis.n_levels = n_levels;
  sys.spectrum = diagonalize_double_well(params, basis);
  sys.params = params;
  sys.bath = {temperature, quality};
  sys.cavities = three_mode_cavities(sys.spectrum, fock, nbar);
  return sys;
}

}  // namespace dwcool::fixtures
