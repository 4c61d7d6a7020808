#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dwcool/cooling.hpp"
#include "dwcool/fixtures.hpp"
#include "dwcool/spectrum.hpp"

using namespace dwcool;

namespace {

constexpr double kMass = fixtures::mass;

// Oracle: with beta = 0 and nu < 0 the potential is |nu|/2 x^2, a harmonic
// oscillator of frequency sqrt(|nu|/m).
TEST(SpectrumOracle, HarmonicLimitIsExact) {
  const double omega = constants::two_pi * 1e6;
  const DoubleWellParams p{kMass, -kMass * omega * omega, 0.0, 0.0};
  BasisSpec b;
  b.n_levels = 10;
  const MechanicalSpectrum s = diagonalize_double_well(p, b);
  const double x_zpm = std::sqrt(constants::hbar / (2.0 * kMass * omega));
  for (int n = 0; n < 10; ++n) {
    EXPECT_NEAR(s.energies[n] / (constants::hbar * omega), n + 0.5, 1e-10) << "level " << n;
    EXPECT_EQ(s.parities[n], n % 2 == 0 ? 1 : -1);
  }
  for (int n = 0; n + 1 < 10; ++n)
    EXPECT_NEAR(std::abs(s.x_elements(n + 1, n).real()) / x_zpm, std::sqrt(n + 1.0), 1e-10);
}

// Oracle: ground level of -d^2/dxi^2 + xi^4 is 1.0603620904 (pure quartic).
TEST(SpectrumOracle, PureQuarticGroundLevel) {
  const double beta = 5.7e15;
  const DoubleWellParams p{kMass, 0.0, beta, 0.0};
  const double length = std::pow(2.0 * constants::hbar * constants::hbar / (kMass * beta), 1.0 / 6.0);
  const double eps = constants::hbar * constants::hbar / (2.0 * kMass * length * length);
  const MechanicalSpectrum s = diagonalize_double_well(p);
  EXPECT_NEAR(s.energies[0] / eps, 1.0603620904, 1e-8);
}

TEST(SpectrumOracle, FiniteDifferenceAgreesOnFixture) {
  const DoubleWellParams p = fixtures::main_double_well();
  BasisSpec b;
  b.n_levels = 8;
  const MechanicalSpectrum s = diagonalize_double_well(p, b);
  const std::vector<double> fd = finite_difference_levels(p, 8);
  const double scale = constants::hbar * s.omega_unit;
  for (int n = 0; n < 8; ++n)
    EXPECT_LT(std::abs(s.energies[n] - fd[n]) / std::max(std::abs(fd[n]), scale), 1e-4) << "level " << n;
}

TEST(SpectrumOracle, FiniteDifferenceAgreesOnRandomWells) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> log_nu(std::log(3e-7), std::log(5e-6));
  std::uniform_real_distribution<double> log_beta(std::log(1e15), std::log(1e16));
  for (int trial = 0; trial < 3; ++trial) {
    const DoubleWellParams p{kMass, std::exp(log_nu(rng)), std::exp(log_beta(rng)), fixtures::omega};
    BasisSpec b;
    b.n_levels = 8;
    b.basis_size = 160;
    const MechanicalSpectrum s = diagonalize_double_well(p, b);
    const std::vector<double> fd = finite_difference_levels(p, 8);
    const double scale = constants::hbar * s.omega_unit;
    for (int n = 0; n < 8; ++n)
      EXPECT_LT(std::abs(s.energies[n] - fd[n]) / std::max(std::abs(fd[n]), scale), 1e-4)
          << "trial " << trial << " level " << n;
  }
}

TEST(Spectrum, ParitySelectionRule) {
  const MechanicalSpectrum s = diagonalize_double_well(fixtures::main_double_well());
  for (int m = 0; m < s.n_levels(); ++m) {
    EXPECT_EQ(s.parities[m], m % 2 == 0 ? 1 : -1);
    for (int n = 0; n < s.n_levels(); ++n) {
      if (s.parities[m] == s.parities[n]) {
        EXPECT_EQ(s.x_elements(m, n), cplx(0.0));
      }
      EXPECT_DOUBLE_EQ(s.x_elements(m, n).real(), s.x_elements(n, m).real());
    }
  }
  EXPECT_GT(std::abs(s.x_elements(1, 0).real()), 0.0);
}

TEST(Spectrum, FixtureGeometry) {
  const DoubleWellParams p = fixtures::main_double_well();
  const MechanicalSpectrum s = diagonalize_double_well(p);
  EXPECT_EQ(levels_below_barrier(s), 2);
  const WellGeometry g = well_geometry(p);
  EXPECT_NEAR(2.0 * g.x0 / g.x_zpm, 6.0, 0.5);
  EXPECT_NEAR(s.delta(1, 0) / (constants::two_pi * 50e3), 1.0, 0.2);
  EXPECT_NEAR(p.nu / (p.mass * p.omega_harmonic * p.omega_harmonic), 1.34e-4, 1e-12);
}

TEST(Spectrum, UnitsAreConsistent) {
  const MechanicalSpectrum s = diagonalize_double_well(fixtures::main_double_well());
  const WellGeometry g = well_geometry(fixtures::main_double_well());
  EXPECT_NEAR(s.omega_unit, g.omega0, 1e-9 * g.omega0);
  EXPECT_NEAR(s.length_unit, g.x_zpm, 1e-12 * g.x_zpm);
  const VectorXd f = s.frequencies();
  EXPECT_DOUBLE_EQ(f(0), 0.0);
  EXPECT_NEAR(f(1), s.delta(1, 0), 1e-9 * f(1));
}

TEST(Spectrum, ReferenceFrequencyDoesNotChangeLevels) {
  const DoubleWellParams p = fixtures::main_double_well();
  BasisSpec a;
  BasisSpec b;
  b.omega_ref = 1.3 * natural_frequency(p);
  b.basis_size = 150;
  const MechanicalSpectrum sa = diagonalize_double_well(p, a);
  const MechanicalSpectrum sb = diagonalize_double_well(p, b);
  for (int n = 0; n < sa.n_levels(); ++n)
    EXPECT_NEAR(sa.energies[n], sb.energies[n], 1e-7 * constants::hbar * sa.omega_unit);
}

TEST(SpectrumErrors, RejectsBadInput) {
  EXPECT_THROW(diagonalize_double_well({-1.0, 1e-6, 1e15, 0.0}), Error);
  BasisSpec tiny;
  tiny.basis_size = 10;
  EXPECT_THROW(diagonalize_double_well(fixtures::main_double_well(), tiny), Error);
  try {
    well_geometry({kMass, -1e-6, 1e15, 0.0});
    FAIL() << "expected NonDoubleWell";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NonDoubleWell);
  }
}

TEST(SpectrumErrors, BasisTooSmallIsDetected) {
  // A deep well whose upper levels need far more than 40 Fock states.
  const DoubleWellParams p{kMass, 2e-5, 1e15, 0.0};
  BasisSpec b;
  b.basis_size = 40;
  b.n_levels = 30;
  try {
    diagonalize_double_well(p, b);
    FAIL() << "expected BasisTooSmall";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::BasisTooSmall);
  }
}

// Oracle: closed form with Delta = -delta, kappa = 0.3 delta gives
// (16 + 0.09) / 0.09 independent of the spectrum.
TEST(CoolingRatio, ClosedFormResonantDrive) {
  const MechanicalSpectrum s = diagonalize_double_well(fixtures::main_double_well());
  const double kappa = 0.3 * s.delta(1, 0);
  EXPECT_NEAR(resonant_cooling_ratio(s, 1, 0, kappa), 16.09 / 0.09, 1e-9);
  EXPECT_NEAR(resonant_cooling_ratio(s, 1, 0, kappa), 178.8, 0.5);
}

TEST(CoolingRatio, RatioSetCoolingRatios) {
  const MechanicalSpectrum s = diagonalize_double_well(fixtures::ratio_double_well());
  const double kappa = 0.3 * s.delta(1, 0);
  EXPECT_NEAR(resonant_cooling_ratio(s, 2, 1, kappa) / 3092.0, 1.0, 0.02);
  EXPECT_NEAR(resonant_cooling_ratio(s, 3, 2, kappa) / 3012.0, 1.0, 0.02);
  EXPECT_NEAR(resonant_cooling_ratio(s, 3, 0, kappa) / 15329.0, 1.0, 0.02);
}

}  // namespace
