#pragma once

// Spectral data of the quartic double-well oscillator
//   H = p^2/2m - (nu/2) x^2 + (beta/4) x^4
// obtained by diagonalization in the Fock basis of a reference oscillator.

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "constants.hpp"
#include "error.hpp"
#include "types.hpp"

namespace dwcool {

struct DoubleWellParams {
  double mass = 0.0;            ///< kg
  double nu = 0.0;              ///< J/m^2, coefficient of -nu/2 x^2
  double beta = 0.0;            ///< J/m^4, coefficient of beta/4 x^4
  double omega_harmonic = 0.0;  ///< rad/s, unsoftened membrane frequency

  void validate() const {
    require(mass > 0.0, ErrorKind::InvalidArgument, "mass must be positive");
    require(beta >= 0.0, ErrorKind::InvalidArgument, "beta must be non-negative");
    require(std::isfinite(nu), ErrorKind::InvalidArgument, "nu must be finite");
    require(omega_harmonic >= 0.0, ErrorKind::InvalidArgument, "omega_harmonic must be non-negative");
  }
};

struct WellGeometry {
  double x0 = 0.0;              ///< m
  double omega0 = 0.0;          ///< rad/s
  double x_zpm = 0.0;           ///< m
  double barrier_height = 0.0;  ///< J
};

inline WellGeometry well_geometry(const DoubleWellParams& p) {
  p.validate();
  if (!(p.nu > 0.0)) fail(ErrorKind::NonDoubleWell, "nu must be positive for a double well");
  require(p.beta > 0.0, ErrorKind::InvalidArgument, "beta must be positive");
  WellGeometry g;
  g.x0 = std::sqrt(p.nu / p.beta);
  g.omega0 = std::sqrt(2.0 * p.nu / p.mass);
  g.x_zpm = std::sqrt(constants::hbar / (2.0 * g.omega0 * p.mass));
  g.barrier_height = p.nu * p.nu / (4.0 * p.beta);
  return g;
}

/// Frequency that sets the natural units of the potential: the intra-well
/// frequency for a double well, the curvature frequency for a single well and
/// the quartic scale (hbar beta / m^2)^(1/3) when nu = 0.
inline double natural_frequency(const DoubleWellParams& p) {
  if (p.nu > 0.0) return std::sqrt(2.0 * p.nu / p.mass);
  if (p.nu < 0.0) return std::sqrt(-p.nu / p.mass);
  require(p.beta > 0.0, ErrorKind::InvalidArgument, "nu = 0 and beta = 0 has no bound states");
  return std::cbrt(constants::hbar * p.beta / (p.mass * p.mass));
}

struct BasisSpec {
  int basis_size = 120;
  int n_levels = 12;
  double omega_ref = 0.0;  ///< rad/s; 0 selects natural_frequency(params)
  bool check_convergence = true;

  void validate() const {
    require(basis_size >= 40, ErrorKind::InvalidArgument, "basis_size must be at least 40");
    require(n_levels >= 2, ErrorKind::InvalidArgument, "n_levels must be at least 2");
    require(n_levels < basis_size, ErrorKind::InvalidArgument, "n_levels must be below basis_size");
    require(omega_ref >= 0.0, ErrorKind::InvalidArgument, "omega_ref must be non-negative");
  }
};

struct MechanicalSpectrum {
  std::vector<double> energies;  ///< J, ascending
  MatrixXc x_elements;           ///< <m|x|n> in m
  std::vector<int> parities;     ///< +1 even, -1 odd
  MatrixXd delta;                ///< (E_m - E_n)/hbar in rad/s
  MatrixXd phases;               ///< arg x_mn, 0 or pi
  std::vector<double> x2_diagonal;  ///< <n|x^2|n> in m^2, from the full basis

  double mass = 0.0;         ///< kg
  double omega_unit = 0.0;   ///< rad/s, natural frequency used for internal units
  double length_unit = 0.0;  ///< m, sqrt(hbar / 2 m omega_unit)
  int basis_size = 0;

  int n_levels() const { return static_cast<int>(energies.size()); }

  /// Real position matrix in units of length_unit.
  MatrixXd x_dimensionless() const { return x_elements.real() / length_unit; }

  /// Energies relative to the ground state, divided by hbar (rad/s).
  VectorXd frequencies() const {
    VectorXd f(n_levels());
    for (int n = 0; n < n_levels(); ++n) f(n) = (energies[n] - energies[0]) / constants::hbar;
    return f;
  }
};

namespace detail {

struct DimlessEigen {
  VectorXd values;   // units of hbar * omega_unit
  MatrixXd vectors;  // columns in the reference Fock basis
  MatrixXd x;        // position in units of length_unit, truncated basis
  MatrixXd x2;       // x^2 computed in a padded basis then truncated
};

// Reference oscillator at omega_ref = scale * omega_unit; lengths in units of
// sqrt(hbar / 2 m omega_unit), energies in hbar * omega_unit.
inline DimlessEigen solve_dimensionless(const DoubleWellParams& p, double omega_unit, int size,
                                        double scale) {
  const int padded = size + 4;
  MatrixXd b = MatrixXd::Zero(padded, padded);
  for (int n = 1; n < padded; ++n) b(n - 1, n) = std::sqrt(static_cast<double>(n));
  const MatrixXd bd = b.transpose();
  const MatrixXd x = (b + bd) / std::sqrt(scale);
  const MatrixXd q = bd - b;  // p = i sqrt(hbar m omega_ref / 2) q
  const MatrixXd x2 = x * x;
  const MatrixXd x4 = x2 * x2;
  const MatrixXd kinetic = -(scale / 4.0) * (q * q);

  const double length = std::sqrt(constants::hbar / (2.0 * p.mass * omega_unit));
  const double energy = constants::hbar * omega_unit;
  const double c2 = -p.nu * length * length / (2.0 * energy);
  const double c4 = p.beta * std::pow(length, 4) / (4.0 * energy);

  const MatrixXd h = (kinetic + c2 * x2 + c4 * x4).topLeftCorner(size, size);
  Eigen::SelfAdjointEigenSolver<MatrixXd> solver(h);
  if (solver.info() != Eigen::Success) fail(ErrorKind::ConvergenceFailure, "eigensolver failed");
  return {solver.eigenvalues(), solver.eigenvectors(), x.topLeftCorner(size, size),
          x2.topLeftCorner(size, size)};
}

}  // namespace detail

inline MechanicalSpectrum diagonalize_double_well(const DoubleWellParams& params,
                                                  const BasisSpec& basis = {}) {
  params.validate();
  basis.validate();
  require(params.beta > 0.0 || params.nu < 0.0, ErrorKind::InvalidArgument,
          "beta must be positive unless the potential is harmonic");

  const double omega_unit = natural_frequency(params);
  const double omega_ref = basis.omega_ref > 0.0 ? basis.omega_ref : omega_unit;
  const double scale = omega_ref / omega_unit;
  const int n_levels = basis.n_levels;

  const detail::DimlessEigen eig =
      detail::solve_dimensionless(params, omega_unit, basis.basis_size, scale);

  if (basis.check_convergence) {
    const int larger = static_cast<int>(std::ceil(1.25 * basis.basis_size));
    const detail::DimlessEigen check = detail::solve_dimensionless(params, omega_unit, larger, scale);
    for (int n = 0; n < n_levels; ++n) {
      const double e = eig.values(n);
      const double shift = std::abs(check.values(n) - e);
      if (shift > 1e-6 * std::max(std::abs(e), 1.0)) {
        fail(ErrorKind::BasisTooSmall, "level " + std::to_string(n) + " shifts by " +
                                           std::to_string(shift) + " hbar*omega when the basis grows");
      }
    }
  }

  MatrixXd vecs = eig.vectors.leftCols(n_levels);
  MechanicalSpectrum out;
  out.mass = params.mass;
  out.omega_unit = omega_unit;
  out.length_unit = std::sqrt(constants::hbar / (2.0 * params.mass * omega_unit));
  out.basis_size = basis.basis_size;
  out.energies.resize(n_levels);
  out.parities.resize(n_levels);
  out.x2_diagonal.resize(n_levels);

  for (int n = 0; n < n_levels; ++n) {
    auto v = vecs.col(n);
    Eigen::Index imax = 0;
    v.cwiseAbs().maxCoeff(&imax);
    if (v(imax) < 0.0) v = -v;

    double even = 0.0;
    for (Eigen::Index k = 0; k < v.size(); k += 2) even += v(k) * v(k);
    const double norm = v.squaredNorm();
    if (even >= 0.99 * norm) {
      out.parities[n] = 1;
    } else if (norm - even >= 0.99 * norm) {
      out.parities[n] = -1;
    } else {
      fail(ErrorKind::ConvergenceFailure,
           "eigenstate " + std::to_string(n) + " has no definite parity (even weight " +
               std::to_string(even / norm) + ")");
    }
    out.energies[n] = eig.values(n) * constants::hbar * omega_unit;
    out.x2_diagonal[n] = v.dot(eig.x2 * v) * out.length_unit * out.length_unit;
  }

  for (int n = 1; n < n_levels; ++n) {
    if (!(out.energies[n] > out.energies[n - 1])) {
      fail(ErrorKind::ConvergenceFailure, "spectrum is degenerate at level " + std::to_string(n));
    }
  }
  if (params.nu > 0.0) {
    const double omega0 = std::sqrt(2.0 * params.nu / params.mass);
    const double d10 = (out.energies[1] - out.energies[0]) / constants::hbar;
    if (d10 <= 1e-9 * omega0) {
      fail(ErrorKind::ConvergenceFailure, "tunnel splitting below numerical resolution");
    }
  }

  const MatrixXd xm = vecs.transpose() * eig.x * vecs;
  out.x_elements = MatrixXc::Zero(n_levels, n_levels);
  out.phases = MatrixXd::Zero(n_levels, n_levels);
  out.delta = MatrixXd::Zero(n_levels, n_levels);
  for (int m = 0; m < n_levels; ++m) {
    for (int n = 0; n < n_levels; ++n) {
      out.delta(m, n) = (out.energies[m] - out.energies[n]) / constants::hbar;
      if (out.parities[m] == out.parities[n]) continue;
      const double value = 0.5 * (xm(m, n) + xm(n, m)) * out.length_unit;
      out.x_elements(m, n) = value;
      out.phases(m, n) = value < 0.0 ? constants::pi : 0.0;
    }
  }
  return out;
}

/// Independent oracle: lowest eigenvalues (J) of the same Hamiltonian on a
/// uniform grid with a three-point Laplacian and Dirichlet walls, Richardson
/// extrapolated from `points` and `points`/2 grid points.
inline std::vector<double> finite_difference_levels(const DoubleWellParams& p, int n_levels,
                                                    int points = 2000) {
  p.validate();
  require(points >= 200 && n_levels >= 1 && n_levels < points / 4, ErrorKind::InvalidArgument,
          "grid too small for the requested levels");
  const double omega_unit = natural_frequency(p);
  const double length = std::sqrt(constants::hbar / (2.0 * p.mass * omega_unit));
  const double energy = constants::hbar * omega_unit;
  const double c2 = -p.nu * length * length / (2.0 * energy);
  const double c4 = p.beta * std::pow(length, 4) / (4.0 * energy);
  auto v = [&](double xi) { return c2 * xi * xi + c4 * xi * xi * xi * xi; };
  const double v_min = c2 < 0.0 && c4 > 0.0 ? -c2 * c2 / (4.0 * c4) : 0.0;
  // Walls where the potential exceeds its minimum by 400 hbar*omega_unit.
  double half = 1.0;
  while (v(half) - v_min < 400.0) half *= 1.1;

  auto levels = [&](int n) {
    const double h = 2.0 * half / (n + 1);
    VectorXd diag(n);
    VectorXd off = VectorXd::Constant(n - 1, -1.0 / (h * h));
    for (int i = 0; i < n; ++i) diag(i) = 2.0 / (h * h) + v(-half + h * (i + 1));
    Eigen::SelfAdjointEigenSolver<MatrixXd> solver;
    solver.computeFromTridiagonal(diag, off, Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) fail(ErrorKind::ConvergenceFailure, "tridiagonal solver failed");
    return VectorXd(solver.eigenvalues().head(n_levels));
  };
  const VectorXd fine = levels(points);
  const VectorXd coarse = levels(points / 2);
  std::vector<double> out(static_cast<std::size_t>(n_levels));
  for (int n = 0; n < n_levels; ++n) {
    // h differs by a factor ~2 between the grids: (points + 1)/(points/2 + 1).
    const double r = std::pow((points + 1.0) / (points / 2 + 1.0), 2);
    out[static_cast<std::size_t>(n)] = (r * fine(n) - coarse(n)) / (r - 1.0) * energy;
  }
  return out;
}

/// Number of eigenvalues lying below the top of the central barrier (x = 0).
inline int levels_below_barrier(const MechanicalSpectrum& spec) {
  return static_cast<int>(
      std::count_if(spec.energies.begin(), spec.energies.end(), [](double e) { return e < 0.0; }));
}

}  // namespace dwcool
