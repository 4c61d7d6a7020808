#pragma once

// Dissipative generators: the transition-resolved mechanical dissipator and
// standard cavity damping.  Rates are in rad/s and the position operator is
// expressed in units of MechanicalSpectrum::length_unit.

#include <cmath>
#include <limits>

#include "constants.hpp"
#include "error.hpp"
#include "spectrum.hpp"
#include "superop.hpp"
#include "types.hpp"

namespace dwcool {

struct BathParams {
  double temperature = 0.0;  ///< K
  double quality = 1e6;      ///< Q of the unsoftened harmonic oscillation

  void validate() const {
    require(temperature >= 0.0, ErrorKind::InvalidArgument, "temperature must be non-negative");
    require(quality > 0.0, ErrorKind::InvalidArgument, "quality factor must be positive");
  }
};

/// Bose occupation [exp(hbar omega / kB T) - 1]^-1.
inline double thermal_occupation(double omega, double temperature) {
  if (!(omega > 0.0)) fail(ErrorKind::NonPositiveFrequency, "occupation needs omega > 0");
  require(temperature >= 0.0, ErrorKind::InvalidArgument, "temperature must be non-negative");
  if (temperature == 0.0) return 0.0;
  const double ratio = constants::hbar * omega / (constants::k_B * temperature);
  return 1.0 / std::expm1(ratio);
}

/// Length that normalizes the per-transition damping rates:
///  - well:     zero-point length of the intra-well oscillation (length_unit)
///  - harmonic: zero-point length of the unsoftened membrane oscillation
enum class DampingNormalization { well, harmonic };

/// Placement of the A operator inside the mechanical dissipator.
///  - standard:  [x, rho A^dag - A rho]
///  - variant:   [x, rho A - A^dag rho], kept only for comparison
enum class DissipatorForm { standard, variant };

struct AOperator {
  MatrixXc matrix;       ///< rad/s per length_unit
  MatrixXd rate_table;   ///< gamma~_mn x_mn for m > n (rad/s), lower triangle
  MatrixXd occupation;   ///< N(delta_mn) for m > n
  double rate_scale = 1.0;  ///< (length_unit / normalization length)^2
};

inline double damping_rate_scale(const MechanicalSpectrum& spec, const DoubleWellParams& params,
                                 DampingNormalization norm) {
  if (norm == DampingNormalization::well) return 1.0;
  require(params.omega_harmonic > 0.0, ErrorKind::InvalidArgument,
          "harmonic normalization needs omega_harmonic > 0");
  // (l_unit / l_harm)^2 = omega_harmonic / omega_unit
  return params.omega_harmonic / spec.omega_unit;
}

inline AOperator build_a_operator(const MechanicalSpectrum& spec, const BathParams& bath,
                                  const DoubleWellParams& params,
                                  DampingNormalization norm = DampingNormalization::well) {
  bath.validate();
  const int n = spec.n_levels();
  const MatrixXd x = spec.x_dimensionless();
  AOperator a;
  a.rate_scale = damping_rate_scale(spec, params, norm);
  a.matrix = MatrixXc::Zero(n, n);
  a.rate_table = MatrixXd::Zero(n, n);
  a.occupation = MatrixXd::Zero(n, n);
  for (int m = 0; m < n; ++m) {
    for (int k = 0; k < m; ++k) {
      if (x(m, k) == 0.0) continue;
      const double delta = spec.delta(m, k);
      const double nbar = thermal_occupation(delta, bath.temperature);
      const double coeff = delta / bath.quality * a.rate_scale * x(m, k);
      a.rate_table(m, k) = coeff;
      a.occupation(m, k) = nbar;
      a.matrix(m, k) += coeff * nbar;
      a.matrix(k, m) += coeff * (nbar + 1.0);
    }
  }
  return a;
}

/// (1/2) [x, rho A^dag - A rho] as a generator on the mechanical space.
inline Generator mechanical_dissipator(const AOperator& a, const MatrixXd& x_dimensionless,
                                       DissipatorForm form = DissipatorForm::standard) {
  require(a.matrix.rows() == x_dimensionless.rows() && a.matrix.cols() == x_dimensionless.cols(),
          ErrorKind::DimensionMismatch, "A operator and position operator differ in size");
  const SparseC x = to_sparse(x_dimensionless);
  const SparseC id = sparse_identity(x.rows());
  SparseC op = to_sparse(a.matrix);
  SparseC op_dag = SparseC(op.adjoint());
  if (form == DissipatorForm::variant) std::swap(op, op_dag);
  const SparseC x_op = x * op;
  const SparseC opd_x = op_dag * x;
  // [x, rho B - C rho] = x rho B - x C rho - rho B x + C rho x with B = A^dag, C = A
  return {
      {0.5, x, op_dag},
      {-0.5, x_op, id},
      {-0.5, id, opd_x},
      {0.5, op, x},
  };
}

inline SparseC annihilation(int fock) {
  require(fock >= 2, ErrorKind::InvalidArgument, "fock truncation must be at least 2");
  SparseC a(fock, fock);
  std::vector<TripletC> t;
  for (int n = 1; n < fock; ++n) t.emplace_back(n - 1, n, std::sqrt(static_cast<double>(n)));
  a.setFromTriplets(t.begin(), t.end());
  return a;
}

/// Lindblad damping (kappa/2)(2 a rho a^dag - a^dag a rho - rho a^dag a) for a
/// generic jump operator.
inline Generator lindblad_dissipator(const SparseC& jump, double rate) {
  require(rate >= 0.0, ErrorKind::InvalidArgument, "damping rate must be non-negative");
  const SparseC id = sparse_identity(jump.rows());
  const SparseC jd = SparseC(jump.adjoint());
  const SparseC n = jd * jump;
  return {
      {rate, jump, jd},
      {-0.5 * rate, n, id},
      {-0.5 * rate, id, n},
  };
}

/// (kappa/2) D_a on a truncated cavity mode.
inline Generator cavity_dissipator(double kappa, int fock) {
  require(kappa > 0.0, ErrorKind::InvalidArgument, "kappa must be positive");
  return lindblad_dissipator(annihilation(fock), kappa);
}

}  // namespace dwcool
