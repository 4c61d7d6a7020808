#pragma once

// Continuous spontaneous localization in the small-delocalization limit:
// momentum diffusion -(lambda eta / r^2) [x, [x, rho]], and the comparison
// against ordinary damping with a matched quality factor.

#include <cmath>
#include <future>
#include <limits>
#include <string>
#include <vector>

#include "error.hpp"
#include "spectrum.hpp"
#include "steadystate.hpp"

namespace dwcool {

struct CSLParams {
  double lambda_csl = 0.0;  ///< Hz
  double r_csl = 100e-9;    ///< m
  double eta = 1.2e15;

  void validate() const {
    require(lambda_csl >= 0.0, ErrorKind::InvalidArgument, "lambda_csl must be non-negative");
    require(r_csl > 0.0 && eta > 0.0, ErrorKind::InvalidArgument, "r_csl and eta must be positive");
  }
};

/// Diffusion coefficient lambda eta / r^2 expressed per length_unit^2, in 1/s.
inline double csl_rate(const MechanicalSpectrum& spec, const CSLParams& p) {
  p.validate();
  return p.lambda_csl * p.eta * spec.length_unit * spec.length_unit / (p.r_csl * p.r_csl);
}

/// -(lambda eta / r^2)[x, [x, rho]] on the mechanical factor.
inline Generator csl_generator(const MechanicalSpectrum& spec, const CSLParams& p) {
  const double c = csl_rate(spec, p);
  if (c == 0.0) return {};
  const SparseC x = to_sparse(spec.x_dimensionless());
  const SparseC x2 = x * x;
  const SparseC id = sparse_identity(x.rows());
  return {{-c, x2, id}, {2.0 * c, x, x}, {-c, id, x2}};
}

/// Warning text when the well separation is not small against r_csl.
inline std::string csl_validity_warning(const DoubleWellParams& dw, const CSLParams& p) {
  const WellGeometry g = well_geometry(dw);
  if (2.0 * g.x0 > 0.3 * p.r_csl) {
    return "well separation 2 x0 = " + std::to_string(2.0 * g.x0) +
           " m is not small against r_csl; the diffusion approximation is questionable";
  }
  return {};
}

/// Euclidean distance between the diagonal populations of two states.
inline double population_distance(const MatrixXc& mu, const MatrixXc& rho) {
  require(mu.rows() == rho.rows() && mu.cols() == rho.cols() && mu.rows() == mu.cols(),
          ErrorKind::DimensionMismatch, "states differ in dimension");
  double s = 0.0;
  for (Eigen::Index n = 0; n < mu.rows(); ++n) s += std::pow(mu(n, n).real() - rho(n, n).real(), 2);
  return std::sqrt(s);
}

struct CSLComparison {
  MatrixXc mu_m;         ///< with CSL, quality Q
  MatrixXc rho_m_prime;  ///< without CSL, quality Q'
  double Q = 0.0;
  double Q_prime = 0.0;
  double sigma = 0.0;
  double distance = 0.0;
  std::vector<double> population_differences;  ///< <n|mu - rho'|n>
  int iterations = 0;
  std::vector<std::pair<double, double>> search_trace;  ///< (Q', P00)
  std::vector<std::string> warnings;
};

struct CSLSearchOptions {
  double steady_tol = 1e-12;
  int max_iterations = 30;
  double lower_ratio = 100.0;  ///< search Q' in [Q / lower_ratio, Q]
  /// The search stops once |dP00| <= match_fraction * sigma, so that D reflects
  /// the excited-level populations rather than how loosely P00 was matched.
  double match_fraction = 1e-2;
};

namespace detail {

inline MatrixXc csl_steady(SystemSpec sys, const CSLParams* csl, double quality, double tol) {
  sys.bath.quality = quality;
  if (csl && csl->lambda_csl > 0.0) sys.extra_mechanical.push_back(csl_generator(sys.spectrum, *csl));
  const Liouvillian l = assemble_liouvillian(sys);
  return solve_steady(l, SteadyMethod::automatic, tol).rho_mech;
}

}  // namespace detail

/// Matched-damping comparison for a CSL state `mu` already computed at the
/// base quality factor.  Q' is bracketed in [Q/lower_ratio, Q] and refined by
/// false position on 1/Q' (the damping rates are linear in 1/Q') until the
/// ground-state populations agree within match_fraction * sigma.
inline CSLComparison matched_quality_from(const SystemSpec& base, const MatrixXc& mu, double sigma,
                                          const CSLSearchOptions& opt = {}) {
  require(sigma > 0.0, ErrorKind::InvalidArgument, "sigma must be positive");
  CSLComparison out;
  out.mu_m = mu;
  out.Q = base.bath.quality;
  out.sigma = sigma;
  const double target = mu(0, 0).real();
  const double match = opt.match_fraction * sigma;

  auto p00_at = [&](double q) {
    MatrixXc rho = detail::csl_steady(base, nullptr, q, opt.steady_tol);
    out.search_trace.emplace_back(q, rho(0, 0).real());
    return rho;
  };

  MatrixXc rho_hi = p00_at(out.Q);
  double f_hi = rho_hi(0, 0).real() - target;  // at 1/Q' = 1/Q
  MatrixXc best = rho_hi;
  double best_q = out.Q;
  if (std::abs(f_hi) > match) {
    const double q_lo = out.Q / opt.lower_ratio;
    MatrixXc rho_lo = p00_at(q_lo);
    double f_lo = rho_lo(0, 0).real() - target;
    if ((f_hi > 0.0) == (f_lo > 0.0)) {
      fail(ErrorKind::NoBracket, "ground-state population cannot be matched for Q' in [Q/" +
                                     std::to_string(opt.lower_ratio) + ", Q]");
    }
    // Illinois false position in u = 1/Q'.
    double ua = 1.0 / out.Q, fa = f_hi;
    double ub = 1.0 / q_lo, fb = f_lo;
    int side = 0;
    best = std::abs(f_lo) < std::abs(f_hi) ? rho_lo : rho_hi;
    best_q = std::abs(f_lo) < std::abs(f_hi) ? q_lo : out.Q;
    double best_f = std::min(std::abs(f_lo), std::abs(f_hi));
    for (int it = 0; it < opt.max_iterations && best_f > match; ++it) {
      ++out.iterations;
      double u = (ua * fb - ub * fa) / (fb - fa);
      if (!(u > std::min(ua, ub) && u < std::max(ua, ub))) u = 0.5 * (ua + ub);
      MatrixXc rho = p00_at(1.0 / u);
      const double f = rho(0, 0).real() - target;
      if (std::abs(f) < best_f) {
        best_f = std::abs(f);
        best = rho;
        best_q = 1.0 / u;
      }
      if ((f > 0.0) == (fa > 0.0)) {
        ua = u;
        fa = f;
        if (side == -1) fb *= 0.5;
        side = -1;
      } else {
        ub = u;
        fb = f;
        if (side == 1) fa *= 0.5;
        side = 1;
      }
    }
    if (best_f > match) {
      out.warnings.push_back("ground-state match stopped at |dP00| = " + std::to_string(best_f) +
                             " after " + std::to_string(out.iterations) + " iterations");
    }
  }
  out.rho_m_prime = best;
  out.Q_prime = best_q;
  out.distance = population_distance(mu, best);
  for (Eigen::Index n = 0; n < mu.rows(); ++n)
    out.population_differences.push_back(mu(n, n).real() - best(n, n).real());
  const double last = std::abs(out.population_differences.back());
  if (out.distance > 0.0 && last >= 1e-3 * out.distance) {
    out.warnings.push_back("highest retained level contributes " + std::to_string(last / out.distance) +
                           " of D; increase n_levels");
  }
  return out;
}

inline CSLComparison matched_quality(const SystemSpec& base, const CSLParams& csl, double sigma,
                                     const CSLSearchOptions& opt = {}) {
  csl.validate();
  const MatrixXc mu = detail::csl_steady(base, &csl, base.bath.quality, opt.steady_tol);
  CSLComparison out = matched_quality_from(base, mu, sigma, opt);
  if (const std::string w = csl_validity_warning(base.params, csl); !w.empty()) out.warnings.push_back(w);
  return out;
}

struct CSLScanRow {
  double lambda_csl = 0.0;
  double sigma = 0.0;
  double Q_prime = std::numeric_limits<double>::quiet_NaN();
  double distance = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> population_differences;
  bool ok = false;
  bool detected = false;  ///< D > sigma
  std::string message;
};

struct CSLScan {
  std::vector<CSLScanRow> rows;  ///< lambda-major, sigma-minor order
  std::vector<double> sigmas;
  std::vector<double> thresholds;  ///< smallest lambda with D > sigma, NaN if none
};

/// Grid over (lambda, sigma).  The CSL steady state is computed once per
/// lambda; grid points run concurrently when threads > 1.
inline CSLScan csl_scan(const SystemSpec& base, const std::vector<double>& lambdas,
                        const std::vector<double>& sigmas, CSLParams csl = {},
                        const CSLSearchOptions& opt = {}, int threads = 1) {
  for (double l : lambdas)
    require(std::isfinite(l) && l >= 0.0, ErrorKind::InvalidArgument, "lambda grid must be finite");
  CSLScan out;
  out.sigmas = sigmas;
  auto per_lambda = [&](double lambda) {
    std::vector<CSLScanRow> rows;
    CSLParams p = csl;
    p.lambda_csl = lambda;
    MatrixXc mu;
    std::string error;
    try {
      mu = detail::csl_steady(base, &p, base.bath.quality, opt.steady_tol);
    } catch (const Error& e) {
      error = e.what();
    }
    for (double s : sigmas) {
      CSLScanRow row;
      row.lambda_csl = lambda;
      row.sigma = s;
      if (!error.empty()) {
        row.message = error;
      } else {
        try {
          const CSLComparison c = matched_quality_from(base, mu, s, opt);
          row.Q_prime = c.Q_prime;
          row.distance = c.distance;
          row.population_differences = c.population_differences;
          row.ok = true;
          row.detected = c.distance > s;
          for (const auto& w : c.warnings) row.message += (row.message.empty() ? "" : "; ") + w;
        } catch (const Error& e) {
          row.message = e.what();
        }
      }
      rows.push_back(std::move(row));
    }
    return rows;
  };
  const std::size_t width = static_cast<std::size_t>(std::max(1, threads));
  for (std::size_t i = 0; i < lambdas.size(); i += width) {
    std::vector<std::future<std::vector<CSLScanRow>>> jobs;
    for (std::size_t j = i; j < std::min(lambdas.size(), i + width); ++j)
      jobs.push_back(std::async(width > 1 ? std::launch::async : std::launch::deferred, per_lambda, lambdas[j]));
    for (auto& j : jobs)
      for (auto& r : j.get()) out.rows.push_back(std::move(r));
  }
  for (double s : sigmas) {
    double th = std::numeric_limits<double>::quiet_NaN();
    for (const auto& r : out.rows)
      if (r.sigma == s && r.detected && !(r.lambda_csl >= th)) th = r.lambda_csl;
    out.thresholds.push_back(th);
  }
  return out;
}

}  // namespace dwcool
