#pragma once

// Circular membrane clamped at r = a: normal modes in the tension-dominated
// and in the bending-dominated (plate) regime, electrostatic softening by a
// tip electrode and its image, and the mean-field audit of inter-mode
// couplings.

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include <boost/math/tools/minima.hpp>

#include "constants.hpp"
#include "error.hpp"
#include "quadrature.hpp"
#include "spectrum.hpp"
#include "types.hpp"

namespace dwcool {

struct MembraneSpec {
  double radius = 0.0;        ///< a, m
  double thickness = 0.0;     ///< h, m
  double young = 0.0;         ///< Y, Pa
  double poisson = 0.0;       ///< sigma
  double mass_density = 0.0;  ///< mu_2D, kg/m^2
  double tension = 0.0;       ///< T0, N/m

  void validate() const {
    require(radius > 0.0 && thickness > 0.0 && young > 0.0 && poisson > 0.0 && mass_density > 0.0,
            ErrorKind::InvalidArgument, "membrane parameters must be positive");
    require(poisson < 0.5, ErrorKind::InvalidArgument, "Poisson ratio must be below 1/2");
    require(tension >= 0.0, ErrorKind::InvalidArgument, "tension must be non-negative");
  }
  double flexural_rigidity() const {
    return young * thickness * thickness * thickness / (12.0 * (1.0 - poisson * poisson));
  }
  double stretching_modulus() const { return young * thickness; }
};

struct TipElectrodeSpec {
  double bV1 = 0.0;       ///< tip radius times applied voltage, V m
  double distance = 0.0;  ///< d, tip to disk electrode, m
  double gap = 0.0;       ///< z0, disk electrode to membrane, m

  void validate() const {
    require(distance > 0.0 && gap > 0.0 && gap < distance, ErrorKind::InvalidArgument,
            "electrode geometry needs 0 < gap < distance");
  }
};

enum class MembraneRegime { tensioned, plate };

inline std::string to_string(MembraneRegime r) {
  return r == MembraneRegime::tensioned ? "tensioned" : "plate";
}

/// One normal mode psi(r, theta) = R(r/a) cos(k theta), max psi = 1.
struct MembraneMode {
  int k = 0;                 ///< angular index
  int radial_index = 0;      ///< 0 for the first root at this k
  double lambda = 0.0;       ///< root of the boundary condition
  double amplitude = 1.0;    ///< normalization A
  double plate_ratio = 0.0;  ///< J_k(lambda)/I_k(lambda), plate regime only
  MembraneRegime regime = MembraneRegime::tensioned;
  double effective_mass = 0.0;   ///< kg
  double stiffness = 0.0;        ///< N/m
  double frequency = 0.0;        ///< sqrt(K/m*), rad/s
  double separation_frequency = 0.0;  ///< from the separation constant, rad/s
  double duffing = 0.0;          ///< beta_n, J/m^4

  /// Radial profile R(s), s = r/a.
  double profile(double s) const {
    const double x = lambda * s;
    if (regime == MembraneRegime::tensioned) return amplitude * std::cyl_bessel_j(k, x);
    return amplitude * (std::cyl_bessel_j(k, x) - plate_ratio * std::cyl_bessel_i(k, x));
  }

  /// dR/ds.
  double slope(double s) const {
    const double x = lambda * s;
    auto jp = [&](double y) {
      return k == 0 ? -std::cyl_bessel_j(1, y)
                    : 0.5 * (std::cyl_bessel_j(k - 1, y) - std::cyl_bessel_j(k + 1, y));
    };
    auto ip = [&](double y) {
      return k == 0 ? std::cyl_bessel_i(1, y)
                    : 0.5 * (std::cyl_bessel_i(k - 1, y) + std::cyl_bessel_i(k + 1, y));
    };
    if (regime == MembraneRegime::tensioned) return amplitude * lambda * jp(x);
    return amplitude * lambda * (jp(x) - plate_ratio * ip(x));
  }

  /// Radial part of a^2 * Laplacian(psi).
  double laplacian(double s) const {
    const double x = lambda * s;
    if (regime == MembraneRegime::tensioned) return -lambda * lambda * profile(s);
    return amplitude * lambda * lambda *
           (-std::cyl_bessel_j(k, x) - plate_ratio * std::cyl_bessel_i(k, x));
  }
};

struct ModalModel {
  MembraneSpec membrane;
  MembraneRegime regime = MembraneRegime::tensioned;
  std::vector<MembraneMode> modes;
  MatrixXd overlap;  ///< M_mn, dimensionless
  std::vector<std::string> warnings;
};

namespace detail {

/// Integral over theta in [0, 2 pi] of prod cos(k_i theta).
inline double angular_cos_product(std::span<const int> ks) {
  const std::size_t n = ks.size();
  if (n == 0) return constants::two_pi;
  int hits = 0;
  for (unsigned mask = 0; mask < (1u << n); ++mask) {
    long sum = 0;
    for (std::size_t i = 0; i < n; ++i) sum += (mask >> i & 1u) ? ks[i] : -ks[i];
    if (sum == 0) ++hits;
  }
  return constants::two_pi * hits / static_cast<double>(1u << n);
}

inline double angular_cc(int a, int b) {
  const std::array<int, 2> ks{a, b};
  return angular_cos_product(ks);
}

// Integral of sin(a theta) sin(b theta).
inline double angular_ss(int a, int b) { return (a == b && a != 0) ? constants::pi : 0.0; }

inline double boundary_function(MembraneRegime regime, int k, double x) {
  if (regime == MembraneRegime::tensioned) return std::cyl_bessel_j(k, x);
  return std::cyl_bessel_j(k, x) * std::cyl_bessel_i(k + 1, x) +
         std::cyl_bessel_i(k, x) * std::cyl_bessel_j(k + 1, x);
}

struct RootEntry {
  double lambda;
  int k;
  int radial_index;
};

inline std::vector<RootEntry> boundary_roots(MembraneRegime regime, std::size_t count) {
  std::vector<RootEntry> roots;
  const double step = 0.02;
  double limit = 12.0;
  while (true) {
    roots.clear();
    for (int k = 0; k <= static_cast<int>(limit); ++k) {
      int index = 0;
      // For k >= 1 both conditions vanish at the origin; the physical roots lie beyond 1.
      double lo = 1.0;
      double flo = boundary_function(regime, k, lo);
      for (double hi = lo + step; hi <= limit; hi += step) {
        const double fhi = boundary_function(regime, k, hi);
        if ((flo > 0.0) != (fhi > 0.0)) {
          const double root =
              bracketed_root([&](double x) { return boundary_function(regime, k, x); }, lo, hi);
          roots.push_back({root, k, index++});
        }
        lo = hi;
        flo = fhi;
      }
    }
    std::sort(roots.begin(), roots.end(),
              [](const RootEntry& a, const RootEntry& b) { return a.lambda < b.lambda; });
    // Every root below `limit` is found, so the lowest `count` are final once
    // they lie safely inside the scanned window.
    if (roots.size() >= count && roots[count - 1].lambda < limit - 1.0) break;
    limit *= 1.5;
    if (limit > 200.0) fail(ErrorKind::RootBracketFailure, "could not bracket enough membrane roots");
  }
  roots.resize(count);
  return roots;
}

inline void normalize_profile(MembraneMode& mode) {
  mode.amplitude = 1.0;
  const int samples = 2000;
  double best = 0.0;
  double best_s = 0.0;
  for (int i = 0; i <= samples; ++i) {
    const double s = static_cast<double>(i) / samples;
    const double v = std::abs(mode.profile(s));
    if (v > best) {
      best = v;
      best_s = s;
    }
  }
  const double h = 1.0 / samples;
  const double lo = std::max(0.0, best_s - h);
  const double hi = std::min(1.0, best_s + h);
  if (hi > lo) {
    const auto r = boost::math::tools::brent_find_minima(
        [&](double s) { return -std::abs(mode.profile(s)); }, lo, hi, 50);
    best = std::max(best, -r.second);
    best_s = -r.second >= best ? r.first : best_s;
  }
  const double sign = mode.profile(best_s) < 0.0 ? -1.0 : 1.0;
  mode.amplitude = sign / best;
}

inline ModalModel build_modes(const MembraneSpec& spec, std::size_t n_modes, MembraneRegime regime) {
  spec.validate();
  require(n_modes >= 1, ErrorKind::InvalidArgument, "at least one mode is required");
  ModalModel model;
  model.membrane = spec;
  model.regime = regime;
  const double a = spec.radius;
  const double mu = spec.mass_density;
  const double d = spec.flexural_rigidity();
  const double yh = spec.stretching_modulus();

  for (const auto& root : boundary_roots(regime, n_modes)) {
    MembraneMode mode;
    mode.k = root.k;
    mode.radial_index = root.radial_index;
    mode.lambda = root.lambda;
    mode.regime = regime;
    if (regime == MembraneRegime::plate) {
      mode.plate_ratio = std::cyl_bessel_j(root.k, root.lambda) / std::cyl_bessel_i(root.k, root.lambda);
    }
    normalize_profile(mode);
    model.modes.push_back(mode);
  }

  const std::size_t n = model.modes.size();
  model.overlap = MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      const auto& mi = model.modes[i];
      const auto& mj = model.modes[j];
      const double cc = angular_cc(mi.k, mj.k);
      double value = 0.0;
      if (regime == MembraneRegime::tensioned) {
        const double ss = angular_ss(mi.k, mj.k);
        if (cc != 0.0) {
          value += cc * integrate([&](double s) { return mi.slope(s) * mj.slope(s) * s; }, 0.0, 1.0);
        }
        if (ss != 0.0) {
          value += ss * mi.k * mj.k *
                   integrate([&](double s) { return s > 0.0 ? mi.profile(s) * mj.profile(s) / s : 0.0; },
                             0.0, 1.0);
        }
      } else if (cc != 0.0) {
        value = cc * integrate([&](double s) { return mi.profile(s) * mj.laplacian(s) * s; }, 0.0, 1.0);
      }
      model.overlap(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = value;
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    auto& mode = model.modes[i];
    const double cc = angular_cc(mode.k, mode.k);
    const double mnn = model.overlap(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i));
    mode.effective_mass =
        mu * a * a * cc * integrate([&](double s) { return mode.profile(s) * mode.profile(s) * s; }, 0.0, 1.0);
    if (regime == MembraneRegime::tensioned) {
      mode.stiffness = spec.tension * mnn;
      mode.separation_frequency = mode.lambda / a * std::sqrt(spec.tension / mu);
      const double bending = d * std::pow(mode.lambda / a, 2);
      if (bending > 0.1 * spec.tension) {
        model.warnings.push_back("mode " + std::to_string(i) +
                                 ": bending stiffness is not small against the tension");
      }
    } else {
      mode.stiffness =
          d / (a * a) * cc * integrate([&](double s) { return std::pow(mode.laplacian(s), 2) * s; }, 0.0, 1.0);
      mode.separation_frequency = std::pow(mode.lambda / a, 2) * std::sqrt(d / mu);
    }
    mode.frequency = std::sqrt(mode.stiffness / mode.effective_mass);
    mode.duffing = yh / (constants::two_pi * a * a) * mnn * mnn;
  }
  return model;
}

}  // namespace detail

/// Modes of a membrane dominated by its built-in tension (J_k(lambda) = 0).
inline ModalModel tensioned_modes(const MembraneSpec& spec, std::size_t n_modes = 4) {
  require(spec.tension > 0.0, ErrorKind::InvalidArgument, "tensioned modes need T0 > 0");
  return detail::build_modes(spec, n_modes, MembraneRegime::tensioned);
}

/// Modes of a clamped plate without built-in tension.
inline ModalModel plate_modes(const MembraneSpec& spec, std::size_t n_modes = 4) {
  require(spec.tension == 0.0, ErrorKind::InvalidArgument, "plate modes assume T0 = 0");
  return detail::build_modes(spec, n_modes, MembraneRegime::plate);
}

/// Mass-weighted overlap of two mode shapes, integral of psi_m psi_n over the
/// unit disk (dimensionless).
inline double mode_overlap(const ModalModel& model, std::size_t m, std::size_t n) {
  const auto& a = model.modes.at(m);
  const auto& b = model.modes.at(n);
  const double cc = detail::angular_cc(a.k, b.k);
  if (cc == 0.0) return 0.0;
  return cc * integrate([&](double s) { return a.profile(s) * b.profile(s) * s; }, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Electrostatics: tip of potential bV1/r at height d above a grounded disk and
// its image, E_z = bV1 [f(z - d) - f(z + d)] with f(u) = u / (r^2 + u^2)^{3/2}.

namespace electrostatics {

/// d^j/du^j of u (r^2 + u^2)^{-3/2}, j = 0..4.
inline double image_kernel_derivative(int j, double r, double u) {
  const double q = r * r + u * u;
  const double u2 = u * u;
  switch (j) {
    case 0: return u * std::pow(q, -1.5);
    case 1: return std::pow(q, -1.5) - 3.0 * u2 * std::pow(q, -2.5);
    case 2: return -9.0 * u * std::pow(q, -2.5) + 15.0 * u * u2 * std::pow(q, -3.5);
    case 3:
      return -9.0 * std::pow(q, -2.5) + 90.0 * u2 * std::pow(q, -3.5) -
             105.0 * u2 * u2 * std::pow(q, -4.5);
    case 4:
      return 225.0 * u * std::pow(q, -3.5) - 1050.0 * u * u2 * std::pow(q, -4.5) +
             945.0 * u * u2 * u2 * std::pow(q, -5.5);
    default: fail(ErrorKind::InvalidArgument, "field derivatives are implemented up to order 4");
  }
}

/// d^j E_z / dz^j at (r, z).
inline double field_derivative(int j, double r, double z, const TipElectrodeSpec& tip) {
  return tip.bV1 * (image_kernel_derivative(j, r, z - tip.distance) -
                    image_kernel_derivative(j, r, z + tip.distance));
}

/// d^N (E_z^2) / dz^N by the Leibniz rule.
inline double field_squared_derivative(int order, double r, double z, const TipElectrodeSpec& tip) {
  require(order >= 0 && order <= 4, ErrorKind::InvalidArgument, "order must be in 0..4");
  std::array<double, 5> e{};
  for (int j = 0; j <= order; ++j) e[j] = field_derivative(j, r, z, tip);
  double sum = 0.0;
  double binom = 1.0;
  for (int j = 0; j <= order; ++j) {
    sum += binom * e[j] * e[order - j];
    binom = binom * (order - j) / (j + 1);
  }
  return sum;
}

/// Central differences of E_z^2 with one Richardson extrapolation (cross-check).
inline double field_squared_derivative_fd(int order, double r, double z, const TipElectrodeSpec& tip,
                                          double step) {
  require(order >= 1 && order <= 4, ErrorKind::InvalidArgument, "order must be in 1..4");
  auto e2 = [&](double zz) {
    const double e = field_derivative(0, r, zz, tip);
    return e * e;
  };
  auto central = [&](double h) {
    switch (order) {
      case 1: return (e2(z + h) - e2(z - h)) / (2.0 * h);
      case 2: return (e2(z + h) - 2.0 * e2(z) + e2(z - h)) / (h * h);
      case 3: return (e2(z + 2 * h) - 2.0 * e2(z + h) + 2.0 * e2(z - h) - e2(z - 2 * h)) / (2.0 * h * h * h);
      default:
        return (e2(z + 2 * h) - 4.0 * e2(z + h) + 6.0 * e2(z) - 4.0 * e2(z - h) + e2(z - 2 * h)) /
               (h * h * h * h);
    }
  };
  // Second-order central stencils: eliminate the h^2 term.
  return (4.0 * central(step / 2.0) - central(step)) / 3.0;
}

}  // namespace electrostatics

/// alpha^(N)_{n1..nN} in J/m^N for the listed mode indices (N = indices.size()).
inline double electrostatic_coefficient(const ModalModel& model, const TipElectrodeSpec& tip,
                                        std::span<const int> indices) {
  tip.validate();
  const int order = static_cast<int>(indices.size());
  require(order >= 1 && order <= 4, ErrorKind::InvalidArgument, "coefficient order must be in 1..4");
  std::vector<int> ks;
  for (int idx : indices) {
    require(idx >= 0 && idx < static_cast<int>(model.modes.size()), ErrorKind::InvalidArgument,
            "mode index out of range");
    ks.push_back(model.modes[idx].k);
  }
  const double angular = detail::angular_cos_product(ks);
  if (angular == 0.0 || tip.bV1 == 0.0) return 0.0;
  const double a = model.membrane.radius;
  const double radial = integrate(
      [&](double s) {
        double prod = 1.0;
        for (int idx : indices) prod *= model.modes[idx].profile(s);
        return electrostatics::field_squared_derivative(order, s * a, tip.gap, tip) * prod * s;
      },
      0.0, 1.0, 1e-11);
  double factorial = 1.0;
  for (int j = 2; j <= order; ++j) factorial *= j;
  return -model.membrane.thickness * constants::epsilon_0 / factorial * angular * a * a * radial;
}

struct ElectrostaticCoeffs {
  double bV1 = 0.0;
  std::array<double, 4> alpha{};  ///< alpha_1..alpha_4 of the fundamental mode
  std::vector<double> cross;      ///< alpha^(2)_{0m}, m = 0..n-1 (entry 0 equals alpha_2)
  std::vector<double> diagonal;   ///< alpha^(2)_{mm}
};

inline ElectrostaticCoeffs electrostatic_coeffs(const ModalModel& model, const TipElectrodeSpec& tip,
                                                int max_order = 4) {
  require(max_order >= 1 && max_order <= 4, ErrorKind::InvalidArgument, "max_order must be in 1..4");
  ElectrostaticCoeffs out;
  out.bV1 = tip.bV1;
  for (int n = 1; n <= max_order; ++n) {
    const std::vector<int> idx(static_cast<std::size_t>(n), 0);
    out.alpha[static_cast<std::size_t>(n - 1)] = electrostatic_coefficient(model, tip, idx);
  }
  for (int m = 0; m < static_cast<int>(model.modes.size()); ++m) {
    const std::array<int, 2> c{0, m};
    const std::array<int, 2> dgl{m, m};
    out.cross.push_back(electrostatic_coefficient(model, tip, c));
    out.diagonal.push_back(electrostatic_coefficient(model, tip, dgl));
  }
  return out;
}

/// bV1 giving alpha_2 = ratio * (m* Omega^2 / 2) for the fundamental mode.
/// alpha_2 scales exactly as bV1^2, so one evaluation suffices.
inline double tune_bv1(const ModalModel& model, TipElectrodeSpec tip, double ratio) {
  require(ratio < 0.0, ErrorKind::InvalidArgument, "softening needs a negative alpha_2 ratio");
  const auto& m0 = model.modes.at(0);
  tip.bV1 = 1e-4;
  const std::array<int, 2> idx{0, 0};
  const double alpha2 = electrostatic_coefficient(model, tip, idx);
  require(alpha2 < 0.0, ErrorKind::InvalidArgument, "electrode geometry does not soften the mode");
  const double target = ratio * 0.5 * m0.effective_mass * m0.frequency * m0.frequency;
  return tip.bV1 * std::sqrt(target / alpha2);
}

/// nu = 2|alpha_2| - m omega^2 for a softening alpha_2 < 0.
inline DoubleWellParams double_well_from_alpha2(double mass, double omega, double alpha2, double beta) {
  const double nu = -2.0 * alpha2 - mass * omega * omega;
  if (!(nu > 0.0)) {
    fail(ErrorKind::NonDoubleWell, "softening does not overcome the harmonic restoring force");
  }
  return {mass, nu, beta, omega};
}

/// Double-well parameters of the fundamental mode under the given electrode.
/// The quartic coefficient is the intrinsic Duffing term; alpha_3 and alpha_4
/// are audited separately and not included.
inline DoubleWellParams double_well_from_physical(const ModalModel& model, const TipElectrodeSpec& tip) {
  const auto& m0 = model.modes.at(0);
  const std::array<int, 2> idx{0, 0};
  const double alpha2 = electrostatic_coefficient(model, tip, idx);
  return double_well_from_alpha2(m0.effective_mass, m0.frequency, alpha2, m0.duffing);
}

struct CouplingAudit {
  std::vector<double> lambda;    ///< Lambda_0m, m = 1..n
  std::vector<double> upsilon;   ///< Upsilon_0m
  std::vector<double> softened;  ///< Omega'_m, rad/s
  double omega0 = 0.0;           ///< intra-well frequency, rad/s
  double x_zpm = 0.0;            ///< m
  double alpha3_zero_point = 0.0;  ///< |alpha_3| x_zpm, J/m^2
  double half_nu = 0.0;            ///< nu / 2, J/m^2
  double quartic_zero_point = 0.0; ///< (beta/4) x_zpm^2, J/m^2
};

/// Mean-field estimate of the residual coupling of the fundamental mode to
/// modes 1..n_audit: fundamental moments <X0^k> = x_zpm^k, thermal moments for
/// the others.
inline CouplingAudit coupling_audit(const ModalModel& model, const TipElectrodeSpec& tip,
                                    double temperature, int n_audit = 3) {
  require(static_cast<int>(model.modes.size()) > n_audit, ErrorKind::InvalidArgument,
          "audit needs modes 0..n_audit");
  require(temperature > 0.0, ErrorKind::InvalidArgument, "audit needs a positive temperature");
  const ElectrostaticCoeffs coeffs = electrostatic_coeffs(model, tip, 4);
  const DoubleWellParams dw = double_well_from_physical(model, tip);
  const WellGeometry geo = well_geometry(dw);
  const double hbar = constants::hbar;
  const double kt = constants::k_B * temperature;
  const double yh_term = model.membrane.stretching_modulus() / (constants::two_pi * std::pow(model.membrane.radius, 2));

  CouplingAudit out;
  out.omega0 = geo.omega0;
  out.x_zpm = geo.x_zpm;
  out.alpha3_zero_point = std::abs(coeffs.alpha[2]) * geo.x_zpm;
  out.half_nu = 0.5 * dw.nu;
  out.quartic_zero_point = 0.25 * dw.beta * geo.x_zpm * geo.x_zpm;

  auto x0 = [&](int k) { return std::pow(geo.x_zpm, k); };
  const MatrixXd& mm = model.overlap;
  for (int m = 1; m <= n_audit; ++m) {
    const auto& mode = model.modes[static_cast<std::size_t>(m)];
    const double w2 = mode.frequency * mode.frequency + 2.0 * coeffs.diagonal[static_cast<std::size_t>(m)] / mode.effective_mass;
    if (w2 < 0.0) fail(ErrorKind::ImaginaryFrequency, "mode " + std::to_string(m) + " is over-softened");
    const double wp = std::sqrt(w2);
    auto xm = [&](int k) {
      return std::pow(kt / (hbar * wp), 0.5 * k) * std::pow(hbar / (2.0 * mode.effective_mass * wp), 0.5 * k);
    };
    out.softened.push_back(wp);
    const double a0m = coeffs.cross[static_cast<std::size_t>(m)];
    out.lambda.push_back(std::abs(2.0 * a0m * x0(1) * xm(1) / (hbar * (wp - geo.omega0))));
    const double m00 = mm(0, 0);
    const double mmm = mm(m, m);
    const double m0m = mm(0, m);
    double ups = std::abs((m00 * mmm + 2.0 * m0m * m0m) * x0(2) * xm(2) / (hbar * (wp - geo.omega0)));
    if (m0m != 0.0) {
      ups += std::abs(4.0 * m00 * m0m * x0(3) * xm(1) / (hbar * (wp - 3.0 * geo.omega0)));
      ups += std::abs(4.0 * m0m * mmm * x0(1) * xm(3) / (hbar * (3.0 * wp - geo.omega0)));
    }
    out.upsilon.push_back(yh_term * ups);
  }
  return out;
}

}  // namespace dwcool
