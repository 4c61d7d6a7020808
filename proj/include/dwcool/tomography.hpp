#pragma once

// Qubit-based readout of the mechanical state: a qubit resonant with one
// mechanical transition swaps population with it, and the qubit ring-down
// reveals diagonal elements and (for superposition preparations) coherences.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include <unsupported/Eigen/KroneckerProduct>
#include <unsupported/Eigen/MatrixFunctions>
#include <boost/math/tools/minima.hpp>

#include "constants.hpp"
#include "error.hpp"
#include "lindblad.hpp"
#include "spectrum.hpp"
#include "superop.hpp"
#include "types.hpp"

namespace dwcool {

struct QubitSpec {
  double chi = 0.0;            ///< qubit-cavity coupling, rad/s
  double delta_c = 0.0;        ///< cavity detuning, rad/s
  double delta_q = 0.0;        ///< qubit detuning, rad/s
  double gamma_q = 0.0;        ///< relaxation, rad/s
  double gamma_dephase = -1.0; ///< pure dephasing, rad/s; negative selects 2 gamma_q

  double dephasing() const { return gamma_dephase < 0.0 ? 2.0 * gamma_q : gamma_dephase; }
  /// 1/T2* including amplitude and phase damping of the qubit coherence.
  double inverse_t2() const { return 0.5 * gamma_q + 2.0 * dephasing(); }
  void validate() const {
    require(gamma_q >= 0.0, ErrorKind::InvalidArgument, "gamma_q must be non-negative");
  }
};

/// J = g chi (Dc - Dq - w0) / ((Dc - Dq)(Dc - w0)), rad/s per length unit of g.
inline double effective_coupling(double g, double chi, double delta_c, double delta_q, double omega0) {
  const double d1 = delta_c - delta_q;
  const double d2 = delta_c - omega0;
  if (d1 == 0.0 || d2 == 0.0) {
    fail(ErrorKind::ResonantDenominator, "cavity resonant with the qubit or the mechanics");
  }
  return g * chi * (delta_c - delta_q - omega0) / (d1 * d2);
}

/// Dispersive-validity warnings (ratios below 10).
inline std::vector<std::string> dispersive_warnings(const QubitSpec& q, double g_xzpm, double omega0) {
  std::vector<std::string> w;
  if (std::abs(q.delta_c - q.delta_q) < 10.0 * std::abs(q.chi))
    w.push_back("|Delta_c - Delta_q| is not large against chi");
  if (std::abs(q.delta_c - omega0) < 10.0 * std::abs(g_xzpm))
    w.push_back("|Delta_c - omega0| is not large against g x_zpm");
  return w;
}

enum class QubitPreparation { ground, excited, superposition };

struct TomographyProtocol {
  int j = 1;  ///< upper level of the target transition
  int k = 0;  ///< reference (lower) level
  QubitPreparation preparation = QubitPreparation::ground;
  double phi = 0.0;  ///< superposition phase
  std::vector<double> times;  ///< s
  int shots = 0;               ///< 0: exact probabilities
  std::uint64_t seed = 0;

  /// Recorded probability: P_g after an excited preparation, P_e otherwise.
  bool records_ground() const { return preparation == QubitPreparation::excited; }
};

struct ReadoutTrace {
  TomographyProtocol protocol;
  std::vector<double> probabilities;
  double rabi_frequency = 0.0;  ///< J |x_jk|, rad/s
};

struct ReadoutModel {
  MechanicalSpectrum spectrum;
  QubitSpec qubit;
  double J = 0.0;  ///< rad/s per length_unit
  /// Mechanical damping during readout, same dissipator as in the cooling model.
  std::optional<std::pair<BathParams, DoubleWellParams>> mechanical_bath;
};

/// Evenly spaced samples over `periods` oscillations of sin^2(Omega t).
inline std::vector<double> rabi_time_grid(double rabi, int points = 80, double periods = 3.0) {
  require(rabi > 0.0 && points >= 2, ErrorKind::InvalidArgument, "time grid needs rabi > 0 and 2 points");
  std::vector<double> t(static_cast<std::size_t>(points));
  const double end = periods * constants::pi / rabi;
  for (int i = 0; i < points; ++i) t[static_cast<std::size_t>(i)] = end * i / (points - 1);
  return t;
}

namespace detail {

inline void require_measurable(const MechanicalSpectrum& spec, int j, int k) {
  const int n = spec.n_levels();
  require(j >= 0 && k >= 0 && j < n && k < n && j != k, ErrorKind::InvalidArgument,
          "target transition out of range");
  if (std::abs(spec.x_elements(j, k)) == 0.0 || spec.parities[j] == spec.parities[k]) {
    fail(ErrorKind::InvalidArgument, "x_" + std::to_string(j) + std::to_string(k) +
                                         " vanishes; the element is not measurable");
  }
}

// Joint generator on (mechanics x qubit), qubit index 0 = g, 1 = e, in the
// frame where the qubit splitting equals delta_jk (resonant drive).
inline Generator readout_generator(const ReadoutModel& m, int j, int k) {
  const MechanicalSpectrum& spec = m.spectrum;
  const int n = spec.n_levels();
  const std::vector<int> dims{n, 2};
  const MatrixXd xd = spec.x_dimensionless();

  MatrixXc h_mech = MatrixXc::Zero(n, n);
  for (int a = 0; a < n; ++a) h_mech(a, a) = spec.delta(a, 0);
  MatrixXc h_q = MatrixXc::Zero(2, 2);
  h_q(1, 1) = spec.delta(j, k);
  SparseC sigma_minus(2, 2);
  sigma_minus.insert(0, 1) = 1.0;
  MatrixXc sz = MatrixXc::Zero(2, 2);
  sz(0, 0) = 1.0;
  sz(1, 1) = -1.0;

  // J x_jk sigma^- |j><k| + h.c.
  SparseC jk(n, n);
  jk.insert(j, k) = 1.0;
  const SparseC coupling = cplx(m.J * xd(j, k)) * kron(jk, sigma_minus);
  SparseC h = lift(to_sparse(h_mech), dims, 0) + lift(to_sparse(h_q), dims, 1) + coupling +
              SparseC(coupling.adjoint());
  Generator gen = commutator(h, cplx(0.0, -1.0));
  if (m.qubit.gamma_q > 0.0)
    for (auto& t : lift(lindblad_dissipator(sigma_minus, m.qubit.gamma_q), dims, 1)) gen.push_back(t);
  if (m.qubit.dephasing() > 0.0)
    for (auto& t : lift(lindblad_dissipator(to_sparse(sz), m.qubit.dephasing()), dims, 1)) gen.push_back(t);
  if (m.mechanical_bath) {
    const AOperator a = build_a_operator(spec, m.mechanical_bath->first, m.mechanical_bath->second);
    for (auto& t : lift(mechanical_dissipator(a, xd), dims, 0)) gen.push_back(t);
  }
  return gen;
}

inline MatrixXc qubit_state(QubitPreparation p, double phi) {
  MatrixXc q = MatrixXc::Zero(2, 2);
  switch (p) {
    case QubitPreparation::ground: q(0, 0) = 1.0; break;
    case QubitPreparation::excited: q(1, 1) = 1.0; break;
    case QubitPreparation::superposition: {
      VectorXc v(2);
      v << 1.0, std::polar(1.0, phi);
      q = 0.5 * v * v.adjoint();
      break;
    }
  }
  return q;
}

}  // namespace detail

/// Replace exact probabilities by binomial frequencies of `shots` draws per sample.
inline ReadoutTrace sample_shots(ReadoutTrace trace, int shots, std::uint64_t seed) {
  require(shots > 0, ErrorKind::InvalidArgument, "shots must be positive");
  std::mt19937_64 rng(seed);
  for (double& p : trace.probabilities) {
    std::binomial_distribution<int> draw(shots, std::clamp(p, 0.0, 1.0));
    p = static_cast<double>(draw(rng)) / shots;
  }
  trace.protocol.shots = shots;
  trace.protocol.seed = seed;
  return trace;
}

/// Evolve |qubit><qubit| (x) rho_m under the readout master equation and
/// record the qubit probability at the protocol's sample times.  Propagators
/// are exact matrix exponentials of the (small) joint generator.
inline ReadoutTrace simulate_readout(const MatrixXc& rho_m, const ReadoutModel& model,
                                     const TomographyProtocol& protocol) {
  model.qubit.validate();
  const int n = model.spectrum.n_levels();
  require(rho_m.rows() == n && rho_m.cols() == n, ErrorKind::DimensionMismatch,
          "mechanical state does not match the spectrum");
  detail::require_measurable(model.spectrum, protocol.j, protocol.k);
  require(std::is_sorted(protocol.times.begin(), protocol.times.end()) &&
              (protocol.times.empty() || protocol.times.front() >= 0.0),
          ErrorKind::InvalidArgument, "sample times must be ascending and non-negative");

  const Eigen::Index d = 2 * n;
  const MatrixXc l = MatrixXc(superoperator(detail::readout_generator(model, protocol.j, protocol.k), d));
  MatrixXc rho = Eigen::kroneckerProduct(rho_m, detail::qubit_state(protocol.preparation, protocol.phi)).eval();
  VectorXc v = vectorize(rho);

  ReadoutTrace out;
  out.protocol = protocol;
  out.rabi_frequency = std::abs(model.J * model.spectrum.x_dimensionless()(protocol.j, protocol.k));
  const int q_index = protocol.records_ground() ? 0 : 1;
  double t = 0.0;
  double cached_dt = -1.0;
  MatrixXc prop;
  for (double ts : protocol.times) {
    const double dt = ts - t;
    if (dt > 0.0) {
      if (std::abs(dt - cached_dt) > 1e-12 * std::max(dt, cached_dt)) {
        prop = (l * dt).exp();
        cached_dt = dt;
      }
      v = prop * v;
      t = ts;
    }
    double p = 0.0;
    for (int a = 0; a < n; ++a) {
      const Eigen::Index idx = 2 * a + q_index;
      p += v(idx * d + idx).real();
    }
    out.probabilities.push_back(p);
  }
  if (protocol.shots > 0) return sample_shots(out, protocol.shots, protocol.seed);
  return out;
}

// ---------------------------------------------------------------------------
// Extraction

struct FitResult {
  double amplitude = 0.0;  ///< coefficient of the target basis function
  double amplitude_stderr = 0.0;
  double envelope_rate = 0.0;  ///< 1/s
  double offset = 0.0;
  double residual_rms = 0.0;
  double frequency = 0.0;  ///< rad/s used in the model
};

namespace detail {

// y ~ known(t) e^{-G t} + amplitude * shape(t) e^{-G t} + background, linear in
// amplitude and background for fixed G; G minimized by Brent.
template <typename Shape, typename Known>
FitResult envelope_fit(const std::vector<double>& t, const std::vector<double>& y, Shape shape,
                       Known known, int background_terms) {
  const Eigen::Index m = static_cast<Eigen::Index>(t.size());
  const int p = 1 + background_terms;
  require(m > p + 1, ErrorKind::FitDegenerate, "too few samples for the fit");
  const auto [ymin, ymax] = std::minmax_element(y.begin(), y.end());
  if (*ymax - *ymin < 1e-12) fail(ErrorKind::FitDegenerate, "readout trace is flat");
  const double span = t.back() - t.front();

  struct Solve {
    VectorXd coef;
    double sse;
    MatrixXd design;
  };
  auto solve = [&](double g) {
    MatrixXd a(m, p);
    VectorXd b(m);
    for (Eigen::Index i = 0; i < m; ++i) {
      const double ti = t[static_cast<std::size_t>(i)];
      const double env = std::exp(-g * ti);
      a(i, 0) = shape(ti) * env;
      if (background_terms >= 1) a(i, 1) = 1.0;
      if (background_terms >= 2) a(i, 2) = ti / span;
      b(i) = y[static_cast<std::size_t>(i)] - known(ti) * env;
    }
    VectorXd c = a.colPivHouseholderQr().solve(b);
    return Solve{c, (a * c - b).squaredNorm(), a};
  };
  const double g_max = 20.0 / span;
  const auto best = boost::math::tools::brent_find_minima([&](double g) { return solve(g).sse; }, 0.0, g_max, 40);
  const Solve s = solve(best.first);
  FitResult r;
  r.amplitude = s.coef(0);
  r.envelope_rate = best.first;
  r.offset = background_terms >= 1 ? s.coef(1) : 0.0;
  r.residual_rms = std::sqrt(s.sse / static_cast<double>(m));
  const double dof = static_cast<double>(m - p - 1);
  const MatrixXd cov = (s.design.transpose() * s.design).inverse() * (s.sse / dof);
  r.amplitude_stderr = std::sqrt(std::max(0.0, cov(0, 0)));
  return r;
}

}  // namespace detail

struct ExtractionOptions {
  /// Constant (1) or constant plus linear drift (2) background terms for runs
  /// whose recorded level is also fed by qubit decay.
  int background_terms = 2;
  bool check_frequency = true;  ///< free-frequency diagnostic fit
  double frequency_tolerance = 0.1;
};

struct ElementEstimate {
  double value = 0.0;
  double stderr_ = 0.0;
  FitResult fit;
};

struct ExtractionResult {
  std::map<int, ElementEstimate> diagonal;  ///< P_jj
  std::map<std::pair<int, int>, cplx> coherence;      ///< P_jk, j > k
  std::map<std::pair<int, int>, cplx> coherence_stderr;
  std::vector<std::string> clip_events;
  std::vector<std::string> warnings;
  bool low_confidence = false;
};

/// Fitted oscillation frequency with all parameters free (diagnostic).
inline double free_frequency(const ReadoutTrace& tr) {
  const double w0 = tr.rabi_frequency;
  auto sse = [&](double w) {
    return detail::envelope_fit(tr.protocol.times, tr.probabilities,
                                [&](double t) { return std::pow(std::sin(w * t), 2); },
                                [](double) { return 0.0; }, 2)
        .residual_rms;
  };
  double best_w = w0;
  double best = sse(w0);
  for (int i = 0; i <= 60; ++i) {
    const double w = w0 * (0.5 + i / 60.0);
    const double v = sse(w);
    if (v < best) {
      best = v;
      best_w = w;
    }
  }
  const auto r = boost::math::tools::brent_find_minima(sse, best_w * 0.97, best_w * 1.03, 40);
  return r.first;
}

/// Estimate density-matrix elements from readout traces.  Diagonal runs
/// (ground preparation on (j, j-1), excited preparation on (1, 0) for P_00)
/// are processed first; superposition runs then give Im P_jk (phi = 0) or
/// Re P_jk (phi = pi/2) with the fitted diagonals as known terms.
inline ExtractionResult extract_elements(const std::vector<ReadoutTrace>& traces,
                                         const MechanicalSpectrum& spec, const QubitSpec& qubit,
                                         const ExtractionOptions& opt = {}) {
  ExtractionResult out;
  auto check = [&](const ReadoutTrace& tr) {
    detail::require_measurable(spec, tr.protocol.j, tr.protocol.k);
    if (tr.rabi_frequency / qubit.inverse_t2() < 1.0) out.low_confidence = true;
    if (opt.check_frequency) {
      const double w = free_frequency(tr);
      if (std::abs(w - tr.rabi_frequency) > opt.frequency_tolerance * tr.rabi_frequency) {
        fail(ErrorKind::FrequencyMismatch, "fitted Rabi frequency " + std::to_string(w) +
                                               " rad/s differs from J|x_jk| = " +
                                               std::to_string(tr.rabi_frequency));
      }
    }
    // Resolution: qubit linewidth against neighbouring transitions.
    const double target = spec.delta(tr.protocol.j, tr.protocol.k);
    for (int a = 0; a < spec.n_levels(); ++a)
      for (int b = 0; b < a; ++b) {
        if (a == tr.protocol.j && b == tr.protocol.k) continue;
        if (spec.parities[a] == spec.parities[b]) continue;
        if (std::abs(spec.delta(a, b) - target) < qubit.gamma_q) {
          out.warnings.push_back("transition " + std::to_string(a) + "-" + std::to_string(b) +
                                 " lies within gamma_q of the target");
        }
      }
  };
  auto clip = [&](int j, double v) {
    if (v < 0.0 || v > 1.0) {
      out.clip_events.push_back("P_" + std::to_string(j) + std::to_string(j) + " = " + std::to_string(v));
      return std::clamp(v, 0.0, 1.0);
    }
    return v;
  };

  for (const auto& tr : traces) {
    const auto& p = tr.protocol;
    if (p.preparation == QubitPreparation::superposition) continue;
    check(tr);
    const double w = tr.rabi_frequency;
    auto shape = [&](double t) { return std::pow(std::sin(w * t), 2); };
    auto none = [](double) { return 0.0; };
    const int level = p.preparation == QubitPreparation::ground ? p.j : p.k;
    // An excited preparation is also fed by qubit decay; a ground one is not.
    const int bg = p.preparation == QubitPreparation::excited ? opt.background_terms : 0;
    ElementEstimate e;
    e.fit = detail::envelope_fit(p.times, tr.probabilities, shape, none, bg);
    e.value = clip(level, e.fit.amplitude);
    e.stderr_ = e.fit.amplitude_stderr;
    out.diagonal[level] = e;
  }

  for (const auto& tr : traces) {
    const auto& p = tr.protocol;
    if (p.preparation != QubitPreparation::superposition) continue;
    check(tr);
    auto pj = out.diagonal.find(p.j);
    auto pk = out.diagonal.find(p.k);
    if (pj == out.diagonal.end() || pk == out.diagonal.end()) {
      fail(ErrorKind::InvalidArgument, "coherence run needs both diagonal estimates first");
    }
    const double w = tr.rabi_frequency;
    const double pjj = pj->second.value;
    const double pkk = pk->second.value;
    auto known = [&](double t) {
      const double s = std::sin(w * t);
      const double c = std::cos(w * t);
      return 0.5 * (pkk * c * c + pjj * s * s);
    };
    auto shape = [&](double t) { return std::sin(w * t) * std::cos(w * t); };
    const FitResult f = detail::envelope_fit(p.times, tr.probabilities, shape, known, opt.background_terms);
    // Coefficient of sin cos is Im(P_jk e^{i(phi_jk - phi)}): the prepared
    // qubit coherence rho_ge carries e^{-i phi}.
    const double q = f.amplitude;
    const double phase = spec.phases(p.j, p.k) - p.phi;
    auto& z = out.coherence[{p.j, p.k}];
    auto& dz = out.coherence_stderr[{p.j, p.k}];
    const double c = std::cos(phase);
    const double s = std::sin(phase);
    // Im(P e^{i theta}) = Im P cos(theta) + Re P sin(theta)
    if (std::abs(c) >= std::abs(s)) {
      z = cplx(z.real(), q / c);
      dz = cplx(dz.real(), f.amplitude_stderr / std::abs(c));
    } else {
      z = cplx(q / s, z.imag());
      dz = cplx(f.amplitude_stderr / std::abs(s), dz.imag());
    }
  }
  return out;
}

/// Protocol set covering P_00..P_{n-1,n-1} and the listed coherences.
inline std::vector<TomographyProtocol> standard_protocols(const ReadoutModel& model, int n_diagonal,
                                                          const std::vector<std::pair<int, int>>& coherences,
                                                          int points = 80, int shots = 0,
                                                          std::uint64_t seed = 0) {
  const MatrixXd xd = model.spectrum.x_dimensionless();
  std::vector<TomographyProtocol> out;
  auto add = [&](int j, int k, QubitPreparation prep, double phi) {
    TomographyProtocol p;
    p.j = j;
    p.k = k;
    p.preparation = prep;
    p.phi = phi;
    p.times = rabi_time_grid(std::abs(model.J * xd(j, k)), points);
    p.shots = shots;
    p.seed = seed + out.size();
    out.push_back(p);
  };
  add(1, 0, QubitPreparation::excited, 0.0);
  for (int j = 1; j < n_diagonal; ++j) add(j, j - 1, QubitPreparation::ground, 0.0);
  for (const auto& [j, k] : coherences) {
    detail::require_measurable(model.spectrum, j, k);
    add(j, k, QubitPreparation::superposition, 0.0);
    add(j, k, QubitPreparation::superposition, constants::pi / 2.0);
  }
  return out;
}

}  // namespace dwcool
