// Command-line driver.  Exit codes: 0 success, 1 numerical failure (or a
// failed reproduction check), 2 configuration or usage error.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dwcool/config.hpp"
#include "manifest.hpp"

#ifndef DWCOOL_VERSION
#define DWCOOL_VERSION "unknown"
#endif

namespace {

using namespace dwcool;
using cli::Csv;
using cli::num;
using cli::json;

struct Options {
  std::string config_path;
  std::string out_dir = "out";
  int threads = 0;
  std::uint64_t seed = 0;
  double tol = 0.0;
};

struct Context {
  RunConfig config;
  Options opt;
  int threads = 1;
  cli::StageLog log;
  cli::OutputSet out;
  json diagnostics = json::object();
  bool criterion_failed = false;
};

void log_line(const std::string& level, const std::string& msg, json extra = json::object()) {
  json j{{"level", level}, {"msg", msg}};
  for (auto it = extra.begin(); it != extra.end(); ++it) j[it.key()] = it.value();
  std::cerr << j.dump() << "\n";
}

json matrix_json(const MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
    rows.push_back(r);
  }
  return rows;
}

json double_well_json(const DoubleWellParams& p) {
  json j{{"mass_kg", p.mass},
         {"nu_J_per_m2", p.nu},
         {"beta_J_per_m4", p.beta},
         {"omega_harmonic_rad_per_s", p.omega_harmonic},
         {"nu_over_m_omega2", p.omega_harmonic > 0.0 ? p.nu / (p.mass * p.omega_harmonic * p.omega_harmonic) : 0.0}};
  if (p.nu > 0.0) {
    const WellGeometry g = well_geometry(p);
    j["x0_m"] = g.x0;
    j["omega0_rad_per_s"] = g.omega0;
    j["x_zpm_m"] = g.x_zpm;
    j["barrier_J"] = g.barrier_height;
    j["two_x0_over_x_zpm"] = 2.0 * g.x0 / g.x_zpm;
    j["barrier_over_hbar_omega0"] = g.barrier_height / (constants::hbar * g.omega0);
  }
  return j;
}

// ---------------------------------------------------------------------------
// membrane-report

json membrane_json(const PhysicalReport& r) {
  const ModalModel& m = r.modes;
  const MembraneSpec& s = m.membrane;
  const double a = s.radius;
  const double physical_mass = s.mass_density * constants::pi * a * a;
  const double freq_scale = m.regime == MembraneRegime::tensioned
                                ? std::sqrt(s.tension / s.mass_density) / a
                                : std::sqrt(s.flexural_rigidity() / s.mass_density) / (a * a);
  json modes = json::array();
  for (const auto& md : m.modes) {
    modes.push_back({{"k", md.k},
                     {"radial_index", md.radial_index},
                     {"lambda", md.lambda},
                     {"amplitude", md.amplitude},
                     {"plate_ratio", md.plate_ratio},
                     {"effective_mass_kg", md.effective_mass},
                     {"mass_ratio", md.effective_mass / physical_mass},
                     {"stiffness_N_per_m", md.stiffness},
                     {"frequency_rad_per_s", md.frequency},
                     {"frequency_Hz", md.frequency / constants::two_pi},
                     {"frequency_prefactor", md.frequency / freq_scale},
                     {"separation_frequency_rad_per_s", md.separation_frequency},
                     {"duffing_J_per_m4", md.duffing},
                     {"duffing_prefactor", md.duffing * a * a / s.stretching_modulus()}});
  }
  json j{{"regime", to_string(m.regime)},
         {"membrane",
          {{"radius_m", a},
           {"thickness_m", s.thickness},
           {"young_Pa", s.young},
           {"poisson", s.poisson},
           {"mass_density_kg_per_m2", s.mass_density},
           {"tension_N_per_m", s.tension},
           {"physical_mass_kg", physical_mass}}},
         {"modes", modes},
         {"overlap", matrix_json(m.overlap)},
         {"electrode",
          {{"bV1_V_m", r.electrode.bV1}, {"distance_m", r.electrode.distance}, {"gap_m", r.electrode.gap}}},
         {"alpha",
          {{"alpha1_N", r.coeffs.alpha[0]},
           {"alpha2_J_per_m2", r.coeffs.alpha[1]},
           {"alpha3_J_per_m3", r.coeffs.alpha[2]},
           {"alpha4_J_per_m4", r.coeffs.alpha[3]}}},
         {"alpha2_cross", r.coeffs.cross},
         {"alpha2_diagonal", r.coeffs.diagonal}};
  const auto& f = m.modes.front();
  j["alpha2_over_half_m_omega2"] = r.coeffs.alpha[1] / (0.5 * f.effective_mass * f.frequency * f.frequency);
  if (r.double_well) {
    j["double_well"] = double_well_json(*r.double_well);
    j["negligibility"] = {{"alpha4_over_beta", std::abs(r.coeffs.alpha[3]) / r.double_well->beta}};
  }
  if (r.audit) {
    const auto& au = *r.audit;
    j["audit"] = {{"Lambda", au.lambda},
                  {"Upsilon", au.upsilon},
                  {"softened_rad_per_s", au.softened},
                  {"omega0_rad_per_s", au.omega0},
                  {"x_zpm_m", au.x_zpm},
                  {"alpha3_zero_point_J_per_m2", au.alpha3_zero_point},
                  {"half_nu_J_per_m2", au.half_nu},
                  {"quartic_zero_point_J_per_m2", au.quartic_zero_point},
                  {"alpha3_over_half_nu", au.alpha3_zero_point / au.half_nu}};
  }
  j["warnings"] = r.warnings;
  return j;
}

int cmd_membrane(Context& cx) {
  cx.log.begin("membrane");
  const PhysicalReport r = run_physical_chain(cx.config.physical, cx.config.bath.temperature);
  cx.out.add_json("membrane_report.json", membrane_json(r));
  cx.log.end({{"modes", r.modes.modes.size()}});
  for (const auto& w : r.warnings) log_line("warning", w);
  return 0;
}

// ---------------------------------------------------------------------------
// spectrum

json spectrum_json(const MechanicalSpectrum& s, const DoubleWellParams& dw, const RunConfig& c) {
  const VectorXd f = s.frequencies();
  json levels = json::array();
  for (int n = 0; n < s.n_levels(); ++n)
    levels.push_back({{"n", n},
                      {"energy_J", s.energies[n]},
                      {"frequency_rad_per_s", f(n)},
                      {"parity", s.parities[n]}});
  const double d10 = s.delta(1, 0);
  double kappa = c.cavities.empty() ? fixtures::kappa_over_delta10 * d10
                                    : (c.cavities.front().kappa ? *c.cavities.front().kappa
                                                                : c.cavities.front().kappa_over_delta10 * d10);
  json ratios = json::object();
  for (auto [m, n] : {std::pair{1, 0}, {2, 1}, {3, 2}, {3, 0}, {2, 0}})
    if (m < s.n_levels()) ratios["r" + std::to_string(m) + std::to_string(n)] = resonant_cooling_ratio(s, m, n, kappa);
  return {{"double_well", double_well_json(dw)},
          {"omega_unit_rad_per_s", s.omega_unit},
          {"length_unit_m", s.length_unit},
          {"basis_size", s.basis_size},
          {"levels", levels},
          {"levels_below_barrier", levels_below_barrier(s)},
          {"kappa_rad_per_s", kappa},
          {"resonant_cooling_ratios", ratios}};
}

std::string x_elements_csv(const MechanicalSpectrum& s) {
  Csv csv({"m", "n", "x_mn_m", "x_mn_over_x_zpm", "delta_mn_rad_per_s"});
  for (int m = 0; m < s.n_levels(); ++m)
    for (int n = 0; n < s.n_levels(); ++n)
      csv.row({num(m), num(n), num(s.x_elements(m, n).real()), num(s.x_elements(m, n).real() / s.length_unit),
               num(s.delta(m, n))});
  return csv.str();
}

int cmd_spectrum(Context& cx) {
  cx.log.begin("spectrum");
  const DoubleWellParams dw = resolve_double_well(cx.config);
  const MechanicalSpectrum s = diagonalize_double_well(dw, cx.config.basis);
  cx.out.add_json("spectrum.json", spectrum_json(s, dw, cx.config));
  cx.out.add("x_elements.csv", x_elements_csv(s));
  cx.log.end({{"levels", s.n_levels()}});
  return 0;
}

// ---------------------------------------------------------------------------
// steady

struct SteadyOutcome {
  MatrixXc rho;
  json report;
};

SteadyOutcome run_steady(Context& cx, const SystemSpec& sys) {
  cx.log.begin("steady");
  const double tol = cx.opt.tol > 0.0 ? cx.opt.tol : cx.config.steady.tol;
  const Liouvillian l = assemble_liouvillian(sys);
  const SteadyStateResult r = solve_steady(l, cx.config.steady.method, tol);
  const MatrixXc& p = r.rho_mech;
  json pops = json::array();
  for (Eigen::Index n = 0; n < p.rows(); ++n) pops.push_back(p(n, n).real());
  json diag{{"method", r.diagnostics.method},
            {"iterations", r.diagnostics.iterations},
            {"residual", r.residual},
            {"trace_error", r.trace_error},
            {"min_eigenvalue", r.min_eigenvalue},
            {"trace_correction", r.diagnostics.trace_correction},
            {"hermiticity_correction", r.diagnostics.hermiticity_correction},
            {"dims", l.dims},
            {"hilbert_dim", l.hilbert_dim},
            {"assembled", l.assembled},
            {"nonzeros", l.nonzeros},
            {"tol", tol}};
  json cav = json::array();
  for (const auto& c : sys.cavities)
    cav.push_back({{"detuning_rad_per_s", c.detuning},
                   {"kappa_rad_per_s", c.kappa},
                   {"g_rad_per_s", c.coupling(sys.spectrum, sys.params)},
                   {"nbar_c", c.nbar_c},
                   {"fock_truncation", c.fock_truncation}});
  SteadyOutcome o;
  o.rho = p;
  o.report = {{"P00", p(0, 0).real()},
              {"populations", pops},
              {"P_real", matrix_json(p.real())},
              {"P_imag", matrix_json(p.imag())},
              {"cavities", cav},
              {"diagnostics", diag}};
  cx.diagnostics["steady"] = diag;
  cx.diagnostics["steady"]["wall_seconds"] = r.diagnostics.wall_seconds;
  cx.log.end({{"P00", p(0, 0).real()}, {"method", r.diagnostics.method}, {"iterations", r.diagnostics.iterations}});
  return o;
}

std::string populations_csv(const MatrixXc& p) {
  Csv csv({"n", "P_nn"});
  for (Eigen::Index n = 0; n < p.rows(); ++n) csv.row({num(static_cast<long long>(n)), num(p(n, n).real())});
  return csv.str();
}

std::string heatmap_csv(const MatrixXc& p) {
  Csv csv({"m", "n", "abs_P_mn"});
  for (Eigen::Index m = 0; m < p.rows(); ++m)
    for (Eigen::Index n = 0; n < p.cols(); ++n)
      csv.row({num(static_cast<long long>(m)), num(static_cast<long long>(n)), num(std::abs(p(m, n)))});
  return csv.str();
}

int cmd_steady(Context& cx) {
  const DoubleWellParams dw = resolve_double_well(cx.config);
  const SystemSpec sys = build_system(cx.config, dw);
  const SteadyOutcome o = run_steady(cx, sys);
  cx.out.add_json("steady_state.json", o.report);
  cx.out.add("populations.csv", populations_csv(o.rho));
  cx.out.add("heatmap.csv", heatmap_csv(o.rho));
  return 0;
}

// ---------------------------------------------------------------------------
// cool-opt

int cmd_cool_opt(Context& cx) {
  const RunConfig& c = cx.config;
  if (c.cavities.empty()) fail(ErrorKind::ConfigError, "cool-opt needs at least one cavity");
  const DoubleWellParams dw = resolve_double_well(c);
  const SystemSpec sys = build_system(c, dw);
  DriveSearchSpace space;
  for (const auto& cav : c.cavities) {
    const double s = std::max(cav.nbar_c, 1.0);
    space.start.push_back(s);
  }
  const std::size_t nc = c.cavities.size();
  space.lower = c.cool_opt.lower.empty() ? std::vector<double>(nc) : c.cool_opt.lower;
  space.upper = c.cool_opt.upper.empty() ? std::vector<double>(nc) : c.cool_opt.upper;
  if (space.lower.size() != nc || space.upper.size() != nc)
    fail(ErrorKind::ConfigError, "cool_opt.nbar_lower/nbar_upper need one entry per cavity");
  for (std::size_t i = 0; i < nc; ++i) {
    if (c.cool_opt.lower.empty()) space.lower[i] = space.start[i] / 10.0;
    if (c.cool_opt.upper.empty()) space.upper[i] = space.start[i] * 10.0;
    space.start[i] = std::clamp(space.start[i], space.lower[i], space.upper[i]);
  }
  space.grid_points = c.cool_opt.grid_points;
  space.initial_factor = c.cool_opt.initial_factor;
  space.final_factor = c.cool_opt.final_factor;
  space.budget = c.cool_opt.budget;
  space.threads = cx.threads;
  try {
    space.validate(nc);
  } catch (const Error& e) {
    fail(ErrorKind::ConfigError, std::string("cool_opt: ") + e.what());
  }
  const double tol = cx.opt.tol > 0.0 ? cx.opt.tol : c.steady.tol;
  const SteadyMethod method = c.steady.method;
  cx.log.begin("cool-opt");
  const DriveOptimum best = optimize_drive(sys, space, [&](const SystemSpec& s) {
    return solve_steady(assemble_liouvillian(s), method, tol).rho_mech(0, 0).real();
  });
  std::vector<std::string> header{"evaluation"};
  for (std::size_t i = 0; i < nc; ++i) header.push_back("nbar_c" + std::to_string(i));
  header.push_back("P00");
  header.push_back("best_so_far");
  Csv trace(header);
  Csv timing({"evaluation", "wall_seconds"});
  for (const auto& e : best.trace) {
    std::vector<std::string> row{num(e.index)};
    for (double v : e.nbar) row.push_back(num(v));
    row.push_back(num(e.p00));
    row.push_back(num(e.best_so_far));
    trace.row(row);
    timing.row({num(e.index), num(e.wall_seconds)});
  }
  cx.out.add("cool_opt_trace.csv", trace.str());
  cx.out.add("cool_opt_timing.csv", timing.str());
  cx.out.timing_files.push_back("cool_opt_timing.csv");
  cx.out.add_json("cool_opt.json", {{"best_nbar_c", best.nbar},
                                    {"best_P00", best.p00},
                                    {"start_nbar_c", space.start},
                                    {"lower", space.lower},
                                    {"upper", space.upper},
                                    {"evaluations", best.trace.size()},
                                    {"cache_hits", best.cache_hits},
                                    {"budget", space.budget},
                                    {"budget_exhausted", best.budget_exhausted}});
  cx.log.end({{"best_P00", best.p00}, {"evaluations", best.trace.size()}});
  if (best.budget_exhausted) log_line("warning", "evaluation budget exhausted; best point so far reported");
  return 0;
}

// ---------------------------------------------------------------------------
// csl-scan

int cmd_csl_scan(Context& cx) {
  const RunConfig& c = cx.config;
  const DoubleWellParams dw = resolve_double_well(c);
  const SystemSpec sys = build_system(c, dw, c.csl.fock_truncation);
  CSLSearchOptions opt = c.csl.search;
  if (cx.opt.tol > 0.0) opt.steady_tol = cx.opt.tol;
  cx.log.begin("csl-scan");
  const CSLScan scan = csl_scan(sys, c.csl.lambda_grid, c.csl.sigmas, c.csl.params, opt, cx.threads);
  const int n = sys.spectrum.n_levels();
  std::vector<std::string> header{"lambda_csl_Hz", "sigma", "Q_prime", "D", "detected", "ok"};
  for (int k = 0; k < n; ++k) header.push_back("dP_" + std::to_string(k));
  header.push_back("message");
  Csv csv(header);
  std::size_t failures = 0;
  for (const auto& r : scan.rows) {
    std::vector<std::string> row{num(r.lambda_csl), num(r.sigma), num(r.Q_prime), num(r.distance),
                                 r.detected ? "1" : "0", r.ok ? "1" : "0"};
    for (int k = 0; k < n; ++k)
      row.push_back(static_cast<std::size_t>(k) < r.population_differences.size()
                        ? num(r.population_differences[static_cast<std::size_t>(k)])
                        : "nan");
    std::string msg = r.message;
    std::replace(msg.begin(), msg.end(), '"', '\'');
    row.push_back("\"" + msg + "\"");
    csv.row(row);
    if (!r.ok) ++failures;
  }
  json thresholds = json::array();
  for (std::size_t i = 0; i < scan.sigmas.size(); ++i)
    thresholds.push_back({{"sigma", scan.sigmas[i]},
                          {"lambda_threshold_Hz", std::isnan(scan.thresholds[i]) ? json(nullptr)
                                                                                  : json(scan.thresholds[i])}});
  json warnings = json::array();
  if (const std::string w = csl_validity_warning(dw, c.csl.params); !w.empty()) warnings.push_back(w);
  cx.out.add("csl_scan.csv", csv.str());
  cx.out.add_json("csl_summary.json", {{"r_csl_m", c.csl.params.r_csl},
                                       {"eta", c.csl.params.eta},
                                       {"quality", c.bath.quality},
                                       {"fock_truncation", c.csl.fock_truncation},
                                       {"lambda_grid_Hz", c.csl.lambda_grid},
                                       {"thresholds", thresholds},
                                       {"failed_points", failures},
                                       {"warnings", warnings}});
  cx.log.end({{"points", scan.rows.size()}, {"failed_points", failures}});
  if (failures == scan.rows.size() && !scan.rows.empty())
    fail(ErrorKind::NonConvergence, "every CSL grid point failed");
  return 0;
}

// ---------------------------------------------------------------------------
// tomography

int cmd_tomography(Context& cx) {
  const RunConfig& c = cx.config;
  const DoubleWellParams dw = resolve_double_well(c);
  const SystemSpec sys = build_system(c, dw, c.tomography.fock_truncation);
  SteadyOutcome st = run_steady(cx, sys);
  MatrixXc truth = st.rho;
  for (const auto& p : c.tomography.planted) {
    if (p.j >= truth.rows()) fail(ErrorKind::ConfigError, "tomography.planted: level outside the retained set");
    truth(p.j, p.k) = p.value;
    truth(p.k, p.j) = std::conj(p.value);
  }
  const double lmin = min_eigenvalue(truth);
  if (lmin < -1e-12) log_line("warning", "planted state is not positive semidefinite", {{"min_eigenvalue", lmin}});

  ReadoutModel model;
  model.spectrum = sys.spectrum;
  model.qubit = c.qubit.spec;
  const double x10 = std::abs(sys.spectrum.x_dimensionless()(1, 0));
  model.J = c.qubit.J ? *c.qubit.J : c.qubit.J_x10 / x10;
  if (c.qubit.mechanical_damping) model.mechanical_bath = std::make_pair(c.bath, dw);

  cx.log.begin("tomography");
  const auto protocols = standard_protocols(model, c.tomography.n_diagonal, c.tomography.coherences,
                                            c.tomography.points, c.tomography.shots, cx.opt.seed);
  std::vector<ReadoutTrace> traces;
  Csv csv({"run", "j", "k", "preparation", "phi", "t_s", "probability"});
  for (std::size_t i = 0; i < protocols.size(); ++i) {
    traces.push_back(simulate_readout(truth, model, protocols[i]));
    const auto& p = protocols[i];
    const char* prep = p.preparation == QubitPreparation::ground    ? "ground"
                       : p.preparation == QubitPreparation::excited ? "excited"
                                                                    : "superposition";
    for (std::size_t s = 0; s < p.times.size(); ++s)
      csv.row({num(i), num(p.j), num(p.k), prep, num(p.phi), num(p.times[s]), num(traces.back().probabilities[s])});
  }
  const ExtractionResult ex = extract_elements(traces, sys.spectrum, model.qubit);

  json diag = json::array();
  for (const auto& [level, e] : ex.diagonal)
    diag.push_back({{"level", level},
                    {"truth", truth(level, level).real()},
                    {"estimate", e.value},
                    {"stderr", e.stderr_},
                    {"error", e.value - truth(level, level).real()},
                    {"envelope_rate_per_s", e.fit.envelope_rate},
                    {"residual_rms", e.fit.residual_rms}});
  json coh = json::array();
  for (const auto& [jk, z] : ex.coherence) {
    const cplx t = truth(jk.first, jk.second);
    const cplx dz = ex.coherence_stderr.at(jk);
    coh.push_back({{"j", jk.first},
                   {"k", jk.second},
                   {"truth_re", t.real()},
                   {"truth_im", t.imag()},
                   {"estimate_re", z.real()},
                   {"estimate_im", z.imag()},
                   {"stderr_re", dz.real()},
                   {"stderr_im", dz.imag()},
                   {"abs_error", std::abs(z - t)}});
  }
  std::vector<std::string> warnings = ex.warnings;
  if (model.qubit.delta_c != 0.0 || model.qubit.delta_q != 0.0)
    for (const auto& w : dispersive_warnings(model.qubit, 0.0, well_geometry(dw).omega0)) warnings.push_back(w);
  cx.out.add("tomography_traces.csv", csv.str());
  cx.out.add_json("tomography.json", {{"J_rad_per_s", model.J},
                                      {"rabi_10_rad_per_s", model.J * x10},
                                      {"inverse_T2_rad_per_s", model.qubit.inverse_t2()},
                                      {"shots", c.tomography.shots},
                                      {"seed", cx.opt.seed},
                                      {"diagonal", diag},
                                      {"coherences", coh},
                                      {"clip_events", ex.clip_events},
                                      {"low_confidence", ex.low_confidence},
                                      {"warnings", warnings}});
  cx.log.end({{"runs", protocols.size()}});
  return 0;
}

// ---------------------------------------------------------------------------
// reproduce-paper

int cmd_reproduce(Context& cx) {
  const RunConfig& c = cx.config;
  cx.log.begin("membrane");
  try {
    const PhysicalReport r = run_physical_chain(c.physical, c.bath.temperature);
    cx.out.add_json("membrane_report.json", membrane_json(r));
    cx.log.end();
  } catch (const Error& e) {
    // The membrane chain is informational here; the cooling run uses the
    // configured double well.
    cx.log.end({{"error", e.what()}});
    log_line("warning", std::string("membrane chain failed: ") + e.what());
  }
  const DoubleWellParams dw = resolve_double_well(c);
  cx.log.begin("spectrum");
  const SystemSpec sys = build_system(c, dw);
  cx.out.add_json("spectrum.json", spectrum_json(sys.spectrum, dw, c));
  cx.out.add("x_elements.csv", x_elements_csv(sys.spectrum));
  cx.log.end();
  const SteadyOutcome o = run_steady(cx, sys);
  cx.out.add_json("steady_state.json", o.report);
  cx.out.add("populations.csv", populations_csv(o.rho));
  cx.out.add("heatmap.csv", heatmap_csv(o.rho));
  const double p00 = o.rho(0, 0).real();
  const bool pass = std::abs(p00 - c.reproduce.p00_target) <= c.reproduce.p00_tolerance;
  cx.out.add_json("reproduce.json", {{"P00", p00},
                                     {"target", c.reproduce.p00_target},
                                     {"tolerance", c.reproduce.p00_tolerance},
                                     {"pass", pass}});
  log_line(pass ? "info" : "error", "ground-state population check",
           {{"P00", p00}, {"target", c.reproduce.p00_target}, {"pass", pass}});
  cx.criterion_failed = !pass;
  return pass ? 0 : 1;
}

// ---------------------------------------------------------------------------

int resolve_threads(const CLI::App& app, int flag) {
  if (app.count("--threads") > 0) {
    if (flag < 1) fail(ErrorKind::ConfigError, "--threads must be at least 1");
    return flag;
  }
  if (const char* env = std::getenv("DWCOOL_THREADS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || v < 1 || v > 1024)
      fail(ErrorKind::ConfigError, "DWCOOL_THREADS must be a positive integer");
    return static_cast<int>(v);
  }
  return 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Double-well membrane sideband cooling toolkit"};
  app.require_subcommand(1);
  app.fallthrough();  // global flags may follow the subcommand
  app.set_version_flag("--version", DWCOOL_VERSION);
  Options opt;
  app.add_option("--config", opt.config_path, "JSON configuration (defaults to the built-in reference)")
      ->check(CLI::ExistingFile);
  app.add_option("--out", opt.out_dir, "output directory")->capture_default_str();
  app.add_option("--threads", opt.threads, "worker threads (overrides DWCOOL_THREADS)");
  app.add_option("--seed", opt.seed, "random seed for shot noise")->capture_default_str();
  app.add_option("--tol", opt.tol, "steady-state solver tolerance (overrides the config)")
      ->check(CLI::PositiveNumber);

  using Handler = int (*)(Context&);
  const std::vector<std::tuple<std::string, std::string, Handler>> commands{
      {"membrane-report", "membrane modes, electrostatics and coupling audit", cmd_membrane},
      {"spectrum", "double-well spectrum and position matrix elements", cmd_spectrum},
      {"steady", "steady state of mechanics plus cavities", cmd_steady},
      {"cool-opt", "optimize the cavity photon numbers", cmd_cool_opt},
      {"csl-scan", "CSL detectability scan", cmd_csl_scan},
      {"tomography", "qubit readout round trip", cmd_tomography},
      {"reproduce-paper", "reference cooling result with a pass/fail check", cmd_reproduce}};
  for (const auto& [name, help, fn] : commands) app.add_subcommand(name, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  Context cx;
  cx.opt = opt;
  json config_doc = json::object();
  const std::string started = cli::utc_now();
  std::string command;
  Handler handler = nullptr;
  for (const auto& [name, help, fn] : commands)
    if (app.got_subcommand(name)) {
      command = name;
      handler = fn;
    }

  int status = 0;
  try {
    if (!opt.config_path.empty()) {
      std::ifstream f(opt.config_path);
      if (!f) fail(ErrorKind::ConfigError, "cannot read " + opt.config_path);
      std::stringstream ss;
      ss << f.rdbuf();
      try {
        config_doc = json::parse(ss.str());
      } catch (const json::parse_error& e) {
        fail(ErrorKind::ConfigError, std::string("malformed JSON: ") + e.what());
      }
    }
    cx.config = parse_config(config_doc);
    cx.threads = resolve_threads(app, opt.threads);
    log_line("info", "start", {{"command", command}, {"threads", cx.threads}, {"seed", opt.seed}});
    status = handler(cx);
  } catch (const Error& e) {
    const bool config = e.kind() == ErrorKind::ConfigError;
    log_line("error", e.what(), {{"kind", std::string(to_string(e.kind()))}});
    return config ? 2 : 1;
  } catch (const std::exception& e) {
    log_line("error", e.what());
    return 1;
  }

  const std::string canonical = config_doc.dump();
  json manifest{{"tool", "dwcool"},
                {"version", DWCOOL_VERSION},
                {"command", command},
                {"argv", std::vector<std::string>(argv, argv + argc)},
                {"config", config_doc},
                {"config_sha256", cli::sha256_hex(canonical)},
                {"config_source", opt.config_path.empty() ? "built-in defaults" : opt.config_path},
                {"seed", opt.seed},
                {"threads", cx.threads},
                {"tol_override", opt.tol > 0.0 ? json(opt.tol) : json(nullptr)},
                {"started_utc", started},
                {"finished_utc", cli::utc_now()},
                {"status", status == 0 ? "ok" : (cx.criterion_failed ? "check_failed" : "failed")},
                {"exit_code", status},
                {"solver_diagnostics", cx.diagnostics},
                {"stages", cx.log.entries()},
                {"max_rss_kb", cli::max_rss_kb()}};
  try {
    cli::write_outputs(opt.out_dir, cx.out, manifest);
  } catch (const std::exception& e) {
    log_line("error", e.what());
    return 1;
  }
  log_line("info", "done", {{"out", opt.out_dir}, {"files", cx.out.files.size()}, {"exit_code", status}});
  return status;
}
