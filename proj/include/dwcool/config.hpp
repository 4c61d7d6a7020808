#pragma once

// JSON run configuration.  SI units throughout, unit suffixes in key names.
// Every section is optional and falls back to the reference fixture; unknown
// keys are rejected with their full path.

#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cooling.hpp"
#include "csl.hpp"
#include "error.hpp"
#include "fixtures.hpp"
#include "membrane.hpp"
#include "spectrum.hpp"
#include "steadystate.hpp"
#include "tomography.hpp"

namespace dwcool {

using json = nlohmann::json;

struct PhysicalChain {
  MembraneSpec membrane = fixtures::graphene_sheet(true);
  TipElectrodeSpec electrode = fixtures::tip_electrode();
  MembraneRegime regime = MembraneRegime::tensioned;
  int n_modes = 4;
  /// When set, bV1 is tuned so that alpha_2 = ratio * m omega^2 / 2.
  std::optional<double> alpha2_ratio = -1.000134;
};

struct CavityConfig {
  std::optional<double> detuning;                        ///< rad/s
  std::optional<std::pair<int, int>> detuning_transition;  ///< Delta = -delta_mn
  std::optional<double> kappa;                           ///< rad/s
  double kappa_over_delta10 = fixtures::kappa_over_delta10;
  std::optional<double> g;                               ///< rad/s per well zero-point length
  double G0 = fixtures::G0;
  double nbar_c = 0.0;
  int fock_truncation = 3;
};

struct SteadyConfig {
  SteadyMethod method = SteadyMethod::automatic;
  double tol = 1e-10;
};

struct CoolOptConfig {
  std::vector<double> lower;  ///< default start / 10
  std::vector<double> upper;  ///< default start * 10
  int grid_points = 0;
  double initial_factor = 2.0;
  double final_factor = 1.05;
  std::size_t budget = 200;
};

struct CSLConfig {
  CSLParams params;
  std::vector<double> lambda_grid{0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6};
  std::vector<double> sigmas{1e-6, 1e-8, 1e-10};
  CSLSearchOptions search;
  int fock_truncation = 2;  ///< reduced truncation for scans
};

struct QubitConfig {
  QubitSpec spec{constants::two_pi * 50e6, 0.0, 0.0, constants::two_pi * 5e3, -1.0};
  std::optional<double> J;      ///< rad/s per well zero-point length
  double J_x10 = constants::two_pi * 350e3;  ///< used when J is not given: J = J_x10 / |x10|
  bool mechanical_damping = true;
};

struct PlantedCoherence {
  int j = 1;
  int k = 0;
  cplx value{0.0, 0.0};
};

struct TomographyConfig {
  int n_diagonal = 3;
  std::vector<std::pair<int, int>> coherences{{1, 0}};
  std::vector<PlantedCoherence> planted{{1, 0, cplx(0.0, 0.1)}};
  int points = 80;
  int shots = 0;
  int fock_truncation = 2;  ///< truncation of the steady state fed to the readout
};

struct ReproduceConfig {
  double p00_target = 0.79;
  double p00_tolerance = 0.05;
};

struct RunConfig {
  std::optional<DoubleWellParams> double_well = fixtures::main_double_well();
  PhysicalChain physical;
  bool use_physical_chain = false;  ///< derive the double well from `physical`
  BasisSpec basis;
  BathParams bath{fixtures::temperature, fixtures::quality};
  DampingNormalization normalization = DampingNormalization::well;
  std::vector<CavityConfig> cavities;
  SteadyConfig steady;
  CoolOptConfig cool_opt;
  CSLConfig csl;
  QubitConfig qubit;
  TomographyConfig tomography;
  ReproduceConfig reproduce;
};

inline std::vector<CavityConfig> default_cavities() {
  const std::array<std::pair<int, int>, 3> t{{{1, 0}, {3, 0}, {2, 1}}};
  std::vector<CavityConfig> out;
  for (std::size_t i = 0; i < 3; ++i) {
    CavityConfig c;
    c.detuning_transition = t[i];
    c.nbar_c = fixtures::nbar_c[i];
    out.push_back(c);
  }
  return out;
}

inline RunConfig default_config() {
  RunConfig c;
  c.cavities = default_cavities();
  return c;
}

namespace detail {

// Object reader that records consumed keys so leftovers can be rejected.
class ConfigObject {
 public:
  ConfigObject(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) fail(ErrorKind::ConfigError, where() + ": expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json* raw(const std::string& key) {
    used_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    const json* v = raw(key);
    if (!v) return;
    out = convert<T>(*v, child(key));
  }

  template <typename T>
  void read(const std::string& key, std::optional<T>& out) {
    const json* v = raw(key);
    if (!v) return;
    out = convert<T>(*v, child(key));
  }

  ConfigObject object(const std::string& key) {
    const json* v = raw(key);
    return ConfigObject(*v, child(key));
  }

  std::string child(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  std::string where() const { return path_.empty() ? "<root>" : path_; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!used_.count(it.key())) fail(ErrorKind::ConfigError, child(it.key()) + ": unknown key");
  }

  template <typename T>
  static T convert(const json& v, const std::string& path) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) fail(ErrorKind::ConfigError, path + ": expected a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) fail(ErrorKind::ConfigError, path + ": expected an integer");
      if constexpr (std::is_unsigned_v<T>) {
        if (v.get<long long>() < 0) fail(ErrorKind::ConfigError, path + ": expected a non-negative integer");
      }
      return v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) fail(ErrorKind::ConfigError, path + ": expected a number");
      return v.get<T>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) fail(ErrorKind::ConfigError, path + ": expected a string");
      return v.get<std::string>();
    } else if constexpr (std::is_same_v<T, std::pair<int, int>>) {
      if (!v.is_array() || v.size() != 2) fail(ErrorKind::ConfigError, path + ": expected [m, n]");
      return {convert<int>(v[0], path + "[0]"), convert<int>(v[1], path + "[1]")};
    } else {
      // std::vector<U>
      using U = typename T::value_type;
      if (!v.is_array()) fail(ErrorKind::ConfigError, path + ": expected an array");
      T out;
      for (std::size_t i = 0; i < v.size(); ++i) out.push_back(convert<U>(v[i], path + "[" + std::to_string(i) + "]"));
      return out;
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

inline void check(bool ok, const std::string& path, const std::string& what) {
  if (!ok) fail(ErrorKind::ConfigError, path + ": " + what);
}

inline DoubleWellParams parse_double_well(ConfigObject o) {
  DoubleWellParams p;
  p.mass = 0.0;
  o.read("mass_kg", p.mass);
  o.read("nu_J_per_m2", p.nu);
  o.read("beta_J_per_m4", p.beta);
  o.read("omega_harmonic_rad_per_s", p.omega_harmonic);
  o.finish();
  check(p.mass > 0.0, o.child("mass_kg"), "must be positive");
  check(p.beta > 0.0, o.child("beta_J_per_m4"), "must be positive");
  check(p.omega_harmonic >= 0.0, o.child("omega_harmonic_rad_per_s"), "must be non-negative");
  return p;
}

inline void parse_physical(ConfigObject o, PhysicalChain& c) {
  std::string regime = to_string(c.regime);
  o.read("regime", regime);
  check(regime == "tensioned" || regime == "plate", o.child("regime"), "must be tensioned or plate");
  c.regime = regime == "plate" ? MembraneRegime::plate : MembraneRegime::tensioned;
  // The plate regime has no built-in tension unless one is given explicitly.
  if (c.regime == MembraneRegime::plate) c.membrane.tension = 0.0;
  if (o.has("membrane")) {
    auto m = o.object("membrane");
    m.read("radius_m", c.membrane.radius);
    m.read("thickness_m", c.membrane.thickness);
    m.read("young_Pa", c.membrane.young);
    m.read("poisson", c.membrane.poisson);
    m.read("mass_density_kg_per_m2", c.membrane.mass_density);
    std::optional<double> ratio;
    m.read("tension_over_Yh", ratio);
    if (ratio) c.membrane.tension = *ratio * c.membrane.young * c.membrane.thickness;
    m.read("tension_N_per_m", c.membrane.tension);
    m.finish();
    check(c.regime == MembraneRegime::tensioned ? c.membrane.tension > 0.0 : c.membrane.tension == 0.0,
          o.child("membrane"), "tension must be positive (tensioned) or zero (plate)");
    try {
      c.membrane.validate();
    } catch (const Error& e) {
      fail(ErrorKind::ConfigError, o.child("membrane") + ": " + e.what());
    }
  }
  if (o.has("electrode")) {
    auto e = o.object("electrode");
    e.read("bV1_V_m", c.electrode.bV1);
    e.read("distance_m", c.electrode.distance);
    e.read("gap_m", c.electrode.gap);
    e.finish();
    check(c.electrode.gap > 0.0 && c.electrode.gap < c.electrode.distance, o.child("electrode"),
          "needs 0 < gap_m < distance_m");
  }
  o.read("n_modes", c.n_modes);
  check(c.n_modes >= 4, o.child("n_modes"), "at least 4 modes are needed for the audit");
  if (o.has("alpha2_ratio")) {
    const json* v = o.raw("alpha2_ratio");
    if (v->is_null()) {
      c.alpha2_ratio.reset();
    } else {
      c.alpha2_ratio = ConfigObject::convert<double>(*v, o.child("alpha2_ratio"));
    }
  }
  o.finish();
}

inline CavityConfig parse_cavity(ConfigObject o) {
  CavityConfig c;
  o.read("detuning_rad_per_s", c.detuning);
  o.read("detuning_transition", c.detuning_transition);
  check(c.detuning.has_value() != c.detuning_transition.has_value(), o.where(),
        "give exactly one of detuning_rad_per_s and detuning_transition");
  o.read("kappa_rad_per_s", c.kappa);
  o.read("kappa_over_delta10", c.kappa_over_delta10);
  o.read("g_rad_per_s", c.g);
  o.read("G0_rad_per_s", c.G0);
  o.read("nbar_c", c.nbar_c);
  o.read("fock_truncation", c.fock_truncation);
  o.finish();
  check(c.nbar_c >= 0.0, o.child("nbar_c"), "must be non-negative");
  check(c.fock_truncation >= 2, o.child("fock_truncation"), "must be at least 2");
  check(!c.kappa || *c.kappa > 0.0, o.child("kappa_rad_per_s"), "must be positive");
  check(c.kappa_over_delta10 > 0.0, o.child("kappa_over_delta10"), "must be positive");
  return c;
}

}  // namespace detail

/// Parse and validate a configuration document on top of the defaults.
inline RunConfig parse_config(const json& doc) {
  RunConfig c = default_config();
  detail::ConfigObject root(doc, "");
  using detail::check;

  if (root.has("double_well") && root.has("physical_chain")) {
    fail(ErrorKind::ConfigError, "double_well and physical_chain are mutually exclusive");
  }
  if (root.has("double_well")) c.double_well = detail::parse_double_well(root.object("double_well"));
  if (root.has("physical")) detail::parse_physical(root.object("physical"), c.physical);
  if (root.has("physical_chain")) {
    const json* v = root.raw("physical_chain");
    c.use_physical_chain = detail::ConfigObject::convert<bool>(*v, "physical_chain");
    if (c.use_physical_chain) c.double_well.reset();
  }

  if (root.has("basis")) {
    auto o = root.object("basis");
    o.read("basis_size", c.basis.basis_size);
    o.read("n_levels", c.basis.n_levels);
    o.read("omega_ref_rad_per_s", c.basis.omega_ref);
    o.finish();
    try {
      c.basis.validate();
    } catch (const Error& e) {
      fail(ErrorKind::ConfigError, std::string("basis: ") + e.what());
    }
  }
  if (root.has("bath")) {
    auto o = root.object("bath");
    o.read("temperature_K", c.bath.temperature);
    o.read("quality", c.bath.quality);
    o.finish();
    check(c.bath.temperature >= 0.0, "bath.temperature_K", "must be non-negative");
    check(c.bath.quality > 0.0, "bath.quality", "must be positive");
  }
  if (root.has("damping_normalization")) {
    std::string s;
    root.read("damping_normalization", s);
    check(s == "well" || s == "harmonic", "damping_normalization", "must be well or harmonic");
    c.normalization = s == "well" ? DampingNormalization::well : DampingNormalization::harmonic;
  }
  if (root.has("cavities")) {
    const json* v = root.raw("cavities");
    check(v->is_array(), "cavities", "expected an array");
    c.cavities.clear();
    for (std::size_t i = 0; i < v->size(); ++i)
      c.cavities.push_back(detail::parse_cavity(detail::ConfigObject((*v)[i], "cavities[" + std::to_string(i) + "]")));
  }
  if (root.has("steady")) {
    auto o = root.object("steady");
    std::string method = to_string(c.steady.method);
    o.read("method", method);
    o.read("tol", c.steady.tol);
    o.finish();
    if (method == "automatic") c.steady.method = SteadyMethod::automatic;
    else if (method == "direct") c.steady.method = SteadyMethod::direct;
    else if (method == "krylov") c.steady.method = SteadyMethod::krylov;
    else if (method == "shifted_inverse") c.steady.method = SteadyMethod::shifted_inverse;
    else fail(ErrorKind::ConfigError, "steady.method: unknown solver '" + method + "'");
    check(c.steady.tol > 0.0 && c.steady.tol < 1e-2, "steady.tol", "must be in (0, 1e-2)");
  }
  if (root.has("cool_opt")) {
    auto o = root.object("cool_opt");
    o.read("nbar_lower", c.cool_opt.lower);
    o.read("nbar_upper", c.cool_opt.upper);
    o.read("grid_points", c.cool_opt.grid_points);
    o.read("initial_factor", c.cool_opt.initial_factor);
    o.read("final_factor", c.cool_opt.final_factor);
    o.read("budget", c.cool_opt.budget);
    o.finish();
    check(c.cool_opt.initial_factor > 1.0 && c.cool_opt.final_factor > 1.0 &&
              c.cool_opt.final_factor <= c.cool_opt.initial_factor,
          "cool_opt", "step factors must satisfy 1 < final_factor <= initial_factor");
    check(c.cool_opt.budget >= 1, "cool_opt.budget", "must be positive");
  }
  if (root.has("csl")) {
    auto o = root.object("csl");
    o.read("r_m", c.csl.params.r_csl);
    o.read("eta", c.csl.params.eta);
    o.read("lambda_grid_Hz", c.csl.lambda_grid);
    o.read("sigmas", c.csl.sigmas);
    o.read("lower_ratio", c.csl.search.lower_ratio);
    o.read("match_fraction", c.csl.search.match_fraction);
    o.read("max_iterations", c.csl.search.max_iterations);
    o.read("fock_truncation", c.csl.fock_truncation);
    o.finish();
    check(c.csl.params.r_csl > 0.0 && c.csl.params.eta > 0.0, "csl", "r_m and eta must be positive");
    for (double l : c.csl.lambda_grid) check(std::isfinite(l) && l >= 0.0, "csl.lambda_grid_Hz", "entries must be finite and >= 0");
    for (double s : c.csl.sigmas) check(s > 0.0, "csl.sigmas", "entries must be positive");
    check(c.csl.search.lower_ratio > 1.0, "csl.lower_ratio", "must exceed 1");
    check(c.csl.fock_truncation >= 2, "csl.fock_truncation", "must be at least 2");
  }
  if (root.has("qubit")) {
    auto o = root.object("qubit");
    o.read("chi_rad_per_s", c.qubit.spec.chi);
    o.read("delta_c_rad_per_s", c.qubit.spec.delta_c);
    o.read("delta_q_rad_per_s", c.qubit.spec.delta_q);
    o.read("gamma_q_rad_per_s", c.qubit.spec.gamma_q);
    o.read("gamma_dephase_rad_per_s", c.qubit.spec.gamma_dephase);
    o.read("J_rad_per_s", c.qubit.J);
    o.read("J_x10_rad_per_s", c.qubit.J_x10);
    o.read("mechanical_damping", c.qubit.mechanical_damping);
    o.finish();
    check(c.qubit.spec.gamma_q >= 0.0, "qubit.gamma_q_rad_per_s", "must be non-negative");
  }
  if (root.has("tomography")) {
    auto o = root.object("tomography");
    o.read("n_diagonal", c.tomography.n_diagonal);
    o.read("coherences", c.tomography.coherences);
    o.read("points", c.tomography.points);
    o.read("shots", c.tomography.shots);
    o.read("fock_truncation", c.tomography.fock_truncation);
    if (o.has("planted")) {
      const json* v = o.raw("planted");
      check(v->is_array(), "tomography.planted", "expected an array");
      c.tomography.planted.clear();
      for (std::size_t i = 0; i < v->size(); ++i) {
        detail::ConfigObject p((*v)[i], "tomography.planted[" + std::to_string(i) + "]");
        PlantedCoherence pc;
        double re = 0.0, im = 0.0;
        p.read("j", pc.j);
        p.read("k", pc.k);
        p.read("re", re);
        p.read("im", im);
        p.finish();
        check(pc.j > pc.k && pc.k >= 0, p.where(), "needs j > k >= 0");
        pc.value = cplx(re, im);
        c.tomography.planted.push_back(pc);
      }
    }
    o.finish();
    check(c.tomography.n_diagonal >= 2, "tomography.n_diagonal", "must be at least 2");
    check(c.tomography.points >= 10, "tomography.points", "must be at least 10");
    check(c.tomography.shots >= 0, "tomography.shots", "must be non-negative");
  }
  if (root.has("reproduce")) {
    auto o = root.object("reproduce");
    o.read("p00_target", c.reproduce.p00_target);
    o.read("p00_tolerance", c.reproduce.p00_tolerance);
    o.finish();
  }
  root.finish();
  for (const auto& cav : c.cavities)
    if (cav.detuning_transition) {
      const auto [m, n] = *cav.detuning_transition;
      check(m >= 0 && n >= 0 && m < c.basis.n_levels && n < c.basis.n_levels && m != n, "cavities",
            "detuning_transition outside the retained levels");
    }
  return c;
}

inline RunConfig parse_config_text(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    fail(ErrorKind::ConfigError, std::string("malformed JSON: ") + e.what());
  }
  return parse_config(doc);
}

// ---------------------------------------------------------------------------
// Resolution of a configuration into library objects.

struct PhysicalReport {
  ModalModel modes;
  TipElectrodeSpec electrode;
  ElectrostaticCoeffs coeffs;
  std::optional<DoubleWellParams> double_well;
  std::optional<CouplingAudit> audit;
  std::vector<std::string> warnings;
};

inline PhysicalReport run_physical_chain(const PhysicalChain& c, double temperature) {
  PhysicalReport r;
  r.modes = c.regime == MembraneRegime::tensioned ? tensioned_modes(c.membrane, static_cast<std::size_t>(c.n_modes))
                                                  : plate_modes(c.membrane, static_cast<std::size_t>(c.n_modes));
  r.electrode = c.electrode;
  if (c.alpha2_ratio) r.electrode.bV1 = tune_bv1(r.modes, c.electrode, *c.alpha2_ratio);
  r.coeffs = electrostatic_coeffs(r.modes, r.electrode, 4);
  r.warnings = r.modes.warnings;
  try {
    r.double_well = double_well_from_physical(r.modes, r.electrode);
    r.audit = coupling_audit(r.modes, r.electrode, temperature, 3);
  } catch (const Error& e) {
    r.warnings.push_back(e.what());
  }
  return r;
}

inline DoubleWellParams resolve_double_well(const RunConfig& c) {
  if (c.double_well) return *c.double_well;
  const PhysicalReport r = run_physical_chain(c.physical, c.bath.temperature);
  if (!r.double_well) fail(ErrorKind::NonDoubleWell, "physical chain does not produce a double well");
  return *r.double_well;
}

/// Mechanical system with the configured cavities (fock overrides when > 0).
inline SystemSpec build_system(const RunConfig& c, const DoubleWellParams& dw, int fock_override = 0) {
  SystemSpec sys;
  sys.params = dw;
  sys.spectrum = diagonalize_double_well(dw, c.basis);
  sys.bath = c.bath;
  sys.normalization = c.normalization;
  const double d10 = sys.spectrum.delta(1, 0);
  for (const auto& cc : c.cavities) {
    CavityModeSpec m;
    m.detuning = cc.detuning ? *cc.detuning
                             : -sys.spectrum.delta(cc.detuning_transition->first, cc.detuning_transition->second);
    m.kappa = cc.kappa ? *cc.kappa : cc.kappa_over_delta10 * d10;
    m.g = cc.g;
    m.G0 = cc.G0;
    m.nbar_c = cc.nbar_c;
    m.fock_truncation = fock_override > 0 ? fock_override : cc.fock_truncation;
    sys.cavities.push_back(m);
  }
  return sys;
}

}  // namespace dwcool
