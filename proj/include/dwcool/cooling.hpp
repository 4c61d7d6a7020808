#pragma once

// Sideband cooling rates and a derivative-free search over drive strengths.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>
#include <future>
#include <map>
#include <string>
#include <vector>

#include "error.hpp"
#include "spectrum.hpp"
#include "steadystate.hpp"

namespace dwcool {

struct CoolingRates {
  double gamma_minus = 0.0;  ///< rad/s
  double gamma_plus = 0.0;   ///< rad/s
  double ratio = 0.0;        ///< gamma_minus / gamma_plus
};

/// Gamma_-/+ = g^2 |x|^2 kappa / (4 (Delta +/- delta)^2 + kappa^2).
inline CoolingRates sideband_rates(double g, double x_mn, double kappa, double detuning, double delta_mn) {
  require(kappa > 0.0, ErrorKind::InvalidArgument, "kappa must be positive");
  const double num = g * g * x_mn * x_mn * kappa;
  const double dm = 4.0 * (detuning + delta_mn) * (detuning + delta_mn) + kappa * kappa;
  const double dp = 4.0 * (detuning - delta_mn) * (detuning - delta_mn) + kappa * kappa;
  CoolingRates r;
  r.gamma_minus = num / dm;
  r.gamma_plus = num / dp;
  r.ratio = dp / dm;  // independent of g and x, and well defined when g x = 0
  return r;
}

/// r_mn for a drive resonant with the transition, Delta = -delta_mn.
inline double resonant_cooling_ratio(const MechanicalSpectrum& spec, int m, int n, double kappa) {
  const double d = spec.delta(m, n);
  return sideband_rates(1.0, 1.0, kappa, -d, d).ratio;
}

struct DriveSearchSpace {
  std::vector<double> start;  ///< initial nbar_c per cavity
  std::vector<double> lower;  ///< bounds per cavity, > 0
  std::vector<double> upper;
  int grid_points = 0;         ///< log-spaced scan per coordinate before refinement (0 = skip)
  double initial_factor = 2.0;
  double final_factor = 1.05;
  std::size_t budget = 400;    ///< maximum number of distinct evaluations
  int threads = 1;

  void validate(std::size_t n_cavities) const {
    require(start.size() == n_cavities && lower.size() == n_cavities && upper.size() == n_cavities,
            ErrorKind::InvalidArgument, "search space must give start/lower/upper per cavity");
    for (std::size_t i = 0; i < n_cavities; ++i) {
      require(std::isfinite(lower[i]) && std::isfinite(upper[i]) && lower[i] > 0.0 && upper[i] >= lower[i],
              ErrorKind::InvalidArgument, "nbar bounds must be positive, finite and ordered");
      require(start[i] >= lower[i] && start[i] <= upper[i], ErrorKind::InvalidArgument,
              "start point outside the bounds");
    }
    require(initial_factor > 1.0 && final_factor > 1.0 && final_factor <= initial_factor,
            ErrorKind::InvalidArgument, "step factors must satisfy 1 < final <= initial");
    require(budget >= 1, ErrorKind::InvalidArgument, "budget must be positive");
  }
};

struct DriveEvaluation {
  std::size_t index = 0;
  std::vector<double> nbar;
  double p00 = 0.0;
  double best_so_far = 0.0;
  double wall_seconds = 0.0;
};

struct DriveOptimum {
  std::vector<double> nbar;
  double p00 = 0.0;
  std::vector<DriveEvaluation> trace;
  bool budget_exhausted = false;
  std::size_t cache_hits = 0;
};

/// Objective: ground-state population of the mechanics for a given system.
using DriveObjective = std::function<double(const SystemSpec&)>;

inline double steady_ground_population(const SystemSpec& sys) {
  const Liouvillian l = assemble_liouvillian(sys);
  const SteadyStateResult r = solve_steady(l);
  return r.rho_mech(0, 0).real();
}

/// Coordinate descent over the cavity photon numbers with multiplicative steps,
/// shrinking from initial_factor to final_factor.  Evaluations are cached on
/// the rounded log of the parameters.  Running out of budget returns the best
/// point found so far with `budget_exhausted` set.
inline DriveOptimum optimize_drive(const SystemSpec& templ, const DriveSearchSpace& space,
                                   const DriveObjective& objective = steady_ground_population) {
  const std::size_t nc = templ.cavities.size();
  require(nc >= 1, ErrorKind::InvalidArgument, "drive search needs at least one cavity");
  space.validate(nc);

  DriveOptimum out;
  std::map<std::vector<long long>, double> cache;
  auto key_of = [](const std::vector<double>& x) {
    std::vector<long long> k;
    for (double v : x) k.push_back(std::llround(std::log(v) * 1e6));
    return k;
  };
  auto clamp = [&](std::vector<double> x) {
    for (std::size_t i = 0; i < nc; ++i) x[i] = std::clamp(x[i], space.lower[i], space.upper[i]);
    return x;
  };

  // Evaluate a batch of candidates (concurrently when threads > 1); returns
  // false if the budget ran out before all were evaluated.
  auto evaluate = [&](const std::vector<std::vector<double>>& batch, std::vector<double>& values) {
    values.assign(batch.size(), -1.0);
    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < batch.size(); ++i) {
      auto it = cache.find(key_of(batch[i]));
      if (it != cache.end()) {
        values[i] = it->second;
        ++out.cache_hits;
      } else {
        bool duplicate = false;
        for (std::size_t j : todo) duplicate = duplicate || key_of(batch[j]) == key_of(batch[i]);
        if (!duplicate) todo.push_back(i);
      }
    }
    bool complete = true;
    if (cache.size() + todo.size() > space.budget) {
      todo.resize(space.budget - std::min(space.budget, cache.size()));
      complete = false;
    }
    auto run = [&](std::size_t i) {
      SystemSpec sys = templ;
      for (std::size_t c = 0; c < nc; ++c) sys.cavities[c].nbar_c = batch[i][c];
      const auto t0 = std::chrono::steady_clock::now();
      const double p = objective(sys);
      return std::make_pair(p, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    };
    std::vector<std::pair<double, double>> results(todo.size());
    const std::size_t width = static_cast<std::size_t>(std::max(1, space.threads));
    for (std::size_t s = 0; s < todo.size(); s += width) {
      std::vector<std::future<std::pair<double, double>>> jobs;
      for (std::size_t j = s; j < std::min(todo.size(), s + width); ++j)
        jobs.push_back(std::async(width > 1 ? std::launch::async : std::launch::deferred, run, todo[j]));
      for (std::size_t j = 0; j < jobs.size(); ++j) results[s + j] = jobs[j].get();
    }
    // Single collector: cache, trace and best point are updated in batch order.
    for (std::size_t j = 0; j < todo.size(); ++j) {
      const auto& x = batch[todo[j]];
      cache[key_of(x)] = results[j].first;
      if (results[j].first > out.p00 || out.trace.empty()) {
        out.p00 = results[j].first;
        out.nbar = x;
      }
      out.trace.push_back({out.trace.size(), x, results[j].first, out.p00, results[j].second});
    }
    for (std::size_t i = 0; i < batch.size(); ++i)
      if (values[i] < 0.0) {
        auto it = cache.find(key_of(batch[i]));
        if (it != cache.end()) values[i] = it->second;
      }
    return complete;
  };

  std::vector<double> current = clamp(space.start);
  std::vector<double> values;
  if (!evaluate({current}, values)) {
    out.budget_exhausted = true;
    return out;
  }
  double current_value = values[0];

  if (space.grid_points >= 2) {
    for (std::size_t c = 0; c < nc; ++c) {
      std::vector<std::vector<double>> batch;
      const double lo = std::log(space.lower[c]);
      const double hi = std::log(space.upper[c]);
      for (int i = 0; i < space.grid_points; ++i) {
        auto x = current;
        x[c] = std::exp(lo + (hi - lo) * i / (space.grid_points - 1));
        batch.push_back(x);
      }
      const bool complete = evaluate(batch, values);
      for (std::size_t i = 0; i < batch.size(); ++i)
        if (values[i] > current_value) {
          current_value = values[i];
          current = batch[i];
        }
      if (!complete) {
        out.budget_exhausted = true;
        return out;
      }
    }
  }

  double factor = space.initial_factor;
  while (true) {
    bool improved = false;
    for (std::size_t c = 0; c < nc; ++c) {
      auto up = current;
      auto down = current;
      up[c] *= factor;
      down[c] /= factor;
      const std::vector<std::vector<double>> batch{clamp(up), clamp(down)};
      const bool complete = evaluate(batch, values);
      for (std::size_t i = 0; i < batch.size(); ++i)
        if (values[i] > current_value) {
          current_value = values[i];
          current = batch[i];
          improved = true;
        }
      if (!complete) {
        out.budget_exhausted = true;
        return out;
      }
    }
    if (!improved) {
      if (factor <= space.final_factor * (1.0 + 1e-12)) break;
      factor = std::max(space.final_factor, std::sqrt(factor));
    }
  }
  return out;
}

}  // namespace dwcool
