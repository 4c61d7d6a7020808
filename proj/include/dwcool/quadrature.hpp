#pragma once

// Thin wrappers over Boost.Math numerics with this library's error policy.

#include <cmath>
#include <string>
#include <utility>

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <boost/math/tools/roots.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include "error.hpp"

namespace dwcool {

/// Adaptive Gauss-Kronrod (15/31 points) on [a, b] to `rel_tol`.
template <typename F>
double integrate(F&& f, double a, double b, double rel_tol = 1e-10, unsigned max_depth = 18) {
  double err = 0.0;
  double l1 = 0.0;
  const double value = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(
      std::forward<F>(f), a, b, max_depth, rel_tol, &err, &l1);
  if (!std::isfinite(value) || err > 10.0 * rel_tol * std::max(l1, 1e-300)) {
    fail(ErrorKind::QuadratureNonConvergence,
         "quadrature error estimate " + std::to_string(err) + " on [" + std::to_string(a) + ", " +
             std::to_string(b) + "]");
  }
  return value;
}

/// Root of f inside a sign-changing bracket [lo, hi], to ~machine precision.
template <typename F>
double bracketed_root(F&& f, double lo, double hi) {
  const double flo = f(lo);
  const double fhi = f(hi);
  if (flo == 0.0) return lo;
  if (fhi == 0.0) return hi;
  if ((flo > 0.0) == (fhi > 0.0)) {
    fail(ErrorKind::RootBracketFailure,
         "no sign change on [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
  }
  std::uintmax_t iters = 200;
  const auto tol = boost::math::tools::eps_tolerance<double>(52);
  const auto r = boost::math::tools::toms748_solve(f, lo, hi, flo, fhi, tol, iters);
  return 0.5 * (r.first + r.second);
}

}  // namespace dwcool
