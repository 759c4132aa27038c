#pragma once

#include <cmath>
#include <limits>
#include <string>

#include "reconf/errors.hpp"

namespace reconf {

struct RootResult {
  double x;
  double residual;
  int iterations;
};

/// Bracketing scalar root finder: Illinois-modified false position with a
/// bisection step whenever the bracket fails to halve.
///
/// Requires g(lo) and g(hi) of opposite sign (or one of them zero). Stops when
/// |g(x)| < f_tol or the bracket shrinks below x_tol.
template <class F>
RootResult solve_bracketed(F&& g, double lo, double hi, double g_lo, double g_hi, double f_tol,
                           double x_tol = 0.0, int max_iter = 500) {
  if (g_lo == 0.0) return {lo, 0.0, 0};
  if (g_hi == 0.0) return {hi, 0.0, 0};
  if ((g_lo > 0.0) == (g_hi > 0.0)) {
    throw NoRootError("no sign change in [" + std::to_string(lo) + ", " + std::to_string(hi) +
                      "]: g(lo) = " + std::to_string(g_lo) + ", g(hi) = " + std::to_string(g_hi));
  }
  if (x_tol <= 0.0) {
    x_tol = 4.0 * std::numeric_limits<double>::epsilon() * std::max(std::abs(lo), std::abs(hi));
  }
  int side = 0;
  double raw_lo = g_lo;
  double raw_hi = g_hi;
  double best_x = std::abs(g_lo) < std::abs(g_hi) ? lo : hi;
  double best_g = std::abs(g_lo) < std::abs(g_hi) ? g_lo : g_hi;
  for (int it = 1; it <= max_iter; ++it) {
    const double width = hi - lo;
    double x = (lo * g_hi - hi * g_lo) / (g_hi - g_lo);
    if (!(x > lo && x < hi)) x = 0.5 * (lo + hi);
    double gx = g(x);
    if (std::abs(gx) < std::abs(best_g)) {
      best_x = x;
      best_g = gx;
    }
    if (std::abs(gx) < f_tol) return {x, gx, it};
    if ((gx > 0.0) == (g_lo > 0.0)) {
      lo = x;
      g_lo = gx;
      raw_lo = gx;
      if (side == -1) g_hi *= 0.5;
      side = -1;
    } else {
      hi = x;
      g_hi = gx;
      raw_hi = gx;
      if (side == 1) g_lo *= 0.5;
      side = 1;
    }
    if (hi - lo > 0.5 * width) {
      // Slow progress: force a bisection step.
      const double m = 0.5 * (lo + hi);
      const double gm = g(m);
      if (std::abs(gm) < std::abs(best_g)) {
        best_x = m;
        best_g = gm;
      }
      if (std::abs(gm) < f_tol) return {m, gm, it};
      if ((gm > 0.0) == (g_lo > 0.0)) {
        lo = m;
        g_lo = gm;
        raw_lo = gm;
      } else {
        hi = m;
        g_hi = gm;
        raw_hi = gm;
      }
      side = 0;
    }
    if (hi - lo <= x_tol) {
      return std::abs(raw_lo) <= std::abs(raw_hi) ? RootResult{lo, raw_lo, it}
                                                   : RootResult{hi, raw_hi, it};
    }
  }
  return {best_x, best_g, max_iter};
}

template <class F>
RootResult solve_bracketed(F&& g, double lo, double hi, double f_tol, double x_tol = 0.0,
                           int max_iter = 500) {
  const double g_lo = g(lo);
  const double g_hi = g(hi);
  return solve_bracketed(g, lo, hi, g_lo, g_hi, f_tol, x_tol, max_iter);
}

} // namespace reconf
