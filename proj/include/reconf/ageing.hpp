#pragma once

// Stochastic linear cell-ageing models.
//
// Each cell pairs a BOL capacity draw with an EOL cycle-count draw; the two
// anchor a straight capacity-fade line in (EFC, Ah). Resistance follows a
// normalized resistance-capacity line shared by every cell of a case, pinned
// through (Q~, R~) = (1, 1).

#include <cmath>
#include <cstddef>
#include <numbers>
#include <numeric>
#include <random>
#include <span>
#include <tuple>
#include <utility>
#include <vector>

#include "reconf/electrics.hpp"
#include "reconf/errors.hpp"
#include "reconf/rng.hpp"

namespace reconf {

/// Normalized capacity fraction at which a cell is considered end of life.
inline constexpr double kEolFraction = 0.8;

struct AgeingDistributions {
  double mu_s = 0.9939;   ///< mean normalized BOL capacity
  double sigma_s = 0.0028;
  double mu_e = 615.85;   ///< mean EFC at EOL
  double sigma_e = 68.28;

  void validate() const {
    if (!(mu_s > kEolFraction)) throw DomainError("mu_s must exceed the 0.8 EOL threshold");
    if (!(sigma_s >= 0.0) || !(sigma_e >= 0.0)) throw DomainError("sigmas must be non-negative");
    if (!(mu_e > 0.0)) throw DomainError("mu_e must be positive");
  }
};

/// R~ = -k_rq * Q~ + l_rq, with l_rq = 1 + k_rq.
struct ResistanceCapacityLine {
  double rho_deg = 124.5;
  double k_rq = 0.0;
  double l_rq = 0.0;

  /// Normalized resistance at normalized capacity q_tilde.
  double r_tilde(double q_tilde) const noexcept { return l_rq - k_rq * q_tilde; }
};

/// Line whose angle to R~ = 1 is rho degrees. Requires 90 < rho < 180.
inline ResistanceCapacityLine rho_to_line(double rho_deg) {
  if (!(rho_deg > 90.0 && rho_deg < 180.0)) {
    throw DomainError("rho must lie in (90, 180) degrees");
  }
  const double k = -std::tan(rho_deg * std::numbers::pi / 180.0);
  return {rho_deg, k, 1.0 + k};
}

/// Angle in (90, 180) degrees for an intercept l_rq > 1.
inline double line_to_rho(double l_rq) {
  return 180.0 + std::atan(1.0 - l_rq) * 180.0 / std::numbers::pi;
}

/// Sampled identity of one cell.
///
///   EFC(Q) = a - b * Q        (capacity fade)
///   R(EFC) = c + d * EFC      (resistance growth)
struct CellAgeingLine {
  double q_tilde_s = 1.0; ///< normalized BOL capacity
  double efc_e = 0.0;     ///< EFC at which the line crosses 0.8 * q_nom
  double a = 0.0;         ///< [cycles]
  double b = 0.0;         ///< [cycles/Ah]
  double c = 0.0;         ///< [Ohm]
  double d = 0.0;         ///< [Ohm/cycle]

  friend bool operator==(const CellAgeingLine&, const CellAgeingLine&) = default;
};

/// Builds the line through (0, q_tilde_s * q_nom) and (efc_e, 0.8 * q_nom).
inline CellAgeingLine make_cell_line(double q_tilde_s, double efc_e,
                                     const ResistanceCapacityLine& rcl,
                                     const CellElectricalParams& params) {
  if (!(q_tilde_s > kEolFraction) || !(efc_e > 0.0)) {
    throw DomainError("cell line needs q_tilde_s > 0.8 and efc_e > 0");
  }
  CellAgeingLine line;
  line.q_tilde_s = q_tilde_s;
  line.efc_e = efc_e;
  line.b = efc_e / ((q_tilde_s - kEolFraction) * params.q_nom);
  line.a = line.b * q_tilde_s * params.q_nom;
  line.d = params.r_nom * rcl.k_rq / (line.b * params.q_nom);
  line.c = params.r_nom * (rcl.l_rq - rcl.k_rq * line.a / (line.b * params.q_nom));
  return line;
}

inline double capacity_from_efc(const CellAgeingLine& line, double efc) noexcept {
  return (line.a - efc) / line.b;
}

inline double efc_from_capacity(const CellAgeingLine& line, double q) noexcept {
  return line.a - line.b * q;
}

inline double resistance_from_efc(const CellAgeingLine& line, double efc) noexcept {
  return line.c + line.d * efc;
}

/// Draws n cell lines from `rng`.
///
/// A (q_tilde_s, efc_e) pair is redrawn when q_tilde_s <= 0.8 + 1e-6,
/// efc_e <= 0, or the implied BOL resistance is not positive. 1000
/// consecutive rejections abort with DomainError.
template <class Rng>
std::vector<CellAgeingLine> sample_cell_lines(const AgeingDistributions& dist,
                                              const ResistanceCapacityLine& rcl,
                                              const CellElectricalParams& params,
                                              std::size_t n, Rng& rng) {
  if (n < 1) throw DomainError("need at least one cell");
  dist.validate();
  constexpr double kEps = 1e-6;
  constexpr int kMaxRejections = 1000;
  std::normal_distribution<double> unit(0.0, 1.0);
  std::vector<CellAgeingLine> lines;
  lines.reserve(n);
  while (lines.size() < n) {
    int rejected = 0;
    for (;;) {
      const double q_s = dist.mu_s + dist.sigma_s * unit(rng);
      const double efc_e = dist.mu_e + dist.sigma_e * unit(rng);
      if (q_s > kEolFraction + kEps && efc_e > 0.0) {
        CellAgeingLine line = make_cell_line(q_s, efc_e, rcl, params);
        if (line.c > 0.0) {
          lines.push_back(line);
          break;
        }
      }
      if (++rejected >= kMaxRejections) {
        throw DomainError("ageing sample rejected 1000 consecutive times");
      }
    }
  }
  return lines;
}

namespace detail {

inline std::pair<double, double> mean_and_sample_std(std::span<const double> xs) {
  const double n = static_cast<double>(xs.size());
  const double mean = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return {mean, std::sqrt(ss / (n - 1.0))};
}

} // namespace detail

struct RqPoint {
  double q_tilde;
  double r_tilde;
};

struct FitResult {
  AgeingDistributions dist;
  ResistanceCapacityLine line;
  /// Unconstrained ordinary least-squares line, reported for diagnostics.
  double ols_k_rq = 0.0;
  double ols_l_rq = 0.0;
};

/// Sample mean / standard deviation of the BOL and EOL data, plus a
/// least-squares R~-Q~ line constrained through (1, 1).
inline FitResult fit_distributions_from_data(std::span<const double> bol_capacities,
                                             std::span<const double> eol_efcs,
                                             std::span<const RqPoint> rq_points) {
  if (bol_capacities.size() < 2 || eol_efcs.size() < 2 || rq_points.size() < 2) {
    throw DomainError("fitting needs at least two points per data set");
  }
  FitResult fit;
  std::tie(fit.dist.mu_s, fit.dist.sigma_s) = detail::mean_and_sample_std(bol_capacities);
  std::tie(fit.dist.mu_e, fit.dist.sigma_e) = detail::mean_and_sample_std(eol_efcs);

  double sxy = 0.0;
  double sxx = 0.0;
  double mx = 0.0;
  double my = 0.0;
  for (const RqPoint& p : rq_points) {
    mx += p.q_tilde;
    my += p.r_tilde;
  }
  mx /= static_cast<double>(rq_points.size());
  my /= static_cast<double>(rq_points.size());
  double sxy1 = 0.0;
  double sxx1 = 0.0;
  for (const RqPoint& p : rq_points) {
    sxy += (p.q_tilde - mx) * (p.r_tilde - my);
    sxx += (p.q_tilde - mx) * (p.q_tilde - mx);
    sxy1 += (p.q_tilde - 1.0) * (p.r_tilde - 1.0);
    sxx1 += (p.q_tilde - 1.0) * (p.q_tilde - 1.0);
  }
  if (!(sxx1 > 0.0)) throw DomainError("R-Q points carry no capacity spread");
  if (sxx > 0.0) {
    fit.ols_k_rq = -sxy / sxx;
    fit.ols_l_rq = my + fit.ols_k_rq * mx;
  }
  const double k = -sxy1 / sxx1;
  if (!(k > 0.0)) {
    throw DomainError("fitted resistance does not rise as capacity fades (k_rq <= 0)");
  }
  fit.line = {line_to_rho(1.0 + k), k, 1.0 + k};
  return fit;
}

} // namespace reconf
