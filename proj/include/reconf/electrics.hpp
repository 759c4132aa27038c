#pragma once

// Zero-order equivalent-circuit cell model: a shared piecewise-linear OCV(SOC)
// curve in series with an ohmic resistance. Currents follow the negative
// discharge sign convention throughout.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "reconf/errors.hpp"

namespace reconf {

struct OcvPoint {
  double soc;
  double ocv;
};

/// Monotone tabulated SOC -> OCV map shared by every cell.
class OcvCurve {
public:
  static constexpr double kSocSlack = 1e-9;

  explicit OcvCurve(std::vector<OcvPoint> points) : points_(std::move(points)) {
    if (points_.size() < 2) {
      throw DomainError("OCV curve needs at least two breakpoints");
    }
    if (points_.front().soc != 0.0 || points_.back().soc != 1.0) {
      throw DomainError("OCV curve must cover SOC 0 to 1");
    }
    for (std::size_t k = 1; k < points_.size(); ++k) {
      if (!(points_[k].soc > points_[k - 1].soc)) {
        throw DomainError("OCV curve SOC breakpoints must be strictly increasing");
      }
      if (!(points_[k].ocv > points_[k - 1].ocv)) {
        throw DomainError("OCV curve must be strictly increasing");
      }
    }
    const double h = 1.0 / static_cast<double>(points_.size() - 1);
    uniform_ = true;
    for (std::size_t k = 0; k < points_.size(); ++k) {
      if (std::abs(points_[k].soc - static_cast<double>(k) * h) > 1e-12) {
        uniform_ = false;
        break;
      }
    }
  }

  /// NMC-like default table: 3.0 V at empty, 4.2 V at full.
  static OcvCurve default_nmc() {
    return OcvCurve({{0.0, 3.00}, {0.1, 3.45}, {0.2, 3.55}, {0.3, 3.60},
                     {0.4, 3.64}, {0.5, 3.68}, {0.6, 3.74}, {0.7, 3.82},
                     {0.8, 3.92}, {0.9, 4.05}, {1.0, 4.20}});
  }

  const std::vector<OcvPoint>& points() const noexcept { return points_; }
  double min_ocv() const noexcept { return points_.front().ocv; }
  double max_ocv() const noexcept { return points_.back().ocv; }

  /// Piecewise-linear OCV. SOC within kSocSlack of [0, 1] is clamped; anything
  /// further out is a domain error.
  double operator()(double soc) const {
    if (soc < -kSocSlack || soc > 1.0 + kSocSlack) {
      throw DomainError("SOC " + std::to_string(soc) + " outside [0, 1]");
    }
    return eval_clamped(soc);
  }

  /// Same as operator() but clamps any argument into [0, 1].
  double eval_clamped(double soc) const noexcept {
    const std::size_t k = segment(soc);
    const OcvPoint& p0 = points_[k];
    const OcvPoint& p1 = points_[k + 1];
    const double z = std::clamp(soc, 0.0, 1.0);
    if (z == p0.soc) return p0.ocv;
    if (z == p1.soc) return p1.ocv;
    return p0.ocv + (p1.ocv - p0.ocv) * (z - p0.soc) / (p1.soc - p0.soc);
  }

  /// Slope dOCV/dSOC of the segment that contains soc (right segment at a
  /// breakpoint).
  double slope(double soc) const noexcept {
    const std::size_t k = segment(soc);
    return (points_[k + 1].ocv - points_[k].ocv) / (points_[k + 1].soc - points_[k].soc);
  }

  /// Inverse map. Voltages outside [min_ocv, max_ocv] clamp to SOC 0 or 1.
  double inverse(double v) const noexcept {
    if (v <= points_.front().ocv) return 0.0;
    if (v >= points_.back().ocv) return 1.0;
    auto it = std::upper_bound(points_.begin(), points_.end(), v,
                               [](double x, const OcvPoint& p) { return x < p.ocv; });
    const OcvPoint& p1 = *it;
    const OcvPoint& p0 = *(it - 1);
    return p0.soc + (p1.soc - p0.soc) * (v - p0.ocv) / (p1.ocv - p0.ocv);
  }

private:
  std::size_t segment(double soc) const noexcept {
    const std::size_t last = points_.size() - 2;
    if (!(soc > 0.0)) return 0;
    if (soc >= 1.0) return last;
    if (uniform_) {
      const auto k = static_cast<std::size_t>(soc * static_cast<double>(points_.size() - 1));
      return std::min(k, last);
    }
    auto it = std::upper_bound(points_.begin(), points_.end(), soc,
                               [](double x, const OcvPoint& p) { return x < p.soc; });
    return std::min(static_cast<std::size_t>(it - points_.begin()) - 1, last);
  }

  std::vector<OcvPoint> points_;
  bool uniform_ = false;
};

/// Electrical parameters common to every cell of a study.
struct CellElectricalParams {
  double q_nom = 3.0;   ///< nominal capacity [Ah]
  double r_nom = 0.030; ///< series resistance at BOL [Ohm]
  double v_min = 3.0;   ///< discharge cut-off [V]
  double v_max = 4.2;   ///< charge limit [V]
  double r1 = 0.0;      ///< polarization resistance [Ohm], stored but not integrated
  double c1 = 0.0;      ///< polarization capacitance [F], stored but not integrated

  /// Cell 1C discharge current [A], negative by convention.
  double i_1c() const noexcept { return -q_nom; }

  void validate(const OcvCurve& curve) const {
    if (!(q_nom > 0.0)) throw DomainError("q_nom must be positive");
    if (!(r_nom > 0.0)) throw DomainError("r_nom must be positive");
    if (!(v_min < v_max)) throw DomainError("v_min must be below v_max");
    if (v_min < curve.min_ocv() || v_max > curve.max_ocv()) {
      throw DomainError("v_min and v_max must lie within the OCV curve range");
    }
  }
};

/// Dynamic state of one cell.
struct CellState {
  double soc = 0.5;        ///< z, fraction of current capacity
  double q = 3.0;          ///< current capacity [Ah]
  double r = 0.030;        ///< current series resistance [Ohm]
  double efc = 0.0;        ///< accumulated equivalent full cycles
  double throughput = 0.0; ///< |charge| moved since the last ageing update [Ah]

  friend bool operator==(const CellState&, const CellState&) = default;
};

struct CurrentSplit {
  double v_terminal;
  std::vector<double> currents;
};

namespace detail {

// Kirchhoff solve for parallel branches with source voltages `ocv` and
// conductances `g`. Working relative to the first source keeps a single
// branch exact (i == i_total) even for vanishing resistance.
inline double split_into(std::span<const double> ocv, std::span<const double> g,
                         double i_total, std::span<double> currents) {
  const double ref = ocv[0];
  double g_sum = 0.0;
  double dg_sum = 0.0;
  for (std::size_t j = 0; j < ocv.size(); ++j) {
    g_sum += g[j];
    dg_sum += (ocv[j] - ref) * g[j];
  }
  const double d_mean = dg_sum / g_sum;
  for (std::size_t j = 0; j < ocv.size(); ++j) {
    currents[j] = (d_mean - (ocv[j] - ref)) * g[j] + i_total * (g[j] / g_sum);
  }
  return ref + d_mean + i_total / g_sum;
}

// Terminal voltage only, without the branch currents.
inline double split_voltage(std::span<const double> ocv, std::span<const double> g,
                            double i_total) {
  const double ref = ocv[0];
  double g_sum = 0.0;
  double dg_sum = 0.0;
  for (std::size_t j = 0; j < ocv.size(); ++j) {
    g_sum += g[j];
    dg_sum += (ocv[j] - ref) * g[j];
  }
  return ref + dg_sum / g_sum + i_total / g_sum;
}

} // namespace detail

/// Constant-current split across parallel cells: all branches share one
/// terminal voltage v and the branch currents (v - OCV_j) / R_j sum to i_total.
inline CurrentSplit solve_cc_current_split(std::span<const CellState> cells,
                                           const OcvCurve& curve, double i_total) {
  if (cells.empty()) throw DomainError("current split needs at least one cell");
  std::vector<double> ocv(cells.size());
  std::vector<double> g(cells.size());
  for (std::size_t j = 0; j < cells.size(); ++j) {
    if (!(cells[j].r > 0.0)) throw DomainError("cell resistance must be positive");
    ocv[j] = curve(cells[j].soc);
    g[j] = 1.0 / cells[j].r;
  }
  CurrentSplit out{0.0, std::vector<double>(cells.size())};
  out.v_terminal = detail::split_into(ocv, g, i_total, out.currents);
  return out;
}

/// Branch currents when the terminal is held at v_hold.
inline std::vector<double> solve_cv_current(std::span<const CellState> cells,
                                            const OcvCurve& curve, double v_hold) {
  std::vector<double> currents(cells.size());
  for (std::size_t j = 0; j < cells.size(); ++j) {
    currents[j] = (v_hold - curve(cells[j].soc)) / cells[j].r;
  }
  return currents;
}

/// Coulomb counting over dt seconds. Capacity and resistance are untouched.
inline CellState advance_soc(const CellState& cell, double i, double dt) {
  if (!(dt > 0.0)) throw DomainError("dt must be positive");
  CellState next = cell;
  next.soc += i * dt / (3600.0 * cell.q);
  next.throughput += std::abs(i) * dt / 3600.0;
  return next;
}

} // namespace reconf
