#pragma once

// Full-lifetime cycling of a fixed parallel cell unit (FPU).
//
// Each cycle is a CC 1C discharge to v_min followed by a CC-CV charge to
// v_max with a C/30 cut-off. Capacity and resistance are held constant within
// a cycle and updated from the cells' ageing lines at the cycle boundary.
//
// Time stepping is linearly implicit: within a step every cell's OCV is
// linearized around its current SOC, which turns the implicit Euler update
// into the ordinary parallel current split with each branch resistance
// augmented by slope * dt / (3600 * Q). The scheme is stable for any dt and
// conserves the pack current exactly.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "reconf/ageing.hpp"
#include "reconf/electrics.hpp"
#include "reconf/errors.hpp"
#include "reconf/roots.hpp"

namespace reconf {

enum class Approach : int {
  kCapacity = 1, ///< EOL when the PU 1C-capacity falls to 80 % of its first-cycle value
  kSafety = 2,   ///< EOL at the last instant every cell holds >= 80 % of q_nom
};

struct CyclingProtocol {
  double dt = 30.0;                      ///< integration step [s]
  double cv_cutoff_fraction = 1.0 / 30.0;
  double eol_capacity_fraction = 0.8;
  double event_tolerance = 1e-6;         ///< voltage-crossing tolerance [V]
  int max_cycles = 5000;
  /// Simulate one cycle, then replay its per-cell EFC increments
  /// extrapolation - 1 times. 1 disables replay.
  int extrapolation = 1;
  long max_steps = 10'000'000;           ///< per phase

  void validate() const {
    if (!(dt > 0.0)) throw DomainError("dt must be positive");
    if (!(cv_cutoff_fraction > 0.0 && cv_cutoff_fraction < 1.0)) {
      throw DomainError("cv_cutoff_fraction must lie in (0, 1)");
    }
    if (!(eol_capacity_fraction > 0.0 && eol_capacity_fraction < 1.0)) {
      throw DomainError("eol_capacity_fraction must lie in (0, 1)");
    }
    if (!(event_tolerance > 0.0)) throw DomainError("event_tolerance must be positive");
    if (max_cycles < 1) throw DomainError("max_cycles must be at least 1");
    if (extrapolation < 1) throw DomainError("extrapolation factor must be at least 1");
  }
};

struct PuConfig {
  CellElectricalParams params;
  std::vector<CellAgeingLine> lines; ///< one per parallel cell
  double initial_soc = 0.5;

  std::size_t n_p() const noexcept { return lines.size(); }

  /// PU 1C discharge current: cell 1C current times N_p (negative).
  double i_pu_1c() const noexcept { return params.i_1c() * static_cast<double>(n_p()); }
};

struct DischargeWindow {
  double t_start; ///< [s]
  double t_end;   ///< [s]
};

struct FpuOutcome {
  double q_pu_nom_1c = 0.0;         ///< first-cycle discharged capacity [Ah]
  std::vector<double> q_cells_eol;  ///< per-cell capacity at PU EOL [Ah]
  double efc_fpu_eol = 0.0;         ///< sum of cell EFCs at PU EOL
  int cycles_run = 0;
  Approach eol_approach = Approach::kSafety;
  std::vector<double> per_cycle_capacity;     ///< PU 1C-capacity per cycle [Ah]
  std::vector<DischargeWindow> cycle_boundaries;
};

struct CycleTraceRow {
  int cycle;
  double q_pu_1c;
  double min_cell_q;
  double max_cell_q;
  double sum_efc;
};

/// Fresh cells at BOL for a PU configuration.
inline std::vector<CellState> initial_cells(const PuConfig& cfg) {
  std::vector<CellState> cells(cfg.n_p());
  for (std::size_t j = 0; j < cfg.n_p(); ++j) {
    cells[j].soc = cfg.initial_soc;
    cells[j].q = capacity_from_efc(cfg.lines[j], 0.0);
    cells[j].r = resistance_from_efc(cfg.lines[j], 0.0);
  }
  return cells;
}

namespace detail {

// Scratch buffers and step kernels for one PU. Not thread-safe; one per
// simulation.
class PuStepper {
public:
  PuStepper(const OcvCurve& curve, const CyclingProtocol& proto, std::size_t n)
      : curve_(curve), proto_(proto), ocv_(n), g_(n), gi_(n), i_(n), z_(n) {}

  // Terminal voltage under pack current i_total at the cells' present state.
  double terminal_voltage(std::span<const CellState> cells, double i_total) {
    for (std::size_t j = 0; j < cells.size(); ++j) {
      ocv_[j] = curve_.eval_clamped(cells[j].soc);
      g_[j] = 1.0 / cells[j].r;
    }
    return split_into(ocv_, g_, i_total, i_);
  }

  // Total CV charging current at the cells' present state.
  double cv_total_current(std::span<const CellState> cells, double v_hold) const {
    double total = 0.0;
    for (const CellState& c : cells) total += (v_hold - curve_.eval_clamped(c.soc)) / c.r;
    return total;
  }

  // One linearly implicit CC step of length tau; writes the new SOCs to z_
  // and the branch currents to i_.
  void cc_step(std::span<const CellState> cells, double i_total, double tau) {
    for (std::size_t j = 0; j < cells.size(); ++j) {
      const double h = tau / (3600.0 * cells[j].q);
      ocv_[j] = curve_.eval_clamped(cells[j].soc);
      gi_[j] = 1.0 / (cells[j].r + curve_.slope(cells[j].soc) * h);
    }
    split_into(ocv_, gi_, i_total, i_);
    for (std::size_t j = 0; j < cells.size(); ++j) {
      z_[j] = std::clamp(cells[j].soc + i_[j] * tau / (3600.0 * cells[j].q), 0.0, 1.0);
    }
  }

  // One linearly implicit CV step of length tau.
  void cv_step(std::span<const CellState> cells, double v_hold, double tau) {
    for (std::size_t j = 0; j < cells.size(); ++j) {
      const double h = tau / (3600.0 * cells[j].q);
      const double f = curve_.eval_clamped(cells[j].soc);
      i_[j] = (v_hold - f) / (cells[j].r + curve_.slope(cells[j].soc) * h);
      z_[j] = std::clamp(cells[j].soc + i_[j] * h, 0.0, 1.0);
    }
  }

  // Terminal voltage / CV current evaluated at the stepped SOCs in z_.
  double stepped_terminal_voltage(std::span<const CellState> cells, double i_total) {
    for (std::size_t j = 0; j < cells.size(); ++j) {
      ocv_[j] = curve_.eval_clamped(z_[j]);
      g_[j] = 1.0 / cells[j].r;
    }
    return split_voltage(ocv_, g_, i_total);
  }

  double stepped_cv_total(std::span<const CellState> cells, double v_hold) const {
    double total = 0.0;
    for (std::size_t j = 0; j < cells.size(); ++j) {
      total += (v_hold - curve_.eval_clamped(z_[j])) / cells[j].r;
    }
    return total;
  }

  // Commits the step held in z_ / i_.
  void commit(std::span<CellState> cells, double tau) const {
    for (std::size_t j = 0; j < cells.size(); ++j) {
      cells[j].soc = z_[j];
      cells[j].throughput += std::abs(i_[j]) * tau / 3600.0;
    }
  }

  const CyclingProtocol& proto() const noexcept { return proto_; }

private:
  const OcvCurve& curve_;
  const CyclingProtocol& proto_;
  std::vector<double> ocv_, g_, gi_, i_, z_;
};

// Step length tau in (0, dt] at which `excess(tau)` crosses zero, given
// excess(0) = e0 > 0 and excess(dt) = e_dt <= 0. Stops once |excess| < tol.
template <class Excess>
double locate_event(double dt, double e0, double e_dt, double tol, Excess&& excess) {
  if (e_dt == 0.0) return dt;
  return solve_bracketed(excess, 0.0, dt, e0, e_dt, tol).x;
}

struct PhaseResult {
  double duration = 0.0; ///< [s]
};

inline PhaseResult cc_phase(PuStepper& st, std::span<CellState> cells, double i_total,
                            double v_limit, bool discharging) {
  const CyclingProtocol& proto = st.proto();
  // excess > 0 while the voltage limit has not been crossed
  auto excess_of = [&](double v) { return discharging ? v - v_limit : v_limit - v; };
  PhaseResult res;
  double e_now = excess_of(st.terminal_voltage(cells, i_total));
  if (e_now <= 0.0) return res;
  for (long step = 0;; ++step) {
    if (step >= proto.max_steps) {
      throw SimulationDivergence("CC phase did not reach its voltage limit");
    }
    st.cc_step(cells, i_total, proto.dt);
    const double e = excess_of(st.stepped_terminal_voltage(cells, i_total));
    if (e > 0.0) {
      st.commit(cells, proto.dt);
      res.duration += proto.dt;
      e_now = e;
      continue;
    }
    const double tau = locate_event(proto.dt, e_now, e, proto.event_tolerance, [&](double t) {
      st.cc_step(cells, i_total, t);
      return excess_of(st.stepped_terminal_voltage(cells, i_total));
    });
    st.cc_step(cells, i_total, tau);
    st.commit(cells, tau);
    res.duration += tau;
    return res;
  }
}

inline PhaseResult cv_phase(PuStepper& st, std::span<CellState> cells, double v_hold,
                            double i_cutoff) {
  const CyclingProtocol& proto = st.proto();
  PhaseResult res;
  double e_now = st.cv_total_current(cells, v_hold) - i_cutoff;
  if (e_now <= 0.0) return res;
  const double tol = i_cutoff * 1e-9;
  for (long step = 0;; ++step) {
    if (step >= proto.max_steps) {
      throw SimulationDivergence("CV phase did not decay to the cut-off current");
    }
    st.cv_step(cells, v_hold, proto.dt);
    const double e = st.stepped_cv_total(cells, v_hold) - i_cutoff;
    if (e > 0.0) {
      st.commit(cells, proto.dt);
      res.duration += proto.dt;
      e_now = e;
      continue;
    }
    const double tau = locate_event(proto.dt, e_now, e, tol, [&](double t) {
      st.cv_step(cells, v_hold, t);
      return st.stepped_cv_total(cells, v_hold) - i_cutoff;
    });
    st.cv_step(cells, v_hold, tau);
    st.commit(cells, tau);
    res.duration += tau;
    return res;
  }
}

} // namespace detail

struct DischargeResult {
  double discharged_ah = 0.0;
  double duration = 0.0; ///< [s]
};

/// CC discharge at the PU 1C current from v_max down to v_min. Per-cell
/// throughput accumulates in `cells`.
inline DischargeResult run_discharge_cycle(std::span<CellState> cells, const PuConfig& cfg,
                                           const OcvCurve& curve,
                                           const CyclingProtocol& proto) {
  detail::PuStepper st(curve, proto, cells.size());
  const double i_pu = cfg.i_pu_1c();
  const auto phase = detail::cc_phase(st, cells, i_pu, cfg.params.v_min, true);
  return {std::abs(i_pu) * phase.duration / 3600.0, phase.duration};
}

/// CC charge at |i_PU^1C| up to v_max, then CV at v_max until the total
/// current falls to cv_cutoff_fraction * |i_PU^1C|. Returns the duration [s].
inline double run_charge_cycle(std::span<CellState> cells, const PuConfig& cfg,
                               const OcvCurve& curve, const CyclingProtocol& proto) {
  detail::PuStepper st(curve, proto, cells.size());
  const double i_chg = std::abs(cfg.i_pu_1c());
  const auto cc = detail::cc_phase(st, cells, i_chg, cfg.params.v_max, false);
  const auto cv = detail::cv_phase(st, cells, cfg.params.v_max, proto.cv_cutoff_fraction * i_chg);
  return cc.duration + cv.duration;
}

/// Converts each cell's throughput since the last update into EFC and moves
/// capacity and resistance along the cell's ageing line.
inline void apply_cycle_ageing(std::span<CellState> cells, std::span<const CellAgeingLine> lines,
                               double q_nom) {
  for (std::size_t j = 0; j < cells.size(); ++j) {
    if (cells[j].throughput == 0.0) continue;
    cells[j].efc += cells[j].throughput / (2.0 * q_nom);
    cells[j].throughput = 0.0;
    cells[j].q = capacity_from_efc(lines[j], cells[j].efc);
    cells[j].r = resistance_from_efc(lines[j], cells[j].efc);
  }
}

/// Results of one lifetime run for the requested approaches. An approach that
/// was not requested stays empty.
struct FpuLifetime {
  std::optional<FpuOutcome> capacity; ///< Approach 1
  std::optional<FpuOutcome> safety;   ///< Approach 2
};

/// Runs bring-up and cycling until every requested EOL criterion is met.
///
/// Both criteria are always tracked, and replay decisions depend on both, so
/// the cycling path does not depend on which approaches were requested.
inline FpuLifetime simulate_fpu_lifetime_multi(const PuConfig& cfg, const OcvCurve& curve,
                                               const CyclingProtocol& proto, bool want_capacity,
                                               bool want_safety,
                                               std::vector<CycleTraceRow>* trace = nullptr) {
  if (cfg.n_p() < 1) throw DomainError("PU needs at least one cell");
  cfg.params.validate(curve);
  proto.validate();
  const std::size_t n = cfg.n_p();
  const double frac = proto.eol_capacity_fraction;
  const double q_cell_threshold = frac * cfg.params.q_nom;

  std::vector<CellState> cells = initial_cells(cfg);
  std::vector<CellState> previous;
  std::vector<double> per_cycle;
  std::vector<DischargeWindow> windows;
  per_cycle.reserve(1024);
  windows.reserve(1024);
  double clock = run_charge_cycle(cells, cfg, curve, proto);

  auto make_outcome = [&](Approach ap, std::span<const CellState> eol_cells, int cycles) {
    FpuOutcome out;
    out.q_pu_nom_1c = per_cycle.front();
    out.eol_approach = ap;
    out.cycles_run = cycles;
    out.q_cells_eol.resize(n);
    for (std::size_t j = 0; j < n; ++j) {
      out.q_cells_eol[j] = eol_cells[j].q;
      out.efc_fpu_eol += efc_from_capacity(cfg.lines[j], eol_cells[j].q);
    }
    out.per_cycle_capacity.assign(per_cycle.begin(),
                                  per_cycle.begin() + std::min<std::size_t>(cycles, per_cycle.size()));
    out.cycle_boundaries.assign(windows.begin(),
                                windows.begin() + std::min<std::size_t>(cycles, windows.size()));
    return out;
  };
  auto min_q = [](std::span<const CellState> cs) {
    double m = std::numeric_limits<double>::infinity();
    for (const CellState& c : cs) m = std::min(m, c.q);
    return m;
  };
  auto record_trace = [&](int cycle, double q_pu) {
    if (trace == nullptr) return;
    CycleTraceRow row{cycle, q_pu, std::numeric_limits<double>::infinity(), 0.0, 0.0};
    for (const CellState& c : cells) {
      row.min_cell_q = std::min(row.min_cell_q, c.q);
      row.max_cell_q = std::max(row.max_cell_q, c.q);
      row.sum_efc += c.efc;
    }
    trace->push_back(row);
  };

  FpuLifetime result;
  bool cap_done = false;
  bool safe_done = false;
  auto finished = [&] { return (!want_capacity || cap_done) && (!want_safety || safe_done); };

  // Replay guard state: last measured capacity and its per-cycle decline.
  double last_measured = 0.0;
  double decline_per_cycle = -1.0;
  int last_measured_cycle = 0;
  double last_cycle_duration = 0.0;
  double last_discharge_duration = 0.0;

  int cycle = 0;
  while (!finished()) {
    if (cycle >= proto.max_cycles) {
      throw BudgetExceeded("EOL not reached within " + std::to_string(proto.max_cycles) +
                           " cycles");
    }
    ++cycle;
    const double t_start = clock;
    const DischargeResult dis = run_discharge_cycle(cells, cfg, curve, proto);
    clock += dis.duration;
    last_discharge_duration = dis.duration;
    windows.push_back({t_start, clock});
    per_cycle.push_back(dis.discharged_ah);
    record_trace(cycle, dis.discharged_ah);
    if (cycle > 1 && last_measured_cycle > 0) {
      decline_per_cycle =
          (last_measured - dis.discharged_ah) / static_cast<double>(cycle - last_measured_cycle);
    }
    last_measured = dis.discharged_ah;
    last_measured_cycle = cycle;

    const double cap_threshold = frac * per_cycle.front();
    if (!cap_done && dis.discharged_ah <= cap_threshold) {
      cap_done = true;
      if (want_capacity) result.capacity = make_outcome(Approach::kCapacity, cells, cycle);
      if (finished()) break;
    }

    clock += run_charge_cycle(cells, cfg, curve, proto);
    last_cycle_duration = clock - t_start;

    previous = cells;
    std::vector<double> increments(n);
    for (std::size_t j = 0; j < n; ++j) increments[j] = cells[j].throughput / (2.0 * cfg.params.q_nom);
    apply_cycle_ageing(cells, cfg.lines, cfg.params.q_nom);
    if (!safe_done && min_q(cells) < q_cell_threshold) {
      safe_done = true;
      if (want_safety) result.safety = make_outcome(Approach::kSafety, previous, cycle);
      if (finished()) break;
    }

    if (proto.extrapolation <= 1) continue;
    const int k = proto.extrapolation;
    bool allow = true;
    if (!cap_done) {
      allow = decline_per_cycle > 0.0 &&
              last_measured - cap_threshold > 2.0 * k * decline_per_cycle;
    }
    if (allow && !safe_done) {
      for (std::size_t j = 0; j < n && allow; ++j) {
        const double dq = increments[j] / cfg.lines[j].b;
        allow = cells[j].q - q_cell_threshold > 2.0 * k * dq;
      }
    }
    if (!allow) continue;
    for (int rep = 1; rep < k && !finished(); ++rep) {
      if (cycle >= proto.max_cycles) break;
      ++cycle;
      windows.push_back({clock, clock + last_discharge_duration});
      clock += last_cycle_duration;
      per_cycle.push_back(last_measured);
      record_trace(cycle, last_measured);
      previous = cells;
      for (std::size_t j = 0; j < n; ++j) cells[j].throughput = increments[j] * 2.0 * cfg.params.q_nom;
      apply_cycle_ageing(cells, cfg.lines, cfg.params.q_nom);
      if (!safe_done && min_q(cells) < q_cell_threshold) {
        safe_done = true;
        if (want_safety) result.safety = make_outcome(Approach::kSafety, previous, cycle);
      }
    }
  }
  return result;
}

/// Lifetime of a fixed PU under one EOL approach.
inline FpuOutcome simulate_fpu_lifetime(const PuConfig& cfg, const OcvCurve& curve,
                                        const CyclingProtocol& proto, Approach approach) {
  const bool cap = approach == Approach::kCapacity;
  FpuLifetime life = simulate_fpu_lifetime_multi(cfg, curve, proto, cap, !cap);
  return cap ? std::move(*life.capacity) : std::move(*life.safety);
}

} // namespace reconf
