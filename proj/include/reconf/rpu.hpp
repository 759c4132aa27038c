#pragma once

// End of life of the ideally reconfigured parallel unit (RPU).
//
// With ideal reconfiguration every cell reaches EOL with the same capacity Q
// and SOC, hence the same OCV and, through the shared resistance-capacity
// line, the same resistance. The capacity criterion then reduces to a scalar
// equation in Q:
//
//   v_min - (i_PU / N_p) * R(Q)  =  f(1 - 0.8 * Q_PU,nom / (N_p * Q))
//
// where the left side is the OCV implied by Ohm's law at the discharge
// cut-off and the right side is the OCV reached after Coulomb counting the
// last allowed discharge from full charge.
//
// "Full charge" is the SOC z_full at which a CV hold at v_max decays to the
// cut-off current: f(z_full) = v_max - i_cut * R(Q). With a zero cut-off and
// v_max = f(1) this is z_full = 1, the textbook 100 % SOC.

#include <cstddef>
#include <optional>
#include <span>

#include "reconf/ageing.hpp"
#include "reconf/electrics.hpp"
#include "reconf/errors.hpp"
#include "reconf/roots.hpp"

namespace reconf {

struct RpuEolSolution {
  double q_eol = 0.0;              ///< common per-cell EOL capacity [Ah]
  std::optional<double> z_eol;     ///< common EOL SOC (capacity criterion only)
  std::optional<double> v_oc_eol;  ///< common EOL OCV [V] (capacity criterion only)
  double r_eol = 0.0;              ///< common EOL resistance [Ohm]
  double efc_rpu_eol = 0.0;        ///< sum of cell EFCs at EOL
  double residual = 0.0;           ///< root residual [V]
  std::size_t unreached_cells = 0; ///< cells whose line never falls to q_eol
};

struct EfcSum {
  double total = 0.0;
  std::size_t unreached_cells = 0; ///< terms that came out negative
};

/// Sum of cell EFCs when every cell sits at capacity q_eol.
inline EfcSum rpu_efc(std::span<const CellAgeingLine> lines, double q_eol) {
  if (!(q_eol > 0.0)) throw DomainError("q_eol must be positive");
  EfcSum sum;
  for (const CellAgeingLine& line : lines) {
    const double e = efc_from_capacity(line, q_eol);
    if (e < 0.0) ++sum.unreached_cells;
    sum.total += e;
  }
  return sum;
}

/// Linear OCV-from-capacity coefficients of one cell's ageing line:
/// v_OC = alpha + beta * Q at the discharge cut-off.
struct AlphaBeta {
  double alpha;
  double beta;
};

inline AlphaBeta cell_alpha_beta(const CellAgeingLine& line, const CellElectricalParams& params,
                                 std::size_t n_p) {
  const double i_pu = params.i_1c() * static_cast<double>(n_p);
  const double np = static_cast<double>(n_p);
  return {params.v_min - i_pu * (line.c + line.a * line.d) / np, i_pu * line.d * line.b / np};
}

struct RpuOptions {
  double eol_fraction = 0.8;
  /// CV cut-off as a fraction of the 1C current; 0 means charging ends exactly
  /// at OCV = v_max.
  double cv_cutoff_fraction = 0.0;
};

/// SOC a cell of resistance r holds after a CC-CV charge to v_max.
inline double full_charge_soc(double r, const CellElectricalParams& params,
                              const OcvCurve& curve, const RpuOptions& opt) {
  const double i_cut = opt.cv_cutoff_fraction * params.q_nom;
  return curve.inverse(params.v_max - i_cut * r);
}

/// Residual of the capacity-criterion EOL equation at capacity q [V].
/// Positive below the root, negative above it.
inline double rpu_residual(double q, const ResistanceCapacityLine& rcl,
                           const CellElectricalParams& params, const OcvCurve& curve,
                           double q_pu_nom_1c, std::size_t n_p, const RpuOptions& opt = {}) {
  const double np = static_cast<double>(n_p);
  const double i_cell = params.i_1c();
  const double r = params.r_nom * rcl.r_tilde(q / params.q_nom);
  const double lhs = params.v_min - i_cell * r;
  const double z_full = full_charge_soc(r, params, curve, opt);
  const double rhs = curve.eval_clamped(z_full - opt.eol_fraction * q_pu_nom_1c / (np * q));
  return lhs - rhs;
}

/// Capacity-criterion (Approach 1) EOL of the RPU.
inline RpuEolSolution rpu_eol_capacity_approach1(std::span<const CellAgeingLine> lines,
                                                 const ResistanceCapacityLine& rcl,
                                                 const CellElectricalParams& params,
                                                 const OcvCurve& curve, double q_pu_nom_1c,
                                                 std::size_t n_p, const RpuOptions& opt = {}) {
  if (n_p < 1) throw DomainError("n_p must be at least 1");
  if (!(q_pu_nom_1c > 0.0)) throw DomainError("q_pu_nom_1c must be positive");
  const double np = static_cast<double>(n_p);
  const double lo = opt.eol_fraction * opt.eol_fraction * q_pu_nom_1c / np;
  const double hi = 1.05 * params.q_nom;
  auto g = [&](double q) { return rpu_residual(q, rcl, params, curve, q_pu_nom_1c, n_p, opt); };
  const RootResult root = solve_bracketed(g, lo, hi, 1e-9);

  RpuEolSolution sol;
  sol.q_eol = root.x;
  sol.residual = root.residual;
  sol.r_eol = params.r_nom * rcl.r_tilde(root.x / params.q_nom);
  sol.z_eol = full_charge_soc(sol.r_eol, params, curve, opt) -
              opt.eol_fraction * q_pu_nom_1c / (np * root.x);
  sol.v_oc_eol = curve.eval_clamped(*sol.z_eol);
  const EfcSum efc = rpu_efc(lines, root.x);
  sol.efc_rpu_eol = efc.total;
  sol.unreached_cells = efc.unreached_cells;
  return sol;
}

/// Safety-criterion (Approach 2) EOL capacity: exactly the cell threshold.
inline RpuEolSolution rpu_eol_capacity_approach2(const CellElectricalParams& params,
                                                 double eol_fraction = 0.8) {
  RpuEolSolution sol;
  sol.q_eol = eol_fraction * params.q_nom;
  return sol;
}

/// Safety-criterion EOL with resistance and summed EFC filled in.
inline RpuEolSolution rpu_eol_capacity_approach2(std::span<const CellAgeingLine> lines,
                                                 const ResistanceCapacityLine& rcl,
                                                 const CellElectricalParams& params,
                                                 double eol_fraction = 0.8) {
  RpuEolSolution sol = rpu_eol_capacity_approach2(params, eol_fraction);
  sol.r_eol = params.r_nom * rcl.r_tilde(eol_fraction);
  const EfcSum efc = rpu_efc(lines, sol.q_eol);
  sol.efc_rpu_eol = efc.total;
  sol.unreached_cells = efc.unreached_cells;
  return sol;
}

} // namespace reconf
