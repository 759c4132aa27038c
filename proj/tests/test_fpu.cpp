#include <catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <vector>

#include "reconf/ageing.hpp"
#include "reconf/fpu.hpp"
#include "reconf/rng.hpp"

using namespace reconf;
using Catch::Approx;

namespace {

const OcvCurve kCurve = OcvCurve::default_nmc();

PuConfig identical_pu(std::size_t n_p, double q_s = 1.0, double efc_e = 600.0,
                      double rho = 135.0, CellElectricalParams p = {}) {
  PuConfig cfg;
  cfg.params = p;
  cfg.lines.assign(n_p, make_cell_line(q_s, efc_e, rho_to_line(rho), p));
  return cfg;
}

PuConfig sampled_pu(std::size_t n_p, std::uint64_t seed, double rho = 124.5) {
  PuConfig cfg;
  RandomEngine rng = make_stream(seed);
  cfg.lines = sample_cell_lines(AgeingDistributions{}, rho_to_line(rho), cfg.params, n_p, rng);
  return cfg;
}

} // namespace

TEST_CASE("protocol validation") {
  CyclingProtocol p;
  CHECK_NOTHROW(p.validate());
  p.dt = 0.0;
  CHECK_THROWS_AS(p.validate(), DomainError);
  p = {};
  p.cv_cutoff_fraction = 1.0;
  CHECK_THROWS_AS(p.validate(), DomainError);
  p = {};
  p.extrapolation = 0;
  CHECK_THROWS_AS(p.validate(), DomainError);
}

TEST_CASE("discharge of a near-ideal cell recovers its full capacity") {
  CellElectricalParams p;
  p.r_nom = 1e-9;
  PuConfig cfg = identical_pu(1, 1.0, 600.0, 135.0, p);
  std::vector<CellState> cells = initial_cells(cfg);
  cells[0].soc = 1.0;
  const DischargeResult d = run_discharge_cycle(cells, cfg, kCurve, CyclingProtocol{});
  CHECK(d.discharged_ah == Approx(3.0).epsilon(1e-6));
  CHECK(cells[0].soc == Approx(0.0).margin(1e-6));
}

TEST_CASE("two identical cells discharge exactly twice one cell") {
  const CyclingProtocol proto;
  PuConfig one = identical_pu(1);
  PuConfig two = identical_pu(2);
  std::vector<CellState> c1 = initial_cells(one);
  std::vector<CellState> c2 = initial_cells(two);
  run_charge_cycle(c1, one, kCurve, proto);
  run_charge_cycle(c2, two, kCurve, proto);
  const double a = run_discharge_cycle(c1, one, kCurve, proto).discharged_ah;
  const double b = run_discharge_cycle(c2, two, kCurve, proto).discharged_ah;
  CHECK(b == Approx(2.0 * a).epsilon(1e-12));
}

TEST_CASE("halving dt barely moves the discharged capacity") {
  PuConfig cfg = sampled_pu(6, 17);
  auto measure = [&](double dt) {
    CyclingProtocol proto;
    proto.dt = dt;
    std::vector<CellState> cells = initial_cells(cfg);
    run_charge_cycle(cells, cfg, kCurve, proto);
    return run_discharge_cycle(cells, cfg, kCurve, proto).discharged_ah;
  };
  const double coarse = measure(30.0);
  const double fine = measure(15.0);
  CHECK(std::abs(coarse - fine) / fine < 1e-3);
}

TEST_CASE("charge termination conditions") {
  const CyclingProtocol proto;
  SECTION("cells at v_max with zero current return immediately") {
    PuConfig cfg = identical_pu(2);
    std::vector<CellState> cells = initial_cells(cfg);
    for (CellState& c : cells) c.soc = 1.0;
    const std::vector<CellState> before = cells;
    CHECK(run_charge_cycle(cells, cfg, kCurve, proto) == 0.0);
    CHECK(cells == before);
  }
  SECTION("near-ideal cell: charging is all CC") {
    CellElectricalParams p;
    p.r_nom = 1e-9;
    PuConfig cfg = identical_pu(1, 1.0, 600.0, 135.0, p);
    std::vector<CellState> cells = initial_cells(cfg);
    const double t = run_charge_cycle(cells, cfg, kCurve, proto);
    CHECK(t == Approx(0.5 * 3600.0).margin(1.0));
    CHECK(cells[0].soc == Approx(1.0).margin(1e-6));
  }
  SECTION("every cell ends within the cut-off band below v_max") {
    PuConfig cfg = sampled_pu(8, 23, 97.3);
    std::vector<CellState> cells = initial_cells(cfg);
    for (std::size_t j = 0; j < cells.size(); ++j) cells[j].soc = 0.05 + 0.02 * j;
    run_charge_cycle(cells, cfg, kCurve, proto);
    const double i_cut = proto.cv_cutoff_fraction * std::abs(cfg.i_pu_1c());
    double total = 0.0;
    for (const CellState& c : cells) {
      const double v = kCurve(c.soc);
      CHECK(v <= cfg.params.v_max + 1e-12);
      CHECK(v >= cfg.params.v_max - i_cut * c.r - 1e-12);
      total += (cfg.params.v_max - v) / c.r;
    }
    CHECK(total == Approx(i_cut).epsilon(1e-6));
  }
}

TEST_CASE("apply_cycle_ageing examples") {
  PuConfig cfg = identical_pu(1);
  std::vector<CellState> cells = initial_cells(cfg);
  SECTION("one equivalent full cycle") {
    cells[0].throughput = 2.0 * cfg.params.q_nom;
    apply_cycle_ageing(cells, cfg.lines, cfg.params.q_nom);
    CHECK(cells[0].efc == Approx(1.0));
    CHECK(cells[0].throughput == 0.0);
  }
  SECTION("no throughput, no change") {
    const auto before = cells;
    apply_cycle_ageing(cells, cfg.lines, cfg.params.q_nom);
    CHECK(cells == before);
  }
  SECTION("600 full cycles reach 2.4 Ah") {
    for (int k = 0; k < 600; ++k) {
      cells[0].throughput = 2.0 * cfg.params.q_nom;
      apply_cycle_ageing(cells, cfg.lines, cfg.params.q_nom);
    }
    CHECK(cells[0].q == Approx(2.4).epsilon(1e-9));
    CHECK(cells[0].r == Approx(1.2 * cfg.params.r_nom).epsilon(1e-9));
  }
}

TEST_CASE("identical cells under Approach 2 end at N_p * 600") {
  for (std::size_t n_p : {1u, 3u}) {
    const FpuOutcome o =
        simulate_fpu_lifetime(identical_pu(n_p), kCurve, CyclingProtocol{}, Approach::kSafety);
    const double n = static_cast<double>(n_p);
    CHECK(o.efc_fpu_eol <= n * 600.0 + 1e-9);
    CHECK(o.efc_fpu_eol >= n * (600.0 - 1.1));
    CHECK(o.q_pu_nom_1c == o.per_cycle_capacity.front());
    CHECK(o.eol_approach == Approach::kSafety);
  }
}

TEST_CASE("single near-ideal cell: both approaches stop within a cycle") {
  CellElectricalParams p;
  p.r_nom = 1e-9;
  const PuConfig cfg = identical_pu(1, 1.0, 600.0, 135.0, p);
  const FpuOutcome a1 = simulate_fpu_lifetime(cfg, kCurve, CyclingProtocol{}, Approach::kCapacity);
  const FpuOutcome a2 = simulate_fpu_lifetime(cfg, kCurve, CyclingProtocol{}, Approach::kSafety);
  CHECK(std::abs(a1.cycles_run - a2.cycles_run) <= 1);
  CHECK(a1.efc_fpu_eol == Approx(a2.efc_fpu_eol).margin(1.1));
}

TEST_CASE("two-cell pack: Approach 2 EOL tracks the weaker cell") {
  PuConfig cfg;
  const ResistanceCapacityLine rcl = rho_to_line(124.5);
  cfg.lines = {make_cell_line(1.0, 500.0, rcl, cfg.params), make_cell_line(1.0, 700.0, rcl, cfg.params)};
  CyclingProtocol proto;
  const FpuOutcome coarse = simulate_fpu_lifetime(cfg, kCurve, proto, Approach::kSafety);
  proto.dt = 5.0;
  const FpuOutcome fine = simulate_fpu_lifetime(cfg, kCurve, proto, Approach::kSafety);
  CHECK(std::abs(coarse.cycles_run - fine.cycles_run) <= 1);
  // weaker cell sits at or just above the threshold at EOL
  const double thr = 0.8 * cfg.params.q_nom;
  CHECK(coarse.q_cells_eol[0] >= thr);
  CHECK(efc_from_capacity(cfg.lines[0], coarse.q_cells_eol[0]) > 500.0 - 1.1);
  CHECK(coarse.q_cells_eol[1] > coarse.q_cells_eol[0]);
}

TEST_CASE("lifetime invariants on a sampled pack") {
  const PuConfig cfg = sampled_pu(5, 99, 105.7);
  CyclingProtocol proto;
  std::vector<CycleTraceRow> trace;
  const FpuLifetime life = simulate_fpu_lifetime_multi(cfg, kCurve, proto, true, true, &trace);
  REQUIRE(life.capacity);
  REQUIRE(life.safety);
  const FpuOutcome& a1 = *life.capacity;
  const FpuOutcome& a2 = *life.safety;

  for (std::size_t k = 1; k < a1.per_cycle_capacity.size(); ++k) {
    CHECK(a1.per_cycle_capacity[k] <= a1.per_cycle_capacity[k - 1] * (1.0 + 1e-6));
  }
  for (std::size_t k = 1; k < trace.size(); ++k) {
    CHECK(trace[k].sum_efc > trace[k - 1].sum_efc);
    CHECK(trace[k].min_cell_q < trace[k - 1].min_cell_q);
    CHECK(trace[k].max_cell_q < trace[k - 1].max_cell_q);
  }
  for (std::size_t k = 1; k < a1.cycle_boundaries.size(); ++k) {
    CHECK(a1.cycle_boundaries[k].t_start > a1.cycle_boundaries[k - 1].t_end);
    CHECK(a1.cycle_boundaries[k].t_end > a1.cycle_boundaries[k].t_start);
  }

  // Approach 1: the EOL cycle is the first at or below 80 % of the first measurement.
  CHECK(a1.per_cycle_capacity.back() <= 0.8 * a1.q_pu_nom_1c);
  for (std::size_t k = 0; k + 1 < a1.per_cycle_capacity.size(); ++k) {
    CHECK(a1.per_cycle_capacity[k] > 0.8 * a1.q_pu_nom_1c);
  }

  // Approach 2: nobody below the threshold in the reported state, and the
  // weakest cell is within one cycle of crossing it.
  const double thr = 0.8 * cfg.params.q_nom;
  std::size_t weakest = 0;
  for (std::size_t j = 0; j < cfg.n_p(); ++j) {
    CHECK(a2.q_cells_eol[j] >= thr);
    if (cfg.lines[j].efc_e < cfg.lines[weakest].efc_e) weakest = j;
  }
  const double efc_w = efc_from_capacity(cfg.lines[weakest], a2.q_cells_eol[weakest]);
  CHECK(efc_w <= cfg.lines[weakest].efc_e);
  CHECK(cfg.lines[weakest].efc_e - efc_w < 1.5);
}

TEST_CASE("multi-approach run equals single-approach runs") {
  const PuConfig cfg = sampled_pu(4, 5);
  const CyclingProtocol proto;
  const FpuLifetime both = simulate_fpu_lifetime_multi(cfg, kCurve, proto, true, true);
  const FpuOutcome a1 = simulate_fpu_lifetime(cfg, kCurve, proto, Approach::kCapacity);
  const FpuOutcome a2 = simulate_fpu_lifetime(cfg, kCurve, proto, Approach::kSafety);
  CHECK(both.capacity->efc_fpu_eol == a1.efc_fpu_eol);
  CHECK(both.safety->efc_fpu_eol == a2.efc_fpu_eol);
  CHECK(both.capacity->cycles_run == a1.cycles_run);
  CHECK(both.safety->cycles_run == a2.cycles_run);
}

TEST_CASE("permuting identical cells changes nothing") {
  PuConfig cfg = sampled_pu(3, 8);
  cfg.lines.push_back(cfg.lines[0]);
  PuConfig perm = cfg;
  std::swap(perm.lines[0], perm.lines[3]);
  const CyclingProtocol proto;
  const FpuOutcome a = simulate_fpu_lifetime(cfg, kCurve, proto, Approach::kSafety);
  const FpuOutcome b = simulate_fpu_lifetime(perm, kCurve, proto, Approach::kSafety);
  CHECK(a.efc_fpu_eol == Approx(b.efc_fpu_eol).epsilon(1e-12));
  CHECK(a.cycles_run == b.cycles_run);

  PuConfig same = identical_pu(3, 0.99, 610.0, 124.5);
  PuConfig same_perm = same;
  std::reverse(same_perm.lines.begin(), same_perm.lines.end());
  const FpuOutcome c = simulate_fpu_lifetime(same, kCurve, proto, Approach::kCapacity);
  const FpuOutcome d = simulate_fpu_lifetime(same_perm, kCurve, proto, Approach::kCapacity);
  CHECK(c.efc_fpu_eol == d.efc_fpu_eol);
  CHECK(c.per_cycle_capacity == d.per_cycle_capacity);
}

TEST_CASE("doubling N_p of identical cells doubles capacity and EFC") {
  const CyclingProtocol proto;
  for (Approach ap : {Approach::kCapacity, Approach::kSafety}) {
    const FpuOutcome a = simulate_fpu_lifetime(identical_pu(2, 0.995, 620.0, 124.5), kCurve, proto, ap);
    const FpuOutcome b = simulate_fpu_lifetime(identical_pu(4, 0.995, 620.0, 124.5), kCurve, proto, ap);
    CHECK(b.q_pu_nom_1c == Approx(2.0 * a.q_pu_nom_1c).epsilon(1e-9));
    CHECK(b.efc_fpu_eol == Approx(2.0 * a.efc_fpu_eol).epsilon(1e-9));
    CHECK(b.cycles_run == a.cycles_run);
  }
}

TEST_CASE("halving dt changes efc_fpu_eol by under 0.5 %") {
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const PuConfig cfg = sampled_pu(4, seed, seed == 2 ? 97.3 : 124.5);
    CyclingProtocol proto;
    const FpuLifetime coarse = simulate_fpu_lifetime_multi(cfg, kCurve, proto, true, true);
    proto.dt /= 2.0;
    const FpuLifetime fine = simulate_fpu_lifetime_multi(cfg, kCurve, proto, true, true);
    CHECK(std::abs(coarse.capacity->efc_fpu_eol / fine.capacity->efc_fpu_eol - 1.0) < 0.005);
    CHECK(std::abs(coarse.safety->efc_fpu_eol / fine.safety->efc_fpu_eol - 1.0) < 0.005);
  }
}

TEST_CASE("cycle extrapolation stays close to full simulation") {
  const PuConfig cfg = sampled_pu(6, 31);
  CyclingProtocol proto;
  const FpuLifetime full = simulate_fpu_lifetime_multi(cfg, kCurve, proto, true, true);
  proto.extrapolation = 10;
  const FpuLifetime fast = simulate_fpu_lifetime_multi(cfg, kCurve, proto, true, true);
  CHECK(std::abs(fast.capacity->efc_fpu_eol / full.capacity->efc_fpu_eol - 1.0) < 0.005);
  CHECK(std::abs(fast.safety->efc_fpu_eol / full.safety->efc_fpu_eol - 1.0) < 0.005);
}

TEST_CASE("cycle budget and divergence guards") {
  CyclingProtocol proto;
  proto.max_cycles = 10;
  CHECK_THROWS_AS(simulate_fpu_lifetime(identical_pu(2), kCurve, proto, Approach::kSafety),
                  BudgetExceeded);
  proto = {};
  proto.max_steps = 3;
  CHECK_THROWS_AS(simulate_fpu_lifetime(identical_pu(2), kCurve, proto, Approach::kSafety),
                  SimulationDivergence);
  CHECK_THROWS_AS(simulate_fpu_lifetime(PuConfig{}, kCurve, CyclingProtocol{}, Approach::kSafety),
                  DomainError);
}
