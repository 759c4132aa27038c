#include <catch_amalgamated.hpp>

#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "reconf/electrics.hpp"

using namespace reconf;
using Catch::Approx;

namespace {

CellState cell(double soc, double r, double q = 3.0) {
  CellState c;
  c.soc = soc;
  c.r = r;
  c.q = q;
  return c;
}

// Curve through (0.5, v).
OcvCurve flat_middle(double v) {
  return OcvCurve({{0.0, 3.0}, {0.4, v - 0.001}, {0.5, v}, {0.6, v + 0.001}, {1.0, 4.2}});
}

} // namespace

TEST_CASE("ocv curve evaluates breakpoints and midpoints") {
  const OcvCurve f = OcvCurve::default_nmc();
  const std::vector<std::pair<double, double>> table{
      {0.0, 3.00}, {0.1, 3.45}, {0.2, 3.55}, {0.3, 3.60}, {0.4, 3.64}, {0.5, 3.68},
      {0.6, 3.74}, {0.7, 3.82}, {0.8, 3.92}, {0.9, 4.05}, {1.0, 4.20}};
  for (const auto& [z, v] : table) CHECK(f(z) == v);
  CHECK(f(0.5) == 3.68);
  for (std::size_t k = 0; k + 1 < table.size(); ++k) {
    const double zm = 0.5 * (table[k].first + table[k + 1].first);
    CHECK(f(zm) == Approx(0.5 * (table[k].second + table[k + 1].second)).epsilon(1e-14));
  }
}

TEST_CASE("ocv curve rejects soc outside [0, 1] beyond the slack") {
  const OcvCurve f = OcvCurve::default_nmc();
  CHECK_THROWS_AS(f(-1e-6), DomainError);
  CHECK_THROWS_AS(f(1.0 + 1e-6), DomainError);
  CHECK(f(-1e-10) == 3.0);
  CHECK(f(1.0 + 1e-10) == 4.2);
}

TEST_CASE("ocv curve validation") {
  CHECK_THROWS_AS(OcvCurve({{0.0, 3.0}}), DomainError);
  CHECK_THROWS_AS(OcvCurve({{0.0, 3.0}, {0.5, 3.5}, {0.9, 4.2}}), DomainError);
  CHECK_THROWS_AS(OcvCurve({{0.0, 3.0}, {0.5, 3.9}, {0.6, 3.8}, {1.0, 4.2}}), DomainError);
  CHECK_THROWS_AS(OcvCurve({{0.0, 3.0}, {0.5, 3.5}, {0.5, 3.6}, {1.0, 4.2}}), DomainError);
  CHECK_NOTHROW(OcvCurve({{0.0, 3.0}, {0.25, 3.5}, {1.0, 4.2}}));
}

TEST_CASE("ocv inverse round-trips and non-uniform tables interpolate") {
  const OcvCurve f = OcvCurve::default_nmc();
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int k = 0; k < 1000; ++k) {
    const double z = u(rng);
    CHECK(f.inverse(f(z)) == Approx(z).margin(1e-12));
  }
  CHECK(f.inverse(2.0) == 0.0);
  CHECK(f.inverse(5.0) == 1.0);

  const OcvCurve g({{0.0, 3.0}, {0.25, 3.5}, {1.0, 4.25}});
  CHECK(g(0.125) == Approx(3.25));
  CHECK(g(0.625) == Approx(3.875));
  CHECK(g.slope(0.25) == Approx(1.0));
  CHECK(g.slope(0.1) == Approx(2.0));
}

TEST_CASE("electrical parameter validation") {
  const OcvCurve f = OcvCurve::default_nmc();
  CellElectricalParams p;
  CHECK_NOTHROW(p.validate(f));
  CHECK(p.i_1c() == -3.0);
  p.v_min = 2.9;
  CHECK_THROWS_AS(p.validate(f), DomainError);
  p = {};
  p.v_max = 3.0;
  CHECK_THROWS_AS(p.validate(f), DomainError);
  p = {};
  p.r_nom = 0.0;
  CHECK_THROWS_AS(p.validate(f), DomainError);
}

TEST_CASE("current split examples") {
  SECTION("two identical cells share equally") {
    const OcvCurve f = OcvCurve::default_nmc();
    const std::vector<CellState> cells{cell(0.37, 0.02), cell(0.37, 0.02)};
    const CurrentSplit s = solve_cc_current_split(cells, f, -7.0);
    CHECK(s.currents[0] == Approx(-3.5));
    CHECK(s.currents[1] == Approx(-3.5));
  }
  SECTION("equal OCVs split inversely to resistance") {
    const OcvCurve f = OcvCurve::default_nmc();
    const std::vector<CellState> cells{cell(0.5, 0.001), cell(0.5, 0.002)};
    const CurrentSplit s = solve_cc_current_split(cells, f, -6.0);
    CHECK(s.currents[0] == Approx(-4.0).epsilon(1e-12));
    CHECK(s.currents[1] == Approx(-2.0).epsilon(1e-12));
  }
  SECTION("mismatched OCVs circulate current") {
    const OcvCurve f({{0.0, 3.0}, {0.4, 3.68}, {0.6, 3.70}, {1.0, 4.2}});
    const std::vector<CellState> cells{cell(0.6, 0.001), cell(0.4, 0.001)};
    const CurrentSplit s = solve_cc_current_split(cells, f, -6.0);
    CHECK(s.v_terminal == Approx(3.687).epsilon(1e-12));
    CHECK(s.currents[0] == Approx(-13.0).epsilon(1e-9));
    CHECK(s.currents[1] == Approx(7.0).epsilon(1e-9));
  }
  SECTION("single branch carries the whole current exactly") {
    const OcvCurve f = OcvCurve::default_nmc();
    const std::vector<CellState> cells{cell(0.42, 1e-12)};
    const CurrentSplit s = solve_cc_current_split(cells, f, -3.0);
    CHECK(s.currents[0] == -3.0);
  }
  SECTION("errors") {
    const OcvCurve f = OcvCurve::default_nmc();
    CHECK_THROWS_AS(solve_cc_current_split(std::vector<CellState>{}, f, -1.0), DomainError);
    CHECK_THROWS_AS(solve_cc_current_split(std::vector<CellState>{cell(0.5, 0.0)}, f, -1.0),
                    DomainError);
  }
}

TEST_CASE("current split invariants on random packs") {
  const OcvCurve f = OcvCurve::default_nmc();
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> z(0.05, 0.95);
  std::uniform_real_distribution<double> r(0.01, 0.08);
  std::uniform_int_distribution<int> n(1, 20);
  std::uniform_real_distribution<double> itot(-60.0, 60.0);
  for (int trial = 0; trial < 500; ++trial) {
    std::vector<CellState> cells(static_cast<std::size_t>(n(rng)));
    for (CellState& c : cells) c = cell(z(rng), r(rng));
    const double i_total = itot(rng);
    const CurrentSplit s = solve_cc_current_split(cells, f, i_total);
    const double sum = std::accumulate(s.currents.begin(), s.currents.end(), 0.0);
    CHECK(std::abs(sum - i_total) <= 1e-9 * std::max(1.0, std::abs(i_total)));
    double max_ocv = 0.0;
    for (std::size_t j = 0; j < cells.size(); ++j) {
      const double v = f(cells[j].soc) + s.currents[j] * cells[j].r;
      CHECK(std::abs(v - s.v_terminal) < 1e-9);
      max_ocv = std::max(max_ocv, f(cells[j].soc));
    }
    if (i_total < 0.0) CHECK(s.v_terminal < max_ocv);
  }
}

TEST_CASE("equal OCVs: current magnitude strictly decreases with resistance") {
  const OcvCurve f = OcvCurve::default_nmc();
  std::vector<CellState> cells;
  for (double r : {0.010, 0.015, 0.022, 0.030, 0.047}) cells.push_back(cell(0.55, r));
  const CurrentSplit s = solve_cc_current_split(cells, f, -15.0);
  for (std::size_t j = 1; j < cells.size(); ++j) {
    CHECK(std::abs(s.currents[j]) < std::abs(s.currents[j - 1]));
  }
}

TEST_CASE("cv current examples") {
  const OcvCurve f = flat_middle(4.0);
  SECTION("ohm's law") {
    const auto i = solve_cv_current(std::vector<CellState>{cell(0.5, 0.010)}, f, 4.1);
    CHECK(i[0] == Approx(10.0).epsilon(1e-12));
  }
  SECTION("equilibrium gives zero current") {
    const auto i = solve_cv_current(std::vector<CellState>{cell(0.5, 0.010), cell(0.5, 0.02)}, f, 4.0);
    CHECK(i[0] == 0.0);
    CHECK(i[1] == 0.0);
  }
  SECTION("charging currents are non-negative below v_hold") {
    const OcvCurve g = OcvCurve::default_nmc();
    const auto i = solve_cv_current(
        std::vector<CellState>{cell(0.9, 0.03), cell(0.95, 0.02), cell(0.99, 0.05)}, g, 4.2);
    for (double x : i) CHECK(x >= 0.0);
  }
}

TEST_CASE("advance_soc examples") {
  const CellState c = cell(0.5, 0.03);
  CHECK(advance_soc(c, 0.0, 10.0) == c);
  CHECK(advance_soc(cell(1.0, 0.03), -3.0, 3600.0).soc == Approx(0.0).margin(1e-15));
  CHECK(advance_soc(c, -3.0, 36.0).soc == Approx(0.49).epsilon(1e-14));
  CHECK(advance_soc(c, -3.0, 36.0).throughput == Approx(0.03).epsilon(1e-14));
  CHECK_THROWS_AS(advance_soc(c, 1.0, 0.0), DomainError);

  const CellState there = advance_soc(c, -2.0, 10.0);
  const CellState back = advance_soc(there, 2.0, 10.0);
  CHECK(back.soc == c.soc);
  CHECK(back.q == c.q);
  CHECK(back.r == c.r);
}
