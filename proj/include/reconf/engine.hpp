#pragma once

// Monte Carlo orchestration: case grid, per-experiment FPU/RPU comparison,
// PU summary statistics and the GM bootstrap.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <limits>
#include <map>
#include <mutex>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <system_error>
#include <thread>
#include <vector>

#include "reconf/ageing.hpp"
#include "reconf/electrics.hpp"
#include "reconf/errors.hpp"
#include "reconf/fpu.hpp"
#include "reconf/rng.hpp"
#include "reconf/rpu.hpp"

namespace reconf {

/// How per-experiment random streams are keyed.
enum class SeedScope {
  kCase,   ///< (master_seed, case_id, exp_index): every case draws independently
  kShared, ///< (master_seed, exp_index, cell): common random numbers across cases
};

/// State of charge the RPU end-of-life equation starts its last discharge
/// from.
enum class FullChargeReference {
  kIdeal,    ///< 100 % SOC
  kProtocol, ///< where the CC-CV charge actually stops (CV cut-off tail)
};

struct CaseSpec {
  double sigma_s_rel = 0.0028; ///< sigma_s / mu_s
  double sigma_e_rel = 0.111;  ///< sigma_e / mu_e
  double rho = 124.5;          ///< [deg]
  std::size_t n_p = 10;
  std::size_t n_exp_pu = 200;
  Approach approach = Approach::kSafety;
  std::uint64_t master_seed = 1;
  std::string case_id;
};

struct ExperimentRecord {
  std::string case_id;
  Approach approach = Approach::kSafety;
  std::size_t exp_index = 0;
  double efc_fpu_eol = std::numeric_limits<double>::quiet_NaN();
  double efc_rpu_eol = std::numeric_limits<double>::quiet_NaN();
  double chi_pu = std::numeric_limits<double>::quiet_NaN(); ///< [%]
  double q_pu_nom_1c = std::numeric_limits<double>::quiet_NaN();
  int cycles_run = 0;
  std::size_t unreached_cells = 0; ///< RPU terms with a negative EFC
  std::string flag;                ///< empty for a valid record

  bool flagged() const noexcept { return !flag.empty(); }
};

struct HistogramBin {
  double low;
  double high;
  std::size_t count;
};

struct SummaryStats {
  double mean = 0.0;
  double std = 0.0; ///< sample standard deviation, n - 1 denominator
  std::size_t n = 0;
  std::size_t n_flagged = 0;
  std::vector<HistogramBin> histogram;
};

enum class GmSampling {
  kBootstrap, ///< n_s indices drawn uniformly with replacement per trial
  kEnumerate, ///< trial t takes indices t*n_s, ..., t*n_s + n_s - 1 (mod N)
};

/// N_s in {2, ..., 10, 15, 20, ..., 200}.
inline std::vector<std::size_t> default_ns_values() {
  std::vector<std::size_t> v;
  for (std::size_t n = 2; n <= 10; ++n) v.push_back(n);
  for (std::size_t n = 15; n <= 200; n += 5) v.push_back(n);
  return v;
}

struct GmSpec {
  std::vector<std::size_t> n_s_values = default_ns_values();
  std::size_t n_exp_gm = 10'000;
  std::uint64_t resample_seed = 1;
  GmSampling sampling = GmSampling::kBootstrap;
};

struct EngineOptions {
  std::size_t workers = 1; ///< 0 picks the hardware concurrency
  SeedScope seed_scope = SeedScope::kCase;
  FullChargeReference full_charge = FullChargeReference::kIdeal;
};

/// PU lifetime extension [%].
inline double chi_pu(double efc_rpu, double efc_fpu) {
  if (!(efc_fpu > 0.0)) throw DomainError("efc_fpu must be positive");
  return (efc_rpu / efc_fpu - 1.0) * 100.0;
}

namespace detail {

// Shortest decimal of x after rounding to 9 decimals, so 0.0028 * 100 prints
// as 0.28.
inline std::string short_decimal(double x) {
  const double r = std::round(x * 1e9) / 1e9;
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, r);
  return std::string(buf, res.ptr);
}

inline std::size_t resolve_workers(std::size_t w) {
  if (w != 0) return w;
  const unsigned hc = std::thread::hardware_concurrency();
  return hc == 0 ? 1 : hc;
}

// Runs fn(i) for i in [0, n) on up to `workers` threads. The first exception
// thrown by fn is rethrown once every thread has stopped.
template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn&& fn) {
  workers = std::min(resolve_workers(workers), std::max<std::size_t>(n, 1));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::atomic<bool> failed{false};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto body = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= n || failed.load()) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
        failed = true;
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(body);
  for (std::thread& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

constexpr std::uint64_t kSharedTag = fnv1a("shared-cells");

} // namespace detail

/// Stable key such as "ss0.28_se11.1_rho124.5_np10" (sigmas in percent).
inline std::string make_case_id(double sigma_s_rel, double sigma_e_rel, double rho,
                                std::size_t n_p) {
  return "ss" + detail::short_decimal(sigma_s_rel * 100.0) + "_se" +
         detail::short_decimal(sigma_e_rel * 100.0) + "_rho" + detail::short_decimal(rho) +
         "_np" + std::to_string(n_p);
}

struct CaseCoordinates {
  double sigma_s_rel;
  double sigma_e_rel;
  double rho;
  std::size_t n_p;
};

/// Inverse of make_case_id.
inline CaseCoordinates parse_case_id(std::string_view id) {
  auto fail = [&] { return InputError("malformed case id '" + std::string(id) + "'"); };
  auto field = [&](std::string_view prefix, std::string_view& rest) {
    if (rest.substr(0, prefix.size()) != prefix) throw fail();
    rest.remove_prefix(prefix.size());
    const std::size_t end = std::min(rest.find('_'), rest.size());
    const std::string_view tok = rest.substr(0, end);
    rest.remove_prefix(end == rest.size() ? end : end + 1);
    return tok;
  };
  auto number = [&](std::string_view tok) {
    double v = 0.0;
    auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (ec != std::errc() || p != tok.data() + tok.size() || tok.empty()) throw fail();
    return v;
  };
  // Percent fields are read as "<digits>e-2" so 0.28 gives the same double as 0.0028.
  auto percent = [&](std::string_view tok) {
    if (tok.find_first_of("eE") != std::string_view::npos) throw fail();
    number(tok);
    const std::string scaled = std::string(tok) + "e-2";
    return number(scaled);
  };
  std::string_view rest = id;
  CaseCoordinates c{};
  c.sigma_s_rel = percent(field("ss", rest));
  c.sigma_e_rel = percent(field("se", rest));
  c.rho = number(field("rho", rest));
  const std::string_view np = field("np", rest);
  if (!rest.empty()) throw fail();
  std::size_t n = 0;
  auto [p, ec] = std::from_chars(np.data(), np.data() + np.size(), n);
  if (ec != std::errc() || p != np.data() + np.size() || np.empty()) throw fail();
  c.n_p = n;
  return c;
}

struct GridAxes {
  std::vector<double> sigma_s_rel{0.001, 0.0028, 0.01};
  std::vector<double> sigma_e_rel{0.01, 0.03, 0.111};
  std::vector<double> rho{124.5, 105.7, 97.3};
  std::vector<std::size_t> n_p{2, 4, 6, 8, 10, 12, 20};
};

/// Cartesian product of the axes, sigma_s outermost and n_p innermost.
inline std::vector<CaseSpec> build_case_grid(const GridAxes& axes = {},
                                             std::size_t n_exp_pu = 200,
                                             Approach approach = Approach::kSafety,
                                             std::uint64_t master_seed = 1) {
  std::vector<CaseSpec> grid;
  for (double ss : axes.sigma_s_rel)
    for (double se : axes.sigma_e_rel)
      for (double rho : axes.rho)
        for (std::size_t np : axes.n_p) {
          if (!(ss >= 0.0) || !(se >= 0.0) || np < 1) {
            throw DomainError("grid values must be non-negative and n_p >= 1");
          }
          grid.push_back({ss, se, rho, np, n_exp_pu, approach, master_seed,
                          make_case_id(ss, se, rho, np)});
        }
  return grid;
}

/// Distributions of one case: the base means with relative spreads.
inline AgeingDistributions case_distributions(const CaseSpec& cs, const AgeingDistributions& base) {
  AgeingDistributions d = base;
  d.sigma_s = cs.sigma_s_rel * base.mu_s;
  d.sigma_e = cs.sigma_e_rel * base.mu_e;
  return d;
}

/// Cell lines of experiment `exp_index` of a case.
inline std::vector<CellAgeingLine> draw_experiment_lines(const CaseSpec& cs,
                                                         const AgeingDistributions& base,
                                                         const CellElectricalParams& params,
                                                         std::size_t exp_index, SeedScope scope) {
  const AgeingDistributions dist = case_distributions(cs, base);
  const ResistanceCapacityLine rcl = rho_to_line(cs.rho);
  if (scope == SeedScope::kCase) {
    RandomEngine rng = make_stream(cs.master_seed, fnv1a(cs.case_id), exp_index);
    return sample_cell_lines(dist, rcl, params, cs.n_p, rng);
  }
  std::vector<CellAgeingLine> lines;
  lines.reserve(cs.n_p);
  for (std::size_t j = 0; j < cs.n_p; ++j) {
    RandomEngine rng = make_stream(cs.master_seed, detail::kSharedTag, exp_index, j);
    lines.push_back(sample_cell_lines(dist, rcl, params, 1, rng).front());
  }
  return lines;
}

struct CaseResult {
  std::vector<ExperimentRecord> capacity; ///< Approach 1, empty if not requested
  std::vector<ExperimentRecord> safety;   ///< Approach 2, empty if not requested
};

/// Runs every experiment of a case once and evaluates the requested
/// approaches from the same FPU simulation. Records come back in exp_index
/// order whatever the worker count.
inline CaseResult run_case_approaches(const CaseSpec& cs, const AgeingDistributions& base,
                                      const CellElectricalParams& params, const OcvCurve& curve,
                                      const CyclingProtocol& proto, bool want_capacity,
                                      bool want_safety, const EngineOptions& opt = {}) {
  if (cs.n_p < 1) throw DomainError("n_p must be at least 1");
  if (!(cs.sigma_s_rel >= 0.0) || !(cs.sigma_e_rel >= 0.0)) {
    throw DomainError("relative sigmas must be non-negative");
  }
  const ResistanceCapacityLine rcl = rho_to_line(cs.rho);
  case_distributions(cs, base).validate();
  params.validate(curve);
  proto.validate();

  RpuOptions rpu_opt;
  rpu_opt.eol_fraction = proto.eol_capacity_fraction;
  rpu_opt.cv_cutoff_fraction =
      opt.full_charge == FullChargeReference::kProtocol ? proto.cv_cutoff_fraction : 0.0;

  CaseResult out;
  auto blank = [&](Approach ap, std::size_t k) {
    ExperimentRecord r;
    r.case_id = cs.case_id;
    r.approach = ap;
    r.exp_index = k;
    return r;
  };
  if (want_capacity) out.capacity.resize(cs.n_exp_pu);
  if (want_safety) out.safety.resize(cs.n_exp_pu);

  detail::parallel_for(cs.n_exp_pu, opt.workers, [&](std::size_t k) {
    ExperimentRecord cap = blank(Approach::kCapacity, k);
    ExperimentRecord safe = blank(Approach::kSafety, k);
    std::vector<CellAgeingLine> lines;
    FpuLifetime life;
    try {
      lines = draw_experiment_lines(cs, base, params, k, opt.seed_scope);
      PuConfig cfg{params, lines, 0.5};
      life = simulate_fpu_lifetime_multi(cfg, curve, proto, want_capacity, want_safety);
    } catch (const BudgetExceeded& e) {
      cap.flag = safe.flag = std::string("budget_exceeded: ") + e.what();
    } catch (const SimulationDivergence& e) {
      cap.flag = safe.flag = std::string("divergence: ") + e.what();
    } catch (const DomainError& e) {
      cap.flag = safe.flag = std::string("domain: ") + e.what();
    }
    if (want_capacity && life.capacity) {
      const FpuOutcome& f = *life.capacity;
      cap.efc_fpu_eol = f.efc_fpu_eol;
      cap.q_pu_nom_1c = f.q_pu_nom_1c;
      cap.cycles_run = f.cycles_run;
      try {
        const RpuEolSolution s =
            rpu_eol_capacity_approach1(lines, rcl, params, curve, f.q_pu_nom_1c, cs.n_p, rpu_opt);
        cap.efc_rpu_eol = s.efc_rpu_eol;
        cap.unreached_cells = s.unreached_cells;
        cap.chi_pu = chi_pu(cap.efc_rpu_eol, cap.efc_fpu_eol);
      } catch (const NoRootError& e) {
        cap.flag = std::string("no_root: ") + e.what();
      } catch (const DomainError& e) {
        cap.flag = std::string("domain: ") + e.what();
      }
    }
    if (want_safety && life.safety) {
      const FpuOutcome& f = *life.safety;
      safe.efc_fpu_eol = f.efc_fpu_eol;
      safe.q_pu_nom_1c = f.q_pu_nom_1c;
      safe.cycles_run = f.cycles_run;
      try {
        const RpuEolSolution s =
            rpu_eol_capacity_approach2(lines, rcl, params, proto.eol_capacity_fraction);
        safe.efc_rpu_eol = s.efc_rpu_eol;
        safe.unreached_cells = s.unreached_cells;
        safe.chi_pu = chi_pu(safe.efc_rpu_eol, safe.efc_fpu_eol);
      } catch (const DomainError& e) {
        safe.flag = std::string("domain: ") + e.what();
      }
    }
    if (want_capacity) out.capacity[k] = std::move(cap);
    if (want_safety) out.safety[k] = std::move(safe);
  });
  return out;
}

/// Records of one case under cs.approach.
inline std::vector<ExperimentRecord> run_case(const CaseSpec& cs, const AgeingDistributions& base,
                                              const CellElectricalParams& params,
                                              const OcvCurve& curve, const CyclingProtocol& proto,
                                              const EngineOptions& opt = {}) {
  const bool cap = cs.approach == Approach::kCapacity;
  CaseResult r = run_case_approaches(cs, base, params, curve, proto, cap, !cap, opt);
  return cap ? std::move(r.capacity) : std::move(r.safety);
}

/// Equal-width bins over [min, max]; the last bin is closed. A sample with
/// no spread gets a single bin.
inline std::vector<HistogramBin> make_histogram(std::span<const double> xs, std::size_t bins) {
  if (xs.empty()) return {};
  if (bins < 1) throw DomainError("histogram needs at least one bin");
  const auto [lo_it, hi_it] = std::minmax_element(xs.begin(), xs.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (!(hi > lo)) return {{lo, hi, xs.size()}};
  const double w = (hi - lo) / static_cast<double>(bins);
  std::vector<HistogramBin> h(bins);
  for (std::size_t b = 0; b < bins; ++b) {
    h[b].low = lo + w * static_cast<double>(b);
    h[b].high = b + 1 == bins ? hi : lo + w * static_cast<double>(b + 1);
    h[b].count = 0;
  }
  for (double x : xs) {
    auto b = static_cast<std::size_t>((x - lo) / w);
    ++h[std::min(b, bins - 1)].count;
  }
  return h;
}

/// Mean, sample std and histogram of a plain sample. Needs two values.
inline SummaryStats summarize_values(std::span<const double> xs, std::size_t bins = 20) {
  if (xs.size() < 2) throw DomainError("summary needs at least two values");
  SummaryStats s;
  std::tie(s.mean, s.std) = detail::mean_and_sample_std(xs);
  s.n = xs.size();
  s.histogram = make_histogram(xs, bins);
  return s;
}

/// chi_pu statistics over the unflagged records.
inline SummaryStats summarize(std::span<const ExperimentRecord> records, std::size_t bins = 20) {
  std::vector<double> chi;
  chi.reserve(records.size());
  std::size_t flagged = 0;
  for (const ExperimentRecord& r : records) {
    if (r.flagged()) {
      ++flagged;
    } else {
      chi.push_back(r.chi_pu);
    }
  }
  if (chi.size() < 2) throw DomainError("summary needs at least two unflagged records");
  SummaryStats s = summarize_values(chi, bins);
  s.n_flagged = flagged;
  return s;
}

/// GM lifetime extension for one trial's indices.
inline double chi_gm(std::span<const ExperimentRecord> pool, std::span<const std::size_t> idx) {
  double sum_rpu = 0.0;
  double min_fpu = std::numeric_limits<double>::infinity();
  for (std::size_t i : idx) {
    sum_rpu += pool[i].efc_rpu_eol;
    min_fpu = std::min(min_fpu, pool[i].efc_fpu_eol);
  }
  return chi_pu(sum_rpu / static_cast<double>(idx.size()), min_fpu);
}

/// Series-module statistics per N_s, resampling the PU records of one case.
/// Flagged records are left out of the pool.
inline std::map<std::size_t, SummaryStats> gm_bootstrap(std::span<const ExperimentRecord> records,
                                                        const GmSpec& spec, std::size_t bins = 20,
                                                        std::size_t workers = 1) {
  if (records.empty()) throw DomainError("GM bootstrap needs records");
  if (spec.n_s_values.empty()) throw DomainError("n_s_values must not be empty");
  if (spec.n_exp_gm < 2) throw DomainError("n_exp_gm must be at least 2");
  std::vector<ExperimentRecord> pool;
  pool.reserve(records.size());
  for (const ExperimentRecord& r : records) {
    if (r.case_id != records.front().case_id || r.approach != records.front().approach) {
      throw DomainError("GM bootstrap records must come from one case and approach");
    }
    if (!r.flagged()) pool.push_back(r);
  }
  if (pool.empty()) throw DomainError("GM bootstrap has no unflagged records");
  for (std::size_t n_s : spec.n_s_values) {
    if (n_s < 1) throw DomainError("n_s must be at least 1");
  }

  const std::size_t n_pool = pool.size();
  std::vector<SummaryStats> stats(spec.n_s_values.size());
  detail::parallel_for(spec.n_s_values.size(), workers, [&](std::size_t v) {
    const std::size_t n_s = spec.n_s_values[v];
    std::vector<std::size_t> idx(n_s);
    std::vector<double> chi(spec.n_exp_gm);
    std::uniform_int_distribution<std::size_t> pick(0, n_pool - 1);
    for (std::size_t t = 0; t < spec.n_exp_gm; ++t) {
      if (spec.sampling == GmSampling::kBootstrap) {
        SplitMix64 gen(derive_seed(spec.resample_seed, n_s, t));
        for (std::size_t& i : idx) i = pick(gen);
      } else {
        for (std::size_t m = 0; m < n_s; ++m) idx[m] = (t * n_s + m) % n_pool;
      }
      chi[t] = chi_gm(pool, idx);
    }
    stats[v] = summarize_values(chi, bins);
  });
  std::map<std::size_t, SummaryStats> out;
  for (std::size_t v = 0; v < spec.n_s_values.size(); ++v) out[spec.n_s_values[v]] = stats[v];
  return out;
}

} // namespace reconf
