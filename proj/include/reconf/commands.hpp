#pragma once

// Subcommand implementations behind the `reconf` executable. Each returns
// normally on success and throws InputError (or a model error) on failure.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "reconf/ageing.hpp"
#include "reconf/config.hpp"
#include "reconf/csv.hpp"
#include "reconf/engine.hpp"
#include "reconf/errors.hpp"
#include "reconf/fpu.hpp"

#ifndef RECONF_VERSION
#define RECONF_VERSION "0.1.0"
#endif

namespace reconf {

inline constexpr int kManifestSchemaVersion = 1;

/// Cases selected by a configuration, in grid order.
inline std::vector<CaseSpec> resolve_cases(const RunConfig& cfg) {
  std::vector<CaseSpec> cases;
  if (!cfg.grid_cases.empty()) {
    for (const std::string& id : cfg.grid_cases) {
      const CaseCoordinates c = parse_case_id(id);
      cases.push_back({c.sigma_s_rel, c.sigma_e_rel, c.rho, c.n_p, cfg.n_exp_pu,
                       Approach::kSafety, cfg.seed, id});
    }
  } else {
    cases = build_case_grid(cfg.axes(), cfg.n_exp_pu, Approach::kSafety, cfg.seed);
  }
  if (!cfg.case_filter.empty()) {
    std::regex re;
    try {
      re = std::regex(cfg.case_filter);
    } catch (const std::regex_error& e) {
      throw InputError("bad case filter '" + cfg.case_filter + "': " + e.what());
    }
    std::erase_if(cases, [&](const CaseSpec& c) { return !std::regex_search(c.case_id, re); });
  }
  std::set<std::string> seen;
  for (const CaseSpec& c : cases) {
    if (!seen.insert(c.case_id).second) throw InputError("duplicate case id " + c.case_id);
  }
  return cases;
}

/// Config from a key = value file or from the "config" object of a
/// manifest.json written by a previous run.
inline RunConfig load_run_config(const std::string& path) {
  if (std::filesystem::path(path).extension() != ".json") return load_config_file(path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InputError(path + ": " + e.what());
  }
  if (!j.contains("config") || !j["config"].is_object()) {
    throw InputError(path + ": no \"config\" object");
  }
  RunConfig cfg;
  for (const auto& [k, v] : j["config"].items()) {
    if (!v.is_string()) throw InputError(path + ": config value of " + k + " must be a string");
    apply_setting(cfg, k, v.get<std::string>(), path);
  }
  return cfg;
}

namespace detail {

inline std::string approach_tag(Approach a) { return a == Approach::kCapacity ? "1" : "2"; }

inline std::string sanitize_flag(std::string s) {
  for (char& ch : s) {
    if (ch == ',' || ch == '\n' || ch == '\r') ch = ';';
  }
  return s;
}

inline const std::vector<std::string>& record_columns() {
  static const std::vector<std::string> cols{
      "case_id",     "approach",   "exp_index",       "efc_fpu_eol", "efc_rpu_eol",
      "chi_pu",      "q_pu_nom_1c", "cycles_run", "unreached_cells", "flag"};
  return cols;
}

} // namespace detail

inline std::string records_file_name(const std::string& case_id, Approach a) {
  return "records_" + case_id + "_a" + detail::approach_tag(a) + ".csv";
}

inline std::string records_csv(std::span<const ExperimentRecord> records) {
  std::ostringstream os;
  csv::Row header;
  for (const std::string& c : detail::record_columns()) header << c;
  os << header;
  for (const ExperimentRecord& r : records) {
    os << (csv::Row() << r.case_id << detail::approach_tag(r.approach) << r.exp_index
                      << r.efc_fpu_eol << r.efc_rpu_eol << r.chi_pu << r.q_pu_nom_1c
                      << r.cycles_run << r.unreached_cells << detail::sanitize_flag(r.flag));
  }
  return os.str();
}

inline std::vector<ExperimentRecord> read_records_csv(const std::string& path) {
  const csv::Table t = csv::read_file(path, detail::record_columns());
  std::vector<ExperimentRecord> out;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& row = t.rows[i];
    ExperimentRecord r;
    r.case_id = row[0];
    if (row[1] == "1") {
      r.approach = Approach::kCapacity;
    } else if (row[1] == "2") {
      r.approach = Approach::kSafety;
    } else {
      throw InputError(t.where(i) + ": approach must be 1 or 2");
    }
    r.exp_index = parse_uint(row[2], t.where(i));
    r.efc_fpu_eol = t.number(i, 3);
    r.efc_rpu_eol = t.number(i, 4);
    r.chi_pu = t.number(i, 5);
    r.q_pu_nom_1c = t.number(i, 6);
    r.cycles_run = static_cast<int>(parse_uint(row[7], t.where(i)));
    r.unreached_cells = parse_uint(row[8], t.where(i));
    r.flag = row[9];
    out.push_back(std::move(r));
  }
  return out;
}

inline std::string trace_csv(std::span<const CycleTraceRow> rows) {
  std::ostringstream os;
  os << (csv::Row() << "cycle" << "q_pu_1c" << "min_cell_q" << "max_cell_q" << "sum_efc");
  for (const CycleTraceRow& r : rows) {
    os << (csv::Row() << r.cycle << r.q_pu_1c << r.min_cell_q << r.max_cell_q << r.sum_efc);
  }
  return os.str();
}

/// Histogram rows `chi,bin_low,bin_high,frequency`; chi is the bin centre and
/// frequencies are normalised by the number of unflagged records.
inline std::string histogram_csv(std::span<const HistogramBin> bins) {
  std::size_t total = 0;
  for (const HistogramBin& b : bins) total += b.count;
  std::ostringstream os;
  os << (csv::Row() << "chi" << "bin_low" << "bin_high" << "frequency");
  for (const HistogramBin& b : bins) {
    os << (csv::Row() << 0.5 * (b.low + b.high) << b.low << b.high
                      << static_cast<double>(b.count) / static_cast<double>(total));
  }
  return os.str();
}

struct RunSummary {
  std::size_t cases = 0;
  std::size_t records = 0;
  std::size_t flagged = 0;
};

/// Executes the configured grid and writes records, summaries and the
/// manifest into cfg.out.
inline RunSummary cmd_run(const RunConfig& cfg, std::ostream& log) {
  validate(cfg);
  const OcvCurve curve = cfg.load_curve();
  try {
    cfg.cell.validate(curve);
  } catch (const DomainError& e) {
    throw InputError(std::string("invalid configuration: ") + e.what());
  }
  const std::vector<CaseSpec> cases = resolve_cases(cfg);
  if (cases.empty()) throw InputError("no case matches the selection");

  namespace fs = std::filesystem;
  const fs::path out(cfg.out);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw InputError("cannot create output directory " + cfg.out);

  const EngineOptions opt = cfg.engine_options();
  GmSpec gm;
  gm.n_s_values = cfg.gm_n_s;
  gm.n_exp_gm = cfg.gm_n_exp;
  gm.resample_seed = cfg.gm_seed;

  std::ostringstream pu;
  pu << (csv::Row() << "case_id" << "approach" << "sigma_s_rel" << "sigma_e_rel" << "rho"
                    << "n_p" << "n" << "n_flagged" << "mean_chi" << "std_chi");
  std::ostringstream gm_csv;
  gm_csv << (csv::Row() << "case_id" << "approach" << "n_s" << "n_exp_gm" << "mean_chi_gm"
                        << "std_chi_gm");
  nlohmann::json record_files = nlohmann::json::array();

  RunSummary summary;
  for (std::size_t ci = 0; ci < cases.size(); ++ci) {
    const CaseSpec& cs = cases[ci];
    const CaseResult res = run_case_approaches(cs, cfg.ageing, cfg.cell, curve, cfg.protocol,
                                               cfg.want_capacity(), cfg.want_safety(), opt);
    for (const auto* recs : {&res.capacity, &res.safety}) {
      if (recs->empty()) continue;
      const Approach ap = recs->front().approach;
      const std::string name = records_file_name(cs.case_id, ap);
      csv::write_file((out / name).string(), records_csv(*recs));
      record_files.push_back(name);
      ++summary.cases;
      summary.records += recs->size();

      std::size_t flagged = 0;
      for (const ExperimentRecord& r : *recs) flagged += r.flagged() ? 1 : 0;
      summary.flagged += flagged;
      const double nan = std::numeric_limits<double>::quiet_NaN();
      SummaryStats st;
      st.mean = st.std = nan;
      st.n = recs->size() - flagged;
      st.n_flagged = flagged;
      if (st.n >= 2) st = summarize(*recs, cfg.bins);
      pu << (csv::Row() << cs.case_id << detail::approach_tag(ap) << cs.sigma_s_rel
                        << cs.sigma_e_rel << cs.rho << cs.n_p << st.n << st.n_flagged << st.mean
                        << st.std);
      log << "[" << ci + 1 << "/" << cases.size() << "] " << cs.case_id << " a"
          << detail::approach_tag(ap) << "  mean chi " << csv::format_double(st.mean)
          << " %  flagged " << flagged << "\n";

      if (cfg.gm_enabled && st.n >= 1) {
        const auto gms = gm_bootstrap(*recs, gm, cfg.bins, cfg.workers);
        for (const auto& [n_s, g] : gms) {
          gm_csv << (csv::Row() << cs.case_id << detail::approach_tag(ap) << n_s << g.n
                                << g.mean << g.std);
        }
      }
    }
    if (cfg.trace) {
      std::vector<CycleTraceRow> rows;
      try {
        PuConfig pc{cfg.cell, draw_experiment_lines(cs, cfg.ageing, cfg.cell, 0, opt.seed_scope),
                    0.5};
        simulate_fpu_lifetime_multi(pc, curve, cfg.protocol, cfg.want_capacity(),
                                    cfg.want_safety(), &rows);
      } catch (const std::runtime_error&) {
        // Partial trace of a failed experiment is still useful; it is flagged in the records.
      } catch (const DomainError&) {
      }
      csv::write_file((out / ("trace_" + cs.case_id + ".csv")).string(), trace_csv(rows));
    }
  }
  csv::write_file((out / "summary_pu.csv").string(), pu.str());
  if (cfg.gm_enabled) csv::write_file((out / "summary_gm.csv").string(), gm_csv.str());

  nlohmann::json manifest;
  manifest["schema"] = kManifestSchemaVersion;
  manifest["tool"] = "reconf";
  manifest["version"] = RECONF_VERSION;
#if defined(__VERSION__)
  manifest["compiler"] = __VERSION__;
#endif
  manifest["seed"] = cfg.seed;
  nlohmann::json conf = nlohmann::json::object();
  for (const auto& [k, v] : config_entries(cfg, true)) conf[k] = v;
  manifest["config"] = conf;
  nlohmann::json ids = nlohmann::json::array();
  for (const CaseSpec& c : cases) ids.push_back(c.case_id);
  manifest["cases"] = ids;
  manifest["outputs"] = {{"records", record_files},
                         {"summary_pu", "summary_pu.csv"},
                         {"summary_gm", cfg.gm_enabled ? nlohmann::json("summary_gm.csv")
                                                       : nlohmann::json(nullptr)}};
  csv::write_file((out / "manifest.json").string(), manifest.dump(2) + "\n");
  return summary;
}

/// Prints the resolved case grid as CSV.
inline void cmd_grid(const RunConfig& cfg, std::ostream& os) {
  validate(cfg);
  os << (csv::Row() << "case_id" << "sigma_s_rel" << "sigma_e_rel" << "rho" << "n_p");
  for (const CaseSpec& c : resolve_cases(cfg)) {
    os << (csv::Row() << c.case_id << c.sigma_s_rel << c.sigma_e_rel << c.rho << c.n_p);
  }
}

/// Config fragment holding a fit.
inline std::string fit_fragment(const FitResult& fit) {
  std::ostringstream os;
  os << "# fitted R~ = -k * Q~ + l: k = " << csv::format_double(fit.line.k_rq)
     << ", l = " << csv::format_double(fit.line.l_rq) << "\n";
  os << "# unconstrained least squares: k = " << csv::format_double(fit.ols_k_rq)
     << ", l = " << csv::format_double(fit.ols_l_rq) << "\n";
  os << "ageing.mu_s = " << csv::format_double(fit.dist.mu_s) << "\n";
  os << "ageing.sigma_s = " << csv::format_double(fit.dist.sigma_s) << "\n";
  os << "ageing.mu_e = " << csv::format_double(fit.dist.mu_e) << "\n";
  os << "ageing.sigma_e = " << csv::format_double(fit.dist.sigma_e) << "\n";
  os << "rq.rho = " << csv::format_double(fit.line.rho_deg) << "\n";
  return os.str();
}

/// Fits ageing distributions and the R-Q line from the three input CSVs.
inline FitResult cmd_fit(const std::string& bol_csv, const std::string& eol_csv,
                         const std::string& rq_csv, std::ostream& os,
                         const std::string& out_path = {}) {
  const csv::Table bol = csv::read_file(bol_csv, {"cell_id", "q_tilde"});
  const csv::Table eol = csv::read_file(eol_csv, {"cell_id", "efc_eol"});
  const csv::Table rq = csv::read_file(rq_csv, {"q_tilde", "r_tilde"});
  std::vector<double> q;
  std::vector<double> e;
  std::vector<RqPoint> pts;
  for (std::size_t i = 0; i < bol.rows.size(); ++i) q.push_back(bol.number(i, 1));
  for (std::size_t i = 0; i < eol.rows.size(); ++i) e.push_back(eol.number(i, 1));
  for (std::size_t i = 0; i < rq.rows.size(); ++i) pts.push_back({rq.number(i, 0), rq.number(i, 1)});
  FitResult fit;
  try {
    fit = fit_distributions_from_data(q, e, pts);
  } catch (const DomainError& ex) {
    throw InputError(std::string("fit failed: ") + ex.what());
  }
  const std::string text = fit_fragment(fit);
  os << text;
  if (!out_path.empty()) csv::write_file(out_path, text);
  return fit;
}

struct ReportSummary {
  std::size_t histograms = 0;
  std::size_t trends = 0;
};

/// Histogram and trend CSVs from a run directory.
///
/// Trend rows aggregate over every case sharing the swept value: mean_chi and
/// std_chi are the averages of the per-case statistics. A one-axis sweep
/// therefore gets each case's own numbers.
inline ReportSummary cmd_report(const std::string& records_dir, std::size_t bins,
                                const std::string& out_dir, std::ostream& log) {
  namespace fs = std::filesystem;
  if (bins < 1) throw InputError("bins must be at least 1");
  if (!fs::is_directory(records_dir)) throw InputError("no such directory " + records_dir);
  std::vector<fs::path> files;
  for (const fs::directory_entry& de : fs::directory_iterator(records_dir)) {
    const std::string name = de.path().filename().string();
    if (de.is_regular_file() && name.rfind("records_", 0) == 0 && de.path().extension() == ".csv") {
      files.push_back(de.path());
    }
  }
  if (files.empty()) throw InputError("no records_*.csv files in " + records_dir);
  std::sort(files.begin(), files.end());

  const fs::path out(out_dir);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw InputError("cannot create output directory " + out_dir);

  struct CaseStat {
    CaseCoordinates coords;
    double mean;
    double std;
  };
  std::map<std::string, std::vector<CaseStat>> by_approach;
  ReportSummary rs;
  for (const fs::path& f : files) {
    const std::vector<ExperimentRecord> recs = read_records_csv(f.string());
    std::vector<double> chi;
    for (const ExperimentRecord& r : recs) {
      if (!r.flagged()) chi.push_back(r.chi_pu);
    }
    if (chi.empty()) {
      log << "skipping " << f.filename().string() << ": no unflagged records\n";
      continue;
    }
    const std::string stem = f.stem().string().substr(std::string("records_").size());
    csv::write_file((out / ("hist_" + stem + ".csv")).string(),
                    histogram_csv(make_histogram(chi, bins)));
    ++rs.histograms;
    const std::string tag = detail::approach_tag(recs.front().approach);
    const double mean = chi.size() >= 2 ? summarize_values(chi, bins).mean : chi.front();
    const double sd = chi.size() >= 2 ? summarize_values(chi, bins).std : 0.0;
    by_approach[tag].push_back({parse_case_id(recs.front().case_id), mean, sd});
  }

  auto write_trend = [&](const std::string& name, const std::string& column,
                         const std::map<double, std::vector<std::pair<double, double>>>& groups) {
    std::ostringstream os;
    os << (csv::Row() << column << "n_cases" << "mean_chi" << "std_chi");
    for (const auto& [value, stats] : groups) {
      double m = 0.0;
      double s = 0.0;
      for (const auto& [a, b] : stats) {
        m += a;
        s += b;
      }
      const auto n = static_cast<double>(stats.size());
      os << (csv::Row() << value << stats.size() << m / n << s / n);
    }
    csv::write_file((out / name).string(), os.str());
    ++rs.trends;
  };
  for (const auto& [tag, stats] : by_approach) {
    std::map<double, std::vector<std::pair<double, double>>> ss, se, rho, np;
    for (const CaseStat& c : stats) {
      ss[c.coords.sigma_s_rel].emplace_back(c.mean, c.std);
      se[c.coords.sigma_e_rel].emplace_back(c.mean, c.std);
      rho[c.coords.rho].emplace_back(c.mean, c.std);
      np[static_cast<double>(c.coords.n_p)].emplace_back(c.mean, c.std);
    }
    write_trend("trend_sigma_s_rel_a" + tag + ".csv", "sigma_s_rel", ss);
    write_trend("trend_sigma_e_rel_a" + tag + ".csv", "sigma_e_rel", se);
    write_trend("trend_rho_a" + tag + ".csv", "rho", rho);
    write_trend("trend_n_p_a" + tag + ".csv", "n_p", np);
  }

  const fs::path gm_path = fs::path(records_dir) / "summary_gm.csv";
  if (fs::exists(gm_path)) {
    const csv::Table t = csv::read_file(
        gm_path.string(),
        {"case_id", "approach", "n_s", "n_exp_gm", "mean_chi_gm", "std_chi_gm"});
    std::map<std::string, std::map<double, std::vector<std::pair<double, double>>>> groups;
    for (std::size_t i = 0; i < t.rows.size(); ++i) {
      groups[t.rows[i][1]][t.number(i, 2)].emplace_back(t.number(i, 4), t.number(i, 5));
    }
    for (const auto& [tag, g] : groups) {
      std::ostringstream os;
      os << (csv::Row() << "n_s" << "n_cases" << "mean_chi_gm" << "std_chi_gm");
      for (const auto& [n_s, stats] : g) {
        double m = 0.0;
        double s = 0.0;
        for (const auto& [a, b] : stats) {
          m += a;
          s += b;
        }
        const auto n = static_cast<double>(stats.size());
        os << (csv::Row() << static_cast<std::size_t>(n_s) << stats.size() << m / n << s / n);
      }
      csv::write_file((out / ("trend_ns_a" + tag + ".csv")).string(), os.str());
      ++rs.trends;
    }
  }
  return rs;
}

} // namespace reconf
