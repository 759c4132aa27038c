// reconf: Monte Carlo lifetime study of fixed vs ideally reconfigurable
// parallel cell units.

#include <algorithm>
#include <cstdlib>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "reconf/reconf.hpp"

namespace {

struct CommonFlags {
  std::string config;
  std::vector<std::string> sets;
  std::string seed;
  std::string out;
  std::string workers;
  std::string approach;
  std::string cases;
  std::string np;
  std::string ns;
};

void add_common(CLI::App* cmd, CommonFlags& f, bool run_flags) {
  cmd->add_option("--config", f.config, "config file (key = value) or a manifest.json");
  cmd->add_option("--set", f.sets, "override one key, e.g. --set cell.r_nom=25mOhm");
  cmd->add_option("--cases", f.cases, "regex a case id must match");
  cmd->add_option("--np", f.np, "comma-separated n_p values");
  if (!run_flags) return;
  cmd->add_option("--seed", f.seed, "master seed");
  cmd->add_option("--out", f.out, "output directory");
  cmd->add_option("--workers", f.workers, "worker threads (default: $RECONF_WORKERS or all cores)");
  cmd->add_option("--approach", f.approach, "EOL approach")->check(CLI::IsMember({"1", "2", "both"}));
  cmd->add_option("--ns", f.ns, "comma-separated N_s values, a:b:step ranges allowed");
}

reconf::RunConfig resolve(const CommonFlags& f) {
  reconf::RunConfig cfg = f.config.empty() ? reconf::RunConfig{} : reconf::load_run_config(f.config);
  if (const char* env = std::getenv("RECONF_WORKERS"); env != nullptr && cfg.workers == 0) {
    reconf::apply_setting(cfg, "run.workers", env, "RECONF_WORKERS");
  }
  for (const std::string& kv : f.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw reconf::InputError("--set expects key=value, got '" + kv + "'");
    reconf::apply_setting(cfg, kv.substr(0, eq), kv.substr(eq + 1), "--set");
  }
  auto flag = [&](const std::string& value, const char* key, const char* name) {
    if (!value.empty()) reconf::apply_setting(cfg, key, value, name);
  };
  flag(f.seed, "run.seed", "--seed");
  flag(f.out, "run.out", "--out");
  flag(f.workers, "run.workers", "--workers");
  flag(f.approach, "run.approach", "--approach");
  flag(f.cases, "grid.filter", "--cases");
  flag(f.np, "grid.n_p", "--np");
  if (!f.np.empty() && !cfg.grid_cases.empty()) {
    // An explicit case list bypasses the grid axes, so --np narrows the list instead.
    std::vector<std::string> kept;
    for (const std::string& id : cfg.grid_cases) {
      const std::size_t np = reconf::parse_case_id(id).n_p;
      if (std::find(cfg.grid_n_p.begin(), cfg.grid_n_p.end(), np) != cfg.grid_n_p.end()) {
        kept.push_back(id);
      }
    }
    if (kept.empty()) throw reconf::InputError("--np matches none of grid.cases");
    cfg.grid_cases = kept;
  }
  flag(f.ns, "gm.n_s", "--ns");
  return cfg;
}

} // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lifetime extension of reconfigurable parallel cell units"};
  app.set_version_flag("--version", RECONF_VERSION);
  app.require_subcommand(1);

  CommonFlags run_flags;
  CLI::App* run = app.add_subcommand("run", "simulate the case grid and write records");
  add_common(run, run_flags, true);
  bool quiet = false;
  run->add_flag("-q,--quiet", quiet, "no per-case progress");

  CommonFlags grid_flags;
  CLI::App* grid = app.add_subcommand("grid", "print the resolved case grid");
  add_common(grid, grid_flags, false);

  std::string bol, eol, rq, fit_out;
  CLI::App* fit = app.add_subcommand("fit", "fit ageing distributions and the R-Q line");
  fit->add_option("--bol", bol, "cell_id,q_tilde CSV")->required();
  fit->add_option("--eol", eol, "cell_id,efc_eol CSV")->required();
  fit->add_option("--rq", rq, "q_tilde,r_tilde CSV")->required();
  fit->add_option("--out", fit_out, "also write the config fragment here");

  std::string records_dir, report_out;
  std::size_t bins = 20;
  CLI::App* report = app.add_subcommand("report", "histogram and trend CSVs from a run");
  report->add_option("records_dir", records_dir, "directory written by `run`")->required();
  report->add_option("--bins", bins, "histogram bins");
  report->add_option("--out", report_out, "output directory (default: <records_dir>/report)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      const reconf::RunConfig cfg = resolve(run_flags);
      std::ostream null_stream(nullptr);
      const auto s = reconf::cmd_run(cfg, quiet ? null_stream : std::cerr);
      std::cout << "wrote " << s.records << " records for " << s.cases << " case/approach pairs to "
                << cfg.out << " (" << s.flagged << " flagged)\n";
    } else if (*grid) {
      reconf::cmd_grid(resolve(grid_flags), std::cout);
    } else if (*fit) {
      reconf::cmd_fit(bol, eol, rq, std::cout, fit_out);
    } else if (*report) {
      if (report_out.empty()) report_out = records_dir + "/report";
      const auto s = reconf::cmd_report(records_dir, bins, report_out, std::cerr);
      std::cout << "wrote " << s.histograms << " histograms and " << s.trends
                << " trend files to " << report_out << "\n";
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
