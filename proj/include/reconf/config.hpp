#pragma once

// Run configuration: a flat `key = value` file with dotted keys.
//
//   # comment
//   cell.r_nom = 30 mOhm
//   grid.n_p   = 2, 4, 10
//
// Numeric values take an optional unit suffix, normalized to SI on parse
// (Ah, mAh, Ohm, mOhm, V, mV, s, min, h, deg, %, F, mF). Unknown keys are
// rejected. Every key has a default; `default_config_text()` lists them.

#include <charconv>
#include <cstddef>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <utility>
#include <vector>

#include "reconf/ageing.hpp"
#include "reconf/csv.hpp"
#include "reconf/electrics.hpp"
#include "reconf/engine.hpp"
#include "reconf/errors.hpp"
#include "reconf/fpu.hpp"

namespace reconf {

inline constexpr int kConfigSchemaVersion = 1;

enum class UnitKind { kPlain, kCapacity, kResistance, kVoltage, kTime, kAngle, kFraction, kCapacitance };

namespace detail {

struct UnitFactor {
  std::string_view suffix;
  double factor;
};

inline std::vector<UnitFactor> unit_table(UnitKind kind) {
  switch (kind) {
    case UnitKind::kCapacity: return {{"Ah", 1.0}, {"mAh", 1e-3}};
    case UnitKind::kResistance: return {{"Ohm", 1.0}, {"mOhm", 1e-3}};
    case UnitKind::kVoltage: return {{"V", 1.0}, {"mV", 1e-3}};
    case UnitKind::kTime: return {{"s", 1.0}, {"min", 60.0}, {"h", 3600.0}};
    case UnitKind::kAngle: return {{"deg", 1.0}};
    case UnitKind::kFraction: return {{"%", 0.01}};
    case UnitKind::kCapacitance: return {{"F", 1.0}, {"mF", 1e-3}};
    case UnitKind::kPlain: break;
  }
  return {};
}

} // namespace detail

/// Parses "30 mOhm", "30mOhm" or "0.03" for a key of the given unit kind.
inline double parse_quantity(std::string_view text, UnitKind kind, const std::string& where) {
  std::string_view s = csv::trim(text);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc()) {
    throw InputError(where + ": '" + std::string(text) + "' is not a number");
  }
  const std::string_view suffix = csv::trim(std::string_view(p, s.data() + s.size() - p));
  if (suffix.empty()) return v;
  for (const detail::UnitFactor& u : detail::unit_table(kind)) {
    if (u.suffix == suffix) return v * u.factor;
  }
  throw InputError(where + ": unit '" + std::string(suffix) + "' not accepted here");
}

inline std::uint64_t parse_uint(std::string_view text, const std::string& where) {
  const std::string_view s = csv::trim(text);
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || p != s.data() + s.size()) {
    throw InputError(where + ": '" + std::string(text) + "' is not a non-negative integer");
  }
  return v;
}

/// Comma-separated integers; "a:b:step" expands to a, a+step, ..., <= b.
inline std::vector<std::size_t> parse_count_list(std::string_view text, const std::string& where) {
  std::vector<std::size_t> out;
  for (const std::string& tok : csv::split(text)) {
    const std::vector<std::string> parts = csv::split(tok, ':');
    if (parts.size() == 1) {
      out.push_back(parse_uint(parts[0], where));
    } else if (parts.size() == 3) {
      const std::size_t a = parse_uint(parts[0], where);
      const std::size_t b = parse_uint(parts[1], where);
      const std::size_t step = parse_uint(parts[2], where);
      if (step == 0 || b < a) throw InputError(where + ": bad range '" + tok + "'");
      for (std::size_t n = a; n <= b; n += step) out.push_back(n);
    } else {
      throw InputError(where + ": bad list item '" + tok + "'");
    }
  }
  return out;
}

/// Grid axis entry: an explicit value or the fitted value of the base model.
struct AxisValue {
  bool fit = false;
  double value = 0.0;
};

enum class ApproachSelection { kCapacity, kSafety, kBoth };

struct RunConfig {
  AgeingDistributions ageing;
  double rho = 124.5;
  CellElectricalParams cell;
  std::string ocv = "default"; ///< "default" or a `soc,ocv_volts` CSV path
  CyclingProtocol protocol;
  FullChargeReference full_charge = FullChargeReference::kIdeal;

  std::vector<AxisValue> grid_sigma_s_rel{{false, 0.001}, {false, 0.0028}, {false, 0.01}};
  std::vector<AxisValue> grid_sigma_e_rel{{false, 0.01}, {false, 0.03}, {false, 0.111}};
  std::vector<AxisValue> grid_rho{{true, 0.0}, {false, 105.7}, {false, 97.3}};
  std::vector<std::size_t> grid_n_p{2, 4, 6, 8, 10, 12, 20};
  std::vector<std::string> grid_cases; ///< explicit case ids; overrides the product
  std::string case_filter;            ///< ECMAScript regex on case_id; empty keeps all

  std::size_t n_exp_pu = 200;
  ApproachSelection approach = ApproachSelection::kBoth;
  std::uint64_t seed = 1;
  SeedScope seed_scope = SeedScope::kCase;
  std::size_t workers = 0; ///< 0: RECONF_WORKERS, else hardware concurrency
  std::string out = "results";
  std::size_t bins = 20;
  bool trace = false;

  bool gm_enabled = true;
  std::vector<std::size_t> gm_n_s = default_ns_values();
  std::size_t gm_n_exp = 10'000;
  std::uint64_t gm_seed = 1;

  /// Grid axes with `fit` entries resolved against the base model.
  GridAxes axes() const {
    GridAxes a;
    a.sigma_s_rel.clear();
    a.sigma_e_rel.clear();
    a.rho.clear();
    for (const AxisValue& v : grid_sigma_s_rel) {
      a.sigma_s_rel.push_back(v.fit ? ageing.sigma_s / ageing.mu_s : v.value);
    }
    for (const AxisValue& v : grid_sigma_e_rel) {
      a.sigma_e_rel.push_back(v.fit ? ageing.sigma_e / ageing.mu_e : v.value);
    }
    for (const AxisValue& v : grid_rho) a.rho.push_back(v.fit ? rho : v.value);
    a.n_p = grid_n_p;
    return a;
  }

  OcvCurve load_curve() const;
  EngineOptions engine_options() const {
    return {workers, seed_scope, full_charge};
  }

  bool want_capacity() const { return approach != ApproachSelection::kSafety; }
  bool want_safety() const { return approach != ApproachSelection::kCapacity; }
};

/// Reads a `soc,ocv_volts` CSV.
inline OcvCurve read_ocv_csv(const std::string& path) {
  const csv::Table t = csv::read_file(path, {"soc", "ocv_volts"});
  std::vector<OcvPoint> pts;
  for (std::size_t r = 0; r < t.rows.size(); ++r) pts.push_back({t.number(r, 0), t.number(r, 1)});
  try {
    return OcvCurve(std::move(pts));
  } catch (const DomainError& e) {
    throw InputError(path + ": " + e.what());
  }
}

inline OcvCurve RunConfig::load_curve() const {
  if (ocv == "default") return OcvCurve::default_nmc();
  return read_ocv_csv(ocv);
}

namespace detail {

struct KeyDef {
  std::string key;
  std::string doc;
  std::function<void(RunConfig&, std::string_view, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
  bool echoed = true; ///< part of the manifest echo
};

inline std::string fmt(double x) { return csv::format_double(x); }

inline std::string join(const std::vector<std::string>& items) {
  std::string s;
  for (const std::string& it : items) s += (s.empty() ? "" : ", ") + it;
  return s;
}

inline std::string fmt_counts(const std::vector<std::size_t>& v) {
  std::vector<std::string> items;
  for (std::size_t n : v) items.push_back(std::to_string(n));
  return join(items);
}

inline std::string fmt_axis(const std::vector<AxisValue>& v) {
  std::vector<std::string> items;
  for (const AxisValue& a : v) items.push_back(a.fit ? "fit" : fmt(a.value));
  return join(items);
}

inline std::vector<AxisValue> parse_axis(std::string_view text, UnitKind kind,
                                         const std::string& where) {
  std::vector<AxisValue> out;
  for (const std::string& tok : csv::split(text)) {
    if (tok == "fit") {
      out.push_back({true, 0.0});
    } else {
      out.push_back({false, parse_quantity(tok, kind, where)});
    }
  }
  return out;
}

inline bool parse_bool(std::string_view text, const std::string& where) {
  const std::string_view s = csv::trim(text);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw InputError(where + ": expected true or false, got '" + std::string(text) + "'");
}

template <class T>
KeyDef number_key(std::string key, std::string doc, UnitKind kind, T RunConfig::*group,
                  double T::*field) {
  return {std::move(key), std::move(doc),
          [=](RunConfig& c, std::string_view v, const std::string& w) {
            (c.*group).*field = parse_quantity(v, kind, w);
          },
          [=](const RunConfig& c) { return fmt((c.*group).*field); }};
}

inline const std::vector<KeyDef>& key_table() {
  using U = UnitKind;
  static const std::vector<KeyDef> table = [] {
    std::vector<KeyDef> t;
    t.push_back(number_key("ageing.mu_s", "mean normalized BOL capacity", U::kPlain,
                           &RunConfig::ageing, &AgeingDistributions::mu_s));
    t.push_back(number_key("ageing.sigma_s", "std of normalized BOL capacity", U::kPlain,
                           &RunConfig::ageing, &AgeingDistributions::sigma_s));
    t.push_back(number_key("ageing.mu_e", "mean EFC at 80 % capacity", U::kPlain,
                           &RunConfig::ageing, &AgeingDistributions::mu_e));
    t.push_back(number_key("ageing.sigma_e", "std of EFC at 80 % capacity", U::kPlain,
                           &RunConfig::ageing, &AgeingDistributions::sigma_e));
    t.push_back({"rq.rho", "angle of the resistance-capacity line, (90, 180) deg",
                 [](RunConfig& c, std::string_view v, const std::string& w) {
                   c.rho = parse_quantity(v, U::kAngle, w);
                 },
                 [](const RunConfig& c) { return fmt(c.rho); }});
    t.push_back(number_key("cell.q_nom", "nominal capacity", U::kCapacity, &RunConfig::cell,
                           &CellElectricalParams::q_nom));
    t.push_back(number_key("cell.r_nom", "series resistance at BOL", U::kResistance,
                           &RunConfig::cell, &CellElectricalParams::r_nom));
    t.push_back(number_key("cell.v_min", "discharge cut-off voltage", U::kVoltage,
                           &RunConfig::cell, &CellElectricalParams::v_min));
    t.push_back(number_key("cell.v_max", "charge voltage", U::kVoltage, &RunConfig::cell,
                           &CellElectricalParams::v_max));
    t.push_back(number_key("cell.r1", "polarization resistance (stored only)", U::kResistance,
                           &RunConfig::cell, &CellElectricalParams::r1));
    t.push_back(number_key("cell.c1", "polarization capacitance (stored only)", U::kCapacitance,
                           &RunConfig::cell, &CellElectricalParams::c1));
    t.push_back({"ocv.source", "'default' or path of a soc,ocv_volts CSV",
                 [](RunConfig& c, std::string_view v, const std::string&) {
                   c.ocv = std::string(csv::trim(v));
                 },
                 [](const RunConfig& c) { return c.ocv; }});
    t.push_back(number_key("protocol.dt", "integration step", U::kTime, &RunConfig::protocol,
                           &CyclingProtocol::dt));
    t.push_back(number_key("protocol.cv_cutoff", "CV cut-off current as a fraction of 1C",
                           U::kFraction, &RunConfig::protocol,
                           &CyclingProtocol::cv_cutoff_fraction));
    t.push_back(number_key("protocol.eol_fraction", "EOL capacity fraction", U::kFraction,
                           &RunConfig::protocol, &CyclingProtocol::eol_capacity_fraction));
    t.push_back(number_key("protocol.event_tolerance", "voltage event tolerance", U::kVoltage,
                           &RunConfig::protocol, &CyclingProtocol::event_tolerance));
    t.push_back({"protocol.max_cycles", "cycle budget per lifetime",
                 [](RunConfig& c, std::string_view v, const std::string& w) {
                   c.protocol.max_cycles = static_cast<int>(parse_uint(v, w));
                 },
                 [](const RunConfig& c) { return std::to_string(c.protocol.max_cycles); }});
    t.push_back({"protocol.extrapolation",
                 "cycles per simulated cycle (1 simulates every cycle)",
                 [](RunConfig& c, std::string_view v, const std::string& w) {
                   c.protocol.extrapolation = static_cast<int>(parse_uint(v, w));
                 },
                 [](const RunConfig& c) { return std::to_string(c.protocol.extrapolation); }});
    t.push_back({"rpu.full_charge",
                 "RPU last-discharge start: 'ideal' (100 % SOC) or 'protocol' (CV cut-off SOC)",
                 [](RunConfig& c, std::string_view v, const std::string& w) {
                   const std::string_view s = csv::trim(v);
                   if (s == "ideal") {
                     c.full_charge = FullChargeReference::kIdeal;
                   } else if (s == "protocol") {
                     c.full_charge = FullChargeReference::kProtocol;
                   } else {
                     throw InputError(w + ": expected ideal or protocol");
                   }
                 },
                 [](const RunConfig& c) {
                   return std::string(c.full_charge == FullChargeReference::kIdeal ? "ideal"
                                                                                   : "protocol");
                 }});
    t.push_back({"grid.sigma_s_rel", "sigma_s / mu_s values ('fit' uses ageing.*)",
                 [](RunConfig& c, std::string_view v, const std::string& w) {
                   c.grid_sigma_s_rel = parse_axis(v, U::kFraction, w);
                 },
                 [](const RunConfig& c) { return fmt_axis(c.grid_sigma_s_rel); }});
    t.push_back({"grid.sigma_e_rel", "sigma_e / mu_e values ('fit' uses ageing.*)",
                 [](RunConfig& c, std::string_view v, const std::string& w) {
                   c.grid_sigma_e_rel = parse_axis(v, U::kFraction, w);
                 },
                 [](const RunConfig& c) { return fmt_axis(c.grid_sigma_e_rel); }});
    t.push_back({"grid.rho", "rho values ('fit' uses rq.rho)",
                 [](RunConfig& c, std::string_view v, const std::string& w) {
                   c.grid_rho = parse_axis(v, U::kAngle, w);
                 },
                 [](const RunConfig& c) { return fmt_axis(c.grid_rho); }});
    t.push_back({"grid.n_p", "cells per parallel unit",
                 [](RunConfig& c, std::string_view v, const std::string& w) {
                   c.grid_n_p = parse_count_list(v, w);
                 },
                 [](const RunConfig& c) { return fmt_counts(c.grid_n_p); }});
    t.push_back({"grid.cases", "explicit case ids, replacing the grid product",
                 [](RunConfig& c, std::string_view v, const std::string& w) {
                   c.grid_cases.clear();
                   for (const std::string& id : csv::split(v)) {
                     if (id.empty()) continue;
                     try {
                       parse_case_id(id);
                     } catch (const InputError& e) {
                       throw InputError(w + ": " + e.what());
                     }
                     c.grid_cases.push_back(id);
                   }
                 },
                 [](const RunConfig& c) { return join(c.grid_cases); }});
    t.push_back({"grid.filter", "regex a case id must match (empty keeps all)",
                 [](RunConfig& c, std::string_view v, const std::string&) {
                   c.case_filter = std::string(csv::trim(v));
                 },
                 [](const RunConfig& c) { return c.case_filter; }});
    t.push_back({"run.n_exp_pu", "experiments per case",
                 [](RunConfig& c, std::string_view v, const std::string& w) {
                   c.n_exp_pu = parse_uint(v, w);
                 },
                 [](const RunConfig& c) { return std::to_string(c.n_exp_pu); }});
    t.push_back({"run.approach", "1, 2 or both",
                 [](RunConfig& c, std::string_view v, const std::string& w) {
                   const std::string_view s = csv::trim(v);
                   if (s == "1") {
                     c.approach = ApproachSelection::kCapacity;
                   } else if (s == "2") {
                     c.approach = ApproachSelection::kSafety;
                   } else if (s == "both") {
                     c.approach = ApproachSelection::kBoth;
                   } else {
                     throw InputError(w + ": expected 1, 2 or both");
                   }
                 },
                 [](const RunConfig& c) {
                   switch (c.approach) {
                     case ApproachSelection::kCapacity: return std::string("1");
                     case ApproachSelection::kSafety: return std::string("2");
                     case ApproachSelection::kBoth: break;
                   }
                   return std::string("both");
                 }});
    t.push_back({"run.seed", "master seed",
                 [](RunConfig& c, std::string_view v, const std::string& w) {
                   c.seed = parse_uint(v, w);
                 },
                 [](const RunConfig& c) { return std::to_string(c.seed); }});
    t.push_back({"run.seed_scope",
                 "'case' (independent draws per case) or 'shared' (same cells across cases)",
                 [](RunConfig& c, std::string_view v, const std::string& w) {
                   const std::string_view s = csv::trim(v);
                   if (s == "case") {
                     c.seed_scope = SeedScope::kCase;
                   } else if (s == "shared") {
                     c.seed_scope = SeedScope::kShared;
                   } else {
                     throw InputError(w + ": expected case or shared");
                   }
                 },
                 [](const RunConfig& c) {
                   return std::string(c.seed_scope == SeedScope::kCase ? "case" : "shared");
                 }});
    t.push_back({"run.workers", "worker threads, 0 for RECONF_WORKERS or all cores",
                 [](RunConfig& c, std::string_view v, const std::string& w) {
                   c.workers = parse_uint(v, w);
                 },
                 [](const RunConfig& c) { return std::to_string(c.workers); }, false});
    t.push_back({"run.out", "output directory",
                 [](RunConfig& c, std::string_view v, const std::string&) {
                   c.out = std::string(csv::trim(v));
                 },
                 [](const RunConfig& c) { return c.out; }, false});
    t.push_back({"run.bins", "histogram bins",
                 [](RunConfig& c, std::string_view v, const std::string& w) {
                   c.bins = parse_uint(v, w);
                 },
                 [](const RunConfig& c) { return std::to_string(c.bins); }});
    t.push_back({"run.trace", "write the cycle trace of experiment 0 of each case",
                 [](RunConfig& c, std::string_view v, const std::string& w) {
                   c.trace = parse_bool(v, w);
                 },
                 [](const RunConfig& c) { return std::string(c.trace ? "true" : "false"); }});
    t.push_back({"gm.enabled", "run the series-module bootstrap",
                 [](RunConfig& c, std::string_view v, const std::string& w) {
                   c.gm_enabled = parse_bool(v, w);
                 },
                 [](const RunConfig& c) { return std::string(c.gm_enabled ? "true" : "false"); }});
    t.push_back({"gm.n_s", "series PU counts; a:b:step ranges allowed",
                 [](RunConfig& c, std::string_view v, const std::string& w) {
                   c.gm_n_s = parse_count_list(v, w);
                 },
                 [](const RunConfig& c) { return fmt_counts(c.gm_n_s); }});
    t.push_back({"gm.n_exp", "bootstrap trials per n_s",
                 [](RunConfig& c, std::string_view v, const std::string& w) {
                   c.gm_n_exp = parse_uint(v, w);
                 },
                 [](const RunConfig& c) { return std::to_string(c.gm_n_exp); }});
    t.push_back({"gm.seed", "bootstrap seed",
                 [](RunConfig& c, std::string_view v, const std::string& w) {
                   c.gm_seed = parse_uint(v, w);
                 },
                 [](const RunConfig& c) { return std::to_string(c.gm_seed); }});
    return t;
  }();
  return table;
}

} // namespace detail

/// Sets one key. Throws InputError for unknown keys or bad values.
inline void apply_setting(RunConfig& cfg, std::string_view key, std::string_view value,
                          const std::string& where = "config") {
  const std::string k(csv::trim(key));
  for (const detail::KeyDef& def : detail::key_table()) {
    if (def.key == k) {
      def.set(cfg, value, where + ": " + k);
      return;
    }
  }
  throw InputError(where + ": unknown key '" + k + "'");
}

/// Checks cross-field constraints once every key is set.
inline void validate(const RunConfig& cfg) {
  try {
    cfg.ageing.validate();
    rho_to_line(cfg.rho);
    cfg.protocol.validate();
    if (cfg.grid_sigma_s_rel.empty() || cfg.grid_sigma_e_rel.empty() || cfg.grid_rho.empty() ||
        cfg.grid_n_p.empty()) {
      throw DomainError("grid axes must not be empty");
    }
    const GridAxes a = cfg.axes();
    for (double r : a.rho) rho_to_line(r);
    for (double s : a.sigma_s_rel) {
      if (!(s >= 0.0)) throw DomainError("grid.sigma_s_rel must be non-negative");
    }
    for (double s : a.sigma_e_rel) {
      if (!(s >= 0.0)) throw DomainError("grid.sigma_e_rel must be non-negative");
    }
    for (std::size_t n : a.n_p) {
      if (n < 1) throw DomainError("grid.n_p entries must be at least 1");
    }
    if (cfg.n_exp_pu < 2) throw DomainError("run.n_exp_pu must be at least 2");
    if (cfg.bins < 1) throw DomainError("run.bins must be at least 1");
    if (cfg.gm_enabled) {
      if (cfg.gm_n_s.empty()) throw DomainError("gm.n_s must not be empty");
      for (std::size_t n : cfg.gm_n_s) {
        if (n < 1) throw DomainError("gm.n_s entries must be at least 1");
      }
      if (cfg.gm_n_exp < 2) throw DomainError("gm.n_exp must be at least 2");
    }
  } catch (const DomainError& e) {
    throw InputError(std::string("invalid configuration: ") + e.what());
  }
}

/// Parses config text on top of the defaults.
inline RunConfig parse_config(std::string_view text, const std::string& source = "config") {
  RunConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string_view s = line;
    if (const auto hash = s.find('#'); hash != std::string_view::npos) s = s.substr(0, hash);
    s = csv::trim(s);
    if (s.empty()) continue;
    const std::string where = source + " line " + std::to_string(lineno);
    const auto eq = s.find('=');
    if (eq == std::string_view::npos) throw InputError(where + ": expected key = value");
    const std::string_view key = csv::trim(s.substr(0, eq));
    const std::string_view value = csv::trim(s.substr(eq + 1));
    if (key == "schema_version") {
      if (parse_uint(value, where) != kConfigSchemaVersion) {
        throw InputError(where + ": unsupported schema_version");
      }
      continue;
    }
    apply_setting(cfg, key, value, where);
  }
  return cfg;
}

inline RunConfig load_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str(), path);
}

/// Canonical key -> value strings. `echo_only` drops keys that do not affect
/// results (output directory, worker count).
inline std::vector<std::pair<std::string, std::string>> config_entries(const RunConfig& cfg,
                                                                       bool echo_only = false) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const detail::KeyDef& def : detail::key_table()) {
    if (echo_only && !def.echoed) continue;
    out.emplace_back(def.key, def.get(cfg));
  }
  return out;
}

/// Config text with every key, its default and a one-line description.
inline std::string default_config_text() {
  const RunConfig cfg;
  std::string s = "schema_version = " + std::to_string(kConfigSchemaVersion) + "\n";
  for (const detail::KeyDef& def : detail::key_table()) {
    s += "\n# " + def.doc + "\n" + def.key + " = " + def.get(cfg) + "\n";
  }
  return s;
}

/// Text form of a config that parses back to the same values.
inline std::string config_text(const RunConfig& cfg) {
  std::string s = "schema_version = " + std::to_string(kConfigSchemaVersion) + "\n";
  for (const auto& [k, v] : config_entries(cfg)) s += k + " = " + v + "\n";
  return s;
}

} // namespace reconf
