#pragma once

// Run configuration: one flat JSON object. Every key is optional; unknown
// keys, wrong types and invalid values are ConfigError.
//
//   N, mu_A, delta_db_per_km
//   lengths (array) or length_min / length_max / length_step
//   length                      single-point subcommands
//   grid_t, grid_f_p, grid_p2, fp_min, refine_tol, max_refine_evals
//   Q, I_AE, p_conc             key rate / critical error
//   mu_A_min, mu_A_max, grid_mu_A
//   trials, seed, attack_enabled, edge_modes, t, f_p, p1, p2

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "dpsabs/errors.hpp"
#include "dpsabs/montecarlo.hpp"
#include "dpsabs/optimizer.hpp"

namespace dpsabs {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct RunSettings {
  int N = 10;
  double mu_A = 0.1;
  double delta_db_per_km = 0.2;
  std::vector<double> lengths;  ///< resolved; default 0..250 step 2
  double length = 50.0;
  int grid_t = 33;
  int grid_f_p = 33;
  int grid_p2 = 33;
  double fp_min = 1e-6;
  double refine_tol = 1e-8;
  int max_refine_evals = 4000;
  double Q = 0.0;
  std::optional<double> I_AE;
  std::optional<double> p_conc;
  double mu_A_min = 1e-3;
  double mu_A_max = 1.0;
  int grid_mu_A = 25;
  std::int64_t trials = 1000000;
  std::uint64_t seed = 1;
  bool attack_enabled = true;
  bool edge_modes = true;
  double t = 0.5;
  double f_p = 0.3;
  double p1 = 5.5;
  double p2 = 0.5;

  ProtocolParams protocol() const { return ProtocolParams{N, mu_A}; }
  ChannelParams channel() const { return ChannelParams{delta_db_per_km, length}; }
  AttackParams attack() const { return AttackParams{t, f_p, p1, p2}; }

  SweepConfig sweep_config() const {
    SweepConfig c;
    c.protocol = protocol();
    c.delta = delta_db_per_km;
    c.lengths = lengths;
    c.grid_t = grid_t;
    c.grid_fp = grid_f_p;
    c.grid_p2 = grid_p2;
    c.fp_min = fp_min;
    c.refine_tol = refine_tol;
    c.max_refine_evals = max_refine_evals;
    c.qber = Q;
    c.muA_min = mu_A_min;
    c.muA_max = mu_A_max;
    c.grid_muA = grid_mu_A;
    return c;
  }

  SimConfig sim_config() const {
    SimConfig c;
    c.trials = trials;
    c.seed = seed;
    c.protocol = protocol();
    c.channel = channel();
    c.attack = attack();
    c.attack_enabled = attack_enabled;
    c.edge_modes = edge_modes;
    return c;
  }

  /// Resolved configuration, sufficient to reproduce the run.
  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["N"] = N;
    j["mu_A"] = mu_A;
    j["delta_db_per_km"] = delta_db_per_km;
    j["lengths"] = lengths;
    j["length"] = length;
    j["grid_t"] = grid_t;
    j["grid_f_p"] = grid_f_p;
    j["grid_p2"] = grid_p2;
    j["fp_min"] = fp_min;
    j["refine_tol"] = refine_tol;
    j["max_refine_evals"] = max_refine_evals;
    j["Q"] = Q;
    if (I_AE) j["I_AE"] = *I_AE;
    if (p_conc) j["p_conc"] = *p_conc;
    j["mu_A_min"] = mu_A_min;
    j["mu_A_max"] = mu_A_max;
    j["grid_mu_A"] = grid_mu_A;
    j["trials"] = trials;
    j["seed"] = seed;
    j["attack_enabled"] = attack_enabled;
    j["edge_modes"] = edge_modes;
    j["t"] = t;
    j["f_p"] = f_p;
    j["p1"] = p1;
    j["p2"] = p2;
    return j;
  }
};

namespace detail {

inline std::vector<double> length_range(double lo, double hi, double step) {
  if (!(step > 0.0) || !(hi >= lo)) throw ConfigError("length range needs step > 0 and max >= min");
  std::vector<double> out;
  const auto n = static_cast<long>(std::floor((hi - lo) / step + 1e-9));
  if (n > 1000000) throw ConfigError("length range too long");
  for (long i = 0; i <= n; ++i) out.push_back(lo + static_cast<double>(i) * step);
  return out;
}

template <typename T>
T get_as(const nlohmann::json& v, const std::string& key) {
  try {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ConfigError("");
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ConfigError("");
      if constexpr (std::is_unsigned_v<T>) {
        if (!v.is_number_unsigned() && v.get<std::int64_t>() < 0) throw ConfigError("");
      }
    } else {
      if (!v.is_number()) throw ConfigError("");
    }
    return v.get<T>();
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}

}  // namespace detail

/// Parses and validates a configuration document.
inline RunSettings parse_settings(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunSettings s;
  std::optional<double> lmin, lmax, lstep;
  for (const auto& [key, v] : j.items()) {
    if (key == "N") s.N = detail::get_as<int>(v, key);
    else if (key == "mu_A") s.mu_A = detail::get_as<double>(v, key);
    else if (key == "delta_db_per_km") s.delta_db_per_km = detail::get_as<double>(v, key);
    else if (key == "lengths") {
      if (!v.is_array()) throw ConfigError("config key 'lengths' must be an array");
      s.lengths.clear();
      for (const auto& x : v) s.lengths.push_back(detail::get_as<double>(x, key));
      if (s.lengths.empty()) throw ConfigError("length list is empty");
    }
    else if (key == "length_min") lmin = detail::get_as<double>(v, key);
    else if (key == "length_max") lmax = detail::get_as<double>(v, key);
    else if (key == "length_step") lstep = detail::get_as<double>(v, key);
    else if (key == "length") s.length = detail::get_as<double>(v, key);
    else if (key == "grid_t") s.grid_t = detail::get_as<int>(v, key);
    else if (key == "grid_f_p") s.grid_f_p = detail::get_as<int>(v, key);
    else if (key == "grid_p2") s.grid_p2 = detail::get_as<int>(v, key);
    else if (key == "fp_min") s.fp_min = detail::get_as<double>(v, key);
    else if (key == "refine_tol") s.refine_tol = detail::get_as<double>(v, key);
    else if (key == "max_refine_evals") s.max_refine_evals = detail::get_as<int>(v, key);
    else if (key == "Q") s.Q = detail::get_as<double>(v, key);
    else if (key == "I_AE") s.I_AE = detail::get_as<double>(v, key);
    else if (key == "p_conc") s.p_conc = detail::get_as<double>(v, key);
    else if (key == "mu_A_min") s.mu_A_min = detail::get_as<double>(v, key);
    else if (key == "mu_A_max") s.mu_A_max = detail::get_as<double>(v, key);
    else if (key == "grid_mu_A") s.grid_mu_A = detail::get_as<int>(v, key);
    else if (key == "trials") s.trials = detail::get_as<std::int64_t>(v, key);
    else if (key == "seed") s.seed = detail::get_as<std::uint64_t>(v, key);
    else if (key == "attack_enabled") s.attack_enabled = detail::get_as<bool>(v, key);
    else if (key == "edge_modes") s.edge_modes = detail::get_as<bool>(v, key);
    else if (key == "t") s.t = detail::get_as<double>(v, key);
    else if (key == "f_p") s.f_p = detail::get_as<double>(v, key);
    else if (key == "p1") s.p1 = detail::get_as<double>(v, key);
    else if (key == "p2") s.p2 = detail::get_as<double>(v, key);
    else throw ConfigError("unknown config key '" + key + "'");
  }

  const bool ranged = lmin || lmax || lstep;
  if (ranged && j.contains("lengths")) {
    throw ConfigError("give either 'lengths' or a length range, not both");
  }
  if (ranged) {
    s.lengths = detail::length_range(lmin.value_or(0.0), lmax.value_or(250.0), lstep.value_or(2.0));
  } else if (!j.contains("lengths")) {
    s.lengths = detail::length_range(0.0, 250.0, 2.0);
  }

  try {
    s.sweep_config().validate();
    s.channel().validate();
    if (!(s.length >= 0.0)) throw DomainError("length must be >= 0");
    if (s.trials < 1) throw DomainError("trials must be >= 1");
    s.attack().validate(s.protocol());
    if (s.I_AE && !(*s.I_AE >= 0.0 && *s.I_AE <= 1.0)) throw DomainError("I_AE outside [0,1]");
    if (s.p_conc && !(*s.p_conc >= 0.0 && *s.p_conc <= 1.0)) {
      throw DomainError("p_conc outside [0,1]");
    }
  } catch (const DomainError& e) {
    throw ConfigError(std::string("invalid config: ") + e.what());
  }
  return s;
}

inline RunSettings load_settings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(std::string("config parse error: ") + e.what());
  }
  return parse_settings(j);
}

// ---------------------------------------------------------------------------
// CSV output.

/// %.12g
inline std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

inline constexpr const char* kSweepHeader =
    "length_km,p_conc_target,I_AE,Q_crit,key_rate,t,f_p,p1,p2,mu_K_B,mu_N_B,K,"
    "stationarity_residual,boundary_flags";

inline constexpr const char* kOptimalMuaHeader = "length_km,mu_A_opt,key_rate,Q_crit_at_opt";

/// '#' metadata lines: tool command and the resolved configuration.
inline std::string csv_preamble(const std::string& command, const RunSettings& s) {
  return "# dpsabs " + command + "\n# config: " + s.to_json().dump() + "\n";
}

/// Signed stationarity residual (scaled), or "boundary" when a bound is active.
inline std::string stationarity_cell(const AttackOptimum& o) {
  if (!o.stationarity) return "boundary";
  const StationarityReport& r = *o.stationarity;
  return fmt(r.residual / std::max(1.0, std::abs(r.lhs)));
}

inline std::string sweep_csv_row(const AttackOptimum& o) {
  std::ostringstream row;
  row << fmt(o.length_km) << ',' << fmt(o.target_pconc) << ',' << fmt(o.I_AE) << ','
      << fmt(o.Q_crit) << ',' << fmt(o.key_rate) << ',' << fmt(o.params.t) << ','
      << fmt(o.params.fp) << ',' << fmt(o.params.p1) << ',' << fmt(o.params.p2) << ','
      << fmt(o.resolved.mu_K()) << ',' << fmt(o.resolved.mu_N()) << ',' << o.resolved.K << ','
      << stationarity_cell(o) << ',' << bound_flags_to_string(o.bounds);
  return row.str();
}

/// Full sweep CSV; infeasible lengths are skipped here and reported by the caller.
inline std::string sweep_csv(const std::vector<SweepRow>& rows, const RunSettings& s) {
  std::string out = csv_preamble("sweep", s);
  out += kSweepHeader;
  out += '\n';
  for (const SweepRow& r : rows) {
    if (!r.optimum) continue;
    out += sweep_csv_row(*r.optimum);
    out += '\n';
  }
  return out;
}

}  // namespace dpsabs
