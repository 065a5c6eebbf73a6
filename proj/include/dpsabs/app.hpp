#pragma once

// Subcommands of the dpsabs tool. Each reads RunSettings, writes its files
// into the output directory and returns the process exit code.

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "dpsabs/config.hpp"
#include "dpsabs/montecarlo.hpp"
#include "dpsabs/optimizer.hpp"
#include "dpsabs/sampling.hpp"
#include "dpsabs/stationarity.hpp"

namespace dpsabs {

enum ExitCode : int {
  kExitOk = 0,
  kExitValidationFailed = 1,
  kExitConfigError = 2,
  kExitInfeasible = 3,
};

struct RunOptions {
  std::string command;
  std::string config_path;  ///< empty: all defaults
  std::filesystem::path out_dir;
  std::optional<std::uint64_t> seed;
  unsigned jobs = 1;
};

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write '" + path.string() + "'");
  f << text;
  if (!f) throw ConfigError("write failed for '" + path.string() + "'");
}

inline void write_json(const std::filesystem::path& path, const nlohmann::ordered_json& j) {
  write_file(path, j.dump(2) + "\n");
}

inline int report_infeasible(const std::vector<SweepRow>& rows, std::ostream& err) {
  int bad = 0;
  for (const SweepRow& r : rows) {
    if (r.optimum) continue;
    if (bad++ == 0) err << "infeasible lengths:\n";
    err << "  " << fmt(r.length_km) << " km: " << r.error << "\n";
  }
  return bad == 0 ? kExitOk : kExitInfeasible;
}

inline nlohmann::ordered_json optimum_json(const AttackOptimum& o) {
  nlohmann::ordered_json j;
  j["length_km"] = o.length_km;
  j["p_conc_target"] = o.target_pconc.value();
  j["I_AE"] = o.I_AE.value();
  j["I_AE_usd"] = o.usd_I_AE.value();
  j["Q_crit"] = o.Q_crit.value();
  j["key_rate"] = o.key_rate;
  j["t"] = o.params.t;
  j["f_p"] = o.params.fp;
  j["p1"] = o.params.p1;
  j["p2"] = o.params.p2;
  j["K"] = o.resolved.K;
  j["mu_K_B"] = o.resolved.mu_K();
  j["mu_N_B"] = o.resolved.mu_N();
  j["boundary_flags"] = bound_flags_to_string(o.bounds);
  if (o.stationarity) {
    const StationarityReport& r = *o.stationarity;
    j["stationarity"] = {{"lhs", r.lhs},
                         {"rhs", r.rhs},
                         {"residual", r.residual},
                         {"scaled_residual", r.scaled_residual()},
                         {"fd_discrepancies", r.fd_discrepancies}};
  } else {
    j["stationarity"] = "boundary";
  }
  return j;
}

// ---------------------------------------------------------------------------
// Validation suite.

struct Check {
  std::string name;
  double analytic = 0.0;
  double empirical = 0.0;
  double std_err = -1.0;    ///< statistical checks
  double tolerance = -1.0;  ///< deterministic checks
  std::string status;       ///< pass, fail or inconclusive

  nlohmann::ordered_json to_json() const {
    nlohmann::ordered_json j;
    j["check_name"] = name;
    j["analytic"] = analytic;
    j["empirical"] = empirical;
    if (std_err >= 0.0) j["std_err"] = std_err;
    if (tolerance >= 0.0) j["tolerance"] = tolerance;
    j["pass"] = status == "pass";
    j["status"] = status;
    return j;
  }
};

// Statistical checks need this many expected events to be meaningful.
inline constexpr double kMinEvents = 100.0;

inline Check rate_check(std::string name, double p, const SimSummary& s) {
  Check c;
  c.name = std::move(name);
  c.analytic = p;
  c.empirical = s.conclusive_rate();
  c.std_err = std::sqrt(p * (1.0 - p) / static_cast<double>(s.trials));
  if (static_cast<double>(s.trials) * p < kMinEvents) {
    c.status = "inconclusive";
  } else {
    c.status = std::abs(c.empirical - p) <= 3.0 * c.std_err ? "pass" : "fail";
  }
  return c;
}

inline std::vector<Check> validation_checks(const RunSettings& s, unsigned jobs) {
  std::vector<Check> out;
  const ProtocolParams proto = s.protocol();
  const int N = proto.N;
  std::uint64_t stream = 0;
  const auto sim = [&](double mu, bool edges) {
    SimConfig c;
    c.trials = s.trials;
    c.seed = splitmix64(s.seed + stream++);
    c.protocol = ProtocolParams{N, mu};
    c.attack_enabled = false;
    c.edge_modes = edges;
    return run_simulation(c, jobs);
  };

  std::int64_t conclusive = 0;
  std::int64_t mismatches = 0;
  for (double mu : {0.01, 0.05, 0.1, optimal_bob_intensity(N), 0.3}) {
    const SimSummary r = sim(mu, true);
    conclusive += r.conclusive;
    mismatches += r.bit_mismatches;
    out.push_back(rate_check("clean_conclusive_rate_mu_" + fmt(mu), conclusive_prob(mu, N), r));
  }
  {
    const double mu = s.mu_A;
    const SimSummary r = sim(mu, false);
    const double p = (N - 1.0) * std::exp(-(N - 2.0) * mu) * -std::expm1(-mu);
    out.push_back(rate_check("edge_free_conclusive_rate_mu_" + fmt(mu), p, r));
  }
  {
    Check c;
    c.name = "zero_intrinsic_qber";
    c.analytic = 0.0;
    c.empirical = static_cast<double>(mismatches);
    c.tolerance = 0.0;
    c.status = static_cast<double>(conclusive) < kMinEvents ? "inconclusive"
               : mismatches == 0                            ? "pass"
                                                            : "fail";
    out.push_back(c);
  }

  if (s.attack_enabled) {
    SimConfig c = s.sim_config();
    c.seed = splitmix64(s.seed + stream++);
    const SimSummary r = run_simulation(c, jobs);
    const ResolvedAttack res = resolve_schedule(c.attack, proto);
    out.push_back(rate_check("attacked_conclusive_rate", bob_conclusive_under_attack(res, proto), r));

    Check chi;
    chi.name = "success_count_chi_square";
    const ChiSquare test = chi_square_test(r.k_hist, res.pk);
    chi.analytic = 0.001;  // significance level
    chi.empirical = test.p_value;
    chi.tolerance = 0.001;
    if (test.dof < 1 || static_cast<double>(r.trials) < kMinEvents) {
      chi.status = "inconclusive";
    } else {
      chi.status = test.p_value >= 0.001 ? "pass" : "fail";
    }
    out.push_back(chi);

    Check info;
    info.name = "weighted_eve_info";
    info.analytic = eve_info_total(c.attack, res, proto).value();
    if (static_cast<double>(r.conclusive) < kMinEvents) {
      info.empirical = r.conclusive > 0 ? estimate_eve_info(r).mean.value() : 0.0;
      info.std_err = 0.0;
      info.status = "inconclusive";
    } else {
      const EveInfoEstimate e = estimate_eve_info(r);
      info.empirical = e.mean.value();
      info.std_err = e.std_err;
      const double slack = std::max(3.0 * e.std_err, 1e-12);
      info.status = std::abs(info.empirical - info.analytic) <= slack ? "pass" : "fail";
    }
    out.push_back(info);
  }

  // Closed-form derivatives against central differences at random interior
  // points; the point with the largest relative error is reported.
  std::mt19937_64 g(splitmix64(s.seed + stream++));
  const char* names[4] = {"derivative_dIK_dmuK", "derivative_dZK_dmuK", "derivative_dIN_dmuN",
                          "derivative_dZN_dmuN"};
  std::array<Check, 4> d;
  std::array<double, 4> worst{-1.0, -1.0, -1.0, -1.0};
  for (int i = 0; i < 1000; ++i) {
    const AttackParams a = random_interior_attack(g, proto);
    const ResolvedAttack r = resolve_schedule(a, proto);
    if (!intensities_interior(a, r, proto)) continue;
    const std::array<double, 4> exact = derivative_closed_forms(a, r, proto);
    const std::array<double, 4> numeric = derivative_fd_values(a, r, proto);
    for (std::size_t k = 0; k < 4; ++k) {
      const double e = rel_error(exact[k], numeric[k]);
      if (e > worst[k]) {
        worst[k] = e;
        d[k].analytic = exact[k];
        d[k].empirical = numeric[k];
      }
    }
  }
  for (std::size_t k = 0; k < 4; ++k) {
    Check& c = d[k];
    c.name = names[k];
    c.tolerance = 1e-6;
    c.status = worst[k] < 0.0 ? "inconclusive" : worst[k] < 1e-6 ? "pass" : "fail";
    out.push_back(c);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Subcommands.

inline int cmd_sweep(const RunSettings& s, const RunOptions& o, std::ostream& err) {
  const std::vector<SweepRow> rows = run_length_sweep(s.sweep_config(), o.jobs);
  write_file(o.out_dir / "sweep.csv", sweep_csv(rows, s));
  return report_infeasible(rows, err);
}

inline int cmd_optimize_point(const RunSettings& s, const RunOptions& o, std::ostream& err) {
  try {
    const AttackOptimum opt = optimize_for_length(s.sweep_config(), s.length);
    nlohmann::ordered_json j;
    j["config"] = s.to_json();
    j["optimum"] = optimum_json(opt);
    write_json(o.out_dir / "optimize_point.json", j);
    return kExitOk;
  } catch (const InfeasibleError& e) {
    err << e.what() << "\n";
    return kExitInfeasible;
  }
}

inline int cmd_critical_error(const RunSettings& s, const RunOptions& o, std::ostream& err) {
  if (s.I_AE) {
    nlohmann::ordered_json j;
    j["I_AE"] = *s.I_AE;
    j["Q_crit"] = critical_error(*s.I_AE).value();
    write_json(o.out_dir / "critical_error.json", j);
    return kExitOk;
  }
  const std::vector<SweepRow> rows = run_length_sweep(s.sweep_config(), o.jobs);
  std::string csv = csv_preamble("critical-error", s) + "length_km,I_AE,Q_crit\n";
  for (const SweepRow& r : rows) {
    if (!r.optimum) continue;
    csv += fmt(r.length_km) + ',' + fmt(r.optimum->I_AE) + ',' + fmt(r.optimum->Q_crit) + '\n';
  }
  write_file(o.out_dir / "critical_error.csv", csv);
  return report_infeasible(rows, err);
}

inline int cmd_keyrate(const RunSettings& s, const RunOptions& o, std::ostream& err) {
  if (s.I_AE.has_value() != s.p_conc.has_value()) {
    throw ConfigError("keyrate needs both 'I_AE' and 'p_conc', or neither");
  }
  if (s.I_AE) {
    nlohmann::ordered_json j;
    j["p_conc"] = *s.p_conc;
    j["I_AE"] = *s.I_AE;
    j["Q"] = s.Q;
    j["key_rate"] = key_rate(*s.p_conc, *s.I_AE, s.Q);
    write_json(o.out_dir / "keyrate.json", j);
    return kExitOk;
  }
  const std::vector<SweepRow> rows = run_length_sweep(s.sweep_config(), o.jobs);
  std::string csv = csv_preamble("keyrate", s) + "length_km,p_conc_target,I_AE,Q,key_rate\n";
  for (const SweepRow& r : rows) {
    if (!r.optimum) continue;
    const AttackOptimum& a = *r.optimum;
    csv += fmt(r.length_km) + ',' + fmt(a.target_pconc) + ',' + fmt(a.I_AE) + ',' + fmt(s.Q) +
           ',' + fmt(a.key_rate) + '\n';
  }
  write_file(o.out_dir / "keyrate.csv", csv);
  return report_infeasible(rows, err);
}

inline int cmd_optimal_mua(const RunSettings& s, const RunOptions& o, std::ostream& err) {
  const SweepConfig cfg = s.sweep_config();
  cfg.validate();
  std::vector<std::optional<AliceIntensityOptimum>> found(s.lengths.size());
  std::vector<std::string> why(s.lengths.size());
  parallel_for(s.lengths.size(), o.jobs, [&](std::size_t i) {
    try {
      found[i] = optimal_alice_intensity(cfg, s.lengths[i], s.Q);
    } catch (const InfeasibleError& e) {
      why[i] = e.what();
    }
  });
  std::string csv = csv_preamble("optimal-mua", s) + kOptimalMuaHeader + "\n";
  int status = kExitOk;
  for (std::size_t i = 0; i < found.size(); ++i) {
    if (!found[i]) {
      if (status == kExitOk) err << "infeasible lengths:\n";
      err << "  " << fmt(s.lengths[i]) << " km: " << why[i] << "\n";
      status = kExitInfeasible;
      continue;
    }
    const AliceIntensityOptimum& a = *found[i];
    csv += fmt(a.length_km) + ',' + fmt(a.muA) + ',' + fmt(a.key_rate) + ',' + fmt(a.Q_crit) + '\n';
  }
  write_file(o.out_dir / "optimal_mua.csv", csv);
  return status;
}

inline int cmd_simulate(const RunSettings& s, const RunOptions& o, std::ostream& /*err*/) {
  const SimConfig c = s.sim_config();
  const SimSummary r = run_simulation(c, o.jobs);
  nlohmann::ordered_json j;
  j["config"] = s.to_json();
  j["trials"] = r.trials;
  j["conclusive"] = r.conclusive;
  j["conclusive_rate"] = r.conclusive_rate();
  j["conclusive_rate_std_err"] =
      std::sqrt(r.conclusive_rate() * (1.0 - r.conclusive_rate()) / static_cast<double>(r.trials));
  j["bit_mismatches"] = r.bit_mismatches;
  if (c.attack_enabled) {
    const ResolvedAttack res = resolve_schedule(c.attack, c.protocol);
    j["conclusive_rate_analytic"] = bob_conclusive_under_attack(res, c.protocol).value();
    j["k_histogram"] = r.k_hist;
    const ChiSquare chi = chi_square_test(r.k_hist, res.pk);
    j["chi_square"] = {{"statistic", chi.statistic}, {"dof", chi.dof}, {"p_value", chi.p_value}};
    j["I_AE_analytic"] = eve_info_total(c.attack, res, c.protocol).value();
    if (r.conclusive > 0) {
      const EveInfoEstimate e = estimate_eve_info(r);
      j["I_AE_estimate"] = e.mean.value();
      j["I_AE_std_err"] = e.std_err;
    } else {
      j["I_AE_estimate"] = nullptr;
    }
  } else {
    const double mu = expected_bob_intensity(c.protocol, c.channel);
    j["conclusive_rate_analytic"] =
        c.edge_modes ? conclusive_prob(mu, c.protocol.N).value()
                     : (c.protocol.N - 1.0) * std::exp(-(c.protocol.N - 2.0) * mu) * -std::expm1(-mu);
  }
  write_json(o.out_dir / "simulate.json", j);
  return kExitOk;
}

inline int cmd_validate(const RunSettings& s, const RunOptions& o, std::ostream& err) {
  const std::vector<Check> checks = validation_checks(s, o.jobs);
  nlohmann::ordered_json j;
  j["config"] = s.to_json();
  j["checks"] = nlohmann::ordered_json::array();
  bool all = true;
  for (const Check& c : checks) {
    j["checks"].push_back(c.to_json());
    std::cout << (c.status == "pass" ? "PASS " : c.status == "fail" ? "FAIL " : "INCONCLUSIVE ")
              << c.name << "\n";
    if (c.status != "pass") {
      all = false;
      err << c.status << ": " << c.name << "\n";
    }
  }
  j["all_pass"] = all;
  write_json(o.out_dir / "validate.json", j);
  return all ? kExitOk : kExitValidationFailed;
}

}  // namespace detail

inline const std::vector<std::string>& command_names() {
  static const std::vector<std::string> names{"sweep",       "optimize-point", "critical-error",
                                              "keyrate",     "optimal-mua",    "simulate",
                                              "validate"};
  return names;
}

/// Runs one subcommand; exceptions are mapped onto exit codes.
inline int run_command(const RunOptions& o, std::ostream& err = std::cerr) {
  using Handler = int (*)(const RunSettings&, const RunOptions&, std::ostream&);
  static const std::map<std::string, Handler> handlers{
      {"sweep", detail::cmd_sweep},
      {"optimize-point", detail::cmd_optimize_point},
      {"critical-error", detail::cmd_critical_error},
      {"keyrate", detail::cmd_keyrate},
      {"optimal-mua", detail::cmd_optimal_mua},
      {"simulate", detail::cmd_simulate},
      {"validate", detail::cmd_validate},
  };
  try {
    const auto h = handlers.find(o.command);
    if (h == handlers.end()) throw ConfigError("unknown subcommand '" + o.command + "'");
    RunSettings s = o.config_path.empty() ? parse_settings(nlohmann::json::object())
                                          : load_settings(o.config_path);
    if (o.seed) s.seed = *o.seed;
    std::error_code ec;
    std::filesystem::create_directories(o.out_dir, ec);
    if (ec || !std::filesystem::is_directory(o.out_dir)) {
      throw ConfigError("output directory '" + o.out_dir.string() + "' is not usable");
    }
    return h->second(s, o, err);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfigError;
  } catch (const InfeasibleError& e) {
    err << "infeasible: " << e.what() << "\n";
    return kExitInfeasible;
  } catch (const DomainError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfigError;
  }
}

}  // namespace dpsabs
