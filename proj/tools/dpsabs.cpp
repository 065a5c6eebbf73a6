// dpsabs: optimal-attack sweeps, point optimizations and Monte-Carlo
// validation for DPS key distribution under a tap-and-filter attack.
//
//   dpsabs <command> --config <path> --out <dir> [--seed <u64>] [--jobs <n>]

#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "dpsabs/app.hpp"

int main(int argc, char** argv) {
  CLI::App app{"DPS key distribution under a tap-and-filter attack: optimal attacks and Monte-Carlo checks"};
  app.require_subcommand(1);

  dpsabs::RunOptions opts;
  std::string out;
  std::uint64_t seed = 0;
  unsigned jobs = 1;

  const std::map<std::string, std::string> help{
      {"sweep", "optimal attack per channel length -> sweep.csv"},
      {"optimize-point", "optimal attack at config 'length' -> optimize_point.json"},
      {"critical-error", "critical QBER from 'I_AE', or along the sweep"},
      {"keyrate", "key rate from 'p_conc' and 'I_AE', or along the sweep"},
      {"optimal-mua", "key-rate optimal Alice intensity per length -> optimal_mua.csv"},
      {"simulate", "Monte-Carlo run of the configured train model -> simulate.json"},
      {"validate", "Monte-Carlo and finite-difference checks -> validate.json"},
  };
  std::vector<CLI::App*> subs;
  for (const std::string& name : dpsabs::command_names()) {
    CLI::App* sub = app.add_subcommand(name, help.at(name));
    sub->add_option("--config", opts.config_path, "flat JSON config file")->check(CLI::ExistingFile);
    sub->add_option("--out", out, "output directory")->required();
    sub->add_option("--seed", seed, "override the config seed");
    sub->add_option("--jobs", jobs, "worker threads")->check(CLI::Range(1u, 1024u));
    subs.push_back(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : dpsabs::kExitConfigError;
  }

  for (CLI::App* sub : subs) {
    if (!sub->parsed()) continue;
    opts.command = sub->get_name();
    if (sub->count("--seed") > 0) opts.seed = seed;
  }
  opts.out_dir = out;
  opts.jobs = jobs;
  return dpsabs::run_command(opts, std::cerr);
}
