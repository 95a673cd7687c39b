#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "tensorjump/log.hpp"
#include "tensorjump_cli/commands.hpp"

using namespace tensorjump;
using namespace tensorjump::cli;

int main(int argc, char** argv) {
  CLI::App app{"tensorjump: equivariant stochastic-interpolant surrogate for molecular dynamics"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
  int threads = 1;
  std::optional<double> eps, sigma_p, sigma_v;
  std::optional<int> dtau_steps;
  std::string out;
  std::vector<std::string> sets;
  bool quiet = false;

  app.add_option("--config", config_path, "run configuration file")->check(CLI::ExistingFile);
  app.add_option("--seed", seed, "base seed; every section seed derives from it");
  app.add_flag("--deterministic", deterministic, "byte-reproducible outputs (wall times logged as 0)");
  app.add_option("--threads", threads, "worker cap")->check(CLI::PositiveNumber);
  app.add_option("--eps", eps, "sample.eps");
  app.add_option("--dtau-steps", dtau_steps, "sample.steps, latent steps per frame")->check(CLI::PositiveNumber);
  app.add_option("--sigma-p", sigma_p, "schedule.sigma2_p, position noise variance");
  app.add_option("--sigma-v", sigma_v, "schedule.sigma2_v, feature noise variance");
  app.add_option("--out", out, "output path of the command");
  app.add_option("--set", sets, "override any key: section.key=value (repeatable)");
  app.add_flag("-q,--quiet", quiet, "warnings and errors only");

  auto* gen = app.add_subcommand("gen-data", "simulate Brownian dynamics and write trajectories + pair index");
  auto* train = app.add_subcommand("train", "train the model on the pair index");
  auto* sample = app.add_subcommand("sample", "roll out the trained model from a start frame");
  auto* analyze = app.add_subcommand("analyze", "JS table, free energies and chemistry against a reference");
  auto* compare = app.add_subcommand("compare-transports", "train and score every schedule kind");
  std::string kind_filter;
  compare->add_option("--kind", kind_filter, "run one kind only");
  auto* sweep = app.add_subcommand("sweep", "JS over the (eps x latent steps) grid");
  auto* defaults = app.add_subcommand("defaults", "print the configuration with every key");
  for (auto* sub : {gen, train, sample, analyze, compare, sweep, defaults}) sub->fallthrough();

  CLI11_PARSE(app, argc, argv);

  try {
    if (quiet) log::set_level(log::Level::warn);
    RunConfig config = config_path.empty() ? RunConfig{} : RunConfig::load(config_path);
    if (seed) config.set_seed(*seed);
    config.deterministic = deterministic;
    config.threads = threads;
    if (eps) config.sample.eps = *eps;
    if (dtau_steps) config.sample.steps = *dtau_steps;
    if (sigma_p) config.schedule.noise.sigma2_p = *sigma_p;
    if (sigma_v) config.schedule.noise.sigma2_v = *sigma_v;
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos) throw ConfigError("--set expects section.key=value, got '" + s + "'");
      config.set(s.substr(0, eq), s.substr(eq + 1));
    }
    config.validate();

    if (*defaults) {
      std::cout << config.dump();
    } else if (*gen) {
      if (!out.empty()) config.world.out_dir = out;
      const auto r = cmd_gen_data(config);
      for (const auto& f : r.trajectory_files) std::cout << "wrote " << f << "\n";
      std::cout << "wrote " << r.pairs_file << " (" << r.dataset.pairs.size() << " pairs)\n";
    } else if (*train) {
      if (!out.empty()) config.train.checkpoint = out;
      const auto r = cmd_train(config);
      std::cout << "step " << r.step << " loss " << r.last_loss << "\nwrote " << r.checkpoint << "\nwrote " << r.log
                << "\n";
    } else if (*sample) {
      if (!out.empty()) config.sample.out = out;
      const auto r = cmd_sample(config);
      std::cout << "wrote " << r.out << " (" << r.trajectory.size() << " frames, " << r.trajectory.status << ")\n"
                << "timing: " << r.timing.str() << "\n";
    } else if (*analyze) {
      if (!out.empty()) config.analysis.out_dir = out;
      const auto r = cmd_analyze(config);
      std::cout << r.table() << r.chemistry;
    } else if (*compare) {
      if (!out.empty()) config.analysis.out_dir = out;
      std::optional<transport::Kind> only;
      if (!kind_filter.empty()) only = transport::parse_kind(kind_filter);
      std::cout << cmd_compare_transports(config, only).table();
    } else if (*sweep) {
      if (!out.empty()) config.analysis.out_dir = out;
      std::cout << cmd_sweep(config).table();
    }
  } catch (const std::exception& e) {
    std::cerr << "tensorjump: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
