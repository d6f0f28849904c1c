#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "simcal/simcal.hpp"

namespace {

struct CommonFlags {
  std::optional<std::string> task;
  std::optional<std::string> config;
  std::optional<std::string> logdir;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> model;
  std::optional<std::string> summarizer;
  std::optional<std::string> policy;
};

void add_common_flags(CLI::App* app, CommonFlags& flags) {
  app->add_option("--task", flags.task, "Pendulum | Cartpole | MassSpringDamper");
  app->add_option("--config", flags.config, "path to a run config file");
  app->add_option("--logdir", flags.logdir, "artifact directory");
  app->add_option("--seed", flags.seed, "random seed");
  app->add_option("--model", flags.model, "MDNN | MDRFF");
  app->add_option("--summarizer", flags.summarizer,
                  "start | waypoints | signature | crosscorr | crosscorrdiff");
  app->add_option("--policy", flags.policy, "random | fixed");
}

simcal::RunConfig resolve_config(const CommonFlags& flags) {
  simcal::RunConfig cfg;
  if (flags.config) cfg = simcal::parse_config(*flags.config);
  // command-line flags override config-file values
  if (flags.task) cfg.task = simcal::task_name_from_string(*flags.task);
  if (flags.logdir) cfg.logdir = *flags.logdir;
  if (flags.seed) cfg.seed = *flags.seed;
  if (flags.model) cfg.model_kind = simcal::model_kind_from_string(*flags.model);
  if (flags.summarizer)
    cfg.summarizer.kind = simcal::summarizer_kind_from_string(*flags.summarizer);
  if (flags.policy) {
    if (*flags.policy == "random") cfg.policy_kind = simcal::Policy::Kind::Random;
    else if (*flags.policy == "fixed") cfg.policy_kind = simcal::Policy::Kind::Fixed;
    else throw std::invalid_argument("policy must be random or fixed");
  }
  return cfg;
}

int cmd_run(const CommonFlags& flags, std::optional<int> iters) {
  simcal::RunConfig cfg = resolve_config(flags);
  if (iters) cfg.n_iters = *iters;
  cfg.validate();
  const simcal::RunResult result = simcal::run(cfg);
  std::cout << "run " << result.name << " finished: " << result.records.size()
            << " iteration(s), artifacts in " << result.run_dir << "\n";
  for (const auto& rec : result.records) {
    std::cout << "  iter " << rec.iteration << ": val_nll=" << rec.val_nll
              << " log_density_at_real=" << rec.log_density_at_real << "\n";
  }
  return 0;
}

int cmd_oracle(const CommonFlags& flags, int n_sims, double quantile) {
  simcal::RunConfig cfg = resolve_config(flags);
  cfg.validate();
  const simcal::TaskSpec task = cfg.build_task();
  const simcal::Prior prior = cfg.build_prior();
  const simcal::RealConfig real_cfg = cfg.build_real_config();
  const simcal::Policy policy = cfg.build_policy();

  const simcal::RandomStream root(cfg.seed, "oracle");
  simcal::Trajectory real = simcal::real_rollout(task, real_cfg, policy,
                                                 root.substream("real"), cfg.episode_steps);
  const simcal::AbcResult result =
      simcal::abc_rejection_oracle(task, prior, policy, real, cfg.summarizer,
                                   root.substream("abc"), n_sims, quantile,
                                   cfg.rollout_threads);

  namespace fs = std::filesystem;
  const fs::path out_dir = fs::path(cfg.logdir) / (simcal::run_name(cfg) + "_oracle");
  fs::create_directories(out_dir);
  std::vector<std::string> names;
  for (const auto& d : task.param_space().dims()) names.push_back(d.name);
  std::vector<std::vector<double>> rows;
  for (Eigen::Index i = 0; i < result.accepted.rows(); ++i) {
    std::vector<double> row;
    for (Eigen::Index d = 0; d < result.accepted.cols(); ++d)
      row.push_back(result.accepted(i, d));
    rows.push_back(std::move(row));
  }
  const std::string csv_path = (out_dir / "accepted_params.csv").string();
  simcal::write_csv(csv_path, names, rows);

  std::cout << "abc oracle accepted " << result.accepted.rows() << " of " << n_sims
            << " draws (distance threshold " << result.distance_threshold << ")\n";
  for (int d = 0; d < task.param_space().size(); ++d) {
    const double mean = result.accepted.col(d).mean();
    const double sd = std::sqrt(
        (result.accepted.col(d).array() - mean).square().sum() / result.accepted.rows());
    std::cout << "  " << names[static_cast<std::size_t>(d)] << ": mean=" << mean
              << " std=" << sd << "\n";
  }
  std::cout << "accepted samples written to " << csv_path << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"simcal: likelihood-free simulator parameter calibration"};
  app.require_subcommand(1);

  CommonFlags run_flags;
  std::optional<int> iters;
  CLI::App* run_cmd = app.add_subcommand("run", "execute the adaptive inference loop");
  add_common_flags(run_cmd, run_flags);
  run_cmd->add_option("--iters", iters, "number of pipeline iterations");

  CommonFlags oracle_flags;
  int n_sims = 10000;
  double quantile = 0.02;
  CLI::App* oracle_cmd =
      app.add_subcommand("oracle", "brute-force ABC rejection posterior for validation");
  add_common_flags(oracle_cmd, oracle_flags);
  oracle_cmd->add_option("--nsims", n_sims, "number of prior simulations");
  oracle_cmd->add_option("--quantile", quantile, "acceptance quantile");

  CLI11_PARSE(app, argc, argv);
  try {
    if (run_cmd->parsed()) return cmd_run(run_flags, iters);
    if (oracle_cmd->parsed()) return cmd_oracle(oracle_flags, n_sims, quantile);
  } catch (const std::exception& e) {
    std::cerr << "simcal: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
