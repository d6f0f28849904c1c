#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "simcal/checkpoint.hpp"
#include "simcal/csv.hpp"
#include "simcal/density.hpp"
#include "simcal/inference.hpp"
#include "simcal/run_config.hpp"
#include "simcal/simulators.hpp"
#include "simcal/summarizers.hpp"

namespace simcal {

/// Per-iteration scalars logged to scalars.csv (stage timings go to
/// timings.csv so scalars.csv stays byte-identical across reruns).
struct IterationRecord {
  int iteration = 0;
  double train_nll = 0.0;
  double val_nll = 0.0;
  Vector post_mean;
  Vector post_std;
  double log_density_at_real = kNegInf;  // may be -inf
  std::vector<std::pair<std::string, double>> stage_seconds;
};

struct RunResult {
  std::string name;
  std::string run_dir;
  std::vector<IterationRecord> records;
};

namespace detail {

inline std::vector<std::string> scalars_header(const ParamSpace& space) {
  std::vector<std::string> h = {"iteration", "train_nll", "val_nll"};
  for (const auto& d : space.dims()) h.push_back("post_mean_" + d.name);
  for (const auto& d : space.dims()) h.push_back("post_std_" + d.name);
  h.push_back("log_density_at_real");
  return h;
}

inline std::vector<double> scalars_row(const IterationRecord& rec) {
  std::vector<double> row = {static_cast<double>(rec.iteration), rec.train_nll, rec.val_nll};
  for (Eigen::Index d = 0; d < rec.post_mean.size(); ++d) row.push_back(rec.post_mean[d]);
  for (Eigen::Index d = 0; d < rec.post_std.size(); ++d) row.push_back(rec.post_std[d]);
  row.push_back(rec.log_density_at_real);
  return row;
}

inline void write_scalars(const std::string& path, const ParamSpace& space,
                          const std::vector<IterationRecord>& records) {
  std::vector<std::vector<double>> rows;
  rows.reserve(records.size());
  for (const auto& r : records) rows.push_back(scalars_row(r));
  write_csv(path, scalars_header(space), rows);
}

inline void write_timings(const std::string& path, const std::vector<IterationRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  out << "iteration,stage,seconds\n";
  for (const auto& r : records)
    for (const auto& [stage, secs] : r.stage_seconds)
      out << r.iteration << ',' << stage << ',' << format_double(secs) << '\n';
}

inline void write_slice_csv(const std::string& path, const PosteriorSlice& slice) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write_slice_csv: cannot open '" + path + "'");
  out << slice.name_a << ',' << slice.name_b << '\n';
  out << format_double(slice.low_a) << ',' << format_double(slice.high_a) << ','
      << format_double(slice.low_b) << ',' << format_double(slice.high_b) << '\n';
  for (Eigen::Index i = 0; i < slice.values.rows(); ++i) {
    for (Eigen::Index j = 0; j < slice.values.cols(); ++j) {
      if (j) out << ',';
      out << format_double(slice.values(i, j));
    }
    out << '\n';
  }
}

}  // namespace detail

/// Parse scalars.csv back into IterationRecords (timings are not part of
/// the scalars schema).
inline std::vector<IterationRecord> read_scalars(const std::string& path, int n_dims) {
  const CsvTable table = read_csv(path);
  const std::size_t expect = 3 + 2 * static_cast<std::size_t>(n_dims) + 1;
  if (table.header.size() != expect)
    throw std::runtime_error("read_scalars: unexpected column count in '" + path + "'");
  std::vector<IterationRecord> records;
  for (const auto& row : table.rows) {
    IterationRecord rec;
    rec.iteration = static_cast<int>(row[0]);
    rec.train_nll = row[1];
    rec.val_nll = row[2];
    rec.post_mean.resize(n_dims);
    rec.post_std.resize(n_dims);
    for (int d = 0; d < n_dims; ++d) rec.post_mean[d] = row[3 + static_cast<std::size_t>(d)];
    for (int d = 0; d < n_dims; ++d)
      rec.post_std[d] = row[3 + static_cast<std::size_t>(n_dims + d)];
    rec.log_density_at_real = row.back();
    records.push_back(std::move(rec));
  }
  return records;
}

/// The adaptive loop: belief_0 = prior; each iteration samples parameters
/// from the current belief, rolls out, summarizes, trains the conditional
/// density, conditions on a fresh surrogate-real trajectory, and adopts
/// the resulting posterior as the next belief. Deterministic given the
/// seed; artifacts land in logdir/<run_name>/.
inline RunResult run(const RunConfig& cfg) {
  namespace fs = std::filesystem;
  cfg.validate();

  const TaskSpec task = cfg.build_task();
  const Prior prior = cfg.build_prior();
  const RealConfig real_cfg = cfg.build_real_config();
  const Policy policy = cfg.build_policy();
  const SummarizerSpec& spec = cfg.summarizer;
  const int steps = cfg.episode_steps;
  const int input_dim = summary_dim(spec, task.state_dim(), task.action_dim(), steps);
  const int n_dims = task.param_space().size();

  RunResult result;
  result.name = run_name(cfg);
  const fs::path run_dir = fs::path(cfg.logdir) / result.name;
  fs::create_directories(run_dir);
  result.run_dir = run_dir.string();
  {
    std::ofstream out(run_dir / "config_resolved", std::ios::binary);
    if (!out) throw std::runtime_error("run: cannot write to logdir '" + cfg.logdir + "'");
    out << resolved_config_text(cfg);
  }

  const RandomStream root(cfg.seed, "run");
  std::optional<ConditionalDensityModel> model;
  std::optional<Posterior> belief;
  std::optional<Trajectory> frozen_real;

  for (int iter = 0; iter < cfg.n_iters; ++iter) {
    IterationRecord rec;
    rec.iteration = iter;
    const std::string iter_id = "iter" + std::to_string(iter);

    auto timed = [&](const std::string& stage, auto&& fn) {
      const auto t0 = std::chrono::steady_clock::now();
      try {
        fn();
      } catch (const std::exception& e) {
        throw std::runtime_error("run aborted at iteration " + std::to_string(iter) +
                                 ", stage '" + stage + "': " + e.what());
      }
      const std::chrono::duration<double> dt = std::chrono::steady_clock::now() - t0;
      rec.stage_seconds.emplace_back(stage, dt.count());
    };

    Matrix thetas;
    timed("sample", [&] {
      RandomStream rng = root.substream(iter_id + "/sample");
      thetas = iter == 0 ? prior.sample(rng, cfg.n_sims_per_iter)
                         : belief->sample(rng, cfg.n_sims_per_iter);
    });

    RolloutBatch batch;
    timed("rollout", [&] {
      batch = rollout_batch(task, thetas, policy, root.substream(iter_id), steps,
                            cfg.rollout_threads);
    });

    Dataset data;
    timed("summarize", [&] {
      std::vector<SummaryVector> summaries;
      summaries.reserve(batch.trajectories.size());
      Matrix kept(static_cast<Eigen::Index>(batch.trajectories.size()), n_dims);
      for (std::size_t i = 0; i < batch.trajectories.size(); ++i) {
        summaries.push_back(summarize(batch.trajectories[i], spec));
        kept.row(static_cast<Eigen::Index>(i)) = *batch.trajectories[i].params;
      }
      data = make_dataset(summaries, std::move(kept));
    });

    TrainReport report;
    timed("train", [&] {
      if (!model) {
        RandomStream model_rng = root.substream("iter0/model");
        if (cfg.model_kind == ModelKind::MDNN) {
          MdnnConfig mc;
          mc.hidden_sizes = cfg.hidden_sizes;
          mc.activation = cfg.activation;
          mc.components = cfg.components;
          mc.input_dim = input_dim;
          mc.output_dim = n_dims;
          model = ConditionalDensityModel::mdnn(mc, task.param_space(), model_rng);
        } else {
          MdrffConfig mc;
          mc.n_features = cfg.rff_features;
          // median heuristic resolved once, from the first iteration's data
          mc.bandwidth = cfg.rff_bandwidth ? *cfg.rff_bandwidth
                                           : median_heuristic_bandwidth(data.summaries);
          mc.components = cfg.components;
          mc.input_dim = input_dim;
          mc.output_dim = n_dims;
          model = ConditionalDensityModel::mdrff(mc, task.param_space(), model_rng);
        }
      }
      TrainConfig tc = cfg.train;
      tc.init_mode =
          (iter == 0 || cfg.init_mode == InitMode::Scratch) ? InitMode::Scratch
                                                            : InitMode::Finetune;
      report = train(*model, data, tc, root.substream(iter_id + "/train"));
      rec.train_nll = report.train_nll[static_cast<std::size_t>(report.best_epoch)];
      rec.val_nll = report.best_val_nll;
    });

    std::optional<Posterior> posterior;
    timed("condition", [&] {
      if (cfg.freeze_real && frozen_real) {
        // keep iteration 0's surrogate-real trajectory
      } else {
        frozen_real = real_rollout(task, real_cfg, policy,
                                   root.substream(iter_id + "/real"), steps);
      }
      ProposalDensity proposal =
          iter == 0 ? ProposalDensity(prior) : ProposalDensity(belief->base());
      posterior = condition(*model, *frozen_real, spec, prior, std::move(proposal));
    });

    timed("artifacts", [&] {
      RandomStream sample_rng = root.substream(iter_id + "/posterior_samples");
      const Matrix samples = posterior->sample(sample_rng, cfg.n_sims_per_iter);
      rec.post_mean = samples.colwise().mean();
      rec.post_std.resize(n_dims);
      for (int d = 0; d < n_dims; ++d) {
        const double m = rec.post_mean[d];
        rec.post_std[d] =
            std::sqrt((samples.col(d).array() - m).square().sum() / samples.rows());
      }
      RandomStream evidence_rng = root.substream(iter_id + "/evidence");
      const double log_z = posterior->log_normalizer_estimate(evidence_rng);
      const double lp = posterior->logpdf_unnorm(real_cfg.theta());
      rec.log_density_at_real =
          (std::isfinite(log_z) && std::isfinite(lp)) ? lp - log_z : kNegInf;

      std::vector<std::string> names;
      for (const auto& d : task.param_space().dims()) names.push_back(d.name);
      std::vector<std::vector<double>> rows;
      rows.reserve(static_cast<std::size_t>(samples.rows()));
      for (Eigen::Index i = 0; i < samples.rows(); ++i) {
        std::vector<double> row;
        for (int d = 0; d < n_dims; ++d) row.push_back(samples(i, d));
        rows.push_back(std::move(row));
      }
      write_csv((run_dir / ("posterior_samples_" + iter_id + ".csv")).string(), names, rows);

      if (n_dims >= 2) {
        const PosteriorSlice slice =
            posterior_slice(*posterior, cfg.slice_dims.first, cfg.slice_dims.second,
                            cfg.slice_grid);
        detail::write_slice_csv((run_dir / ("posterior_slice_" + iter_id + "_" +
                                            slice.name_a + "_" + slice.name_b + ".csv"))
                                    .string(),
                                slice);
      }
      save_checkpoint(*model, (run_dir / ("model_" + iter_id + ".ckpt")).string());
    });

    result.records.push_back(std::move(rec));
    detail::write_scalars((run_dir / "scalars.csv").string(), task.param_space(),
                          result.records);
    detail::write_timings((run_dir / "timings.csv").string(), result.records);
    belief = std::move(posterior);
  }
  return result;
}

}  // namespace simcal
