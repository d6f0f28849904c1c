#pragma once

#include <cctype>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "simcal/csv.hpp"
#include "simcal/density.hpp"
#include "simcal/param_space.hpp"
#include "simcal/simulators.hpp"
#include "simcal/summarizers.hpp"

namespace simcal {

struct PriorDimConfig {
  double low = 0.0;
  double high = 1.0;
  std::optional<Prior::GaussianDim> gaussian;  // empty = uniform on [low, high]
};

/// Everything one pipeline run needs, resolvable from a config file plus
/// command-line overrides. Missing keys take the documented defaults.
struct RunConfig {
  TaskName task = TaskName::Pendulum;
  std::uint64_t seed = 42;
  int n_iters = 5;
  int n_sims_per_iter = 2000;
  int episode_steps = 100;
  Policy::Kind policy_kind = Policy::Kind::Random;
  std::vector<double> fixed_action;  // Fixed policy only; defaults to zeros
  SummarizerSpec summarizer;
  ModelKind model_kind = ModelKind::MDNN;
  InitMode init_mode = InitMode::Scratch;
  bool freeze_real = false;
  std::string logdir = "runs";
  std::pair<int, int> slice_dims = {0, 1};
  int slice_grid = 50;
  int rollout_threads = 0;  // 0 = hardware concurrency

  std::map<std::string, PriorDimConfig> prior_overrides;  // by parameter name
  std::map<std::string, double> real_params;              // empty = task defaults
  std::map<std::string, double> constant_overrides;

  // model_params
  int components = 10;
  std::vector<int> hidden_sizes = {128, 128};
  Activation activation = Activation::Tanh;
  int rff_features = 512;
  std::optional<double> rff_bandwidth;  // empty = median heuristic

  TrainConfig train;

  TaskSpec build_task() const {
    auto constants = default_constants(task);
    for (const auto& [k, v] : constant_overrides) {
      if (!constants.count(k))
        throw std::invalid_argument("config: unknown task constant '" + k + "'");
      constants[k] = v;
    }
    constants["episode_steps"] = episode_steps;
    return TaskSpec(task, build_param_space(), constants);
  }

  ParamSpace build_param_space() const {
    ParamSpace base = default_param_space(task);
    std::vector<ParamSpace::Dim> dims = base.dims();
    for (const auto& [name, cfg] : prior_overrides) {
      const int idx = base.index_of(name);
      if (idx < 0)
        throw std::invalid_argument("config: prior names unknown parameter '" + name + "'");
      dims[static_cast<std::size_t>(idx)].low = cfg.low;
      dims[static_cast<std::size_t>(idx)].high = cfg.high;
    }
    return ParamSpace(dims);
  }

  Prior build_prior() const {
    ParamSpace space = build_param_space();
    bool any_gaussian = false;
    std::vector<std::optional<Prior::GaussianDim>> gauss(
        static_cast<std::size_t>(space.size()));
    for (const auto& [name, cfg] : prior_overrides) {
      if (cfg.gaussian) {
        gauss[static_cast<std::size_t>(space.index_of(name))] = cfg.gaussian;
        any_gaussian = true;
      }
    }
    if (!any_gaussian) return Prior::uniform(std::move(space));
    return Prior::truncated_gaussian(std::move(space), std::move(gauss));
  }

  RealConfig build_real_config() const {
    const auto params = real_params.empty() ? default_real_params(task) : real_params;
    return RealConfig(build_param_space(), params, 1);
  }

  Policy build_policy() const {
    if (policy_kind == Policy::Kind::Random) return Policy::random();
    const TaskSpec spec = build_task();
    Vector a = Vector::Zero(spec.action_dim());
    if (!fixed_action.empty()) {
      if (static_cast<int>(fixed_action.size()) != spec.action_dim())
        throw std::invalid_argument("config: fixed_action dimension mismatch");
      for (std::size_t i = 0; i < fixed_action.size(); ++i)
        a[static_cast<Eigen::Index>(i)] = fixed_action[i];
    }
    return Policy::fixed(std::move(a));
  }

  /// Full validation: everything the run would construct is constructed
  /// once, so bad values fail at parse time rather than mid-run.
  void validate() const {
    if (n_iters < 1) throw std::invalid_argument("config: n_iters must be >= 1");
    if (n_sims_per_iter < 1)
      throw std::invalid_argument("config: n_sims_per_iter must be >= 1");
    if (episode_steps < 2) throw std::invalid_argument("config: episode_steps must be >= 2");
    if (slice_grid < 2) throw std::invalid_argument("config: slice_grid must be >= 2");
    summarizer.validate();
    train.validate();
    const TaskSpec spec = build_task();
    build_prior();
    build_real_config();
    build_policy();
    // summarizer must be computable on the configured trajectories
    summary_dim(summarizer, spec.state_dim(), spec.action_dim(), episode_steps);
    const int d = spec.param_space().size();
    if (d >= 2) {
      if (slice_dims.first == slice_dims.second || slice_dims.first < 0 ||
          slice_dims.second < 0 || slice_dims.first >= d || slice_dims.second >= d)
        throw std::invalid_argument("config: slice_dims out of range");
    }
  }
};

/// "[Task]_[model kind]_[summarizer name]_[sampling policy]_seed[N]".
inline std::string run_name(const RunConfig& cfg) {
  return to_string(cfg.task) + "_" + to_string(cfg.model_kind) + "_" +
         to_string(cfg.summarizer.kind) + "_" + to_string(cfg.policy_kind) + "_seed" +
         std::to_string(cfg.seed);
}

namespace detail {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

inline std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return s.substr(b, e - b);
}

inline std::vector<std::string> split_ws(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream ss(s);
  std::string tok;
  while (ss >> tok) out.push_back(tok);
  return out;
}

inline std::vector<std::string> split_commas(const std::string& s) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(s);
  while (std::getline(ss, cur, ',')) out.push_back(trim(cur));
  return out;
}

inline double parse_double(const std::string& v, const std::string& where) {
  char* end = nullptr;
  const double x = std::strtod(v.c_str(), &end);
  if (end != v.c_str() + v.size() || v.empty())
    throw ConfigError(where + ": expected a number, got '" + v + "'");
  return x;
}

inline long parse_int(const std::string& v, const std::string& where) {
  char* end = nullptr;
  const long x = std::strtol(v.c_str(), &end, 10);
  if (end != v.c_str() + v.size() || v.empty())
    throw ConfigError(where + ": expected an integer, got '" + v + "'");
  return x;
}

inline bool parse_bool(const std::string& v, const std::string& where) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(where + ": expected true/false, got '" + v + "'");
}

inline void set_top_level(RunConfig& cfg, const std::string& key, const std::string& value,
                          const std::string& where) {
  try {
    if (key == "task") cfg.task = task_name_from_string(value);
    else if (key == "seed") cfg.seed = static_cast<std::uint64_t>(parse_int(value, where));
    else if (key == "iters" || key == "n_iters") cfg.n_iters = static_cast<int>(parse_int(value, where));
    else if (key == "n_sims_per_iter") cfg.n_sims_per_iter = static_cast<int>(parse_int(value, where));
    else if (key == "episode_steps") cfg.episode_steps = static_cast<int>(parse_int(value, where));
    else if (key == "policy") {
      if (value == "random") cfg.policy_kind = Policy::Kind::Random;
      else if (value == "fixed") cfg.policy_kind = Policy::Kind::Fixed;
      else throw ConfigError(where + ": policy must be random or fixed");
    } else if (key == "fixed_action") {
      cfg.fixed_action.clear();
      for (const auto& tok : split_commas(value))
        cfg.fixed_action.push_back(parse_double(tok, where));
    } else if (key == "summarizer") cfg.summarizer.kind = summarizer_kind_from_string(value);
    else if (key == "model") cfg.model_kind = model_kind_from_string(value);
    else if (key == "init_mode") cfg.init_mode = init_mode_from_string(value);
    else if (key == "freeze_real") cfg.freeze_real = parse_bool(value, where);
    else if (key == "logdir") cfg.logdir = value;
    else if (key == "slice_grid") cfg.slice_grid = static_cast<int>(parse_int(value, where));
    else if (key == "rollout_threads") cfg.rollout_threads = static_cast<int>(parse_int(value, where));
    else if (key == "slice_dims") {
      const auto parts = split_commas(value);
      if (parts.size() != 2) throw ConfigError(where + ": slice_dims needs two indices");
      cfg.slice_dims = {static_cast<int>(parse_int(parts[0], where)),
                        static_cast<int>(parse_int(parts[1], where))};
    } else {
      throw ConfigError(where + ": unknown key '" + key + "'");
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

inline void set_section_entry(RunConfig& cfg, const std::string& section, const std::string& key,
                              const std::string& value, const std::string& where) {
  try {
    if (section == "prior") {
      const auto toks = split_ws(value);
      PriorDimConfig dim;
      if (toks.size() == 2) {
        dim.low = parse_double(toks[0], where);
        dim.high = parse_double(toks[1], where);
      } else if (toks.size() == 5 && toks[2] == "gauss") {
        dim.low = parse_double(toks[0], where);
        dim.high = parse_double(toks[1], where);
        dim.gaussian = Prior::GaussianDim{parse_double(toks[3], where),
                                          parse_double(toks[4], where)};
      } else {
        throw ConfigError(where + ": prior entries are 'low high' or 'low high gauss mean std'");
      }
      cfg.prior_overrides[key] = dim;
    } else if (section == "realParams") {
      cfg.real_params[key] = parse_double(value, where);
    } else if (section == "constants") {
      cfg.constant_overrides[key] = parse_double(value, where);
    } else if (section == "summarizer_params") {
      if (key == "n_steps") cfg.summarizer.n_steps = static_cast<int>(parse_int(value, where));
      else if (key == "stride") cfg.summarizer.stride = static_cast<int>(parse_int(value, where));
      else if (key == "depth") cfg.summarizer.depth = static_cast<int>(parse_int(value, where));
      else if (key == "time_augment") cfg.summarizer.time_augment = parse_bool(value, where);
      else if (key == "n_lags") cfg.summarizer.n_lags = static_cast<int>(parse_int(value, where));
      else throw ConfigError(where + ": unknown key '" + key + "' in summarizer_params");
    } else if (section == "model_params") {
      if (key == "components") cfg.components = static_cast<int>(parse_int(value, where));
      else if (key == "hidden") {
        cfg.hidden_sizes.clear();
        for (const auto& tok : split_commas(value))
          cfg.hidden_sizes.push_back(static_cast<int>(parse_int(tok, where)));
      } else if (key == "activation") cfg.activation = activation_from_string(value);
      else if (key == "rff_features") cfg.rff_features = static_cast<int>(parse_int(value, where));
      else if (key == "bandwidth") {
        if (value == "median") cfg.rff_bandwidth.reset();
        else cfg.rff_bandwidth = parse_double(value, where);
      } else throw ConfigError(where + ": unknown key '" + key + "' in model_params");
    } else if (section == "train") {
      if (key == "batch_size") cfg.train.batch_size = static_cast<int>(parse_int(value, where));
      else if (key == "learning_rate") cfg.train.learning_rate = parse_double(value, where);
      else if (key == "max_epochs") cfg.train.max_epochs = static_cast<int>(parse_int(value, where));
      else if (key == "patience") cfg.train.patience = static_cast<int>(parse_int(value, where));
      else if (key == "validation_fraction") cfg.train.validation_fraction = parse_double(value, where);
      else if (key == "grad_clip_norm") cfg.train.grad_clip_norm = parse_double(value, where);
      else throw ConfigError(where + ": unknown key '" + key + "' in train");
    } else {
      throw ConfigError(where + ": unknown section '" + section + "'");
    }
  } catch (const std::invalid_argument& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

inline bool is_known_section(const std::string& name) {
  return name == "prior" || name == "realParams" || name == "constants" ||
         name == "summarizer_params" || name == "model_params" || name == "train";
}

}  // namespace detail

/// Parse the flat "key: value" config grammar (one nesting level for
/// sections). Unknown keys are errors; missing keys keep their defaults.
inline RunConfig parse_config_text(const std::string& text, const std::string& origin) {
  RunConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::string open_section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string where = origin + ":" + std::to_string(lineno);
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    if (detail::trim(line).empty()) continue;
    const bool indented = std::isspace(static_cast<unsigned char>(line.front())) != 0;
    const std::string body = detail::trim(line);
    const std::size_t colon = body.find(':');
    if (colon == std::string::npos)
      throw detail::ConfigError(where + ": expected 'key: value'");
    const std::string key = detail::trim(body.substr(0, colon));
    const std::string value = detail::trim(body.substr(colon + 1));
    if (key.empty()) throw detail::ConfigError(where + ": empty key");

    if (!indented) {
      if (value.empty()) {
        if (!detail::is_known_section(key))
          throw detail::ConfigError(where + ": unknown section '" + key + "'");
        open_section = key;
      } else {
        open_section.clear();
        detail::set_top_level(cfg, key, value, where);
      }
    } else {
      if (open_section.empty())
        throw detail::ConfigError(where + ": indented entry outside any section");
      if (value.empty())
        throw detail::ConfigError(where + ": nested sections are not supported");
      detail::set_section_entry(cfg, open_section, key, value, where);
    }
  }
  cfg.validate();
  return cfg;
}

inline RunConfig parse_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("parse_config: cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

/// Canonical echo of the fully resolved config (defaults filled in).
/// Itself parseable by parse_config_text.
inline std::string resolved_config_text(const RunConfig& cfg) {
  std::ostringstream os;
  os << "task: " << to_string(cfg.task) << "\n";
  os << "seed: " << cfg.seed << "\n";
  os << "iters: " << cfg.n_iters << "\n";
  os << "n_sims_per_iter: " << cfg.n_sims_per_iter << "\n";
  os << "episode_steps: " << cfg.episode_steps << "\n";
  os << "policy: " << to_string(cfg.policy_kind) << "\n";
  if (cfg.policy_kind == Policy::Kind::Fixed && !cfg.fixed_action.empty()) {
    os << "fixed_action: ";
    for (std::size_t i = 0; i < cfg.fixed_action.size(); ++i)
      os << (i ? "," : "") << format_double(cfg.fixed_action[i]);
    os << "\n";
  }
  os << "summarizer: " << to_string(cfg.summarizer.kind) << "\n";
  os << "model: " << to_string(cfg.model_kind) << "\n";
  os << "init_mode: " << to_string(cfg.init_mode) << "\n";
  os << "freeze_real: " << (cfg.freeze_real ? "true" : "false") << "\n";
  os << "logdir: " << cfg.logdir << "\n";
  os << "slice_dims: " << cfg.slice_dims.first << "," << cfg.slice_dims.second << "\n";
  os << "slice_grid: " << cfg.slice_grid << "\n";
  os << "rollout_threads: " << cfg.rollout_threads << "\n";

  const ParamSpace space = cfg.build_param_space();
  os << "prior:\n";
  for (const auto& d : space.dims()) {
    os << "  " << d.name << ": " << format_double(d.low) << " " << format_double(d.high);
    const auto it = cfg.prior_overrides.find(d.name);
    if (it != cfg.prior_overrides.end() && it->second.gaussian)
      os << " gauss " << format_double(it->second.gaussian->mean) << " "
         << format_double(it->second.gaussian->std);
    os << "\n";
  }
  os << "realParams:\n";
  const RealConfig real_cfg = cfg.build_real_config();
  for (const auto& [k, v] : real_cfg.real_params())
    os << "  " << k << ": " << format_double(v) << "\n";
  os << "constants:\n";
  const TaskSpec task = cfg.build_task();
  for (const auto& [k, v] : task.constants())
    os << "  " << k << ": " << format_double(v) << "\n";
  os << "summarizer_params:\n";
  os << "  n_steps: " << cfg.summarizer.n_steps << "\n";
  os << "  stride: " << cfg.summarizer.stride << "\n";
  os << "  depth: " << cfg.summarizer.depth << "\n";
  os << "  time_augment: " << (cfg.summarizer.time_augment ? "true" : "false") << "\n";
  os << "  n_lags: " << cfg.summarizer.n_lags << "\n";
  os << "model_params:\n";
  os << "  components: " << cfg.components << "\n";
  os << "  hidden: ";
  for (std::size_t i = 0; i < cfg.hidden_sizes.size(); ++i)
    os << (i ? "," : "") << cfg.hidden_sizes[i];
  os << "\n";
  os << "  activation: " << to_string(cfg.activation) << "\n";
  os << "  rff_features: " << cfg.rff_features << "\n";
  os << "  bandwidth: "
     << (cfg.rff_bandwidth ? format_double(*cfg.rff_bandwidth) : std::string("median")) << "\n";
  os << "train:\n";
  os << "  batch_size: " << cfg.train.batch_size << "\n";
  os << "  learning_rate: " << format_double(cfg.train.learning_rate) << "\n";
  os << "  max_epochs: " << cfg.train.max_epochs << "\n";
  os << "  patience: " << cfg.train.patience << "\n";
  os << "  validation_fraction: " << format_double(cfg.train.validation_fraction) << "\n";
  os << "  grad_clip_norm: " << format_double(cfg.train.grad_clip_norm) << "\n";
  return os.str();
}

}  // namespace simcal
