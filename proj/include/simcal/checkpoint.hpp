#pragma once

#include <fstream>
#include <stdexcept>
#include <string>

#include <json.hpp>

#include "simcal/density.hpp"

namespace simcal {

namespace detail {

inline nlohmann::json vec_to_json(const Vector& v) {
  nlohmann::json a = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline nlohmann::json mat_to_json(const Matrix& m) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Vector json_to_vec(const nlohmann::json& a) {
  Vector v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  return v;
}

inline Matrix json_to_mat(const nlohmann::json& a) {
  if (a.empty()) return Matrix(0, 0);
  Matrix m(static_cast<Eigen::Index>(a.size()), static_cast<Eigen::Index>(a[0].size()));
  for (std::size_t r = 0; r < a.size(); ++r)
    for (std::size_t c = 0; c < a[r].size(); ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = a[r][c].get<double>();
  return m;
}

}  // namespace detail

inline constexpr int kCheckpointVersion = 1;

/// Serialize the full model (config, standardizer, weights, frozen RFF) as
/// JSON. Doubles round-trip exactly, so a loaded model reproduces forward
/// outputs bit for bit.
inline void save_checkpoint(const ConditionalDensityModel& model, const std::string& path) {
  nlohmann::json j;
  j["version"] = kCheckpointVersion;
  j["kind"] = to_string(model.kind());
  j["summarizer_id"] = model.summarizer_id();
  if (model.kind() == ModelKind::MDNN) {
    const auto& cfg = model.mdnn_config();
    j["config"] = {{"hidden_sizes", cfg.hidden_sizes},
                   {"activation", to_string(cfg.activation)},
                   {"components", cfg.components},
                   {"input_dim", cfg.input_dim},
                   {"output_dim", cfg.output_dim}};
  } else {
    const auto& cfg = model.mdrff_config();
    j["config"] = {{"n_features", cfg.n_features},
                   {"bandwidth", cfg.bandwidth.value()},
                   {"components", cfg.components},
                   {"input_dim", cfg.input_dim},
                   {"output_dim", cfg.output_dim}};
    j["rff_omega"] = detail::mat_to_json(model.rff_omega());
    j["rff_phase"] = detail::vec_to_json(model.rff_phase());
  }
  const auto& st = model.standardizer();
  j["standardizer"] = {{"inputs_fitted", st.inputs_fitted()},
                       {"in_mean", detail::vec_to_json(st.input_mean())},
                       {"in_std", detail::vec_to_json(st.input_std())},
                       {"out_center", detail::vec_to_json(st.output_center())},
                       {"out_scale", detail::vec_to_json(st.output_scale())}};
  j["parameters"] = detail::vec_to_json(model.parameters());

  std::ofstream out(path);
  if (!out) throw std::runtime_error("save_checkpoint: cannot open '" + path + "'");
  out << j.dump();
  out << "\n";
  if (!out) throw std::runtime_error("save_checkpoint: write failed for '" + path + "'");
}

inline ConditionalDensityModel load_checkpoint(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("load_checkpoint: cannot open '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error("load_checkpoint: malformed checkpoint '" + path +
                             "': " + e.what());
  }
  if (!j.contains("version") || j["version"].get<int>() != kCheckpointVersion)
    throw std::runtime_error("load_checkpoint: unsupported checkpoint version in '" + path + "'");

  const auto& st = j.at("standardizer");
  const Vector out_center = detail::json_to_vec(st.at("out_center"));
  const Vector out_scale = detail::json_to_vec(st.at("out_scale"));
  // rebuild a matching box so the factory can set output bounds; the exact
  // stored center/scale are restored verbatim afterwards
  std::vector<ParamSpace::Dim> dims;
  for (Eigen::Index d = 0; d < out_center.size(); ++d)
    dims.push_back({"p" + std::to_string(d), out_center[d] - out_scale[d],
                    out_center[d] + out_scale[d]});
  const ParamSpace space(dims);

  RandomStream throwaway(0, "load");
  ConditionalDensityModel model = [&] {
    if (j.at("kind").get<std::string>() == "MDNN") {
      MdnnConfig cfg;
      cfg.hidden_sizes = j.at("config").at("hidden_sizes").get<std::vector<int>>();
      cfg.activation = activation_from_string(j.at("config").at("activation").get<std::string>());
      cfg.components = j.at("config").at("components").get<int>();
      cfg.input_dim = j.at("config").at("input_dim").get<int>();
      cfg.output_dim = j.at("config").at("output_dim").get<int>();
      return ConditionalDensityModel::mdnn(cfg, space, throwaway);
    }
    MdrffConfig cfg;
    cfg.n_features = j.at("config").at("n_features").get<int>();
    cfg.bandwidth = j.at("config").at("bandwidth").get<double>();
    cfg.components = j.at("config").at("components").get<int>();
    cfg.input_dim = j.at("config").at("input_dim").get<int>();
    cfg.output_dim = j.at("config").at("output_dim").get<int>();
    return ConditionalDensityModel::mdrff(cfg, space, throwaway);
  }();

  model.set_parameters(detail::json_to_vec(j.at("parameters")));
  if (model.kind() == ModelKind::MDRFF)
    model.set_rff(detail::json_to_mat(j.at("rff_omega")), detail::json_to_vec(j.at("rff_phase")));
  model.standardizer().restore(detail::json_to_vec(st.at("in_mean")),
                               detail::json_to_vec(st.at("in_std")), out_center, out_scale,
                               st.at("inputs_fitted").get<bool>());
  model.set_summarizer_id(j.at("summarizer_id").get<std::string>());
  return model;
}

}  // namespace simcal
