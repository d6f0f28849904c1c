#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "simcal/math.hpp"
#include "simcal/mixture.hpp"
#include "simcal/param_space.hpp"
#include "simcal/random.hpp"
#include "simcal/standardizer.hpp"
#include "simcal/trajectory.hpp"

namespace simcal {

enum class ModelKind { MDNN, MDRFF };

inline std::string to_string(ModelKind k) { return k == ModelKind::MDNN ? "MDNN" : "MDRFF"; }

inline ModelKind model_kind_from_string(const std::string& s) {
  if (s == "MDNN") return ModelKind::MDNN;
  if (s == "MDRFF") return ModelKind::MDRFF;
  throw std::invalid_argument("unknown model kind '" + s + "'");
}

enum class Activation { Tanh, Relu };

inline std::string to_string(Activation a) { return a == Activation::Tanh ? "tanh" : "relu"; }

inline Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::Tanh;
  if (s == "relu") return Activation::Relu;
  throw std::invalid_argument("unknown activation '" + s + "'");
}

struct MdnnConfig {
  std::vector<int> hidden_sizes = {128, 128};
  Activation activation = Activation::Tanh;
  int components = 10;
  int input_dim = 0;
  int output_dim = 0;

  void validate() const {
    if (hidden_sizes.empty()) throw std::invalid_argument("MdnnConfig: hidden_sizes empty");
    for (int h : hidden_sizes)
      if (h < 1) throw std::invalid_argument("MdnnConfig: hidden size must be >= 1");
    if (components < 1) throw std::invalid_argument("MdnnConfig: components must be >= 1");
    if (input_dim < 1 || output_dim < 1)
      throw std::invalid_argument("MdnnConfig: input/output dims must be set");
  }
};

struct MdrffConfig {
  int n_features = 512;
  std::optional<double> bandwidth;  // empty: median heuristic fitted before init
  int components = 10;
  int input_dim = 0;
  int output_dim = 0;

  void validate() const {
    if (n_features < 1) throw std::invalid_argument("MdrffConfig: n_features must be >= 1");
    if (bandwidth && !(*bandwidth > 0.0))
      throw std::invalid_argument("MdrffConfig: bandwidth must be positive");
    if (components < 1) throw std::invalid_argument("MdrffConfig: components must be >= 1");
    if (input_dim < 1 || output_dim < 1)
      throw std::invalid_argument("MdrffConfig: input/output dims must be set");
  }
};

enum class InitMode { Scratch, Finetune };

inline std::string to_string(InitMode m) {
  return m == InitMode::Scratch ? "scratch" : "finetune";
}

inline InitMode init_mode_from_string(const std::string& s) {
  if (s == "scratch") return InitMode::Scratch;
  if (s == "finetune") return InitMode::Finetune;
  throw std::invalid_argument("unknown init mode '" + s + "'");
}

struct TrainConfig {
  int batch_size = 256;
  double learning_rate = 1e-3;
  int max_epochs = 500;
  int patience = 20;
  double validation_fraction = 0.1;
  double grad_clip_norm = 10.0;
  InitMode init_mode = InitMode::Scratch;

  void validate() const {
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (!(learning_rate >= 0.0)) throw std::invalid_argument("TrainConfig: bad learning_rate");
    if (max_epochs < 1) throw std::invalid_argument("TrainConfig: max_epochs must be >= 1");
    if (patience < 0) throw std::invalid_argument("TrainConfig: patience must be >= 0");
    if (!(validation_fraction > 0.0 && validation_fraction < 0.5))
      throw std::invalid_argument("TrainConfig: validation_fraction must be in (0, 0.5)");
    if (!(grad_clip_norm > 0.0)) throw std::invalid_argument("TrainConfig: bad grad_clip_norm");
  }
};

/// Training pairs: one summary row per parameter row, all produced by the
/// same summarizer.
struct Dataset {
  Matrix summaries;  // N x F
  Matrix thetas;     // N x D
  std::string summarizer_id;

  int size() const { return static_cast<int>(summaries.rows()); }
};

inline Dataset make_dataset(const std::vector<SummaryVector>& summaries, Matrix thetas) {
  if (summaries.empty()) throw std::invalid_argument("make_dataset: no summaries");
  if (static_cast<Eigen::Index>(summaries.size()) != thetas.rows())
    throw std::invalid_argument("make_dataset: summary/theta count mismatch");
  const int f = summaries.front().size();
  Matrix x(static_cast<Eigen::Index>(summaries.size()), f);
  for (std::size_t i = 0; i < summaries.size(); ++i) {
    if (summaries[i].size() != f || summaries[i].summarizer_id != summaries.front().summarizer_id)
      throw std::invalid_argument("make_dataset: inconsistent summaries");
    x.row(static_cast<Eigen::Index>(i)) = summaries[i].values;
  }
  return Dataset{std::move(x), std::move(thetas), summaries.front().summarizer_id};
}

/// sqrt(2/R) cos(Omega x + b): the Rahimi-Recht feature map whose inner
/// products approximate the RBF kernel exp(-||x-y||^2 / (2 sigma^2)).
inline Vector rff_features(const Eigen::Ref<const Vector>& x,
                           const Eigen::Ref<const Matrix>& omega,
                           const Eigen::Ref<const Vector>& phase) {
  const double scale = std::sqrt(2.0 / static_cast<double>(omega.rows()));
  return scale * ((omega * x + phase).array().cos()).matrix();
}

/// Trainable conditional density q(theta | summary): an MLP or frozen-RFF
/// trunk feeding a linear head that parameterizes a full-covariance
/// Gaussian mixture over the standardized parameter space.
class ConditionalDensityModel {
 public:
  static ConditionalDensityModel mdnn(MdnnConfig cfg, const ParamSpace& space,
                                      RandomStream rng) {
    cfg.validate();
    if (space.size() != cfg.output_dim)
      throw std::invalid_argument("mdnn: output_dim disagrees with parameter space");
    ConditionalDensityModel m;
    m.kind_ = ModelKind::MDNN;
    m.mdnn_cfg_ = std::move(cfg);
    m.input_dim_ = m.mdnn_cfg_.input_dim;
    m.output_dim_ = m.mdnn_cfg_.output_dim;
    m.components_ = m.mdnn_cfg_.components;
    m.standardizer_.set_output_bounds(space);
    m.build_layout();
    m.initialize(rng);
    return m;
  }

  /// MDRFF requires a resolved bandwidth: the Omega draw depends on it.
  static ConditionalDensityModel mdrff(MdrffConfig cfg, const ParamSpace& space,
                                       RandomStream rng) {
    cfg.validate();
    if (!cfg.bandwidth)
      throw std::invalid_argument("mdrff: bandwidth unresolved (fit the median heuristic first)");
    if (space.size() != cfg.output_dim)
      throw std::invalid_argument("mdrff: output_dim disagrees with parameter space");
    ConditionalDensityModel m;
    m.kind_ = ModelKind::MDRFF;
    m.mdrff_cfg_ = std::move(cfg);
    m.input_dim_ = m.mdrff_cfg_.input_dim;
    m.output_dim_ = m.mdrff_cfg_.output_dim;
    m.components_ = m.mdrff_cfg_.components;
    m.standardizer_.set_output_bounds(space);
    m.build_layout();
    m.initialize(rng);
    return m;
  }

  ModelKind kind() const { return kind_; }
  int input_dim() const { return input_dim_; }
  int output_dim() const { return output_dim_; }
  int components() const { return components_; }
  const MdnnConfig& mdnn_config() const { return mdnn_cfg_; }
  const MdrffConfig& mdrff_config() const { return mdrff_cfg_; }

  Standardizer& standardizer() { return standardizer_; }
  const Standardizer& standardizer() const { return standardizer_; }

  const std::string& summarizer_id() const { return summarizer_id_; }
  void set_summarizer_id(std::string id) { summarizer_id_ = std::move(id); }

  Eigen::Index parameter_count() const { return params_.size(); }
  const Vector& parameters() const { return params_; }
  void set_parameters(Vector p) {
    if (p.size() != params_.size())
      throw std::invalid_argument("set_parameters: size mismatch");
    params_ = std::move(p);
  }

  const Matrix& rff_omega() const { return rff_omega_; }
  const Vector& rff_phase() const { return rff_phase_; }
  void set_rff(Matrix omega, Vector phase) {
    rff_omega_ = std::move(omega);
    rff_phase_ = std::move(phase);
  }

  /// Re-draw all trainable parameters (and the frozen RFF map for MDRFF).
  /// Draw order is pinned so a fixed stream reproduces the model exactly.
  void initialize(RandomStream& rng) {
    params_ = Vector::Zero(total_params_);
    if (kind_ == ModelKind::MDNN) {
      RandomStream layer_rng = rng.substream("init/layers");
      int in = input_dim_;
      for (std::size_t l = 0; l < hidden_sizes().size(); ++l) {
        const int out = hidden_sizes()[l];
        auto w = weight(static_cast<int>(l));
        const double limit = std::sqrt(6.0 / (in + out));
        for (int r = 0; r < w.rows(); ++r)
          for (int c = 0; c < w.cols(); ++c) w(r, c) = layer_rng.uniform(-limit, limit);
        // biases stay zero
        in = out;
      }
    } else {
      RandomStream rff_rng = rng.substream("init/rff");
      const double sigma = *mdrff_cfg_.bandwidth;
      rff_omega_.resize(mdrff_cfg_.n_features, input_dim_);
      rff_phase_.resize(mdrff_cfg_.n_features);
      for (int r = 0; r < rff_omega_.rows(); ++r)
        for (int c = 0; c < rff_omega_.cols(); ++c)
          rff_omega_(r, c) = rff_rng.normal() / sigma;
      for (int r = 0; r < rff_phase_.size(); ++r)
        rff_phase_[r] = rff_rng.uniform(0.0, 2.0 * 3.14159265358979323846);
    }
    // Head: zero weights; bias encodes the initial mixture directly.
    // Logits 0 (uniform weights), means U[-0.5, 0.5] over the standardized
    // box, diagonals at sigma ~ 0.5, off-diagonals 0.
    RandomStream head_rng = rng.substream("init/head");
    auto b = head_bias();
    const int K = components_, D = output_dim_;
    const double raw_half = inverse_softplus(0.5 - GaussianMixtureDensity::kDiagFloor);
    for (int k = 0; k < K; ++k)
      for (int d = 0; d < D; ++d) b[K + k * D + d] = head_rng.uniform(-0.5, 0.5);
    for (int k = 0; k < K; ++k)
      for (int d = 0; d < D; ++d) b[K + K * D + k * D + d] = raw_half;
  }

  /// Trunk features for one standardized input.
  Vector trunk_features(const Eigen::Ref<const Vector>& x_std) const {
    if (kind_ == ModelKind::MDRFF) return rff_features(x_std, rff_omega_, rff_phase_);
    Vector h = x_std;
    for (std::size_t l = 0; l < hidden_sizes().size(); ++l) {
      h = (weight(static_cast<int>(l)) * h + bias(static_cast<int>(l))).eval();
      apply_activation(h);
    }
    return h;
  }

  /// Mixture over the standardized parameter space for one standardized
  /// input vector.
  GaussianMixtureDensity forward_std(const Eigen::Ref<const Vector>& x_std) const {
    const Vector z = head_weight() * trunk_features(x_std) + head_bias();
    return decode(z);
  }

  /// Full forward pass: raw summary in, mixture over raw parameter space
  /// out (means and Cholesky factors rescaled through the output affine
  /// map, which also accounts for the log-Jacobian in logpdf).
  GaussianMixtureDensity forward(const SummaryVector& summary) const {
    if (summary.size() != input_dim_)
      throw std::invalid_argument("forward: summary length != input_dim");
    const Vector x_std = standardizer_.standardize_input(summary.values);
    const GaussianMixtureDensity std_mix = forward_std(x_std);
    const Vector& scale = standardizer_.output_scale();
    const Vector& center = standardizer_.output_center();
    Matrix means(components_, output_dim_);
    std::vector<Matrix> chols;
    chols.reserve(static_cast<std::size_t>(components_));
    for (int k = 0; k < components_; ++k) {
      means.row(k) =
          (center + std_mix.means().row(k).transpose().cwiseProduct(scale)).transpose();
      chols.push_back(scale.asDiagonal() * std_mix.chol_factors()[static_cast<std::size_t>(k)]);
    }
    return GaussianMixtureDensity(std_mix.weights(), std::move(means), std::move(chols));
  }

  /// -(1/B) sum_i log q(theta_i | x_i), evaluated in standardized space.
  double nll_loss(const Eigen::Ref<const Matrix>& summaries,
                  const Eigen::Ref<const Matrix>& thetas) const {
    if (summaries.rows() < 1) throw std::invalid_argument("nll_loss: empty batch");
    if (summaries.rows() != thetas.rows())
      throw std::invalid_argument("nll_loss: batch size mismatch");
    const Matrix x = standardizer_.standardize_inputs(summaries);
    const Matrix y = standardizer_.thetas_to_std(thetas);
    return loss_std(x, y, nullptr);
  }

  /// Loss and gradient on an already-standardized batch. The gradient has
  /// the flat parameter layout; pass nullptr to skip the backward pass.
  double loss_std(const Eigen::Ref<const Matrix>& x_std,
                  const Eigen::Ref<const Matrix>& y_std, Vector* grad) const {
    const int batch = static_cast<int>(x_std.rows());
    // trunk forward with caches
    std::vector<Matrix> acts;  // acts[0] = input, acts[l+1] = activation of layer l
    Matrix h_last;
    if (kind_ == ModelKind::MDRFF) {
      const double scale = std::sqrt(2.0 / static_cast<double>(rff_omega_.rows()));
      h_last = scale * ((x_std * rff_omega_.transpose()).rowwise() + rff_phase_.transpose())
                           .array()
                           .cos()
                           .matrix();
    } else {
      acts.push_back(x_std);
      for (std::size_t l = 0; l < hidden_sizes().size(); ++l) {
        Matrix z = (acts.back() * weight(static_cast<int>(l)).transpose()).rowwise() +
                   bias(static_cast<int>(l)).transpose();
        apply_activation(z);
        acts.push_back(std::move(z));
      }
      h_last = acts.back();
    }
    Matrix z_out = (h_last * head_weight().transpose()).rowwise() + head_bias().transpose();

    Matrix dz;
    if (grad) dz.setZero(batch, head_dim());
    double total = 0.0;
    Vector dz_row(head_dim());
    for (int b = 0; b < batch; ++b) {
      const double ll = row_loglik(z_out.row(b).transpose(), y_std.row(b).transpose(),
                                   grad ? &dz_row : nullptr);
      if (!std::isfinite(ll))
        throw std::runtime_error("nll_loss: non-finite log-likelihood at batch index " +
                                 std::to_string(b));
      total += ll;
      if (grad) dz.row(b) = dz_row;
    }
    const double loss = -total / batch;
    if (!grad) return loss;

    grad->setZero(total_params_);
    dz *= -1.0 / batch;
    // head
    {
      auto gw = grad_block(*grad, head_weight_block_);
      auto gb = grad_vec(*grad, head_bias_block_);
      gw = dz.transpose() * h_last;
      gb = dz.colwise().sum().transpose();
    }
    if (kind_ == ModelKind::MDNN) {
      Matrix dh = dz * head_weight();
      for (int l = static_cast<int>(hidden_sizes().size()) - 1; l >= 0; --l) {
        const Matrix& act = acts[static_cast<std::size_t>(l + 1)];
        Matrix dzl;
        if (mdnn_cfg_.activation == Activation::Tanh) {
          dzl = dh.array() * (1.0 - act.array().square());
        } else {
          dzl = dh.array() * (act.array() > 0.0).cast<double>();
        }
        auto gw = grad_block(*grad, weight_blocks_[static_cast<std::size_t>(l)]);
        auto gb = grad_vec(*grad, bias_blocks_[static_cast<std::size_t>(l)]);
        gw = dzl.transpose() * acts[static_cast<std::size_t>(l)];
        gb = dzl.colwise().sum().transpose();
        if (l > 0) dh = dzl * weight(l);
      }
    }
    return loss;
  }

  int head_dim() const {
    const int K = components_, D = output_dim_;
    return K + K * D + K * D + K * D * (D - 1) / 2;
  }

 private:
  struct Block {
    Eigen::Index offset = 0;
    Eigen::Index rows = 0;
    Eigen::Index cols = 0;
    Eigen::Index size() const { return rows * cols; }
  };

  const std::vector<int>& hidden_sizes() const { return mdnn_cfg_.hidden_sizes; }

  void build_layout() {
    weight_blocks_.clear();
    bias_blocks_.clear();
    Eigen::Index at = 0;
    int trunk_out;
    if (kind_ == ModelKind::MDNN) {
      int in = input_dim_;
      for (int h : hidden_sizes()) {
        weight_blocks_.push_back({at, h, in});
        at += static_cast<Eigen::Index>(h) * in;
        bias_blocks_.push_back({at, h, 1});
        at += h;
        in = h;
      }
      trunk_out = hidden_sizes().back();
    } else {
      trunk_out = mdrff_cfg_.n_features;
    }
    head_weight_block_ = {at, head_dim(), trunk_out};
    at += head_weight_block_.size();
    head_bias_block_ = {at, head_dim(), 1};
    at += head_bias_block_.size();
    total_params_ = at;
  }

  Eigen::Map<Matrix> block_map(Vector& v, const Block& b) const {
    return Eigen::Map<Matrix>(v.data() + b.offset, b.rows, b.cols);
  }
  Eigen::Map<const Matrix> block_map(const Vector& v, const Block& b) const {
    return Eigen::Map<const Matrix>(v.data() + b.offset, b.rows, b.cols);
  }
  static Eigen::Map<Matrix> grad_block(Vector& g, const Block& b) {
    return Eigen::Map<Matrix>(g.data() + b.offset, b.rows, b.cols);
  }
  static Eigen::Map<Vector> grad_vec(Vector& g, const Block& b) {
    return Eigen::Map<Vector>(g.data() + b.offset, b.size());
  }

  Eigen::Map<Matrix> weight(int l) {
    return block_map(params_, weight_blocks_[static_cast<std::size_t>(l)]);
  }
  Eigen::Map<const Matrix> weight(int l) const {
    return block_map(params_, weight_blocks_[static_cast<std::size_t>(l)]);
  }
  Eigen::Map<const Vector> bias(int l) const {
    const Block& b = bias_blocks_[static_cast<std::size_t>(l)];
    return Eigen::Map<const Vector>(params_.data() + b.offset, b.size());
  }
  Eigen::Map<const Matrix> head_weight() const { return block_map(params_, head_weight_block_); }
  Eigen::Map<const Vector> head_bias() const {
    return Eigen::Map<const Vector>(params_.data() + head_bias_block_.offset,
                                    head_bias_block_.size());
  }
  Eigen::Map<Vector> head_bias() {
    return Eigen::Map<Vector>(params_.data() + head_bias_block_.offset,
                              head_bias_block_.size());
  }

  void apply_activation(Vector& v) const {
    if (kind_ == ModelKind::MDRFF) return;
    if (mdnn_cfg_.activation == Activation::Tanh)
      v = v.array().tanh();
    else
      v = v.cwiseMax(0.0);
  }
  void apply_activation(Matrix& m) const {
    if (mdnn_cfg_.activation == Activation::Tanh)
      m = m.array().tanh();
    else
      m = m.cwiseMax(0.0);
  }

  /// Decode one head output into a mixture over standardized space.
  GaussianMixtureDensity decode(const Eigen::Ref<const Vector>& z) const {
    const int K = components_, D = output_dim_;
    Vector logits = z.head(K);
    const double lse = log_sum_exp(std::span<const double>(logits.data(),
                                                           static_cast<std::size_t>(K)));
    Vector w = (logits.array() - lse).exp().matrix();
    w /= w.sum();  // renormalize away fp residue so the simplex check passes
    Matrix means(K, D);
    std::vector<Matrix> chols;
    chols.reserve(static_cast<std::size_t>(K));
    int off_at = K + 2 * K * D;
    for (int k = 0; k < K; ++k) {
      means.row(k) = z.segment(K + k * D, D).transpose();
      Matrix L = Matrix::Zero(D, D);
      for (int d = 0; d < D; ++d)
        L(d, d) = softplus(z[K + K * D + k * D + d]) + GaussianMixtureDensity::kDiagFloor;
      for (int i = 1; i < D; ++i)
        for (int j = 0; j < i; ++j) L(i, j) = z[off_at++];
      chols.push_back(std::move(L));
    }
    return GaussianMixtureDensity(std::move(w), std::move(means), std::move(chols));
  }

  /// Log-likelihood of one target under the mixture decoded from z, plus
  /// (optionally) its gradient with respect to z.
  double row_loglik(const Eigen::Ref<const Vector>& z, const Eigen::Ref<const Vector>& y,
                    Vector* dz) const {
    const int K = components_, D = output_dim_;
    const int off_base = K + 2 * K * D;
    const int off_per_k = D * (D - 1) / 2;

    std::vector<double> comp_ll(static_cast<std::size_t>(K));
    Matrix solved(K, D);  // y_k = L_k^{-1} (y - mu_k)
    std::vector<Matrix> chols(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k) {
      Matrix L = Matrix::Zero(D, D);
      for (int d = 0; d < D; ++d)
        L(d, d) = softplus(z[K + K * D + k * D + d]) + GaussianMixtureDensity::kDiagFloor;
      int at = off_base + k * off_per_k;
      for (int i = 1; i < D; ++i)
        for (int j = 0; j < i; ++j) L(i, j) = z[at++];
      Vector delta = y - z.segment(K + k * D, D);
      Vector yk = L.triangularView<Eigen::Lower>().solve(delta);
      double log_det = 0.0;
      for (int d = 0; d < D; ++d) log_det += std::log(L(d, d));
      comp_ll[static_cast<std::size_t>(k)] = -0.5 * yk.squaredNorm() - log_det -
                                             0.5 * D * kLogTwoPi;
      solved.row(k) = yk.transpose();
      chols[static_cast<std::size_t>(k)] = std::move(L);
    }

    // ll = lse_k(logit_k + ll_k) - lse_k(logit_k)
    std::vector<double> scored(static_cast<std::size_t>(K));
    for (int k = 0; k < K; ++k)
      scored[static_cast<std::size_t>(k)] = z[k] + comp_ll[static_cast<std::size_t>(k)];
    const double lse_scored = log_sum_exp(scored);
    const double lse_logits = log_sum_exp(std::span<const double>(z.data(),
                                                                  static_cast<std::size_t>(K)));
    const double ll = lse_scored - lse_logits;
    if (!dz) return ll;

    dz->setZero(head_dim());
    for (int k = 0; k < K; ++k) {
      const double gamma =
          std::isfinite(lse_scored)
              ? std::exp(scored[static_cast<std::size_t>(k)] - lse_scored)
              : 0.0;
      const double wk = std::exp(z[k] - lse_logits);
      (*dz)[k] = gamma - wk;
      if (gamma <= 0.0) continue;  // avoid 0 * inf on fully suppressed components
      const Matrix& L = chols[static_cast<std::size_t>(k)];
      Vector yk = solved.row(k).transpose();
      Vector uk = L.transpose().triangularView<Eigen::Upper>().solve(yk);
      dz->segment(K + k * D, D) = gamma * uk;
      // dL = gamma * (u y^T - diag(1/L_dd)), chained through softplus on the diagonal
      for (int d = 0; d < D; ++d) {
        const double g_dd = gamma * (uk[d] * yk[d] - 1.0 / L(d, d));
        (*dz)[K + K * D + k * D + d] = g_dd * softplus_derivative(z[K + K * D + k * D + d]);
      }
      int at = off_base + k * off_per_k;
      for (int i = 1; i < D; ++i)
        for (int j = 0; j < i; ++j) (*dz)[at++] = gamma * uk[i] * yk[j];
    }
    return ll;
  }

  ModelKind kind_ = ModelKind::MDNN;
  MdnnConfig mdnn_cfg_;
  MdrffConfig mdrff_cfg_;
  int input_dim_ = 0;
  int output_dim_ = 0;
  int components_ = 0;

  std::vector<Block> weight_blocks_;
  std::vector<Block> bias_blocks_;
  Block head_weight_block_;
  Block head_bias_block_;
  Eigen::Index total_params_ = 0;

  Vector params_;
  Matrix rff_omega_;  // frozen
  Vector rff_phase_;  // frozen
  Standardizer standardizer_;
  std::string summarizer_id_;
};

/// Batch NLL on raw (summary, theta) pairs.
inline double nll_loss(const ConditionalDensityModel& model, const Dataset& batch) {
  return model.nll_loss(batch.summaries, batch.thetas);
}

struct TrainReport {
  std::vector<double> train_nll;  // per epoch, mean over examples
  std::vector<double> val_nll;    // per epoch
  int best_epoch = -1;
  double best_val_nll = std::numeric_limits<double>::infinity();
  int epochs_run = 0;
};

namespace detail {

inline void fisher_yates(std::vector<int>& idx, RandomStream& rng) {
  for (std::size_t i = idx.size(); i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng.uniform_index(i));
    std::swap(idx[i - 1], idx[j]);
  }
}

}  // namespace detail

/// Bandwidth for the MDRFF trunk: median pairwise distance among up to
/// 1000 training summaries.
inline double median_heuristic_bandwidth(const Eigen::Ref<const Matrix>& summaries,
                                         int max_points = 1000) {
  const int n = std::min<int>(static_cast<int>(summaries.rows()), max_points);
  if (n < 2) return 1.0;
  std::vector<double> dists;
  dists.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      dists.push_back((summaries.row(i) - summaries.row(j)).norm());
  std::nth_element(dists.begin(), dists.begin() + static_cast<std::ptrdiff_t>(dists.size() / 2),
                   dists.end());
  const double med = dists[dists.size() / 2];
  return med > 0.0 ? med : 1.0;
}

/// Mini-batch Adam on the NLL with gradient clipping and early stopping on
/// validation NLL; returns the best-validation snapshot in `model`.
/// Single-threaded and fully determined by (rng, data, config).
inline TrainReport train(ConditionalDensityModel& model, const Dataset& data,
                         const TrainConfig& cfg, RandomStream rng) {
  cfg.validate();
  const int n = data.size();
  if (n < 10 * model.components())
    throw std::invalid_argument("train: need at least 10*K examples, got " +
                                std::to_string(n));
  if (data.summaries.cols() != model.input_dim() || data.thetas.cols() != model.output_dim())
    throw std::invalid_argument("train: dataset shape does not match model");

  if (cfg.init_mode == InitMode::Scratch) {
    RandomStream init_rng = rng.substream("init");
    model.initialize(init_rng);
  } else if (!model.standardizer().inputs_fitted()) {
    throw std::runtime_error("train: finetune requires an already-fitted standardizer");
  }
  model.set_summarizer_id(data.summarizer_id);

  std::vector<int> perm(static_cast<std::size_t>(n));
  std::iota(perm.begin(), perm.end(), 0);
  RandomStream split_rng = rng.substream("split");
  detail::fisher_yates(perm, split_rng);
  const int n_val = std::max(1, static_cast<int>(std::lround(n * cfg.validation_fraction)));
  const int n_train = n - n_val;
  if (n_train < 1) throw std::invalid_argument("train: validation split leaves no training data");
  std::vector<int> val_idx(perm.begin(), perm.begin() + n_val);
  std::vector<int> train_idx(perm.begin() + n_val, perm.end());

  if (cfg.init_mode == InitMode::Scratch) {
    Matrix train_summaries(n_train, data.summaries.cols());
    for (int i = 0; i < n_train; ++i)
      train_summaries.row(i) = data.summaries.row(train_idx[static_cast<std::size_t>(i)]);
    model.standardizer().fit_inputs(train_summaries);
  }

  const Matrix x_all = model.standardizer().standardize_inputs(data.summaries);
  const Matrix y_all = model.standardizer().thetas_to_std(data.thetas);
  auto gather = [&](const std::vector<int>& idx, int from, int count, const Matrix& src) {
    Matrix out(count, src.cols());
    for (int i = 0; i < count; ++i)
      out.row(i) = src.row(idx[static_cast<std::size_t>(from + i)]);
    return out;
  };
  const Matrix x_val = gather(val_idx, 0, n_val, x_all);
  const Matrix y_val = gather(val_idx, 0, n_val, y_all);

  // Adam
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  Vector m = Vector::Zero(model.parameter_count());
  Vector v = Vector::Zero(model.parameter_count());
  long step_count = 0;

  TrainReport report;
  Vector best_params = model.parameters();
  Vector grad(model.parameter_count());

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    RandomStream epoch_rng = rng.substream("epoch/" + std::to_string(epoch));
    detail::fisher_yates(train_idx, epoch_rng);
    double epoch_loss_sum = 0.0;
    for (int start = 0; start < n_train; start += cfg.batch_size) {
      const int count = std::min(cfg.batch_size, n_train - start);
      const Matrix xb = gather(train_idx, start, count, x_all);
      const Matrix yb = gather(train_idx, start, count, y_all);
      double loss;
      try {
        loss = model.loss_std(xb, yb, &grad);
      } catch (const std::runtime_error& e) {
        throw std::runtime_error("train: epoch " + std::to_string(epoch) + ": " + e.what());
      }
      epoch_loss_sum += loss * count;
      const double gnorm = grad.norm();
      if (gnorm > cfg.grad_clip_norm) grad *= cfg.grad_clip_norm / gnorm;
      ++step_count;
      m = beta1 * m + (1.0 - beta1) * grad;
      v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
      const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
      const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
      Vector update =
          (m / bc1).cwiseQuotient(((v / bc2).cwiseSqrt().array() + eps).matrix());
      model.set_parameters(model.parameters() - cfg.learning_rate * update);
    }
    report.train_nll.push_back(epoch_loss_sum / n_train);
    const double val = model.loss_std(x_val, y_val, nullptr);
    report.val_nll.push_back(val);
    report.epochs_run = epoch + 1;
    if (val < report.best_val_nll) {
      report.best_val_nll = val;
      report.best_epoch = epoch;
      best_params = model.parameters();
    } else if (epoch - report.best_epoch > cfg.patience) {
      break;
    }
  }
  model.set_parameters(std::move(best_params));
  return report;
}

struct GradCheckReport {
  double max_rel_error = 0.0;
  int checked = 0;
};

/// Analytic gradient vs central finite differences (h = 1e-5) on up to 100
/// randomly chosen trainable parameters. Relative error per parameter:
/// |g_a - g_fd| / max(1e-8, |g_a| + |g_fd|).
inline GradCheckReport grad_check(ConditionalDensityModel& model, const Dataset& batch,
                                  RandomStream rng) {
  const Matrix x = model.standardizer().standardize_inputs(batch.summaries);
  const Matrix y = model.standardizer().thetas_to_std(batch.thetas);
  Vector analytic(model.parameter_count());
  model.loss_std(x, y, &analytic);

  const Eigen::Index p = model.parameter_count();
  const int n_checks = static_cast<int>(std::min<Eigen::Index>(100, p));
  std::vector<Eigen::Index> picks;
  picks.reserve(static_cast<std::size_t>(n_checks));
  for (int i = 0; i < n_checks; ++i)
    picks.push_back(static_cast<Eigen::Index>(rng.uniform_index(static_cast<std::uint64_t>(p))));

  const double h = 1e-5;
  Vector params = model.parameters();
  GradCheckReport report;
  report.checked = n_checks;
  for (Eigen::Index idx : picks) {
    Vector bumped = params;
    bumped[idx] = params[idx] + h;
    model.set_parameters(bumped);
    const double plus = model.loss_std(x, y, nullptr);
    bumped[idx] = params[idx] - h;
    model.set_parameters(bumped);
    const double minus = model.loss_std(x, y, nullptr);
    const double fd = (plus - minus) / (2.0 * h);
    const double rel = std::abs(analytic[idx] - fd) /
                       std::max(1e-8, std::abs(analytic[idx]) + std::abs(fd));
    report.max_rel_error = std::max(report.max_rel_error, rel);
  }
  model.set_parameters(params);
  return report;
}

}  // namespace simcal
