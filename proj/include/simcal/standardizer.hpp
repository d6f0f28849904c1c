#pragma once

#include <cmath>
#include <stdexcept>

#include "simcal/math.hpp"
#include "simcal/param_space.hpp"

namespace simcal {

/// Input/output conditioning for the density model. Summaries are z-scored
/// with training-set statistics; parameters are mapped affinely from their
/// prior box [low, high] onto [-1, 1]. Both maps are frozen once fitted so
/// fine-tuning cannot silently shift the weight semantics.
class Standardizer {
 public:
  static constexpr double kStdFloor = 1e-8;

  Standardizer() = default;

  explicit Standardizer(const ParamSpace& space) { set_output_bounds(space); }

  void set_output_bounds(const ParamSpace& space) {
    const int d = space.size();
    out_center_.resize(d);
    out_scale_.resize(d);
    for (int i = 0; i < d; ++i) {
      out_center_[i] = 0.5 * (space.dim(i).high + space.dim(i).low);
      out_scale_[i] = 0.5 * (space.dim(i).high - space.dim(i).low);
    }
  }

  /// Column mean/std over the training summaries; std floored at 1e-8.
  void fit_inputs(const Eigen::Ref<const Matrix>& summaries) {
    if (summaries.rows() < 1)
      throw std::invalid_argument("Standardizer::fit_inputs: empty training set");
    in_mean_ = summaries.colwise().mean();
    Vector var = (summaries.rowwise() - in_mean_.transpose())
                     .array()
                     .square()
                     .colwise()
                     .sum()
                     .transpose() /
                 static_cast<double>(summaries.rows());
    in_std_ = var.array().sqrt().max(kStdFloor);
    inputs_fitted_ = true;
  }

  bool inputs_fitted() const { return inputs_fitted_; }
  bool outputs_set() const { return out_scale_.size() > 0; }

  Vector standardize_input(const Eigen::Ref<const Vector>& x) const {
    require_inputs();
    return (x - in_mean_).cwiseQuotient(in_std_);
  }

  Matrix standardize_inputs(const Eigen::Ref<const Matrix>& x) const {
    require_inputs();
    return (x.rowwise() - in_mean_.transpose()).array().rowwise() /
           in_std_.transpose().array();
  }

  Vector theta_to_std(const Eigen::Ref<const Vector>& theta) const {
    require_outputs();
    return (theta - out_center_).cwiseQuotient(out_scale_);
  }

  Matrix thetas_to_std(const Eigen::Ref<const Matrix>& thetas) const {
    require_outputs();
    return (thetas.rowwise() - out_center_.transpose()).array().rowwise() /
           out_scale_.transpose().array();
  }

  Vector std_to_theta(const Eigen::Ref<const Vector>& z) const {
    require_outputs();
    return out_center_ + z.cwiseProduct(out_scale_);
  }

  /// log |d theta_std / d theta| = sum_d log(1 / scale_d); the additive
  /// constant between raw-space and standardized-space log densities.
  double output_log_jacobian() const {
    require_outputs();
    return -out_scale_.array().log().sum();
  }

  const Vector& input_mean() const { return in_mean_; }
  const Vector& input_std() const { return in_std_; }
  const Vector& output_center() const { return out_center_; }
  const Vector& output_scale() const { return out_scale_; }

  void restore(Vector in_mean, Vector in_std, Vector out_center, Vector out_scale,
               bool inputs_fitted) {
    in_mean_ = std::move(in_mean);
    in_std_ = std::move(in_std);
    out_center_ = std::move(out_center);
    out_scale_ = std::move(out_scale);
    inputs_fitted_ = inputs_fitted;
  }

 private:
  void require_inputs() const {
    if (!inputs_fitted_)
      throw std::runtime_error("Standardizer: input statistics not fitted");
  }
  void require_outputs() const {
    if (out_scale_.size() == 0)
      throw std::runtime_error("Standardizer: output bounds not set");
  }

  Vector in_mean_, in_std_;
  Vector out_center_, out_scale_;
  bool inputs_fitted_ = false;
};

}  // namespace simcal
