#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "ltv/numeric.hpp"
#include "ltv/pipeline.hpp"

namespace ltv::baselines {

// One ridge solution per target column; the intercept is not penalized.
struct RidgeFit {
  std::vector<double> intercept;  // K
  Matrix coefficients;            // K x p
  double penalty = 0.0;
  bool operator==(const RidgeFit&) const = default;
};

// X is n x p, Y and mask are n x K row-major; rows with mask 0 are skipped
// for that column. Singular normal equations -> NumericError.
RidgeFit ridge_fit(const Matrix& X, std::span<const double> Y, std::span<const std::uint8_t> mask,
                   std::size_t K, double penalty);
Vector ridge_predict(const RidgeFit& fit, std::span<const double> x);

struct LagSpec {
  std::vector<std::size_t> lags = {1, 2, 4, 8, 13, 26};  // trailing windows, in periods
  // log1p on lag sums and targets, predictions mapped back with expm1
  bool log_scale = true;
  bool operator==(const LagSpec&) const = default;
};

std::vector<std::string> lag_feature_names(const LagSpec& spec);
// Trailing sums of the unsubsampled history ending at the step, the step's
// week-of-year sine/cosine and its age.
std::vector<double> lag_features(const pipeline::PreparedDataset& data, const pipeline::PreparedUser& user,
                                 const pipeline::LabeledStep& step, const LagSpec& spec);

struct RidgeLagModel {
  LagSpec lags;
  RidgeFit fit;
  std::vector<std::string> feature_names;
  nlohmann::json to_json() const;
  static RidgeLagModel from_json(const nlohmann::json& j);
  bool operator==(const RidgeLagModel&) const = default;
};

// Fits on every kept training step with its targets.
RidgeLagModel ridge_lag_fit(const pipeline::PreparedDataset& data, double penalty, const LagSpec& spec = {});
// K forecasts clamped at zero.
std::vector<double> ridge_lag_predict(const RidgeLagModel& model, const pipeline::PreparedDataset& data,
                                      const pipeline::PreparedUser& user, const pipeline::LabeledStep& step);

}  // namespace ltv::baselines
