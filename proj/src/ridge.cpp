#include "ltv/ridge.hpp"

#include <algorithm>
#include <cmath>

#include "ltv/error.hpp"

namespace ltv::baselines {

namespace {

// In-place Cholesky solve of the SPD system A x = b (A is p x p row-major).
std::vector<double> cholesky_solve(std::vector<double> A, std::vector<double> b, std::size_t p) {
  double scale = 0.0;
  for (std::size_t i = 0; i < p; ++i) scale = std::max(scale, std::abs(A[i * p + i]));
  for (std::size_t j = 0; j < p; ++j) {
    double d = A[j * p + j];
    for (std::size_t k = 0; k < j; ++k) d -= A[j * p + k] * A[j * p + k];
    if (!(d > 1e-12 * std::max(scale, 1e-300))) {
      throw NumericError("ridge normal equations are singular (collinear features); use a penalty > 0");
    }
    const double l = std::sqrt(d);
    A[j * p + j] = l;
    for (std::size_t i = j + 1; i < p; ++i) {
      double s = A[i * p + j];
      for (std::size_t k = 0; k < j; ++k) s -= A[i * p + k] * A[j * p + k];
      A[i * p + j] = s / l;
    }
  }
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t k = 0; k < i; ++k) b[i] -= A[i * p + k] * b[k];
    b[i] /= A[i * p + i];
  }
  for (std::size_t i = p; i-- > 0;) {
    for (std::size_t k = i + 1; k < p; ++k) b[i] -= A[k * p + i] * b[k];
    b[i] /= A[i * p + i];
  }
  return b;
}

}  // namespace

RidgeFit ridge_fit(const Matrix& X, std::span<const double> Y, std::span<const std::uint8_t> mask,
                   std::size_t K, double penalty) {
  if (!(penalty >= 0.0)) throw UsageError("ridge penalty must be >= 0");
  const std::size_t n = X.rows(), p = X.cols();
  if (Y.size() != n * K || mask.size() != n * K) throw ShapeError("ridge targets do not match " + X.shape_string());
  RidgeFit fit;
  fit.penalty = penalty;
  fit.intercept.assign(K, 0.0);
  fit.coefficients = Matrix(K, p, 0.0);
  for (std::size_t j = 0; j < K; ++j) {
    std::vector<double> xbar(p, 0.0);
    double ybar = 0.0;
    std::size_t count = 0;
    for (std::size_t r = 0; r < n; ++r) {
      if (!mask[r * K + j]) continue;
      for (std::size_t c = 0; c < p; ++c) xbar[c] += X(r, c);
      ybar += Y[r * K + j];
      ++count;
    }
    if (count == 0) throw UsageError("ridge target column " + std::to_string(j) + " has no unmasked rows");
    for (auto& v : xbar) v /= static_cast<double>(count);
    ybar /= static_cast<double>(count);
    std::vector<double> A(p * p, 0.0), b(p, 0.0), xc(p);
    for (std::size_t r = 0; r < n; ++r) {
      if (!mask[r * K + j]) continue;
      for (std::size_t c = 0; c < p; ++c) xc[c] = X(r, c) - xbar[c];
      const double yc = Y[r * K + j] - ybar;
      for (std::size_t a = 0; a < p; ++a) {
        b[a] += xc[a] * yc;
        for (std::size_t c = 0; c <= a; ++c) A[a * p + c] += xc[a] * xc[c];
      }
    }
    for (std::size_t a = 0; a < p; ++a) {
      for (std::size_t c = 0; c < a; ++c) A[c * p + a] = A[a * p + c];
      A[a * p + a] += penalty;
    }
    const auto beta = p ? cholesky_solve(std::move(A), std::move(b), p) : std::vector<double>{};
    double icpt = ybar;
    for (std::size_t c = 0; c < p; ++c) {
      fit.coefficients(j, c) = beta[c];
      icpt -= beta[c] * xbar[c];
    }
    fit.intercept[j] = icpt;
  }
  return fit;
}

Vector ridge_predict(const RidgeFit& fit, std::span<const double> x) {
  return affine(fit.coefficients, fit.intercept, x);
}

std::vector<std::string> lag_feature_names(const LagSpec& spec) {
  std::vector<std::string> names;
  for (auto l : spec.lags) names.push_back("sum_last_" + std::to_string(l));
  names.insert(names.end(), {"week_sin", "week_cos", "age"});
  return names;
}

std::vector<double> lag_features(const pipeline::PreparedDataset& data, const pipeline::PreparedUser& user,
                                 const pipeline::LabeledStep& step, const LagSpec& spec) {
  if (step.index >= user.history.size()) throw ShapeError("step beyond the user's history");
  std::vector<double> f;
  f.reserve(spec.lags.size() + 3);
  for (auto l : spec.lags) {
    double s = 0.0;
    const std::size_t from = step.index + 1 >= l ? step.index + 1 - l : 0;
    for (std::size_t t = from; t <= step.index; ++t) s += user.history[t];
    f.push_back(spec.log_scale ? std::log1p(s) : s);
  }
  const Date day =
      data.anchor + static_cast<std::int32_t>(step.calendar * static_cast<std::int64_t>(data.period_days));
  const auto cal = pipeline::calendar_features(day);
  f.push_back(cal.week_sin);
  f.push_back(cal.week_cos);
  f.push_back(static_cast<double>(step.index));
  return f;
}

RidgeLagModel ridge_lag_fit(const pipeline::PreparedDataset& data, double penalty, const LagSpec& spec) {
  if (spec.lags.empty()) throw UsageError("at least one lag window is required");
  const std::size_t K = data.horizons.size();
  const auto names = lag_feature_names(spec);
  std::vector<double> rows, Y;
  std::vector<std::uint8_t> mask;
  std::size_t n = 0;
  auto add_row = [&](const pipeline::PreparedUser& u, const pipeline::LabeledStep& s) {
    if (std::none_of(s.mask.begin(), s.mask.end(), [](auto m) { return m != 0; })) return;
    const auto f = lag_features(data, u, s, spec);
    rows.insert(rows.end(), f.begin(), f.end());
    for (double y : s.targets) Y.push_back(spec.log_scale ? std::log1p(y) : y);
    mask.insert(mask.end(), s.mask.begin(), s.mask.end());
    ++n;
  };
  for (const auto* u : data.split(pipeline::Split::train)) {
    if (data.mode == pipeline::Mode::rolling) {
      // every history week, not only the subsampled steps: the lag features
      // never see the subsampling and the evaluation step is an ordinary week
      std::vector<std::size_t> all(u->history.size());
      for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
      const auto labels = pipeline::build_rolling_labels(u->history, all, data.horizons, u->history.size());
      for (std::size_t i = 0; i < all.size(); ++i) {
        pipeline::LabeledStep s;
        s.index = i;
        s.calendar = u->first_period + static_cast<std::int64_t>(i);
        s.targets.assign(labels.targets.begin() + static_cast<std::ptrdiff_t>(i * K),
                         labels.targets.begin() + static_cast<std::ptrdiff_t>((i + 1) * K));
        s.mask.assign(labels.mask.begin() + static_cast<std::ptrdiff_t>(i * K),
                      labels.mask.begin() + static_cast<std::ptrdiff_t>((i + 1) * K));
        add_row(*u, s);
      }
    } else {
      for (const auto& s : u->steps) add_row(*u, s);
    }
  }
  if (n == 0) throw UsageError("no labelled training steps for the ridge baseline");
  RidgeLagModel model;
  model.lags = spec;
  model.feature_names = names;
  model.fit = ridge_fit(Matrix(n, names.size(), std::move(rows)), Y, mask, K, penalty);
  return model;
}

std::vector<double> ridge_lag_predict(const RidgeLagModel& model, const pipeline::PreparedDataset& data,
                                      const pipeline::PreparedUser& user, const pipeline::LabeledStep& step) {
  auto out = ridge_predict(model.fit, lag_features(data, user, step, model.lags));
  for (auto& v : out) v = std::max(model.lags.log_scale ? std::expm1(v) : v, 0.0);
  return out;
}

nlohmann::json RidgeLagModel::to_json() const {
  return {{"format", "ltv-ridge-lag"},
          {"version", 1},
          {"lags", lags.lags},
          {"log_scale", lags.log_scale},
          {"features", feature_names},
          {"penalty", fit.penalty},
          {"intercept", fit.intercept},
          {"rows", fit.coefficients.rows()},
          {"coefficients", std::vector<double>(fit.coefficients.values().begin(), fit.coefficients.values().end())}};
}

RidgeLagModel RidgeLagModel::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "ltv-ridge-lag" || j.value("version", 0) != 1) {
    throw DataError("not an ltv-ridge-lag v1 document");
  }
  RidgeLagModel m;
  try {
    j.at("lags").get_to(m.lags.lags);
    j.at("log_scale").get_to(m.lags.log_scale);
    j.at("features").get_to(m.feature_names);
    j.at("penalty").get_to(m.fit.penalty);
    j.at("intercept").get_to(m.fit.intercept);
    const auto rows = j.at("rows").get<std::size_t>();
    auto values = j.at("coefficients").get<std::vector<double>>();
    if (values.size() != rows * m.feature_names.size() || m.fit.intercept.size() != rows) {
      throw DataError("ridge coefficient arrays have inconsistent sizes");
    }
    m.fit.coefficients = Matrix(rows, m.feature_names.size(), std::move(values));
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed ltv-ridge-lag document: ") + e.what());
  }
  return m;
}

}  // namespace ltv::baselines
