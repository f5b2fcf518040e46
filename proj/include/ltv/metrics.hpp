#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

namespace ltv::metrics {

double rmse(std::span<const double> actual, std::span<const double> forecast);
// Pairs with A = F = 0 contribute 0.
double smape(std::span<const double> actual, std::span<const double> forecast);
// (2/N) sum |A - F| / (max(A, floor) + F); forecasts must be >= 0.
double asmape(std::span<const double> actual, std::span<const double> forecast, double floor);

struct Mdape {
  double value = 0.0;
  std::size_t excluded = 0;  // pairs with A = 0
};
Mdape mdape(std::span<const double> actual, std::span<const double> forecast);

struct HorizonMetrics {
  std::string horizon;
  std::size_t n = 0;
  double rmse = 0.0, smape = 0.0, asmape = 0.0;
  std::optional<double> mdape;  // empty when every actual is zero
  std::size_t mdape_excluded = 0;
  std::vector<std::string> best;  // metrics on which this model is lowest (ties included)
  bool operator==(const HorizonMetrics&) const = default;
};

struct ModelMetrics {
  std::string model;
  std::vector<HorizonMetrics> horizons;
  bool operator==(const ModelMetrics&) const = default;
};

struct MetricsReport {
  double floor = 1.0;
  std::uint64_t seed = 0;
  std::string config_fingerprint;
  std::string grid_fingerprint;  // users and masks the metrics were computed on
  std::size_t users = 0;
  std::vector<std::string> horizons;
  std::vector<ModelMetrics> models;

  // Fills best flags; returns, per horizon, model names ordered by aSMAPE.
  std::vector<std::vector<std::string>> rank();
  const HorizonMetrics& at(const std::string& model, const std::string& horizon) const;
  nlohmann::json to_json() const;
  static MetricsReport from_json(const nlohmann::json& j);
  bool operator==(const MetricsReport&) const = default;
};

struct ModelForecast {
  std::string name;
  std::vector<double> values;  // N x K row-major
};

// Masked entries are excluded for every model alike.
MetricsReport compare(const std::vector<ModelForecast>& models, std::span<const double> actual,
                      std::span<const std::uint8_t> mask, const std::vector<std::string>& horizons,
                      double floor, std::uint64_t seed, const std::string& config_fingerprint,
                      const std::vector<std::uint64_t>& user_ids);

// Concatenates the models of reports computed on the same grid and ranks them.
MetricsReport merge(const std::vector<MetricsReport>& reports);

std::string hex64(std::uint64_t v);

}  // namespace ltv::metrics
