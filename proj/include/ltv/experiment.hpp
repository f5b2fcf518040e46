#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "ltv/btyd.hpp"
#include "ltv/metrics.hpp"
#include "ltv/network.hpp"
#include "ltv/pipeline.hpp"
#include "ltv/ridge.hpp"
#include "ltv/simulator.hpp"
#include "ltv/train.hpp"

namespace ltv::experiment {

struct ModelConfig {
  drnn::CellKind cell = drnn::CellKind::drnn;
  std::size_t n_y = 12;
  std::size_t n_h = 6;
  std::vector<std::size_t> embedding_dims = {3};
  nlohmann::json to_json() const;
  static ModelConfig from_json(const nlohmann::json& j);
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  sim::SimConfig simulation;
  pipeline::PrepareConfig prepare;
  ModelConfig model;
  drnn::TrainConfig train;
  double ridge_penalty = 1.0;
  baselines::LagSpec lags;
  double floor = 1.0;

  nlohmann::json to_json() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  std::string fingerprint() const;
};

using Log = std::function<void(const std::string&)>;

struct TrainedDrnn {
  drnn::NetworkSpec spec;
  drnn::NetworkParams params;
  std::size_t best_epoch = 0;
  std::size_t epochs_run = 0;
};

TrainedDrnn train_drnn(const pipeline::PreparedDataset& data, const ModelConfig& model,
                       const drnn::TrainConfig& train, std::uint64_t seed, const Log& log = {});
TrainedDrnn train_drnn(const pipeline::PreparedDataset& data, const drnn::NetworkSpec& spec,
                       const drnn::TrainConfig& train, std::uint64_t seed, const Log& log = {});

// The evaluation grid: every test user's forward targets from its last step.
struct EvaluationGrid {
  std::vector<const pipeline::PreparedUser*> users;
  std::vector<std::uint64_t> ids;
  std::vector<double> actual;
  std::vector<std::uint8_t> mask;
};
EvaluationGrid evaluation_grid(const pipeline::PreparedDataset& data);

std::vector<double> drnn_forecasts(const pipeline::PreparedDataset& data, const EvaluationGrid& grid,
                                   const drnn::NetworkSpec& spec, const drnn::NetworkParams& params,
                                   std::size_t threads = 0);

struct BtydModel {
  baselines::BgnbdParams bgnbd;
  baselines::GammaGammaParams gamma_gamma;
};
// Fitted on every user's calibration history (RFM at the history end, in periods).
BtydModel fit_btyd(const pipeline::PreparedDataset& data);
std::vector<double> btyd_forecasts(const pipeline::PreparedDataset& data, const EvaluationGrid& grid,
                                   const BtydModel& model);
std::vector<double> ridge_forecasts(const pipeline::PreparedDataset& data, const EvaluationGrid& grid,
                                    const baselines::RidgeLagModel& model);

metrics::MetricsReport report_for(const pipeline::PreparedDataset& data, const EvaluationGrid& grid,
                                  const std::vector<metrics::ModelForecast>& models, double floor,
                                  const std::string& fingerprint);

// Simulate, prepare, fit all three models, evaluate on the test users.
metrics::MetricsReport run_experiment(const ExperimentConfig& config, const Log& log = {});

}  // namespace ltv::experiment
