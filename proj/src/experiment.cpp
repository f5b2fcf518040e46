#include "ltv/experiment.hpp"

#include <algorithm>

#include "ltv/error.hpp"
#include "ltv/model_io.hpp"

namespace ltv::experiment {

nlohmann::json ModelConfig::to_json() const {
  return {{"cell", std::string(drnn::to_string(cell))},
          {"n_y", n_y},
          {"n_h", n_h},
          {"embedding_dims", embedding_dims}};
}

ModelConfig ModelConfig::from_json(const nlohmann::json& j) {
  ModelConfig m;
  try {
    if (j.contains("cell")) m.cell = drnn::parse_cell_kind(j.at("cell").get<std::string>());
    m.n_y = j.value("n_y", m.n_y);
    m.n_h = j.value("n_h", m.n_h);
    m.embedding_dims = j.value("embedding_dims", m.embedding_dims);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("malformed model config: ") + e.what());
  }
  return m;
}

nlohmann::json ExperimentConfig::to_json() const {
  return {{"format", "ltv-experiment"},
          {"version", 1},
          {"seed", seed},
          {"simulation", sim::config_to_json(simulation)},
          {"prepare", prepare.to_json()},
          {"model", model.to_json()},
          {"train", drnn::train_config_to_json(train)},
          {"ridge", {{"penalty", ridge_penalty}, {"lags", lags.lags}, {"log_scale", lags.log_scale}}},
          {"floor", floor}};
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "ltv-experiment" || j.value("version", 0) != 1) {
    throw UsageError("not an ltv-experiment v1 config");
  }
  ExperimentConfig c;
  try {
    c.seed = j.value("seed", c.seed);
    if (j.contains("simulation")) c.simulation = sim::config_from_json(j.at("simulation"));
    if (j.contains("prepare")) c.prepare = pipeline::PrepareConfig::from_json(j.at("prepare"));
    if (j.contains("model")) c.model = ModelConfig::from_json(j.at("model"));
    if (j.contains("train")) c.train = drnn::train_config_from_json(j.at("train"));
    if (j.contains("ridge")) {
      c.ridge_penalty = j.at("ridge").value("penalty", c.ridge_penalty);
      c.lags.lags = j.at("ridge").value("lags", c.lags.lags);
      c.lags.log_scale = j.at("ridge").value("log_scale", c.lags.log_scale);
    }
    c.floor = j.value("floor", c.floor);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("malformed experiment config: ") + e.what());
  }
  return c;
}

std::string ExperimentConfig::fingerprint() const { return metrics::hex64(fnv1a64(to_json().dump())); }

TrainedDrnn train_drnn(const pipeline::PreparedDataset& data, const ModelConfig& model,
                       const drnn::TrainConfig& train, std::uint64_t seed, const Log& log) {
  return train_drnn(data, data.network_spec(model.embedding_dims, model.cell, model.n_y, model.n_h), train, seed,
                    log);
}

TrainedDrnn train_drnn(const pipeline::PreparedDataset& data, const drnn::NetworkSpec& spec,
                       const drnn::TrainConfig& train, std::uint64_t seed, const Log& log) {
  spec.validate();
  const auto train_seqs = pipeline::apply_normalizer(data.norm, data.split(pipeline::Split::train));
  const auto val_seqs = pipeline::apply_normalizer(data.norm, data.split(pipeline::Split::validation));
  RngStream init(seed, 0x1417);
  RngStream shuffle(seed, 0x5417);
  const auto params = drnn::NetworkParams::initialize(spec, init);
  const auto result = drnn::train(spec, train_seqs, val_seqs, train, shuffle, params);
  if (log) {
    for (std::size_t e = 0; e < result.train_loss.size(); ++e) {
      std::string line = "epoch " + std::to_string(e + 1) + " train " + std::to_string(result.train_loss[e]);
      if (e < result.validation_loss.size()) line += " validation " + std::to_string(result.validation_loss[e]);
      log(line);
    }
  }
  return {spec, result.params, result.best_epoch, result.train_loss.size()};
}

EvaluationGrid evaluation_grid(const pipeline::PreparedDataset& data) {
  EvaluationGrid g;
  for (const auto* u : data.split(pipeline::Split::test)) {
    if (std::none_of(u->actual_mask.begin(), u->actual_mask.end(), [](auto m) { return m != 0; })) continue;
    g.users.push_back(u);
    g.ids.push_back(u->user_id);
    g.actual.insert(g.actual.end(), u->actual.begin(), u->actual.end());
    g.mask.insert(g.mask.end(), u->actual_mask.begin(), u->actual_mask.end());
  }
  if (g.users.empty()) throw UsageError("the test split has no users with observed forward targets");
  return g;
}

std::vector<double> drnn_forecasts(const pipeline::PreparedDataset& data, const EvaluationGrid& grid,
                                   const drnn::NetworkSpec& spec, const drnn::NetworkParams& params,
                                   std::size_t threads) {
  params.validate(spec);
  const std::size_t K = data.horizons.size();
  if (spec.output_dim != K || spec.input_dim != data.norm.names.size()) {
    throw ShapeError("model does not match the dataset (inputs " + std::to_string(spec.input_dim) + ", outputs " +
                     std::to_string(spec.output_dim) + ")");
  }
  std::vector<double> out(grid.users.size() * K);
  drnn::parallel_for(grid.users.size(), threads, [&](std::size_t i) {
    const auto input = pipeline::normalized_input(data.norm, *grid.users[i]);
    const auto cache = drnn::forward_sequence(spec, params, input);
    const auto last = cache.prediction(input.length - 1, K);
    for (std::size_t j = 0; j < K; ++j) out[i * K + j] = std::max(data.norm.invert_target(last[j], j), 0.0);
  });
  return out;
}

BtydModel fit_btyd(const pipeline::PreparedDataset& data) {
  std::vector<baselines::RfmSummary> rfm;
  for (const auto& u : data.users) rfm.push_back(u.rfm.in_periods(static_cast<double>(data.period_days)));
  BtydModel m;
  m.bgnbd = baselines::fit_bgnbd(rfm);
  m.gamma_gamma = baselines::fit_gamma_gamma(rfm);
  return m;
}

std::vector<double> btyd_forecasts(const pipeline::PreparedDataset& data, const EvaluationGrid& grid,
                                   const BtydModel& model) {
  const std::size_t K = data.horizons.size();
  std::vector<double> out;
  out.reserve(grid.users.size() * K);
  for (const auto* u : grid.users) {
    const auto s = u->rfm.in_periods(static_cast<double>(data.period_days));
    for (std::size_t h : data.horizons) {
      out.push_back(baselines::btyd_forecast(model.bgnbd, model.gamma_gamma, s, static_cast<double>(h)));
    }
  }
  return out;
}

std::vector<double> ridge_forecasts(const pipeline::PreparedDataset& data, const EvaluationGrid& grid,
                                    const baselines::RidgeLagModel& model) {
  std::vector<double> out;
  for (const auto* u : grid.users) {
    const auto f = baselines::ridge_lag_predict(model, data, *u, u->steps.back());
    out.insert(out.end(), f.begin(), f.end());
  }
  return out;
}

metrics::MetricsReport report_for(const pipeline::PreparedDataset& data, const EvaluationGrid& grid,
                                  const std::vector<metrics::ModelForecast>& models, double floor,
                                  const std::string& fingerprint) {
  return metrics::compare(models, grid.actual, grid.mask, data.horizon_labels(), floor, data.config.seed,
                          fingerprint, grid.ids);
}

metrics::MetricsReport run_experiment(const ExperimentConfig& config, const Log& log) {
  auto say = [&](const std::string& s) {
    if (log) log(s);
  };
  const auto panel = sim::simulate_cohorts(config.simulation);
  say("simulated " + std::to_string(panel.size()) + " users");
  const auto data = pipeline::prepare(panel, config.prepare);
  std::size_t steps = 0;
  for (const auto& u : data.users) steps += u.steps.size();
  say("prepared " + std::to_string(data.users.size()) + " users, " + std::to_string(steps) + " steps, history to " +
      data.history_end.to_string());
  const auto grid = evaluation_grid(data);

  const auto trained = train_drnn(data, config.model, config.train, config.seed, log);
  say("dRNN best epoch " + std::to_string(trained.best_epoch) + " of " + std::to_string(trained.epochs_run));
  const auto ridge = baselines::ridge_lag_fit(data, config.ridge_penalty, config.lags);
  const auto btyd = fit_btyd(data);
  say("BG/NBD r=" + std::to_string(btyd.bgnbd.r) + " alpha=" + std::to_string(btyd.bgnbd.alpha) +
      " a=" + std::to_string(btyd.bgnbd.a) + " b=" + std::to_string(btyd.bgnbd.b));

  std::vector<metrics::ModelForecast> models = {
      {"drnn", drnn_forecasts(data, grid, trained.spec, trained.params, config.train.threads)},
      {"ridge_lag", ridge_forecasts(data, grid, ridge)},
      {"btyd", btyd_forecasts(data, grid, btyd)}};
  return report_for(data, grid, models, config.floor, config.fingerprint());
}

}  // namespace ltv::experiment
