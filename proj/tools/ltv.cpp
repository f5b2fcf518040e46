#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "ltv/error.hpp"
#include "ltv/experiment.hpp"
#include "ltv/model_io.hpp"
#include "ltv/text.hpp"

namespace fs = std::filesystem;
using namespace ltv;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

nlohmann::json read_json(const std::string& path) {
  try {
    return nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw DataError(path + ": " + e.what());
  }
}

// Writes next to the target and renames, so a failed run leaves nothing behind.
void write_atomic(const std::string& path, const std::string& body) {
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = path + ".partial";
  {
    std::ofstream out(tmp, std::ios::binary);
    out << body;
    out.close();
    if (!out) {
      std::error_code ec;
      fs::remove(tmp, ec);
      throw DataError("cannot write " + path);
    }
  }
  fs::rename(tmp, target);
}

bool is_experiment(const nlohmann::json& j) { return j.is_object() && j.value("format", "") == "ltv-experiment"; }

void log_stderr(const std::string& s) { std::cerr << s << '\n'; }

struct Simulate {
  std::string config, out;
  std::optional<std::size_t> users;
  std::optional<std::uint64_t> seed;

  void run() const {
    const auto j = read_json(config);
    auto cfg = is_experiment(j) ? experiment::ExperimentConfig::from_json(j).simulation : sim::config_from_json(j);
    if (users) cfg.n_users = *users;
    if (seed) cfg.seed = *seed;
    const auto panel = sim::simulate_cohorts(cfg);
    std::ostringstream csv;
    sim::write_panel_csv(csv, panel);
    write_atomic(out, csv.str());
    std::cout << "simulated " << panel.size() << " users to " << out << '\n';
  }
};

struct Prepare {
  std::string in, mode, out, config;
  std::optional<std::uint64_t> seed;

  void run() const {
    pipeline::PrepareConfig cfg;
    if (!config.empty()) {
      const auto j = read_json(config);
      cfg = is_experiment(j) ? experiment::ExperimentConfig::from_json(j).prepare
                             : pipeline::PrepareConfig::from_json(j);
    }
    cfg.mode = pipeline::parse_mode(mode);
    if (seed) cfg.seed = *seed;
    std::ifstream csv(in, std::ios::binary);
    if (!csv) throw DataError("cannot read " + in);
    const auto panel = sim::read_panel_csv(csv);
    const auto data = pipeline::prepare(panel, cfg);
    pipeline::write_dataset(data, out);
    std::cout << "prepared " << data.users.size() << " users (" << data.split(pipeline::Split::train).size()
              << " train, " << data.split(pipeline::Split::validation).size() << " validation, "
              << data.split(pipeline::Split::test).size() << " test) to " << out << '\n';
  }
};

struct Train {
  std::string data_dir, spec_path, out;
  std::optional<std::size_t> epochs, threads;
  std::optional<std::uint64_t> seed;
  bool verbose = false;

  void run() const {
    const auto data = pipeline::read_dataset(data_dir);
    const auto j = read_json(spec_path);
    drnn::NetworkSpec spec;
    drnn::TrainConfig train;
    std::uint64_t s = data.config.seed;
    if (is_experiment(j)) {
      const auto e = experiment::ExperimentConfig::from_json(j);
      spec = data.network_spec(e.model.embedding_dims, e.model.cell, e.model.n_y, e.model.n_h);
      train = e.train;
      s = e.seed;
    } else {
      spec = data.complete_spec(drnn::spec_from_json(j));
      if (j.contains("train")) train = drnn::train_config_from_json(j.at("train"));
      s = j.value("seed", s);
    }
    if (epochs) train.epochs = *epochs;
    if (threads) train.threads = *threads;
    if (seed) s = *seed;
    const auto trained = experiment::train_drnn(data, spec, train, s, verbose ? log_stderr : experiment::Log{});
    std::ostringstream body;
    drnn::write_model(body, trained.spec, trained.params);
    write_atomic(out, body.str());
    std::cout << "trained " << trained.params.parameter_count() << " parameters, best epoch " << trained.best_epoch
              << " of " << trained.epochs_run << ", model in " << out << '\n';
  }
};

std::string fingerprint_of(const pipeline::PreparedDataset& data) { return metrics::hex64(data.fingerprint()); }

void write_report(const metrics::MetricsReport& r, const std::string& path) {
  write_atomic(path, r.to_json().dump(2) + "\n");
  for (const auto& m : r.models) {
    std::cout << m.model;
    for (const auto& h : m.horizons) std::cout << "  " << h.horizon << " aSMAPE " << text::format_double(h.asmape);
    std::cout << '\n';
  }
}

struct Evaluate {
  std::string model, data_dir, report;
  double floor = 1.0;
  std::optional<std::size_t> threads;

  void run() const {
    const auto data = pipeline::read_dataset(data_dir);
    const auto m = drnn::load_model(model);
    const auto grid = experiment::evaluation_grid(data);
    const auto forecasts = experiment::drnn_forecasts(data, grid, m.spec, m.params, threads.value_or(0));
    write_report(experiment::report_for(data, grid, {{"drnn", forecasts}}, floor, fingerprint_of(data)), report);
  }
};

struct Baseline {
  std::string kind, data_dir, report, save;
  double floor = 1.0;
  double penalty = 1.0;
  std::vector<std::size_t> lags;

  void run() const {
    const auto data = pipeline::read_dataset(data_dir);
    const auto grid = experiment::evaluation_grid(data);
    metrics::ModelForecast f;
    nlohmann::json fitted;
    if (kind == "btyd") {
      const auto m = experiment::fit_btyd(data);
      f = {"btyd", experiment::btyd_forecasts(data, grid, m)};
      fitted = baselines::btyd_to_json(m.bgnbd, m.gamma_gamma);
    } else if (kind == "ridge") {
      baselines::LagSpec spec;
      if (!lags.empty()) spec.lags = lags;
      const auto m = baselines::ridge_lag_fit(data, penalty, spec);
      f = {"ridge_lag", experiment::ridge_forecasts(data, grid, m)};
      fitted = m.to_json();
    } else {
      throw UsageError("unknown baseline kind '" + kind + "' (btyd or ridge)");
    }
    if (!save.empty()) write_atomic(save, fitted.dump(2) + "\n");
    write_report(experiment::report_for(data, grid, {f}, floor, fingerprint_of(data)), report);
  }
};

struct Compare {
  std::vector<std::string> reports;
  std::string out;

  void run() const {
    std::vector<metrics::MetricsReport> rs;
    for (const auto& p : reports) rs.push_back(metrics::MetricsReport::from_json(read_json(p)));
    auto merged = metrics::merge(rs);
    const auto ranking = merged.rank();
    write_atomic(out, merged.to_json().dump(2) + "\n");
    for (std::size_t k = 0; k < merged.horizons.size(); ++k) {
      std::cout << merged.horizons[k] << ':';
      for (const auto& name : ranking[k]) std::cout << ' ' << name;
      std::cout << '\n';
    }
  }
};

// Random network from a topology JSON; without one, n_x = 3, K = 2 and one
// block with dilations 1 and 2.
struct Gradcheck {
  std::string spec_path;
  std::uint64_t seed = 1;
  double tolerance = 1e-4;

  void run() const {
    nlohmann::json j = nlohmann::json::parse(R"({"input_dim": 3, "output_dim": 2, "blocks": [{"layers": [
        {"dilation": 1, "n_y": 2, "n_h": 2}, {"dilation": 2, "n_y": 2, "n_h": 2}]}]})");
    if (!spec_path.empty()) j = read_json(spec_path);
    auto spec = drnn::spec_from_json(j);
    if (spec.input_dim == 0) spec.input_dim = 3;
    if (spec.output_dim == 0) spec.output_dim = 2;
    const std::size_t T = j.value("length", std::size_t{12});
    const auto t0 = std::chrono::steady_clock::now();
    const auto check = drnn::random_gradient_check(spec, T, seed);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "parameters " << check.parameters << " max_relative_error "
              << text::format_double(check.max_relative_error) << " worst_index " << check.worst_index << " seconds "
              << text::format_double(secs) << '\n';
    if (!(check.max_relative_error < tolerance)) {
      throw OracleError("gradient mismatch " + text::format_double(check.max_relative_error) + " at parameter " +
                        std::to_string(check.worst_index));
    }
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lifetime-value forecasting: simulation, preparation, dRNN training and baselines"};
  app.require_subcommand(1);

  Simulate simulate;
  auto* s = app.add_subcommand("simulate", "Simulate a cohort panel to CSV");
  s->add_option("--config", simulate.config, "Simulation or experiment config JSON")->required();
  s->add_option("--out", simulate.out, "Output CSV")->required();
  s->add_option("--users", simulate.users, "Override the user count");
  s->add_option("--seed", simulate.seed, "Override the seed");

  Prepare prepare;
  auto* p = app.add_subcommand("prepare", "Build labelled, normalized sequences from a panel CSV");
  p->add_option("--in", prepare.in, "Panel CSV")->required();
  p->add_option("--mode", prepare.mode, "acquisition or rolling")->required()->check(
      CLI::IsMember({"acquisition", "rolling"}));
  p->add_option("--out", prepare.out, "Output directory")->required();
  p->add_option("--config", prepare.config, "Prepare or experiment config JSON");
  p->add_option("--seed", prepare.seed, "Subsampling seed");

  Train train;
  auto* t = app.add_subcommand("train", "Train a dRNN on a prepared dataset");
  t->add_option("--data", train.data_dir, "Prepared dataset directory")->required();
  t->add_option("--spec", train.spec_path, "Network spec JSON or experiment config")->required();
  t->add_option("--out", train.out, "Output model file")->required();
  t->add_option("--epochs", train.epochs);
  t->add_option("--threads", train.threads);
  t->add_option("--seed", train.seed);
  t->add_flag("--verbose", train.verbose, "Per-epoch losses on stderr");

  Evaluate evaluate;
  auto* e = app.add_subcommand("evaluate", "Score a trained model on the test users");
  e->add_option("--model", evaluate.model)->required();
  e->add_option("--data", evaluate.data_dir)->required();
  e->add_option("--floor", evaluate.floor, "aSMAPE floor a")->capture_default_str();
  e->add_option("--report", evaluate.report)->required();
  e->add_option("--threads", evaluate.threads);

  Baseline baseline;
  auto* b = app.add_subcommand("baseline", "Fit and score a BTYD or lag-ridge baseline");
  b->add_option("--kind", baseline.kind)->required()->check(CLI::IsMember({"btyd", "ridge"}));
  b->add_option("--data", baseline.data_dir)->required();
  b->add_option("--report", baseline.report)->required();
  b->add_option("--floor", baseline.floor, "aSMAPE floor a")->capture_default_str();
  b->add_option("--penalty", baseline.penalty, "Ridge penalty")->capture_default_str();
  b->add_option("--lags", baseline.lags, "Ridge lag windows in periods");
  b->add_option("--save", baseline.save, "Write the fitted parameters as JSON");

  Compare compare;
  auto* c = app.add_subcommand("compare", "Merge reports computed on the same grid and rank models");
  c->add_option("--reports", compare.reports)->required()->expected(1, -1);
  c->add_option("--out", compare.out)->required();

  Gradcheck gradcheck;
  auto* g = app.add_subcommand("gradcheck", "Analytic vs central-difference gradients on a random network");
  g->add_option("--spec", gradcheck.spec_path, "Network spec JSON");
  g->add_option("--seed", gradcheck.seed)->capture_default_str();
  g->add_option("--tolerance", gradcheck.tolerance)->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& h) {
    return app.exit(h);
  } catch (const CLI::CallForAllHelp& h) {
    return app.exit(h);
  } catch (const CLI::ParseError& err) {
    std::string msg = err.what();
    for (char& ch : msg) {
      if (ch == '\n') ch = ' ';
    }
    std::cerr << "error: usage: " << msg << '\n';
    const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    std::cerr << sub->help();
    return 2;
  }

  try {
    if (*s) simulate.run();
    if (*p) prepare.run();
    if (*t) train.run();
    if (*e) evaluate.run();
    if (*b) baseline.run();
    if (*c) compare.run();
    if (*g) gradcheck.run();
  } catch (const Error& err) {
    std::cerr << "error: " << err.kind() << ": " << err.what() << '\n';
    return 1;
  } catch (const fs::filesystem_error& err) {
    std::cerr << "error: io: " << err.what() << '\n';
    return 1;
  } catch (const std::exception& err) {
    std::cerr << "error: internal: " << err.what() << '\n';
    return 1;
  }
  return 0;
}
