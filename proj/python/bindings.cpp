// JSON documents cross the boundary as strings; the Python package wraps
// them into dicts.
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <fstream>
#include <sstream>

#include "ltv/btyd.hpp"
#include "ltv/error.hpp"
#include "ltv/experiment.hpp"
#include "ltv/model_io.hpp"

namespace py = pybind11;
using namespace ltv;

namespace {

nlohmann::json parse(const std::string& s) {
  try {
    return nlohmann::json::parse(s);
  } catch (const nlohmann::json::parse_error& e) {
    throw UsageError(std::string("malformed JSON argument: ") + e.what());
  }
}

std::vector<sim::UserSeries> read_panel(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  return sim::read_panel_csv(in);
}

py::dict series_dict(const sim::UserSeries& u) {
  py::dict d;
  d["user_id"] = u.user_id;
  d["cohort_date"] = u.cohort_date.to_string();
  d["cutoff"] = u.cutoff.to_string();
  d["values"] = u.values;
  d["categories"] = u.categories;
  return d;
}

std::string report_for_models(const pipeline::PreparedDataset& data, const experiment::EvaluationGrid& grid,
                              const metrics::ModelForecast& f, double floor) {
  return experiment::report_for(data, grid, {f}, floor, metrics::hex64(data.fingerprint())).to_json().dump();
}

baselines::RfmSummary rfm_from(double x, double t_x, double T) {
  return {true, x, t_x, T, 1.0};
}

}  // namespace

PYBIND11_MODULE(_ltv, m) {
  m.doc() = "LTV forecasting core";

  static py::exception<Error> base(m, "LtvError");
  static py::exception<UsageError> usage(m, "UsageError", base.ptr());
  static py::exception<DataError> data_error(m, "DataError", base.ptr());
  static py::exception<ShapeError> shape(m, "ShapeError", base.ptr());
  static py::exception<NumericError> numeric(m, "NumericError", base.ptr());
  static py::exception<TrainingError> training(m, "TrainingError", base.ptr());
  static py::exception<OracleError> oracle(m, "OracleError", base.ptr());
  static py::exception<baselines::FitError> fit(m, "FitError", base.ptr());
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const baselines::FitError& e) {
      py::set_error(fit, e.what());
    } catch (const UsageError& e) {
      py::set_error(usage, e.what());
    } catch (const DataError& e) {
      py::set_error(data_error, e.what());
    } catch (const ShapeError& e) {
      py::set_error(shape, e.what());
    } catch (const NumericError& e) {
      py::set_error(numeric, e.what());
    } catch (const TrainingError& e) {
      py::set_error(training, e.what());
    } catch (const OracleError& e) {
      py::set_error(oracle, e.what());
    } catch (const Error& e) {
      py::set_error(base, (e.kind() + ": " + e.what()).c_str());
    }
  });

  m.def("default_sim_config", [](std::size_t n_users, std::uint64_t seed) {
    return sim::config_to_json(sim::default_config(n_users, seed)).dump();
  });
  m.def("simulate", [](const std::string& config) {
    py::list out;
    for (const auto& u : sim::simulate_cohorts(sim::config_from_json(parse(config)))) out.append(series_dict(u));
    return out;
  });
  m.def("simulate_csv", [](const std::string& config, const std::string& path) {
    const auto panel = sim::simulate_cohorts(sim::config_from_json(parse(config)));
    std::ostringstream csv;
    sim::write_panel_csv(csv, panel);
    const std::string tmp = path + ".partial";
    {
      std::ofstream out(tmp, std::ios::binary);
      out << csv.str();
      if (!out) throw DataError("cannot write " + path);
    }
    std::filesystem::rename(tmp, path);
    return panel.size();
  });
  m.def("read_panel", [](const std::string& path) {
    py::list out;
    for (const auto& u : read_panel(path)) out.append(series_dict(u));
    return out;
  });

  m.def("acquisition_labels", [](const std::vector<double>& values, std::size_t graduation_age) {
    const auto l = pipeline::build_acquisition_labels(values, graduation_age);
    py::dict d;
    d["realized"] = l.realized;
    d["remaining"] = l.remaining;
    d["valid"] = std::vector<int>(l.valid.begin(), l.valid.end());
    d["total"] = l.total;
    d["observed"] = l.observed;
    return d;
  });
  m.def("rolling_labels", [](const std::vector<double>& values, const std::vector<std::size_t>& origins,
                             const std::vector<std::size_t>& horizons, std::size_t observed) {
    const auto l = pipeline::build_rolling_labels(values, origins, horizons, observed);
    py::dict d;
    d["targets"] = l.targets;
    d["mask"] = std::vector<int>(l.mask.begin(), l.mask.end());
    return d;
  });
  m.def("subsample_zero_records",
        [](const std::vector<double>& values, double keep_zero_prob, std::uint64_t seed, std::uint64_t stream) {
          RngStream rng(seed, stream);
          const auto s = pipeline::subsample_zero_records(values, keep_zero_prob, rng);
          return py::make_tuple(s.kept, s.gaps);
        },
        py::arg("values"), py::arg("keep_zero_prob"), py::arg("seed") = 1, py::arg("stream") = 0);

  m.def("rmse", [](const std::vector<double>& a, const std::vector<double>& f) { return metrics::rmse(a, f); });
  m.def("smape", [](const std::vector<double>& a, const std::vector<double>& f) { return metrics::smape(a, f); });
  m.def("asmape", [](const std::vector<double>& a, const std::vector<double>& f, double floor) {
    return metrics::asmape(a, f, floor);
  }, py::arg("actual"), py::arg("forecast"), py::arg("floor") = 1.0);
  m.def("mdape", [](const std::vector<double>& a, const std::vector<double>& f) {
    const auto r = metrics::mdape(a, f);
    return py::make_tuple(r.value, r.excluded);
  });
  m.def("merge_reports", [](const std::vector<std::string>& reports) {
    std::vector<metrics::MetricsReport> rs;
    for (const auto& r : reports) rs.push_back(metrics::MetricsReport::from_json(parse(r)));
    return metrics::merge(rs).to_json().dump();
  });

  m.def("fit_btyd", [](const std::vector<std::tuple<double, double, double, double>>& rows) {
    std::vector<baselines::RfmSummary> rfm;
    for (const auto& [x, t_x, T, mean_value] : rows) rfm.push_back({true, x, t_x, T, mean_value});
    const auto bg = baselines::fit_bgnbd(rfm);
    const auto gg = baselines::fit_gamma_gamma(rfm);
    return baselines::btyd_to_json(bg, gg).dump();
  });
  m.def("bgnbd_expected_transactions",
        [](const std::string& params, double x, double t_x, double T, double h) {
          const auto [bg, gg] = baselines::btyd_from_json(parse(params));
          (void)gg;
          return baselines::bgnbd_expected_transactions(bg, rfm_from(x, t_x, T), h);
        });
  m.def("hyp2f1", &baselines::hyp2f1_series);

  m.def("prepare", [](const std::string& panel_csv, const std::string& out_dir, const std::string& config) {
    const auto cfg = pipeline::PrepareConfig::from_json(parse(config));
    const auto data = pipeline::prepare(read_panel(panel_csv), cfg);
    pipeline::write_dataset(data, out_dir);
    return py::make_tuple(data.split(pipeline::Split::train).size(), data.split(pipeline::Split::validation).size(),
                          data.split(pipeline::Split::test).size());
  });
  m.def("train", [](const std::string& data_dir, const std::string& spec, const std::string& train_config,
                    std::uint64_t seed, const std::string& model_out) {
    const auto data = pipeline::read_dataset(data_dir);
    const auto net = data.complete_spec(drnn::spec_from_json(parse(spec)));
    const auto trained = [&] {
      py::gil_scoped_release release;
      return experiment::train_drnn(data, net, drnn::train_config_from_json(parse(train_config)), seed);
    }();
    drnn::save_model(model_out, trained.spec, trained.params);
    return py::make_tuple(trained.best_epoch, trained.epochs_run);
  });
  m.def("evaluate", [](const std::string& model, const std::string& data_dir, double floor) {
    const auto data = pipeline::read_dataset(data_dir);
    const auto mf = drnn::load_model(model);
    const auto grid = experiment::evaluation_grid(data);
    return report_for_models(data, grid, {"drnn", experiment::drnn_forecasts(data, grid, mf.spec, mf.params)},
                             floor);
  });
  m.def("baseline", [](const std::string& kind, const std::string& data_dir, double floor, double penalty) {
    const auto data = pipeline::read_dataset(data_dir);
    const auto grid = experiment::evaluation_grid(data);
    if (kind == "btyd") {
      return report_for_models(data, grid, {"btyd", experiment::btyd_forecasts(data, grid, experiment::fit_btyd(data))},
                               floor);
    }
    if (kind == "ridge") {
      const auto model = baselines::ridge_lag_fit(data, penalty);
      return report_for_models(data, grid, {"ridge_lag", experiment::ridge_forecasts(data, grid, model)}, floor);
    }
    throw UsageError("unknown baseline kind '" + kind + "' (btyd or ridge)");
  });
  m.def("run_experiment", [](const std::string& config) {
    const auto cfg = experiment::ExperimentConfig::from_json(parse(config));
    py::gil_scoped_release release;
    return experiment::run_experiment(cfg).to_json().dump();
  });
  m.def("gradient_check", [](const std::string& spec, std::size_t length, std::uint64_t seed) {
    const auto c = drnn::random_gradient_check(drnn::spec_from_json(parse(spec)), length, seed);
    return py::make_tuple(c.max_relative_error, c.parameters);
  });
}
