#include "ltv/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>

#include "ltv/error.hpp"
#include "ltv/numeric.hpp"

namespace ltv::metrics {

namespace {

void check_pair(std::span<const double> a, std::span<const double> f) {
  if (a.size() != f.size()) {
    throw UsageError("actuals and forecasts differ in length (" + std::to_string(a.size()) + " vs " +
                     std::to_string(f.size()) + ")");
  }
  if (a.empty()) throw UsageError("metrics need at least one pair");
}

const char* kMetricNames[] = {"rmse", "smape", "asmape", "mdape"};

std::optional<double> metric_value(const HorizonMetrics& h, int k) {
  switch (k) {
    case 0: return h.rmse;
    case 1: return h.smape;
    case 2: return h.asmape;
    default: return h.mdape;
  }
}

}  // namespace

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

double rmse(std::span<const double> a, std::span<const double> f) {
  check_pair(a, f);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - f[i]) * (a[i] - f[i]);
  return std::sqrt(s / static_cast<double>(a.size()));
}

double smape(std::span<const double> a, std::span<const double> f) {
  check_pair(a, f);
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double den = std::abs(a[i]) + std::abs(f[i]);
    if (den > 0.0) s += std::abs(a[i] - f[i]) / den;
  }
  return 2.0 * s / static_cast<double>(a.size());
}

double asmape(std::span<const double> a, std::span<const double> f, double floor) {
  check_pair(a, f);
  if (!(floor > 0.0)) throw UsageError("aSMAPE floor must be > 0");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (f[i] < 0.0) throw UsageError("aSMAPE needs nonnegative forecasts (index " + std::to_string(i) + ")");
    s += std::abs(a[i] - f[i]) / (std::max(a[i], floor) + f[i]);
  }
  return 2.0 * s / static_cast<double>(a.size());
}

Mdape mdape(std::span<const double> a, std::span<const double> f) {
  check_pair(a, f);
  std::vector<double> ape;
  Mdape out;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] == 0.0) {
      ++out.excluded;
      continue;
    }
    ape.push_back(std::abs(a[i] - f[i]) / std::abs(a[i]));
  }
  if (ape.empty()) throw UsageError("MdAPE has no pairs with a nonzero actual");
  std::sort(ape.begin(), ape.end());
  const std::size_t m = ape.size() / 2;
  out.value = ape.size() % 2 ? ape[m] : 0.5 * (ape[m - 1] + ape[m]);
  return out;
}

std::vector<std::vector<std::string>> MetricsReport::rank() {
  std::vector<std::vector<std::string>> order(horizons.size());
  for (std::size_t h = 0; h < horizons.size(); ++h) {
    for (auto& m : models) m.horizons.at(h).best.clear();
    for (int k = 0; k < 4; ++k) {
      std::optional<double> lowest;
      for (const auto& m : models) {
        const auto v = metric_value(m.horizons[h], k);
        if (v && (!lowest || *v < *lowest)) lowest = v;
      }
      if (!lowest) continue;
      for (auto& m : models) {
        if (metric_value(m.horizons[h], k) == lowest) m.horizons[h].best.push_back(kMetricNames[k]);
      }
    }
    std::vector<std::size_t> idx(models.size());
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) {
      return models[x].horizons[h].asmape < models[y].horizons[h].asmape;
    });
    for (auto i : idx) order[h].push_back(models[i].model);
  }
  return order;
}

const HorizonMetrics& MetricsReport::at(const std::string& model, const std::string& horizon) const {
  for (const auto& m : models) {
    if (m.model != model) continue;
    for (const auto& h : m.horizons) {
      if (h.horizon == horizon) return h;
    }
  }
  throw UsageError("report has no entry for model '" + model + "' at horizon '" + horizon + "'");
}

nlohmann::json MetricsReport::to_json() const {
  MetricsReport copy = *this;
  const auto order = copy.rank();
  nlohmann::json models_json = nlohmann::json::array();
  for (const auto& m : copy.models) {
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& h : m.horizons) {
      rows.push_back({{"horizon", h.horizon},
                      {"n", h.n},
                      {"rmse", h.rmse},
                      {"smape", h.smape},
                      {"asmape", h.asmape},
                      {"mdape", h.mdape ? nlohmann::json(*h.mdape) : nlohmann::json(nullptr)},
                      {"mdape_excluded", h.mdape_excluded},
                      {"best", h.best}});
    }
    models_json.push_back({{"model", m.model}, {"horizons", rows}});
  }
  nlohmann::json ranking = nlohmann::json::object();
  for (std::size_t h = 0; h < horizons.size(); ++h) ranking[horizons[h]] = order[h];
  return {{"format", "ltv-metrics-report"},
          {"version", 1},
          {"floor", floor},
          {"seed", seed},
          {"config_fingerprint", config_fingerprint},
          {"grid_fingerprint", grid_fingerprint},
          {"users", users},
          {"horizons", horizons},
          {"models", models_json},
          {"ranking_by_asmape", ranking}};
}

MetricsReport MetricsReport::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "ltv-metrics-report" || j.value("version", 0) != 1) {
    throw DataError("not an ltv-metrics-report v1 document");
  }
  MetricsReport r;
  try {
    j.at("floor").get_to(r.floor);
    j.at("seed").get_to(r.seed);
    j.at("config_fingerprint").get_to(r.config_fingerprint);
    j.at("grid_fingerprint").get_to(r.grid_fingerprint);
    j.at("users").get_to(r.users);
    j.at("horizons").get_to(r.horizons);
    for (const auto& mj : j.at("models")) {
      ModelMetrics m;
      mj.at("model").get_to(m.model);
      for (const auto& hj : mj.at("horizons")) {
        HorizonMetrics h;
        hj.at("horizon").get_to(h.horizon);
        hj.at("n").get_to(h.n);
        hj.at("rmse").get_to(h.rmse);
        hj.at("smape").get_to(h.smape);
        hj.at("asmape").get_to(h.asmape);
        if (!hj.at("mdape").is_null()) h.mdape = hj.at("mdape").get<double>();
        hj.at("mdape_excluded").get_to(h.mdape_excluded);
        hj.at("best").get_to(h.best);
        m.horizons.push_back(std::move(h));
      }
      if (m.horizons.size() != r.horizons.size()) throw DataError("model '" + m.model + "' lacks horizons");
      r.models.push_back(std::move(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed metrics report: ") + e.what());
  }
  return r;
}

MetricsReport compare(const std::vector<ModelForecast>& models, std::span<const double> actual,
                      std::span<const std::uint8_t> mask, const std::vector<std::string>& horizons,
                      double floor, std::uint64_t seed, const std::string& config_fingerprint,
                      const std::vector<std::uint64_t>& user_ids) {
  const std::size_t K = horizons.size();
  if (K == 0 || actual.size() % K != 0 || mask.size() != actual.size()) {
    throw UsageError("actual/mask grid does not match " + std::to_string(K) + " horizons");
  }
  const std::size_t N = actual.size() / K;
  if (N == 0) throw UsageError("no users to evaluate");
  if (user_ids.size() != N) throw UsageError("one user id per evaluated row is required");
  if (models.empty()) throw UsageError("no models to compare");
  if (!(floor > 0.0)) throw UsageError("aSMAPE floor must be > 0");

  MetricsReport r;
  r.floor = floor;
  r.seed = seed;
  r.config_fingerprint = config_fingerprint;
  r.users = N;
  r.horizons = horizons;
  std::string grid;
  for (std::size_t i = 0; i < N; ++i) {
    grid += std::to_string(user_ids[i]) + ':';
    for (std::size_t j = 0; j < K; ++j) grid += mask[i * K + j] ? '1' : '0';
    grid += ';';
  }
  r.grid_fingerprint = hex64(fnv1a64(grid + "|" + std::to_string(floor)));

  for (const auto& m : models) {
    if (m.values.size() != actual.size()) {
      throw UsageError("forecasts of '" + m.name + "' do not align with the actuals grid");
    }
    ModelMetrics mm;
    mm.model = m.name;
    for (std::size_t j = 0; j < K; ++j) {
      std::vector<double> a, f;
      for (std::size_t i = 0; i < N; ++i) {
        if (!mask[i * K + j]) continue;
        a.push_back(actual[i * K + j]);
        f.push_back(m.values[i * K + j]);
      }
      if (a.empty()) throw UsageError("horizon " + horizons[j] + " has no unmasked users");
      HorizonMetrics h;
      h.horizon = horizons[j];
      h.n = a.size();
      h.rmse = rmse(a, f);
      h.smape = smape(a, f);
      h.asmape = asmape(a, f, floor);
      if (std::any_of(a.begin(), a.end(), [](double v) { return v != 0.0; })) {
        const auto md = mdape(a, f);
        h.mdape = md.value;
        h.mdape_excluded = md.excluded;
      } else {
        h.mdape_excluded = a.size();
      }
      mm.horizons.push_back(std::move(h));
    }
    r.models.push_back(std::move(mm));
  }
  r.rank();
  return r;
}

MetricsReport merge(const std::vector<MetricsReport>& reports) {
  if (reports.empty()) throw UsageError("no reports to merge");
  MetricsReport out = reports.front();
  for (std::size_t i = 1; i < reports.size(); ++i) {
    const auto& r = reports[i];
    if (r.grid_fingerprint != out.grid_fingerprint || r.horizons != out.horizons || r.floor != out.floor ||
        r.users != out.users) {
      throw UsageError("report " + std::to_string(i) + " was computed on a different user/horizon grid");
    }
    out.models.insert(out.models.end(), r.models.begin(), r.models.end());
    if (r.config_fingerprint != out.config_fingerprint) out.config_fingerprint += "+" + r.config_fingerprint;
  }
  out.rank();
  return out;
}

}  // namespace ltv::metrics
