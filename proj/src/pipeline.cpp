#include "ltv/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ltv/error.hpp"

namespace ltv::pipeline {

namespace {

void check_values(std::span<const double> values) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!(values[i] >= 0.0) || !std::isfinite(values[i])) {
      throw DataError("negative or non-finite value at step " + std::to_string(i));
    }
  }
}

void check_horizons(std::span<const std::size_t> horizons) {
  if (horizons.empty()) throw UsageError("at least one horizon is required");
  for (std::size_t j = 0; j < horizons.size(); ++j) {
    if (horizons[j] == 0 || (j > 0 && horizons[j] <= horizons[j - 1])) {
      throw UsageError("horizons must be positive and strictly increasing");
    }
  }
}

constexpr double kWeeksPerYear = 52.1775;

}  // namespace

AcquisitionLabels build_acquisition_labels(std::span<const double> values, std::size_t graduation_age) {
  check_values(values);
  AcquisitionLabels out;
  const std::size_t n = std::min(values.size(), graduation_age + 1);
  out.observed = values.size() > graduation_age;
  out.realized.resize(n);
  double running = 0.0;
  for (std::size_t a = 0; a < n; ++a) {
    running += values[a];
    out.realized[a] = running;
  }
  out.remaining.assign(n, 0.0);
  out.valid.assign(n, 0);
  if (out.observed) {
    out.total = out.realized[graduation_age];
    for (std::size_t a = 0; a < n; ++a) {
      out.remaining[a] = out.total - out.realized[a];
      out.valid[a] = 1;
    }
  }
  return out;
}

RollingLabels build_rolling_labels(std::span<const double> values, std::span<const std::size_t> origins,
                                   std::span<const std::size_t> horizons, std::size_t observed) {
  check_horizons(horizons);
  check_values(values);
  if (observed > values.size()) throw UsageError("observed length exceeds the series");
  RollingLabels out;
  const std::size_t K = horizons.size();
  out.horizons = K;
  out.targets.assign(origins.size() * K, 0.0);
  out.mask.assign(origins.size() * K, 0);
  for (std::size_t i = 0; i < origins.size(); ++i) {
    const std::size_t t0 = origins[i];
    if (t0 >= observed) throw UsageError("label origin " + std::to_string(t0) + " is not observed");
    double running = 0.0;
    std::size_t t = t0;
    for (std::size_t j = 0; j < K; ++j) {
      if (t0 + horizons[j] >= observed) break;  // window leaves the observation
      for (; t < t0 + horizons[j]; ++t) running += values[t + 1];
      out.targets[i * K + j] = running;
      out.mask[i * K + j] = 1;
    }
  }
  return out;
}

Subsample subsample_zero_records(std::span<const double> values, double keep_zero_prob, RngStream& rng) {
  if (!(keep_zero_prob >= 0.0 && keep_zero_prob <= 1.0)) {
    throw UsageError("keep_zero_prob must lie in [0, 1]");
  }
  Subsample out;
  const std::size_t n = values.size();
  for (std::size_t i = 0; i < n; ++i) {
    const double u = rng.uniform();
    if (i == 0 || i + 1 == n || values[i] > 0.0 || u < keep_zero_prob) {
      out.gaps.push_back(out.kept.empty() ? 0 : i - out.kept.back());
      out.kept.push_back(i);
    }
  }
  return out;
}

CalendarFeatures calendar_features(Date d) {
  CalendarFeatures f;
  f.iso_week = iso_week(d).week;
  f.day_of_week = d.day_of_week();
  const double angle = 2.0 * std::numbers::pi * f.iso_week / kWeeksPerYear;
  f.week_sin = std::sin(angle);
  f.week_cos = std::cos(angle);
  return f;
}

WeeklySeries weekly_totals(const sim::UserSeries& series, Date anchor, Date last_day) {
  if (series.cohort_date < anchor) throw DataError("cohort date precedes the weekly anchor");
  const Date end = std::min(last_day, series.cutoff);
  WeeklySeries out;
  out.first_week = (series.cohort_date - anchor) / 7;
  const std::int64_t complete = (end - anchor + 1) / 7;  // weeks fully inside [anchor, end]
  if (complete <= out.first_week) return out;
  out.values.assign(static_cast<std::size_t>(complete - out.first_week), 0.0);
  const std::size_t days = std::min<std::size_t>(series.values.size(),
                                                 static_cast<std::size_t>(anchor + static_cast<std::int32_t>(7 * complete) - series.cohort_date));
  for (std::size_t a = 0; a < days; ++a) {
    const std::int64_t week = (series.date_at(a) - anchor) / 7;
    out.values[static_cast<std::size_t>(week - out.first_week)] += series.values[a];
  }
  return out;
}

std::string to_string(Mode m) { return m == Mode::rolling ? "rolling" : "acquisition"; }

Mode parse_mode(std::string_view s) {
  if (s == "rolling") return Mode::rolling;
  if (s == "acquisition") return Mode::acquisition;
  throw UsageError("unknown mode '" + std::string(s) + "' (expected acquisition or rolling)");
}

std::string to_string(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::validation: return "validation";
    case Split::test: return "test";
  }
  return "?";
}

Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "validation") return Split::validation;
  if (s == "test") return Split::test;
  throw DataError("unknown split '" + std::string(s) + "'");
}

// ---- normalization ----

std::vector<double> NormStats::apply_features(std::span<const double> raw) const {
  std::vector<double> out(columns.size());
  for (std::size_t k = 0; k < columns.size(); ++k) {
    if (columns[k] >= raw.size()) throw ShapeError("feature row shorter than the normalizer expects");
    out[k] = (raw[columns[k]] - mean[k]) / sd[k];
  }
  return out;
}

double NormStats::apply_target(double y, std::size_t j) const {
  return (std::log1p(y) - target_mean.at(j)) / target_sd.at(j);
}

double NormStats::invert_target(double t, std::size_t j) const {
  return std::expm1(t * target_sd.at(j) + target_mean.at(j));
}

nlohmann::json NormStats::to_json() const {
  return {{"format", "ltv-norm"}, {"version", 1}, {"names", names}, {"columns", columns},
          {"mean", mean}, {"sd", sd}, {"dropped", dropped}, {"target_mean", target_mean},
          {"target_sd", target_sd}};
}

NormStats NormStats::from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "ltv-norm" || j.value("version", 0) != 1) {
    throw DataError("not an ltv-norm v1 document");
  }
  NormStats n;
  try {
    j.at("names").get_to(n.names);
    j.at("columns").get_to(n.columns);
    j.at("mean").get_to(n.mean);
    j.at("sd").get_to(n.sd);
    j.at("dropped").get_to(n.dropped);
    j.at("target_mean").get_to(n.target_mean);
    j.at("target_sd").get_to(n.target_sd);
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed normalizer: ") + e.what());
  }
  const std::size_t f = n.names.size();
  if (n.columns.size() != f || n.mean.size() != f || n.sd.size() != f ||
      n.target_mean.size() != n.target_sd.size()) {
    throw DataError("normalizer arrays disagree in length");
  }
  for (double s : n.sd) {
    if (!(s > 0.0)) throw DataError("normalizer standard deviations must be > 0");
  }
  for (double s : n.target_sd) {
    if (!(s > 0.0)) throw DataError("normalizer standard deviations must be > 0");
  }
  return n;
}

NormStats fit_normalizer(std::span<const PreparedUser* const> training,
                         const std::vector<std::string>& feature_names) {
  const std::size_t F = feature_names.size();
  std::size_t K = 0;
  for (const auto* u : training) {
    if (!u->steps.empty()) {
      K = u->steps.front().targets.size();
      break;
    }
  }
  std::vector<double> sum(F, 0.0), tsum(K, 0.0);
  std::vector<std::size_t> tcount(K, 0);
  std::size_t rows = 0;
  for (const auto* u : training) {
    for (const auto& s : u->steps) {
      if (s.features.size() != F || s.targets.size() != K) throw ShapeError("inconsistent step widths");
      for (std::size_t f = 0; f < F; ++f) sum[f] += s.features[f];
      for (std::size_t j = 0; j < K; ++j) {
        if (s.mask[j]) {
          tsum[j] += std::log1p(s.targets[j]);
          ++tcount[j];
        }
      }
      ++rows;
    }
  }
  if (rows == 0) throw UsageError("normalizer needs at least one training step");
  std::vector<double> mean(F), tmean(K);
  for (std::size_t f = 0; f < F; ++f) mean[f] = sum[f] / static_cast<double>(rows);
  for (std::size_t j = 0; j < K; ++j) tmean[j] = tcount[j] ? tsum[j] / static_cast<double>(tcount[j]) : 0.0;
  std::vector<double> sq(F, 0.0), tsq(K, 0.0);
  for (const auto* u : training) {
    for (const auto& s : u->steps) {
      for (std::size_t f = 0; f < F; ++f) sq[f] += (s.features[f] - mean[f]) * (s.features[f] - mean[f]);
      for (std::size_t j = 0; j < K; ++j) {
        if (s.mask[j]) {
          const double d = std::log1p(s.targets[j]) - tmean[j];
          tsq[j] += d * d;
        }
      }
    }
  }
  NormStats n;
  for (std::size_t f = 0; f < F; ++f) {
    const double sd = std::sqrt(sq[f] / static_cast<double>(rows));
    if (!(sd > 1e-12 * std::max(1.0, std::abs(mean[f])))) {
      n.dropped.push_back(feature_names[f]);
      continue;
    }
    n.names.push_back(feature_names[f]);
    n.columns.push_back(f);
    n.mean.push_back(mean[f]);
    n.sd.push_back(sd);
  }
  for (std::size_t j = 0; j < K; ++j) {
    const double sd = tcount[j] ? std::sqrt(tsq[j] / static_cast<double>(tcount[j])) : 0.0;
    n.target_mean.push_back(tmean[j]);
    n.target_sd.push_back(sd > 1e-12 ? sd : 1.0);
  }
  return n;
}

drnn::SequenceInput normalized_input(const NormStats& norm, const PreparedUser& user) {
  drnn::SequenceInput in;
  in.length = user.steps.size();
  in.features.reserve(in.length * norm.columns.size());
  for (const auto& s : user.steps) {
    const auto row = norm.apply_features(s.features);
    in.features.insert(in.features.end(), row.begin(), row.end());
    in.categories.insert(in.categories.end(), user.categories.begin(), user.categories.end());
  }
  return in;
}

std::vector<drnn::TrainingSequence> apply_normalizer(const NormStats& norm,
                                                     std::span<const PreparedUser* const> users) {
  std::vector<drnn::TrainingSequence> out;
  out.reserve(users.size());
  for (const auto* u : users) {
    if (u->steps.empty()) continue;
    drnn::TrainingSequence seq;
    seq.input = normalized_input(norm, *u);
    for (const auto& s : u->steps) {
      for (std::size_t j = 0; j < s.targets.size(); ++j) {
        seq.targets.push_back(s.mask[j] ? norm.apply_target(s.targets[j], j) : 0.0);
        seq.mask.push_back(s.mask[j]);
      }
    }
    out.push_back(std::move(seq));
  }
  return out;
}

// ---- configuration ----

namespace {

nlohmann::json optional_date(const std::optional<Date>& d) {
  return d ? nlohmann::json(d->to_string()) : nlohmann::json(nullptr);
}

std::optional<Date> read_optional_date(const nlohmann::json& j, const char* key) {
  if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
  return Date::parse(j.at(key).get<std::string>());
}

}  // namespace

nlohmann::json PrepareConfig::to_json() const {
  return {{"mode", to_string(mode)},
          {"keep_zero_prob", keep_zero_prob},
          {"horizons_days", horizons_days},
          {"graduation_age_days", graduation_age_days},
          {"evaluation_age_days", evaluation_age_days},
          {"anchor", optional_date(anchor)},
          {"origin", optional_date(origin)},
          {"validation_cohort_start", optional_date(validation_cohort_start)},
          {"test_cohort_start", optional_date(test_cohort_start)},
          {"vocabulary", vocabulary},
          {"seed", seed}};
}

PrepareConfig PrepareConfig::from_json(const nlohmann::json& j) {
  PrepareConfig c;
  try {
    if (j.contains("mode")) c.mode = parse_mode(j.at("mode").get<std::string>());
    c.keep_zero_prob = j.value("keep_zero_prob", c.keep_zero_prob);
    c.horizons_days = j.value("horizons_days", c.horizons_days);
    c.graduation_age_days = j.value("graduation_age_days", c.graduation_age_days);
    c.evaluation_age_days = j.value("evaluation_age_days", c.evaluation_age_days);
    c.anchor = read_optional_date(j, "anchor");
    c.origin = read_optional_date(j, "origin");
    c.validation_cohort_start = read_optional_date(j, "validation_cohort_start");
    c.test_cohort_start = read_optional_date(j, "test_cohort_start");
    c.vocabulary = j.value("vocabulary", c.vocabulary);
    c.seed = j.value("seed", c.seed);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("malformed prepare config: ") + e.what());
  }
  return c;
}

// ---- dataset ----

std::vector<const PreparedUser*> PreparedDataset::split(Split s) const {
  std::vector<const PreparedUser*> out;
  for (const auto& u : users) {
    if (u.split == s) out.push_back(&u);
  }
  return out;
}

std::vector<std::string> PreparedDataset::horizon_labels() const {
  std::vector<std::string> out;
  for (std::size_t h : horizons) {
    out.push_back(mode == Mode::rolling ? std::to_string(h) + "w" : "remaining_" + std::to_string(h) + "d");
  }
  return out;
}

std::uint64_t PreparedDataset::fingerprint() const {
  std::string key = config.to_json().dump() + "|" + to_string(mode) + "|" + history_end.to_string() + "|" +
                    std::to_string(users.size());
  for (const auto& u : users) key += "," + std::to_string(u.user_id) + ":" + std::to_string(u.steps.size());
  return fnv1a64(key);
}

drnn::NetworkSpec PreparedDataset::network_spec(const std::vector<std::size_t>& embedding_dims,
                                                drnn::CellKind kind, std::size_t n_y, std::size_t n_h) const {
  if (embedding_dims.size() != vocabulary.size()) {
    throw UsageError("need one embedding dim per categorical (" + std::to_string(vocabulary.size()) + ")");
  }
  std::vector<drnn::EmbeddingSpec> emb;
  for (std::size_t i = 0; i < vocabulary.size(); ++i) emb.push_back({vocabulary[i], embedding_dims[i]});
  return drnn::NetworkSpec::default_topology(norm.names.size(), emb, horizons.size(), kind, n_y, n_h);
}

drnn::NetworkSpec PreparedDataset::complete_spec(drnn::NetworkSpec spec) const {
  auto fill = [](std::size_t& slot, std::size_t value, const std::string& what) {
    if (slot == 0) slot = value;
    if (slot != value) {
      throw ShapeError(what + " is " + std::to_string(slot) + " but the dataset has " + std::to_string(value));
    }
  };
  fill(spec.input_dim, norm.names.size(), "input_dim");
  fill(spec.output_dim, horizons.size(), "output_dim");
  if (spec.embeddings.size() != vocabulary.size()) {
    throw ShapeError("spec has " + std::to_string(spec.embeddings.size()) + " embeddings, dataset has " +
                     std::to_string(vocabulary.size()) + " categoricals");
  }
  for (std::size_t i = 0; i < vocabulary.size(); ++i) {
    fill(spec.embeddings[i].vocabulary, vocabulary[i], "embedding " + std::to_string(i) + " vocabulary");
  }
  spec.validate();
  return spec;
}

std::vector<std::string> rolling_feature_names() {
  return {"log_value", "purchased", "gap", "age", "cohort", "week_sin", "week_cos", "log_cumulative",
          "recency"};
}

std::vector<std::string> acquisition_feature_names() {
  return {"log_value", "purchased", "gap", "age", "cohort", "week_sin", "week_cos", "dow_sin",
          "dow_cos", "log_cumulative", "recency"};
}

void split_dataset(std::vector<PreparedUser>& users, Date validation_cohort_start, Date test_cohort_start) {
  if (test_cohort_start < validation_cohort_start) throw UsageError("cohort cutoffs must be ordered");
  std::size_t counts[3] = {0, 0, 0};
  for (auto& u : users) {
    u.split = u.cohort_date < validation_cohort_start ? Split::train
              : u.cohort_date < test_cohort_start     ? Split::validation
                                                      : Split::test;
    ++counts[static_cast<int>(u.split)];
  }
  // later splits may legitimately be empty (a single early cohort); nothing can be fit without train
  if (counts[0] == 0) throw UsageError("split 'train' is empty");
}

namespace {

struct StepContext {
  std::span<const double> values;  // per period
  std::int64_t first_period = 0;
  Date anchor;
  std::size_t period_days = 7;
};

// Raw features of the kept steps; cumulative and recency use the full
// (unsubsampled) series.
std::vector<LabeledStep> make_steps(const StepContext& ctx, const Subsample& sub, Mode mode) {
  std::vector<LabeledStep> steps;
  steps.reserve(sub.kept.size());
  double cumulative = 0.0;
  std::size_t next = 0;
  std::ptrdiff_t last_purchase = -1;
  for (std::size_t k = 0; k < sub.kept.size(); ++k) {
    const std::size_t i = sub.kept[k];
    for (; next <= i; ++next) {
      cumulative += ctx.values[next];
      if (ctx.values[next] > 0.0) last_purchase = static_cast<std::ptrdiff_t>(next);
    }
    LabeledStep s;
    s.index = i;
    s.calendar = ctx.first_period + static_cast<std::int64_t>(i);
    s.gap = sub.gaps[k];
    const Date day = ctx.anchor + static_cast<std::int32_t>(s.calendar * static_cast<std::int64_t>(ctx.period_days));
    const CalendarFeatures cal = calendar_features(day);
    const double z = ctx.values[i];
    const double recency = last_purchase < 0 ? static_cast<double>(i + 1)
                                             : static_cast<double>(static_cast<std::ptrdiff_t>(i) - last_purchase);
    s.features = {std::log1p(z), z > 0.0 ? 1.0 : 0.0, static_cast<double>(s.gap), static_cast<double>(i),
                  static_cast<double>(ctx.first_period), cal.week_sin, cal.week_cos};
    if (mode == Mode::acquisition) {
      const double angle = 2.0 * std::numbers::pi * cal.day_of_week / 7.0;
      s.features.push_back(std::sin(angle));
      s.features.push_back(std::cos(angle));
    }
    s.features.push_back(std::log1p(cumulative));
    s.features.push_back(recency);
    steps.push_back(std::move(s));
  }
  return steps;
}

void attach_labels(std::vector<LabeledStep>& steps, const RollingLabels& labels) {
  const std::size_t K = labels.horizons;
  for (std::size_t k = 0; k < steps.size(); ++k) {
    steps[k].targets.assign(labels.targets.begin() + static_cast<std::ptrdiff_t>(k * K),
                            labels.targets.begin() + static_cast<std::ptrdiff_t>((k + 1) * K));
    steps[k].mask.assign(labels.mask.begin() + static_cast<std::ptrdiff_t>(k * K),
                         labels.mask.begin() + static_cast<std::ptrdiff_t>((k + 1) * K));
  }
}

Date quantile_date(std::vector<Date> dates, double q) {
  std::sort(dates.begin(), dates.end());
  const auto idx = static_cast<std::size_t>(q * static_cast<double>(dates.size() - 1));
  return dates[idx];
}

}  // namespace

PreparedDataset prepare(const std::vector<sim::UserSeries>& panel, const PrepareConfig& config) {
  if (panel.empty()) throw UsageError("panel has no users");
  if (!(config.keep_zero_prob >= 0.0 && config.keep_zero_prob <= 1.0)) {
    throw UsageError("keep_zero_prob must lie in [0, 1]");
  }
  PreparedDataset data;
  data.mode = config.mode;
  data.config = config;
  data.period_days = config.mode == Mode::rolling ? 7 : 1;

  Date first_cohort = panel.front().cohort_date, panel_end = panel.front().cutoff;
  std::size_t n_tables = panel.front().categories.size();
  for (const auto& u : panel) {
    check_values(u.values);
    first_cohort = std::min(first_cohort, u.cohort_date);
    panel_end = std::min(panel_end, u.cutoff);
    if (u.categories.size() != n_tables) throw DataError("users disagree on the number of categoricals");
  }
  data.anchor = config.anchor.value_or(first_cohort);
  if (first_cohort < data.anchor) throw DataError("cohorts precede the anchor date");

  data.vocabulary = config.vocabulary;
  if (data.vocabulary.empty()) {
    data.vocabulary.assign(n_tables, 1);
    for (const auto& u : panel) {
      for (std::size_t t = 0; t < n_tables; ++t) {
        if (u.categories[t] < 0) throw DataError("negative categorical id");
        data.vocabulary[t] = std::max(data.vocabulary[t], static_cast<std::size_t>(u.categories[t]) + 1);
      }
    }
  } else if (data.vocabulary.size() != n_tables) {
    throw UsageError("vocabulary list does not match the panel's categoricals");
  }

  if (config.mode == Mode::rolling) {
    for (std::size_t d : config.horizons_days) {
      if (d % 7 != 0) throw UsageError("rolling horizons must be whole weeks (multiples of 7 days)");
      data.horizons.push_back(d / 7);
    }
  } else {
    data.horizons = {config.graduation_age_days};
  }
  check_horizons(data.horizons);

  const std::int64_t total_weeks = (panel_end - data.anchor + 1) / 7;
  std::int64_t origin_week = 0;
  if (config.mode == Mode::rolling) {
    origin_week = config.origin ? (*config.origin - data.anchor) / 7
                                : total_weeks - static_cast<std::int64_t>(data.horizons.back());
    if (origin_week <= 0 || origin_week > total_weeks) throw UsageError("rolling origin outside the panel");
    data.history_end = data.anchor + static_cast<std::int32_t>(7 * origin_week) - 1;
  } else {
    data.history_end = panel_end;
  }

  std::vector<Date> cohorts;
  for (const auto& u : panel) {
    if (u.cohort_date <= data.history_end) cohorts.push_back(u.cohort_date);
  }
  if (cohorts.empty()) throw UsageError("no cohort starts before the history end");
  const Date val_start = config.validation_cohort_start.value_or(quantile_date(cohorts, 0.6));
  const Date test_start = config.test_cohort_start.value_or(quantile_date(cohorts, 0.8));
  data.label_cutoff = config.mode == Mode::rolling ? data.history_end : test_start - 1;
  data.feature_names = config.mode == Mode::rolling ? rolling_feature_names() : acquisition_feature_names();

  for (const auto& series : panel) {
    if (series.cohort_date > data.history_end) {
      ++data.dropped_users;
      continue;
    }
    PreparedUser u;
    u.user_id = series.user_id;
    u.cohort_date = series.cohort_date;
    u.categories = series.categories;
    for (std::size_t t = 0; t < n_tables; ++t) {
      if (u.categories[t] < 0 || static_cast<std::size_t>(u.categories[t]) >= data.vocabulary[t]) {
        throw DataError("categorical id outside the vocabulary for user " + std::to_string(u.user_id));
      }
    }
    RngStream rng = RngStream(config.seed, series.user_id).substream(0x5ab);
    u.split = series.cohort_date < val_start ? Split::train
              : series.cohort_date < test_start ? Split::validation
                                                : Split::test;  // split_dataset below checks coverage

    std::size_t rfm_age = 0;
    if (config.mode == Mode::rolling) {
      rfm_age = static_cast<std::size_t>(data.history_end - series.cohort_date);
      const WeeklySeries weekly = weekly_totals(series, data.anchor, panel_end);
      u.first_period = weekly.first_week;
      const auto history_len = static_cast<std::size_t>(origin_week - weekly.first_week);
      u.history.assign(weekly.values.begin(), weekly.values.begin() + static_cast<std::ptrdiff_t>(history_len));
      const Subsample sub = subsample_zero_records(u.history, config.keep_zero_prob, rng);
      u.steps = make_steps({u.history, u.first_period, data.anchor, 7}, sub, config.mode);
      attach_labels(u.steps, build_rolling_labels(weekly.values, sub.kept, data.horizons, history_len));
      const std::size_t last = history_len - 1;
      const RollingLabels fwd = build_rolling_labels(weekly.values, std::span(&last, 1), data.horizons,
                                                     weekly.values.size());
      u.actual = fwd.targets;
      u.actual_mask = fwd.mask;
    } else {
      u.first_period = series.cohort_date - data.anchor;
      const std::size_t T0 = config.graduation_age_days;
      // train/validation see their graduation window only if it closes by the
      // label cutoff; test users see only the first evaluation_age_days + 1 days
      std::size_t history_len = 0;
      const std::int64_t to_cutoff = data.label_cutoff - series.cohort_date + 1;
      if (u.split == Split::test) {
        history_len = std::min(series.values.size(), config.evaluation_age_days + 1);
      } else {
        history_len = static_cast<std::size_t>(std::clamp<std::int64_t>(to_cutoff, 1, static_cast<std::int64_t>(T0 + 1)));
        history_len = std::min(history_len, series.values.size());
      }
      u.history.assign(series.values.begin(), series.values.begin() + static_cast<std::ptrdiff_t>(history_len));
      rfm_age = history_len - 1;
      const Subsample sub = subsample_zero_records(u.history, config.keep_zero_prob, rng);
      u.steps = make_steps({u.history, u.first_period, data.anchor, 1}, sub, config.mode);
      const bool window_closed = u.split == Split::test || to_cutoff >= static_cast<std::int64_t>(T0 + 1);
      const AcquisitionLabels labels = build_acquisition_labels(series.values, T0);
      for (auto& s : u.steps) {
        const bool ok = s.index < labels.valid.size() && labels.valid[s.index] && window_closed;
        s.targets = {ok ? labels.remaining[s.index] : 0.0};
        s.mask = {static_cast<std::uint8_t>(ok && u.split != Split::test)};
      }
      const std::size_t last = history_len - 1;
      const bool ok = last < labels.valid.size() && labels.valid[last];
      u.actual = {ok ? labels.remaining[last] : 0.0};
      u.actual_mask = {static_cast<std::uint8_t>(ok)};
      if (u.split == Split::test) {
        for (auto& s : u.steps) s.mask = {0};
      }
    }
    u.rfm = baselines::rfm_summarize(series.values, rfm_age);
    data.users.push_back(std::move(u));
  }
  split_dataset(data.users, val_start, test_start);
  data.norm = fit_normalizer(data.split(Split::train), data.feature_names);
  return data;
}

}  // namespace ltv::pipeline
