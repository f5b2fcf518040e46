#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "ltv/btyd.hpp"
#include "ltv/dates.hpp"
#include "ltv/network.hpp"
#include "ltv/rng.hpp"
#include "ltv/simulator.hpp"
#include "ltv/train.hpp"

namespace ltv::pipeline {

// ---- labels ----

struct AcquisitionLabels {
  std::vector<double> realized;   // Z-_a, ages 0..min(T0, observed)
  std::vector<double> remaining;  // Z+_a = Z - Z-_a
  std::vector<std::uint8_t> valid;
  double total = 0.0;             // Z, meaningful only when observed
  bool observed = false;          // series reaches the graduation age
};

AcquisitionLabels build_acquisition_labels(std::span<const double> values, std::size_t graduation_age);

// targets[i * K + j] = sum of values over (origins[i], origins[i] + horizons[j]],
// masked when that window passes the last observed index.
struct RollingLabels {
  std::size_t horizons = 0;
  std::vector<double> targets;
  std::vector<std::uint8_t> mask;
};

RollingLabels build_rolling_labels(std::span<const double> values, std::span<const std::size_t> origins,
                                   std::span<const std::size_t> horizons, std::size_t observed);

struct Subsample {
  std::vector<std::size_t> kept;
  std::vector<std::size_t> gaps;  // periods since the previous kept step, 0 for the first
};

// Keeps nonzero steps, the first and last step, and each other zero step
// with probability keep_zero_prob. One uniform is drawn per step.
Subsample subsample_zero_records(std::span<const double> values, double keep_zero_prob, RngStream& rng);

struct CalendarFeatures {
  int iso_week = 1;
  int day_of_week = 0;  // Monday = 0
  double week_sin = 0.0;
  double week_cos = 1.0;
};

CalendarFeatures calendar_features(Date d);

// Calendar-week totals: week w covers [anchor + 7w, anchor + 7w + 6].
struct WeeklySeries {
  std::int64_t first_week = 0;  // week holding the cohort date
  std::vector<double> values;   // complete and partial weeks up to the last complete week
};

WeeklySeries weekly_totals(const sim::UserSeries& series, Date anchor, Date last_day);

// ---- prepared data ----

enum class Mode { acquisition, rolling };
std::string to_string(Mode m);
Mode parse_mode(std::string_view s);

enum class Split : std::uint8_t { train = 0, validation = 1, test = 2 };
std::string to_string(Split s);
Split parse_split(std::string_view s);

struct LabeledStep {
  std::size_t index = 0;          // age in periods
  std::int64_t calendar = 0;      // periods since the anchor
  std::size_t gap = 0;
  std::vector<double> features;   // raw, before normalization
  std::vector<double> targets;    // currency, one per horizon (1 in acquisition mode)
  std::vector<std::uint8_t> mask;
  bool operator==(const LabeledStep&) const = default;
};

struct PreparedUser {
  std::uint64_t user_id = 0;
  Split split = Split::train;
  Date cohort_date;
  std::vector<std::int32_t> categories;
  std::int64_t first_period = 0;  // calendar period of history[0]
  std::vector<double> history;    // per-period totals through the history end, not subsampled
  std::vector<LabeledStep> steps; // the model sequence, ends at the history end
  std::vector<double> actual;     // forward targets from the last step (test evaluation)
  std::vector<std::uint8_t> actual_mask;
  baselines::RfmSummary rfm;      // in days, at the history end
  bool operator==(const PreparedUser&) const = default;
};

struct NormStats {
  std::vector<std::string> names;    // kept features
  std::vector<std::size_t> columns;  // their raw column indices
  std::vector<double> mean, sd;
  std::vector<std::string> dropped;  // zero-variance features
  std::vector<double> target_mean, target_sd;  // of log1p(target), per horizon

  std::vector<double> apply_features(std::span<const double> raw) const;
  double apply_target(double y, std::size_t j) const;
  double invert_target(double t, std::size_t j) const;
  nlohmann::json to_json() const;
  static NormStats from_json(const nlohmann::json& j);
  bool operator==(const NormStats&) const = default;
};

NormStats fit_normalizer(std::span<const PreparedUser* const> training,
                         const std::vector<std::string>& feature_names);
std::vector<drnn::TrainingSequence> apply_normalizer(const NormStats& norm,
                                                     std::span<const PreparedUser* const> users);
drnn::SequenceInput normalized_input(const NormStats& norm, const PreparedUser& user);

struct PrepareConfig {
  Mode mode = Mode::rolling;
  double keep_zero_prob = 0.2;
  std::vector<std::size_t> horizons_days = {7, 28, 91, 182};
  std::size_t graduation_age_days = 90;
  std::size_t evaluation_age_days = 14;  // acquisition: test history length
  // Unset dates are derived from the panel: anchor = earliest cohort; rolling
  // origin = last date leaving room for the longest horizon; cohort split
  // points at the 60% / 80% quantiles of cohort dates.
  std::optional<Date> anchor;
  std::optional<Date> origin;  // first day after the rolling history
  std::optional<Date> validation_cohort_start;
  std::optional<Date> test_cohort_start;
  std::vector<std::size_t> vocabulary;  // per categorical; empty: max id + 1
  std::uint64_t seed = 1;

  nlohmann::json to_json() const;
  static PrepareConfig from_json(const nlohmann::json& j);
  bool operator==(const PrepareConfig&) const = default;
};

struct PreparedDataset {
  Mode mode = Mode::rolling;
  std::size_t period_days = 7;
  std::vector<std::size_t> horizons;  // in periods
  Date anchor;
  Date history_end;   // rolling: last history day; acquisition: last day usable for train labels
  Date label_cutoff;  // train and validation labels never look past this day
  std::vector<std::string> feature_names;
  std::vector<std::size_t> vocabulary;
  std::size_t dropped_users = 0;  // cohorts after the history end
  PrepareConfig config;
  NormStats norm;
  std::vector<PreparedUser> users;

  std::vector<const PreparedUser*> split(Split s) const;
  std::vector<std::string> horizon_labels() const;
  std::uint64_t fingerprint() const;
  drnn::NetworkSpec network_spec(const std::vector<std::size_t>& embedding_dims, drnn::CellKind kind,
                                 std::size_t n_y, std::size_t n_h) const;
  // Fills input/output sizes and embedding vocabularies left at 0; mismatches -> ShapeError.
  drnn::NetworkSpec complete_spec(drnn::NetworkSpec spec) const;
  bool operator==(const PreparedDataset&) const = default;
};

std::vector<std::string> rolling_feature_names();
std::vector<std::string> acquisition_feature_names();

// Assigns splits by cohort date; an empty training split -> UsageError.
void split_dataset(std::vector<PreparedUser>& users, Date validation_cohort_start, Date test_cohort_start);

PreparedDataset prepare(const std::vector<sim::UserSeries>& panel, const PrepareConfig& config);

// Directory with meta.json, norm.json, users.tsv and steps.tsv.
void write_dataset(const PreparedDataset& data, const std::filesystem::path& dir);
PreparedDataset read_dataset(const std::filesystem::path& dir);

}  // namespace ltv::pipeline
