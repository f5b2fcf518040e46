#include <cmath>
#include <filesystem>
#include <numeric>

#include "doctest.h"
#include "ltv/error.hpp"
#include "ltv/pipeline.hpp"

using namespace ltv;
using namespace ltv::pipeline;

namespace {

// user 128's row of the worked example
const std::vector<double> kRow = {0.82, 0.96, 0.77, 0.00, 0.78, 1.00};

sim::SimConfig panel_config(std::size_t n, std::uint64_t seed) {
  sim::SimConfig c = sim::default_config(n, seed);
  c.end_cohort = c.start_cohort + 120;
  c.horizon_days = 7 * 50;
  c.events = sim::quarterly_effects(c.start_cohort, c.horizon_days, 1.8, seed, 1);
  c.outages = sim::quarterly_effects(c.start_cohort, c.horizon_days, 0.0, seed, 2);
  return c;
}

}  // namespace

TEST_CASE("acquisition labels: worked row") {
  const auto l = build_acquisition_labels(kRow, 5);
  REQUIRE(l.observed);
  CHECK(l.remaining[2] == doctest::Approx(1.78).epsilon(1e-12));
  CHECK(l.realized[2] == doctest::Approx(2.55).epsilon(1e-12));
  CHECK(l.total == doctest::Approx(4.33).epsilon(1e-12));
  CHECK(l.remaining[5] == 0.0);
  const auto zero = build_acquisition_labels(std::vector<double>(10, 0.0), 5);
  for (double v : zero.remaining) CHECK(v == 0.0);
  const auto short_series = build_acquisition_labels(std::vector<double>{1.0, 2.0}, 5);
  CHECK_FALSE(short_series.observed);
  for (auto v : short_series.valid) CHECK(v == 0);
  CHECK_THROWS_AS(build_acquisition_labels(std::vector<double>{1.0, -0.5}, 1), DataError);
}

TEST_CASE("acquisition labels: identity over a simulated panel") {
  const auto panel = sim::simulate_cohorts(panel_config(2000, 4));
  std::size_t checked = 0;
  for (const auto& u : panel) {
    const auto l = build_acquisition_labels(u.values, 90);
    if (!l.observed) continue;
    for (std::size_t a = 0; a < l.realized.size(); ++a) {
      const double err = std::abs(l.realized[a] + l.remaining[a] - l.total);
      CHECK(err <= 1e-9 * std::max(1.0, l.total));
      CHECK(l.remaining[a] >= 0.0);
      ++checked;
    }
  }
  CHECK(checked > 100000);
}

TEST_CASE("rolling labels: worked row, masks and monotonicity") {
  const std::vector<std::size_t> origin = {1};
  const std::vector<std::size_t> h2 = {2};
  auto l = build_rolling_labels(kRow, origin, h2, kRow.size());
  CHECK(l.mask[0] == 1);
  CHECK(l.targets[0] == doctest::Approx(0.77).epsilon(1e-12));

  const std::vector<std::size_t> hs = {1, 4, 10};
  l = build_rolling_labels(kRow, origin, hs, kRow.size());
  CHECK(l.mask[0] == 1);
  CHECK(l.mask[1] == 1);  // (1, 5] ends at the last index
  CHECK(l.mask[2] == 0);
  CHECK(l.targets[2] == 0.0);

  const std::vector<double> zeros(20, 0.0);
  const std::vector<std::size_t> all = {0, 3, 7};
  l = build_rolling_labels(zeros, all, std::vector<std::size_t>{1, 2, 4}, zeros.size());
  for (double v : l.targets) CHECK(v == 0.0);

  const std::vector<std::size_t> bad = {2, 2};
  CHECK_THROWS_AS(build_rolling_labels(kRow, origin, bad, kRow.size()), UsageError);

  RngStream rng(31, 0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> v(60);
    for (auto& x : v) x = rng.uniform() < 0.3 ? rng.exponential(0.1) : 0.0;
    std::vector<std::size_t> origins(40);
    std::iota(origins.begin(), origins.end(), 0);
    const std::vector<std::size_t> h = {1, 4, 13, 26};
    const auto r = build_rolling_labels(v, origins, h, v.size());
    for (std::size_t i = 0; i < origins.size(); ++i) {
      for (std::size_t j = 0; j < h.size(); ++j) {
        const bool in = origins[i] + h[j] < v.size();
        CHECK(r.mask[i * 4 + j] == in);
        if (!in) continue;
        double direct = 0.0;
        for (std::size_t t = origins[i] + 1; t <= origins[i] + h[j]; ++t) direct += v[t];
        CHECK(r.targets[i * 4 + j] == doctest::Approx(direct).epsilon(1e-12));
        if (j > 0 && r.mask[i * 4 + j - 1]) CHECK(r.targets[i * 4 + j - 1] <= r.targets[i * 4 + j]);
      }
    }
  }
}

TEST_CASE("subsampling: worked example and limits") {
  RngStream rng(1, 2);
  const std::vector<double> v = {0, 0, 5, 0, 0, 0, 2};
  auto s = subsample_zero_records(v, 0.0, rng);
  CHECK(s.kept == std::vector<std::size_t>{0, 2, 6});
  CHECK(s.gaps == std::vector<std::size_t>{0, 2, 4});
  s = subsample_zero_records(v, 1.0, rng);
  CHECK(s.kept.size() == v.size());
  for (std::size_t i = 1; i < s.gaps.size(); ++i) CHECK(s.gaps[i] == 1);
  const std::vector<double> busy = {1, 2, 3, 4};
  CHECK(subsample_zero_records(busy, 0.0, rng).kept.size() == 4);
  CHECK_THROWS_AS(subsample_zero_records(v, 1.5, rng), UsageError);
}

TEST_CASE("subsampling: keeps nonzeros, keep rate within a 99% binomial interval, gaps telescope") {
  RngStream data(77, 0);
  const double p = 0.2;
  std::size_t interior_zeros = 0, kept_zeros = 0;
  for (int user = 0; user < 1000; ++user) {
    std::vector<double> v(100);
    for (auto& x : v) x = data.uniform() < 0.25 ? 1.0 + data.uniform() : 0.0;
    RngStream rng(5, static_cast<std::uint64_t>(user));
    const auto s = subsample_zero_records(v, p, rng);
    std::vector<bool> kept(v.size(), false);
    for (auto k : s.kept) kept[k] = true;
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (v[i] > 0.0) CHECK(kept[i]);
      if (v[i] == 0.0 && i != 0 && i + 1 != v.size()) {
        ++interior_zeros;
        kept_zeros += kept[i];
      }
    }
    CHECK(std::accumulate(s.gaps.begin(), s.gaps.end(), std::size_t{0}) == s.kept.back() - s.kept.front());
  }
  const double n = static_cast<double>(interior_zeros);
  const double half = 2.5758 * std::sqrt(p * (1 - p) / n);
  CHECK(std::abs(kept_zeros / n - p) < half);
}

TEST_CASE("calendar features") {
  const auto f = calendar_features(Date::parse("2021-01-29"));
  CHECK(f.iso_week == 4);
  CHECK(f.day_of_week == 4);
  CHECK(calendar_features(Date::parse("2021-01-04")).iso_week == 1);
  for (int k = 0; k < 800; ++k) {
    const auto g = calendar_features(Date::parse("2020-06-01") + k);
    CHECK(g.week_sin * g.week_sin + g.week_cos * g.week_cos == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("weekly totals sum the complete weeks") {
  sim::UserSeries u;
  u.cohort_date = Date::parse("2021-01-06");  // third day of the anchor week
  u.cutoff = u.cohort_date + 19;
  u.values.assign(20, 1.0);
  const auto w = weekly_totals(u, Date::parse("2021-01-04"), u.cutoff);
  CHECK(w.first_week == 0);
  // anchor weeks end on days 6, 13, 20 after the anchor; the cutoff is day 21
  CHECK(w.values == std::vector<double>{5.0, 7.0, 7.0});
}

TEST_CASE("normalizer: drops constants, centres training data, inverts exactly") {
  std::vector<PreparedUser> users(3);
  RngStream rng(3, 3);
  for (auto& u : users) {
    for (int t = 0; t < 7; ++t) {
      LabeledStep s;
      s.features = {rng.normal(), 4.0, rng.uniform() * 10.0};
      s.targets = {rng.exponential(0.2), 0.0};
      s.mask = {1, static_cast<std::uint8_t>(t % 2)};
      u.steps.push_back(s);
    }
  }
  std::vector<const PreparedUser*> ptrs = {&users[0], &users[1], &users[2]};
  const auto n = fit_normalizer(ptrs, {"a", "const", "b"});
  CHECK(n.names == std::vector<std::string>{"a", "b"});
  CHECK(n.dropped == std::vector<std::string>{"const"});
  std::vector<double> mean(2, 0.0);
  for (const auto* u : ptrs) {
    for (const auto& s : u->steps) {
      const auto row = n.apply_features(s.features);
      mean[0] += row[0] / 21.0;
      mean[1] += row[1] / 21.0;
      for (std::size_t j = 0; j < 2; ++j) {
        CHECK(std::abs(n.invert_target(n.apply_target(s.targets[j], j), j) - s.targets[j]) < 1e-10);
      }
    }
  }
  CHECK(std::abs(mean[0]) < 1e-10);
  CHECK(std::abs(mean[1]) < 1e-10);
  CHECK(NormStats::from_json(n.to_json()) == n);
  const auto seqs = apply_normalizer(n, ptrs);
  REQUIRE(seqs.size() == 3);
  CHECK(seqs[0].input.features.size() == 7 * 2);
  CHECK(seqs[0].mask == std::vector<std::uint8_t>{1, 0, 1, 1, 1, 0, 1, 1, 1, 0, 1, 1, 1, 0});
}

TEST_CASE("split_dataset: partition by cohort, degenerate cutoff") {
  std::vector<PreparedUser> users(10);
  for (std::size_t i = 0; i < users.size(); ++i) users[i].cohort_date = Date::parse("2021-01-01") + static_cast<int>(i);
  split_dataset(users, Date::parse("2021-01-07"), Date::parse("2021-01-09"));
  std::size_t counts[3] = {};
  for (const auto& u : users) ++counts[static_cast<int>(u.split)];
  CHECK(counts[0] == 6);
  CHECK(counts[1] == 2);
  CHECK(counts[2] == 2);
  std::vector<PreparedUser> same(5);
  for (auto& u : same) u.cohort_date = Date::parse("2021-02-01");
  split_dataset(same, Date::parse("2021-03-01"), Date::parse("2021-03-02"));
  for (const auto& u : same) CHECK(u.split == Split::train);
  CHECK_THROWS_AS(split_dataset(same, Date::parse("2021-01-01"), Date::parse("2021-01-02")), UsageError);
  CHECK_THROWS_AS(split_dataset(same, Date::parse("2021-03-01"), Date::parse("2021-01-02")), UsageError);
}

TEST_CASE("prepare (rolling): leakage-safe labels, deterministic, file round trip") {
  const auto panel = sim::simulate_cohorts(panel_config(600, 9));
  PrepareConfig cfg;
  const auto data = prepare(panel, cfg);
  CHECK(data.horizons == std::vector<std::size_t>{1, 4, 13, 26});
  CHECK(data.history_end == data.anchor + 7 * 24 - 1);
  std::size_t counts[3] = {};
  for (const auto& u : data.users) {
    ++counts[static_cast<int>(u.split)];
    REQUIRE_FALSE(u.steps.empty());
    CHECK(u.steps.back().index + 1 == u.history.size());
    CHECK(u.first_period + static_cast<std::int64_t>(u.history.size()) == 24);
    for (const auto& s : u.steps) {
      for (std::size_t j = 0; j < data.horizons.size(); ++j) {
        if (s.mask[j]) CHECK(s.calendar + static_cast<std::int64_t>(data.horizons[j]) <= 23);
        CHECK(s.targets[j] >= 0.0);
      }
      CHECK(s.features.size() == data.feature_names.size());
    }
    for (auto m : u.actual_mask) CHECK(m == 1);
  }
  CHECK(counts[0] > 0);
  CHECK(counts[1] > 0);
  CHECK(counts[2] > 0);
  CHECK(counts[0] + counts[1] + counts[2] == data.users.size());
  CHECK(prepare(panel, cfg) == data);

  const auto dir = std::filesystem::temp_directory_path() / "ltv_test_prepared";
  write_dataset(data, dir);
  CHECK_FALSE(std::filesystem::exists(dir.string() + ".partial"));
  CHECK(read_dataset(dir) == data);
  std::filesystem::remove_all(dir);
}

TEST_CASE("prepare (acquisition): windows closed by the cutoff, test history truncated") {
  auto c = panel_config(800, 10);
  const auto panel = sim::simulate_cohorts(c);
  PrepareConfig cfg;
  cfg.mode = Mode::acquisition;
  const auto data = prepare(panel, cfg);
  CHECK(data.horizons == std::vector<std::size_t>{90});
  std::size_t labelled = 0;
  for (const auto& u : data.users) {
    if (u.split == Split::test) {
      CHECK(u.history.size() <= cfg.evaluation_age_days + 1);
      for (const auto& s : u.steps) CHECK(s.mask[0] == 0);
      continue;
    }
    for (const auto& s : u.steps) {
      if (!s.mask[0]) continue;
      ++labelled;
      CHECK(u.cohort_date + 90 <= data.label_cutoff);
    }
  }
  CHECK(labelled > 0);
}
