#include <cmath>
#include <random>
#include <sstream>

#include "doctest.h"
#include "ltv/error.hpp"
#include "ltv/simulator.hpp"

using namespace ltv;
using namespace ltv::sim;

namespace {

SimConfig small_config(std::size_t n, std::uint64_t seed = 3) {
  SimConfig c = default_config(n, seed);
  c.end_cohort = c.start_cohort + 60;
  c.horizon_days = 120;
  c.events = quarterly_effects(c.start_cohort, c.horizon_days, 1.8, seed, 1);
  c.outages = quarterly_effects(c.start_cohort, c.horizon_days, 0.0, seed, 2);
  return c;
}

}  // namespace

TEST_CASE("dates: ISO weeks and weekdays") {
  const Date d = Date::parse("2021-01-29");
  CHECK(iso_week(d).week == 4);
  CHECK(d.day_of_week() == 4);  // Friday
  CHECK(iso_week(Date::parse("2021-01-04")).week == 1);
  CHECK(iso_week(Date::parse("2021-01-03")).week == 53);
  CHECK(iso_week(Date::parse("2021-01-03")).year == 2020);
  CHECK(iso_week(Date::parse("2026-12-31")).week == 53);
  CHECK(Date::parse("2024-02-29").to_string() == "2024-02-29");
  CHECK_THROWS_AS(Date::parse("2021-02-29"), DataError);
  CHECK_THROWS_AS(Date::parse("2021/01/01"), DataError);
  CHECK(Date::parse("2021-03-01") - Date::parse("2021-02-28") == 1);
}

TEST_CASE("simulate_cohorts: records are consistent and nonnegative") {
  const SimConfig cfg = small_config(300);
  const auto users = simulate_cohorts(cfg);
  REQUIRE(users.size() == 300);
  for (const auto& u : users) {
    CHECK(u.cohort_date >= cfg.start_cohort);
    CHECK(u.cohort_date <= cfg.end_cohort);
    CHECK(u.cutoff == cfg.panel_end());
    CHECK(static_cast<std::int32_t>(u.days()) == u.cutoff - u.cohort_date + 1);
    for (std::size_t a = 0; a < u.days(); ++a) {
      const auto r = u.record(a);
      CHECK(r.date - u.cohort_date == r.age_days);
      CHECK(std::isfinite(r.value));
      CHECK(r.value >= 0.0);
    }
  }
}

TEST_CASE("simulate_cohorts: an outage with multiplier 0 zeroes the day for everyone") {
  SimConfig cfg = small_config(500);
  const Date outage = cfg.start_cohort + 70;
  cfg.outages = {{outage, 0.0}};
  for (const auto& u : simulate_cohorts(cfg)) {
    if (outage < u.cohort_date) continue;
    CHECK(u.values[static_cast<std::size_t>(outage - u.cohort_date)] == 0.0);
  }
}

TEST_CASE("simulate_cohorts: deterministic and independent of generation order") {
  const SimConfig cfg = small_config(200, 11);
  const auto a = simulate_cohorts(cfg);
  const auto b = simulate_cohorts(cfg);
  CHECK(a == b);
  for (std::size_t i = a.size(); i-- > 0;) CHECK(simulate_user(cfg, a[i].user_id) == a[i]);
  SimConfig other = cfg;
  other.seed = 12;
  CHECK(simulate_cohorts(other) != a);
}

TEST_CASE("simulate_cohorts: mean daily value matches a Monte-Carlo moment oracle") {
  SimConfig cfg = default_config(20000, 5);
  cfg.end_cohort = cfg.start_cohort;
  cfg.horizon_days = 30;  // 6e5 user-days
  cfg.weekly.fill(1.0);
  cfg.events.clear();
  cfg.outages.clear();
  cfg.age_decay_days = 0.0;
  cfg.region_log_effects.clear();
  double total = 0.0;
  std::size_t user_days = 0;
  for (const auto& u : simulate_cohorts(cfg)) {
    for (double z : u.values) total += z;
    user_days += u.days();
  }
  REQUIRE(user_days >= 100000);
  const double simulated = total / static_cast<double>(user_days);

  // Independent oracle: E[min(p0 q, 1) * k * theta(q)] with q log-normal.
  std::mt19937_64 gen(2718);
  std::lognormal_distribution<double> quality(cfg.quality_mu, cfg.quality_sigma);
  double acc = 0.0;
  const int draws = 1000000;
  for (int i = 0; i < draws; ++i) {
    const double q = quality(gen);
    acc += std::min(cfg.base_rate * q, 1.0) * cfg.amount_shape * cfg.amount_scale *
           std::pow(q, cfg.amount_quality_exponent);
  }
  const double oracle = acc / draws;
  CHECK(std::abs(simulated - oracle) / oracle < 0.03);
}

TEST_CASE("raising an event multiplier never lowers that day's purchase count") {
  SimConfig cfg = small_config(2000, 21);
  const Date day = cfg.start_cohort + 65;
  auto purchases_on = [&](double mult) {
    cfg.events = {{day, mult}};
    cfg.outages.clear();
    std::vector<int> bought;
    for (const auto& u : simulate_cohorts(cfg)) {
      bought.push_back(day >= u.cohort_date && u.values[static_cast<std::size_t>(day - u.cohort_date)] > 0.0);
    }
    return bought;
  };
  const auto low = purchases_on(1.0), mid = purchases_on(1.8), high = purchases_on(4.0);
  int n_low = 0, n_mid = 0, n_high = 0;
  for (std::size_t i = 0; i < low.size(); ++i) {
    CHECK(low[i] <= mid[i]);
    CHECK(mid[i] <= high[i]);
    n_low += low[i];
    n_mid += mid[i];
    n_high += high[i];
  }
  CHECK(n_low <= n_mid);
  CHECK(n_mid <= n_high);
  CHECK(n_high > n_low);
}

TEST_CASE("panel CSV round-trips exactly and validates input") {
  const auto users = simulate_cohorts(small_config(40));
  std::stringstream ss;
  write_panel_csv(ss, users);
  const auto back = read_panel_csv(ss);
  CHECK(back == users);

  std::stringstream bad("user_id,cohort_date,date,age_days,value,region_id\n1,2021-01-29,2021-01-29,0,-1,0\n");
  CHECK_THROWS_AS(read_panel_csv(bad), DataError);
  std::stringstream gap("user_id,cohort_date,date,age_days,value,region_id\n"
                        "1,2021-01-29,2021-01-29,0,1,0\n1,2021-01-29,2021-01-31,2,1,0\n");
  CHECK_THROWS_AS(read_panel_csv(gap), DataError);
}

TEST_CASE("sim config JSON round-trips") {
  const SimConfig cfg = small_config(10);
  const SimConfig back = config_from_json(config_to_json(cfg));
  CHECK(config_to_json(back) == config_to_json(cfg));
  CHECK(simulate_cohorts(back) == simulate_cohorts(cfg));
}

TEST_CASE("BG/NBD population: immediate-death limit gives one repeat purchase") {
  BgnbdPopulationConfig cfg;
  // slow steady buyers over a long window: everyone repeats, rarely twice in a day
  cfg.truth.r = 50.0;
  cfg.truth.alpha = 1000.0;
  cfg.observation_days = 3640;
  cfg.truth.a = 1000.0;
  cfg.truth.b = 0.001;
  cfg.n_users = 2000;
  int exactly_one_repeat = 0;
  for (const auto& u : simulate_bgnbd_population(cfg)) {
    int purchases = 0;
    for (double z : u.values) purchases += z > 0.0;
    exactly_one_repeat += purchases == 2;
  }
  CHECK(exactly_one_repeat >= 1960);
}

TEST_CASE("BG/NBD population: repeat count matches a direct Monte-Carlo oracle") {
  BgnbdPopulationConfig cfg;
  cfg.n_users = 100000;
  cfg.seed = 8;
  const auto users = simulate_bgnbd_population(cfg);
  double repeats = 0.0;
  for (const auto& u : users) {
    int purchases = 0;
    for (double z : u.values) purchases += z > 0.0;
    repeats += purchases - 1;
  }
  repeats /= static_cast<double>(users.size());

  // Continuous-time oracle of the same process with an unrelated generator.
  std::mt19937_64 gen(99);
  const auto& t = cfg.truth;
  const double horizon = static_cast<double>(cfg.observation_days) / cfg.period_days;
  std::gamma_distribution<double> rate(t.r, 1.0 / t.alpha);
  std::gamma_distribution<double> ga(t.a, 1.0), gb(t.b, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  const int draws = 1000000;
  double oracle = 0.0;
  for (int i = 0; i < draws; ++i) {
    const double lambda = rate(gen);
    const double xa = ga(gen), xb = gb(gen);
    const double p = xa / (xa + xb);
    std::exponential_distribution<double> gap(lambda);
    double time = 0.0;
    int x = 0;
    while (true) {
      time += gap(gen);
      if (time > horizon) break;
      ++x;
      if (unif(gen) < p) break;
    }
    oracle += x;
  }
  oracle /= draws;
  CHECK(std::abs(repeats - oracle) / oracle < 0.02);
  CHECK(simulate_bgnbd_population(BgnbdPopulationConfig{cfg.truth, 50, 364, 7.0, cfg.start, 8}).front() ==
        users.front());
}
