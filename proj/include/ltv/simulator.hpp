#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "json.hpp"
#include "ltv/dates.hpp"

namespace ltv::sim {

struct DayRecord {
  Date date;
  std::int32_t age_days = 0;
  double value = 0.0;
};

// One user's daily value stream, consecutive from the cohort date through the
// observation cutoff (inclusive).
struct UserSeries {
  std::uint64_t user_id = 0;
  Date cohort_date;
  Date cutoff;
  std::vector<double> values;        // values[a] is z at age a
  std::vector<std::int32_t> categories;  // static ids; [0] is the region

  std::size_t days() const noexcept { return values.size(); }
  Date date_at(std::size_t age) const { return cohort_date + static_cast<std::int32_t>(age); }
  DayRecord record(std::size_t age) const {
    return {date_at(age), static_cast<std::int32_t>(age), values[age]};
  }
  bool operator==(const UserSeries&) const = default;
};

struct CalendarEffect {
  Date date;
  double multiplier = 1.0;
};

struct SimConfig {
  std::size_t n_users = 1000;
  Date start_cohort = Date::from_ymd(2021, 1, 4);
  Date end_cohort = Date::from_ymd(2021, 6, 27);
  std::size_t horizon_days = 364;  // panel length from start_cohort
  double base_rate = 0.08;          // p0, daily purchase probability
  double quality_mu = 0.0;          // log-normal user quality
  double quality_sigma = 0.7;
  double cohort_drift = 0.0;        // added to log quality per day after start_cohort
  double age_decay_days = 45.0;     // tau; <= 0 disables age decay
  std::array<double, 7> weekly = {0.9, 0.9, 0.9, 0.95, 1.05, 1.25, 1.2};  // Monday first
  std::vector<CalendarEffect> events;   // multiplier >= 1
  std::vector<CalendarEffect> outages;  // multiplier in [0, 1)
  double amount_shape = 2.0;            // gamma shape k
  double amount_scale = 5.0;            // scale at quality 1
  double amount_quality_exponent = 0.5; // theta_u = amount_scale * q^exponent
  std::size_t n_regions = 8;
  std::vector<double> region_log_effects;  // per region, added to log quality
  std::uint64_t seed = 1;
  std::uint64_t first_user_id = 0;

  Date panel_end() const { return start_cohort + static_cast<std::int32_t>(horizon_days) - 1; }
  void validate() const;
};

// Defaults with one event (x1.8) and one outage (x0) placed at seeded random
// days inside every 91-day quarter of the panel.
SimConfig default_config(std::size_t n_users, std::uint64_t seed);
std::vector<CalendarEffect> quarterly_effects(Date start, std::size_t days, double multiplier,
                                              std::uint64_t seed, std::uint64_t tag);

// Per-user quality draw, exposed for oracles and diagnostics.
struct UserDraw {
  Date cohort_date;
  std::int32_t region = 0;
  double quality = 1.0;
};
UserDraw draw_user(const SimConfig& cfg, std::uint64_t user_id);

// Multiplicative-hazard panel: daily purchase probability
// clamp(p0 * q_u * exp(-age/tau) * weekly(dow) * event(date) * outage(date), 0, 1)
// and gamma(k, theta_u) amounts. Each user draws from its own stream.
std::vector<UserSeries> simulate_cohorts(const SimConfig& cfg);
UserSeries simulate_user(const SimConfig& cfg, std::uint64_t user_id);

struct BgnbdTruth {
  double r = 0.25, alpha = 4.4, a = 0.8, b = 2.4;   // per period
  double p = 6.0, q = 4.0, gamma = 16.0;             // Gamma-Gamma spend
};

struct BgnbdPopulationConfig {
  BgnbdTruth truth;
  std::size_t n_users = 5000;
  std::size_t observation_days = 364;  // T in days from the first purchase
  double period_days = 7.0;
  Date start = Date::from_ymd(2021, 1, 4);
  std::uint64_t seed = 1;
};

// BG/NBD purchasing with Gamma-Gamma spend: lambda ~ Gamma(r, rate alpha),
// dropout pi ~ Beta(a, b) after each repeat purchase, exponential inter-purchase
// times; same-day purchases merge into one transaction of summed value.
// Every user's first purchase is on `start`.
std::vector<UserSeries> simulate_bgnbd_population(const BgnbdPopulationConfig& cfg);

// Canonical user-day CSV: user_id,cohort_date,date,age_days,value,region_id
void write_panel_csv(std::ostream& out, const std::vector<UserSeries>& users);
std::vector<UserSeries> read_panel_csv(std::istream& in);

nlohmann::json config_to_json(const SimConfig& cfg);
SimConfig config_from_json(const nlohmann::json& j);

}  // namespace ltv::sim
