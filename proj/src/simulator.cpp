#include "ltv/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <ostream>
#include <unordered_map>

#include "ltv/error.hpp"
#include "ltv/rng.hpp"
#include "ltv/text.hpp"

namespace ltv::sim {

namespace {

constexpr std::uint64_t kTagPurchase = 1;
constexpr std::uint64_t kTagAmount = 2;

std::unordered_map<std::int32_t, double> effect_map(const SimConfig& cfg) {
  std::unordered_map<std::int32_t, double> m;
  for (const auto* list : {&cfg.events, &cfg.outages}) {
    for (const auto& e : *list) {
      auto [it, inserted] = m.emplace(e.date.days_since_epoch(), e.multiplier);
      if (!inserted) it->second *= e.multiplier;
    }
  }
  return m;
}

UserSeries simulate_user_with(const SimConfig& cfg,
                              const std::unordered_map<std::int32_t, double>& effects,
                              std::uint64_t user_id) {
  const UserDraw draw = draw_user(cfg, user_id);
  UserSeries u;
  u.user_id = user_id;
  u.cohort_date = draw.cohort_date;
  u.cutoff = cfg.panel_end();
  u.categories = {draw.region};
  const std::int32_t n_days = u.cutoff - u.cohort_date + 1;
  u.values.assign(static_cast<std::size_t>(std::max(n_days, 0)), 0.0);

  RngStream base(cfg.seed, user_id);
  RngStream purchase = base.substream(kTagPurchase);
  RngStream amount = base.substream(kTagAmount);
  const double theta = cfg.amount_scale * std::pow(draw.quality, cfg.amount_quality_exponent);
  for (std::size_t age = 0; age < u.values.size(); ++age) {
    const Date d = u.date_at(age);
    double p = cfg.base_rate * draw.quality * cfg.weekly[static_cast<std::size_t>(d.day_of_week())];
    if (cfg.age_decay_days > 0.0) p *= std::exp(-static_cast<double>(age) / cfg.age_decay_days);
    if (const auto it = effects.find(d.days_since_epoch()); it != effects.end()) p *= it->second;
    p = std::clamp(p, 0.0, 1.0);
    // One uniform per day whether or not a purchase happens, so the purchase
    // decision on any day is independent of the other days' probabilities.
    if (purchase.uniform() < p) u.values[age] = amount.gamma(cfg.amount_shape, theta);
  }
  return u;
}

}  // namespace

void SimConfig::validate() const {
  if (n_users == 0) throw UsageError("sim config: n_users must be >= 1");
  if (end_cohort < start_cohort) throw UsageError("sim config: cohort range is empty");
  if (panel_end() < end_cohort) throw UsageError("sim config: panel ends before the last cohort");
  if (!(base_rate > 0.0 && base_rate < 1.0)) throw UsageError("sim config: base_rate must lie in (0, 1)");
  if (!(quality_sigma >= 0.0)) throw UsageError("sim config: quality_sigma must be >= 0");
  for (double w : weekly)
    if (!(w >= 0.0)) throw UsageError("sim config: weekly multipliers must be >= 0");
  for (const auto& e : events)
    if (!(e.multiplier >= 1.0)) throw UsageError("sim config: event multipliers must be >= 1");
  for (const auto& o : outages)
    if (!(o.multiplier >= 0.0 && o.multiplier < 1.0))
      throw UsageError("sim config: outage multipliers must lie in [0, 1)");
  if (!(amount_shape > 0.0 && amount_scale > 0.0)) throw UsageError("sim config: gamma amount parameters must be > 0");
  if (n_regions == 0) throw UsageError("sim config: n_regions must be >= 1");
  if (!region_log_effects.empty() && region_log_effects.size() != n_regions) {
    throw UsageError("sim config: region_log_effects needs one entry per region");
  }
}

std::vector<CalendarEffect> quarterly_effects(Date start, std::size_t days, double multiplier,
                                              std::uint64_t seed, std::uint64_t tag) {
  std::vector<CalendarEffect> out;
  RngStream rng(seed, mix64(0xca1e0da7ULL, tag));
  for (std::size_t q0 = 0; q0 + 91 <= days; q0 += 91) {
    out.push_back({start + static_cast<std::int32_t>(q0 + rng.below(91)), multiplier});
  }
  return out;
}

SimConfig default_config(std::size_t n_users, std::uint64_t seed) {
  SimConfig c;
  c.n_users = n_users;
  c.seed = seed;
  c.region_log_effects = {-0.4, -0.25, -0.1, 0.0, 0.05, 0.15, 0.25, 0.4};
  c.events = quarterly_effects(c.start_cohort, c.horizon_days, 1.8, seed, 1);
  c.outages = quarterly_effects(c.start_cohort, c.horizon_days, 0.0, seed, 2);
  return c;
}

UserDraw draw_user(const SimConfig& cfg, std::uint64_t user_id) {
  RngStream rng(cfg.seed, user_id);
  UserDraw d;
  const auto span = static_cast<std::uint64_t>(cfg.end_cohort - cfg.start_cohort + 1);
  const auto offset = static_cast<std::int32_t>(rng.below(span));
  d.cohort_date = cfg.start_cohort + offset;
  d.region = static_cast<std::int32_t>(rng.below(cfg.n_regions));
  double log_q = cfg.quality_mu + cfg.cohort_drift * offset;
  if (!cfg.region_log_effects.empty()) log_q += cfg.region_log_effects[static_cast<std::size_t>(d.region)];
  log_q += cfg.quality_sigma * rng.normal();
  d.quality = std::exp(log_q);
  return d;
}

UserSeries simulate_user(const SimConfig& cfg, std::uint64_t user_id) {
  cfg.validate();
  return simulate_user_with(cfg, effect_map(cfg), user_id);
}

std::vector<UserSeries> simulate_cohorts(const SimConfig& cfg) {
  cfg.validate();
  const auto effects = effect_map(cfg);
  std::vector<UserSeries> users;
  users.reserve(cfg.n_users);
  for (std::size_t i = 0; i < cfg.n_users; ++i) {
    users.push_back(simulate_user_with(cfg, effects, cfg.first_user_id + i));
  }
  return users;
}

std::vector<UserSeries> simulate_bgnbd_population(const BgnbdPopulationConfig& cfg) {
  const auto& t = cfg.truth;
  for (double v : {t.r, t.alpha, t.a, t.b, t.p, t.q, t.gamma, cfg.period_days}) {
    if (!(v > 0.0)) throw UsageError("BG/NBD population parameters must all be > 0");
  }
  const double horizon = static_cast<double>(cfg.observation_days) / cfg.period_days;
  std::vector<UserSeries> users;
  users.reserve(cfg.n_users);
  for (std::size_t i = 0; i < cfg.n_users; ++i) {
    RngStream rng(cfg.seed, i);
    const double lambda = rng.gamma(t.r, 1.0 / t.alpha);
    const double dropout = rng.beta(t.a, t.b);
    const double nu = rng.gamma(t.q, 1.0 / t.gamma);
    UserSeries u;
    u.user_id = i;
    u.cohort_date = cfg.start;
    u.cutoff = cfg.start + static_cast<std::int32_t>(cfg.observation_days);
    u.values.assign(cfg.observation_days + 1, 0.0);
    u.categories = {0};
    u.values[0] = rng.gamma(t.p, 1.0 / nu);
    double time = 0.0;
    while (true) {
      time += rng.exponential(lambda);
      if (time > horizon) break;
      const auto day = static_cast<std::size_t>(std::floor(time * cfg.period_days));
      u.values[std::min(day, cfg.observation_days)] += rng.gamma(t.p, 1.0 / nu);
      if (rng.uniform() < dropout) break;
    }
    users.push_back(std::move(u));
  }
  return users;
}

void write_panel_csv(std::ostream& out, const std::vector<UserSeries>& users) {
  out << "user_id,cohort_date,date,age_days,value,region_id\n";
  for (const auto& u : users) {
    const std::string cohort = u.cohort_date.to_string();
    const std::string region = u.categories.empty() ? "0" : std::to_string(u.categories[0]);
    for (std::size_t a = 0; a < u.values.size(); ++a) {
      out << u.user_id << ',' << cohort << ',' << u.date_at(a).to_string() << ',' << a << ','
          << text::format_double(u.values[a]) << ',' << region << '\n';
    }
  }
}

std::vector<UserSeries> read_panel_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("panel CSV is empty");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "user_id,cohort_date,date,age_days,value,region_id") {
    throw DataError("panel CSV header mismatch: '" + line + "'");
  }
  std::vector<UserSeries> users;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto f = text::split(line, ',');
    const std::string where = "panel CSV line " + std::to_string(line_no);
    if (f.size() != 6) throw DataError(where + ": expected 6 columns");
    const auto id = text::parse_int<std::uint64_t>(f[0], where);
    const Date cohort = Date::parse(f[1]);
    const Date date = Date::parse(f[2]);
    const auto age = text::parse_int<std::int32_t>(f[3], where);
    const double value = text::parse_double(f[4], where);
    const auto region = text::parse_int<std::int32_t>(f[5], where);
    if (!std::isfinite(value) || value < 0.0) throw DataError(where + ": value must be finite and >= 0");
    if (date - cohort != age) throw DataError(where + ": age_days disagrees with dates");
    if (users.empty() || users.back().user_id != id) {
      if (age != 0) throw DataError(where + ": user series must start at age 0");
      UserSeries u;
      u.user_id = id;
      u.cohort_date = cohort;
      u.categories = {region};
      users.push_back(std::move(u));
    }
    UserSeries& u = users.back();
    if (u.cohort_date != cohort || static_cast<std::size_t>(age) != u.values.size()) {
      throw DataError(where + ": records for a user must be contiguous and consecutive");
    }
    u.values.push_back(value);
    u.cutoff = date;
  }
  return users;
}

nlohmann::json config_to_json(const SimConfig& c) {
  auto effects = [](const std::vector<CalendarEffect>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (const auto& e : v) a.push_back({{"date", e.date.to_string()}, {"multiplier", e.multiplier}});
    return a;
  };
  return {{"format", "ltv-sim-config"},
          {"version", 1},
          {"n_users", c.n_users},
          {"start_cohort", c.start_cohort.to_string()},
          {"end_cohort", c.end_cohort.to_string()},
          {"horizon_days", c.horizon_days},
          {"base_rate", c.base_rate},
          {"quality_mu", c.quality_mu},
          {"quality_sigma", c.quality_sigma},
          {"cohort_drift", c.cohort_drift},
          {"age_decay_days", c.age_decay_days},
          {"weekly", c.weekly},
          {"events", effects(c.events)},
          {"outages", effects(c.outages)},
          {"amount_shape", c.amount_shape},
          {"amount_scale", c.amount_scale},
          {"amount_quality_exponent", c.amount_quality_exponent},
          {"n_regions", c.n_regions},
          {"region_log_effects", c.region_log_effects},
          {"seed", c.seed},
          {"first_user_id", c.first_user_id}};
}

namespace {

SimConfig parse_config(const nlohmann::json& j) {
  // json would silently wrap a negative count into a huge unsigned value
  for (const char* key : {"seed", "n_users", "horizon_days", "n_regions", "first_user_id"}) {
    if (j.contains(key) && !j.at(key).is_number_unsigned()) {
      throw UsageError(std::string("sim config: ") + key + " must be a nonnegative integer");
    }
  }
  const std::uint64_t seed = j.value("seed", std::uint64_t{1});
  const std::size_t n_users = j.value("n_users", std::size_t{1000});
  SimConfig c = default_config(n_users, seed);
  auto date = [&](const char* key, Date fallback) {
    return j.contains(key) ? Date::parse(j.at(key).get<std::string>()) : fallback;
  };
  c.start_cohort = date("start_cohort", c.start_cohort);
  c.end_cohort = date("end_cohort", c.end_cohort);
  c.horizon_days = j.value("horizon_days", c.horizon_days);
  c.base_rate = j.value("base_rate", c.base_rate);
  c.quality_mu = j.value("quality_mu", c.quality_mu);
  c.quality_sigma = j.value("quality_sigma", c.quality_sigma);
  c.cohort_drift = j.value("cohort_drift", c.cohort_drift);
  c.age_decay_days = j.value("age_decay_days", c.age_decay_days);
  if (j.contains("weekly")) c.weekly = j.at("weekly").get<std::array<double, 7>>();
  c.amount_shape = j.value("amount_shape", c.amount_shape);
  c.amount_scale = j.value("amount_scale", c.amount_scale);
  c.amount_quality_exponent = j.value("amount_quality_exponent", c.amount_quality_exponent);
  c.n_regions = j.value("n_regions", c.n_regions);
  if (j.contains("region_log_effects")) {
    c.region_log_effects = j.at("region_log_effects").get<std::vector<double>>();
  } else if (c.n_regions != c.region_log_effects.size()) {
    c.region_log_effects.clear();
  }
  c.first_user_id = j.value("first_user_id", c.first_user_id);
  auto effects = [&](const char* key, double mult, std::uint64_t tag) {
    if (j.contains(key)) {
      std::vector<CalendarEffect> v;
      for (const auto& e : j.at(key)) {
        v.push_back({Date::parse(e.at("date").get<std::string>()), e.at("multiplier").get<double>()});
      }
      return v;
    }
    return quarterly_effects(c.start_cohort, c.horizon_days, mult, seed, tag);
  };
  c.events = effects("events", 1.8, 1);
  c.outages = effects("outages", 0.0, 2);
  c.validate();
  return c;
}

}  // namespace

SimConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw UsageError("sim config must be a JSON object");
  try {
    return parse_config(j);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("malformed sim config: ") + e.what());
  }
}

}  // namespace ltv::sim
