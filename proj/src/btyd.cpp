#include "ltv/btyd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ltv::baselines {

namespace {

double lbeta(double a, double b) { return std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b); }

double log_add(double u, double v) {
  const double hi = std::max(u, v);
  if (hi == -std::numeric_limits<double>::infinity()) return hi;
  return hi + std::log(std::exp(u - hi) + std::exp(v - hi));
}

constexpr double kRejected = 1e300;

}  // namespace

RfmSummary RfmSummary::in_periods(double period_days) const {
  if (!(period_days > 0.0)) throw UsageError("period length must be > 0");
  RfmSummary out = *this;
  out.t_x = t_x / period_days;
  out.T = T / period_days;
  return out;
}

RfmSummary rfm_summarize(std::span<const double> daily, std::size_t cutoff_age) {
  if (cutoff_age >= daily.size()) {
    throw UsageError("rfm cutoff age " + std::to_string(cutoff_age) + " outside a series of " +
                     std::to_string(daily.size()) + " days");
  }
  RfmSummary s;
  std::size_t first = 0, last = 0, count = 0;
  double total = 0.0;
  for (std::size_t a = 0; a <= cutoff_age; ++a) {
    const double z = daily[a];
    if (!(z >= 0.0) || !std::isfinite(z)) throw DataError("negative or non-finite value at age " + std::to_string(a));
    if (z > 0.0) {
      if (count == 0) first = a;
      last = a;
      ++count;
      total += z;
    }
  }
  if (count == 0) {
    s.T = static_cast<double>(cutoff_age);
    return s;
  }
  s.has_purchase = true;
  s.x = static_cast<double>(count - 1);
  s.t_x = static_cast<double>(last - first);
  s.T = static_cast<double>(cutoff_age - first);
  s.mean_value = total / static_cast<double>(count);
  return s;
}

RfmSummary rfm_summarize(const sim::UserSeries& series, Date cutoff) {
  const std::int32_t age = cutoff - series.cohort_date;
  if (age < 0) throw UsageError("rfm cutoff precedes the cohort date");
  return rfm_summarize(series.values, static_cast<std::size_t>(age));
}

void BgnbdParams::validate() const {
  for (double v : {r, alpha, a, b}) {
    if (!(v > 0.0) || !std::isfinite(v)) throw UsageError("BG/NBD parameters must be finite and > 0");
  }
}

void GammaGammaParams::validate() const {
  for (double v : {p, q, gamma}) {
    if (!(v > 0.0) || !std::isfinite(v)) throw UsageError("Gamma-Gamma parameters must be finite and > 0");
  }
}

double bgnbd_user_loglik(const BgnbdParams& pr, const RfmSummary& s) {
  if (!s.has_purchase) return 0.0;
  const double x = s.x;
  const double common = std::lgamma(pr.r + x) - std::lgamma(pr.r) + pr.r * std::log(pr.alpha) - lbeta(pr.a, pr.b);
  const double alive = lbeta(pr.a, pr.b + x) - (pr.r + x) * std::log(pr.alpha + s.T);
  if (x == 0.0) return common + alive;
  const double died = lbeta(pr.a + 1.0, pr.b + x - 1.0) - (pr.r + x) * std::log(pr.alpha + s.t_x);
  return common + log_add(alive, died);
}

double bgnbd_loglik(const BgnbdParams& params, std::span<const RfmSummary> summaries) {
  params.validate();
  double total = 0.0;
  for (std::size_t i = 0; i < summaries.size(); ++i) {
    const double ll = bgnbd_user_loglik(params, summaries[i]);
    if (!std::isfinite(ll)) {
      throw FitError("non-finite BG/NBD log-likelihood at user " + std::to_string(i),
                     {params.r, params.alpha, params.a, params.b});
    }
    total += ll;
  }
  return total;
}

namespace {

// Repeated Nelder-Mead in log-parameter space; restarts shake off premature
// collapse of the simplex on flat ridges.
Vector fit_log_params(const ScalarFunction& objective, Vector start, const FitOptions& options,
                      const char* what) {
  SimplexResult best;
  best.x = start;
  best.value = objective(start);
  bool converged = false;
  for (int round = 0; round <= options.restarts; ++round) {
    const SimplexResult res = minimize_simplex(objective, best.x, options.simplex);
    const bool improved = res.value < best.value - 1e-9;
    if (res.value <= best.value) best = res;
    converged = res.converged;
    if (!converged) break;
    if (round > 0 && !improved) break;
  }
  if (!converged || !(best.value < kRejected)) {
    Vector params(best.x.size());
    std::transform(best.x.begin(), best.x.end(), params.begin(), [](double v) { return std::exp(v); });
    throw FitError(std::string(what) + " fit did not converge", params);
  }
  return best.x;
}

}  // namespace

BgnbdParams fit_bgnbd(std::span<const RfmSummary> summaries, const BgnbdParams& init,
                      const FitOptions& options) {
  init.validate();
  const auto objective = [&](std::span<const double> lp) {
    for (double v : lp) {
      if (std::abs(v) > 30.0) return kRejected;
    }
    const BgnbdParams p{std::exp(lp[0]), std::exp(lp[1]), std::exp(lp[2]), std::exp(lp[3])};
    try {
      return -bgnbd_loglik(p, summaries);
    } catch (const FitError&) {
      return kRejected;
    }
  };
  const Vector lp = fit_log_params(
      objective, {std::log(init.r), std::log(init.alpha), std::log(init.a), std::log(init.b)}, options,
      "BG/NBD");
  return {std::exp(lp[0]), std::exp(lp[1]), std::exp(lp[2]), std::exp(lp[3])};
}

double hyp2f1_series(double a, double b, double c, double z) {
  if (!(std::abs(z) < 1.0)) throw NumericError("2F1 series needs |z| < 1");
  double term = 1.0, sum = 1.0;
  for (int n = 0;; ++n) {
    if (n > 100000) throw NumericError("2F1 series did not converge within 1e5 terms");
    term *= (a + n) * (b + n) / ((c + n) * (n + 1.0)) * z;
    sum += term;
    if (std::abs(term) < 1e-12 * std::abs(sum)) break;
  }
  if (!std::isfinite(sum)) throw NumericError("2F1 series overflowed");
  return sum;
}

double bgnbd_expected_transactions(const BgnbdParams& pr, const RfmSummary& s, double h) {
  pr.validate();
  if (!(h >= 0.0)) throw UsageError("horizon must be >= 0");
  if (h == 0.0) return 0.0;
  const double x = s.has_purchase ? s.x : 0.0;
  // the closed form has a removable singularity at a = 1
  const double a = std::abs(pr.a - 1.0) < 1e-7 ? 1.0 + 1e-7 : pr.a;
  const double z = h / (pr.alpha + s.T + h);
  const double f = hyp2f1_series(pr.r + x, pr.b + x, a + pr.b + x - 1.0, z);
  const double shrink = std::pow((pr.alpha + s.T) / (pr.alpha + s.T + h), pr.r + x);
  double value = (a + pr.b + x - 1.0) / (a - 1.0) * (1.0 - shrink * f);
  if (x > 0.0) {
    value /= 1.0 + a / (pr.b + x - 1.0) * std::pow((pr.alpha + s.T) / (pr.alpha + s.t_x), pr.r + x);
  }
  return std::max(value, 0.0);
}

double gamma_gamma_user_loglik(const GammaGammaParams& g, const RfmSummary& s) {
  if (!s.has_purchase) return 0.0;
  const double n = s.purchases();
  const double m = s.mean_value;
  return std::lgamma(g.p * n + g.q) - std::lgamma(g.p * n) - std::lgamma(g.q) + g.q * std::log(g.gamma) +
         (g.p * n - 1.0) * std::log(m) + g.p * n * std::log(n) - (g.p * n + g.q) * std::log(g.gamma + m * n);
}

double gamma_gamma_loglik(const GammaGammaParams& params, std::span<const RfmSummary> summaries) {
  params.validate();
  double total = 0.0;
  for (std::size_t i = 0; i < summaries.size(); ++i) {
    const double ll = gamma_gamma_user_loglik(params, summaries[i]);
    if (!std::isfinite(ll)) {
      throw FitError("non-finite Gamma-Gamma log-likelihood at user " + std::to_string(i),
                     {params.p, params.q, params.gamma});
    }
    total += ll;
  }
  return total;
}

GammaGammaParams fit_gamma_gamma(std::span<const RfmSummary> summaries, const GammaGammaParams& init,
                                 const FitOptions& options) {
  init.validate();
  std::vector<RfmSummary> repeaters;
  for (const auto& s : summaries) {
    if (s.has_purchase && s.x >= 1.0) repeaters.push_back(s);
  }
  if (repeaters.empty()) throw UsageError("Gamma-Gamma fit needs users with repeat purchases");
  const auto objective = [&](std::span<const double> lp) {
    for (double v : lp) {
      if (std::abs(v) > 30.0) return kRejected;
    }
    try {
      return -gamma_gamma_loglik({std::exp(lp[0]), std::exp(lp[1]), std::exp(lp[2])}, repeaters);
    } catch (const FitError&) {
      return kRejected;
    }
  };
  const Vector lp = fit_log_params(objective, {std::log(init.p), std::log(init.q), std::log(init.gamma)},
                                   options, "Gamma-Gamma");
  const GammaGammaParams out{std::exp(lp[0]), std::exp(lp[1]), std::exp(lp[2])};
  if (!(out.q > 1.0)) {
    throw FitError("Gamma-Gamma optimum has q <= 1, conditional mean undefined", {out.p, out.q, out.gamma});
  }
  return out;
}

double expected_monetary(const GammaGammaParams& g, const RfmSummary& s) {
  g.validate();
  if (!(g.q > 1.0)) throw UsageError("Gamma-Gamma mean needs q > 1");
  if (!s.has_purchase) return g.population_mean();
  const double n = s.purchases();
  return (g.gamma + s.mean_value * n) * g.p / (g.p * n + g.q - 1.0);
}

double btyd_forecast(const BgnbdParams& bgnbd, const GammaGammaParams& gg, const RfmSummary& s,
                     double horizon) {
  return bgnbd_expected_transactions(bgnbd, s, horizon) * expected_monetary(gg, s);
}

nlohmann::json btyd_to_json(const BgnbdParams& b, const GammaGammaParams& g) {
  return {{"format", "ltv-btyd"},
          {"version", 1},
          {"bgnbd", {{"r", b.r}, {"alpha", b.alpha}, {"a", b.a}, {"b", b.b}}},
          {"gamma_gamma", {{"p", g.p}, {"q", g.q}, {"gamma", g.gamma}}}};
}

std::pair<BgnbdParams, GammaGammaParams> btyd_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "ltv-btyd" || j.value("version", 0) != 1) {
    throw DataError("not an ltv-btyd v1 document");
  }
  try {
    const auto& b = j.at("bgnbd");
    const auto& g = j.at("gamma_gamma");
    BgnbdParams bp{b.at("r").get<double>(), b.at("alpha").get<double>(), b.at("a").get<double>(),
                   b.at("b").get<double>()};
    GammaGammaParams gp{g.at("p").get<double>(), g.at("q").get<double>(), g.at("gamma").get<double>()};
    bp.validate();
    gp.validate();
    return {bp, gp};
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed ltv-btyd document: ") + e.what());
  }
}

}  // namespace ltv::baselines
