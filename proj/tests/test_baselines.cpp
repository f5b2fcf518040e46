#include <algorithm>
#include <boost/math/special_functions/hypergeometric_pFq.hpp>
#include <boost/multiprecision/cpp_bin_float.hpp>
#include <cmath>
#include <random>

#include "doctest.h"
#include "ltv/btyd.hpp"
#include "ltv/error.hpp"
#include "ltv/ridge.hpp"

using namespace ltv;
using namespace ltv::baselines;
using big = boost::multiprecision::cpp_bin_float_50;

namespace {

RfmSummary rfm(double x, double t_x, double T, double m = 1.0) { return {true, x, t_x, T, m}; }

// Direct two-term likelihood in 50-digit arithmetic.
double loglik_oracle(const BgnbdParams& p, const RfmSummary& s) {
  const big r = p.r, al = p.alpha, a = p.a, b = p.b, x = s.x;
  auto B = [](big u, big v) { return boost::multiprecision::tgamma(u) * boost::multiprecision::tgamma(v) /
                                     boost::multiprecision::tgamma(u + v); };
  const big lead = boost::multiprecision::tgamma(r + x) * boost::multiprecision::pow(al, r) /
                   boost::multiprecision::tgamma(r);
  big L = B(a, b + x) / B(a, b) * lead / boost::multiprecision::pow(al + s.T, r + x);
  if (s.x > 0) L += B(a + 1, b + x - 1) / B(a, b) * lead / boost::multiprecision::pow(al + s.t_x, r + x);
  return static_cast<double>(boost::multiprecision::log(L));
}

// Posterior of (lambda, pi) given (x, t_x, T) is a two-component mixture:
// alive at T, or died right after the last purchase. Alive draws are
// simulated forward over (T, T + h].
double expected_transactions_mc(const BgnbdParams& p, const RfmSummary& s, double h, int draws,
                                std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  const double x = s.x;
  auto lb = [](double u, double v) { return std::lgamma(u) + std::lgamma(v) - std::lgamma(u + v); };
  const double w_alive = -(p.r + x) * std::log(p.alpha + s.T) + lb(p.a, p.b + x);
  double prob_alive = 1.0;
  if (x > 0) {
    const double w_dead = -(p.r + x) * std::log(p.alpha + s.t_x) + lb(p.a + 1, p.b + x - 1);
    prob_alive = 1.0 / (1.0 + std::exp(w_dead - w_alive));
  }
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::gamma_distribution<double> rate(p.r + x, 1.0 / (p.alpha + s.T));
  std::gamma_distribution<double> ga(p.a, 1.0), gb(p.b + x, 1.0);
  double total = 0.0;
  for (int i = 0; i < draws; ++i) {
    if (unif(gen) >= prob_alive) continue;
    const double lambda = rate(gen);
    const double u = ga(gen), v = gb(gen);
    const double pi = u / (u + v);
    std::exponential_distribution<double> gap(lambda);
    double t = 0.0;
    while (true) {
      t += gap(gen);
      if (t > h) break;
      total += 1.0;
      if (unif(gen) < pi) break;
    }
  }
  return total / draws;
}

std::vector<RfmSummary> simulated_summaries(std::uint64_t seed) {
  sim::BgnbdPopulationConfig cfg;
  cfg.truth.p = 1.0;
  cfg.truth.q = 4.0;
  cfg.truth.gamma = 10.0;
  cfg.observation_days = 728;
  cfg.seed = seed;
  std::vector<RfmSummary> out;
  for (const auto& u : sim::simulate_bgnbd_population(cfg)) {
    out.push_back(rfm_summarize(u, u.cutoff).in_periods(7.0));
  }
  return out;
}

// Plain Gaussian elimination with partial pivoting.
std::vector<double> gauss_solve(std::vector<std::vector<double>> A, std::vector<double> b) {
  const std::size_t n = b.size();
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t piv = c;
    for (std::size_t r = c + 1; r < n; ++r) {
      if (std::abs(A[r][c]) > std::abs(A[piv][c])) piv = r;
    }
    std::swap(A[c], A[piv]);
    std::swap(b[c], b[piv]);
    for (std::size_t r = c + 1; r < n; ++r) {
      const double f = A[r][c] / A[c][c];
      for (std::size_t k = c; k < n; ++k) A[r][k] -= f * A[c][k];
      b[r] -= f * b[c];
    }
  }
  std::vector<double> x(n);
  for (std::size_t r = n; r-- > 0;) {
    double s = b[r];
    for (std::size_t k = r + 1; k < n; ++k) s -= A[r][k] * x[k];
    x[r] = s / A[r][r];
  }
  return x;
}

}  // namespace

TEST_CASE("rfm_summarize conventions") {
  std::vector<double> z(31, 0.0);
  z[2] = 5.0;
  z[9] = 3.0;
  const auto s = rfm_summarize(z, 30);
  CHECK(s.has_purchase);
  CHECK(s.x == 1.0);
  CHECK(s.t_x == 7.0);
  CHECK(s.T == 28.0);
  CHECK(s.mean_value == 4.0);
  z[9] = 0.0;
  const auto single = rfm_summarize(z, 30);
  CHECK(single.x == 0.0);
  CHECK(single.t_x == 0.0);
  const auto none = rfm_summarize(std::vector<double>(5, 0.0), 4);
  CHECK_FALSE(none.has_purchase);
  CHECK_THROWS_AS(rfm_summarize(z, 31), UsageError);
}

TEST_CASE("BG/NBD log-likelihood: closed form, symmetry, high-precision oracle") {
  CHECK(bgnbd_user_loglik({1, 1, 1, 1}, rfm(0, 0, 1)) == doctest::Approx(std::log(0.5)).epsilon(1e-14));

  std::mt19937_64 gen(12);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 200; ++trial) {
    const BgnbdParams p{0.05 + 3 * u(gen), 0.5 + 10 * u(gen), 0.05 + 3 * u(gen), 0.05 + 5 * u(gen)};
    const double T = 1 + 60 * u(gen);
    const double t_x = T * u(gen);
    const double x = std::floor(15 * u(gen));
    const RfmSummary s = rfm(x, x > 0 ? t_x : 0.0, T);
    const double oracle = loglik_oracle(p, s);
    CHECK(std::abs(bgnbd_user_loglik(p, s) - oracle) <= 1e-8 * std::max(1.0, std::abs(oracle)));
  }

  auto data = simulated_summaries(2);
  data.resize(500);
  const BgnbdParams p{0.3, 4.0, 0.9, 2.0};
  const double forward = bgnbd_loglik(p, data);
  std::reverse(data.begin(), data.end());
  CHECK(bgnbd_loglik(p, data) == doctest::Approx(forward).epsilon(1e-12));
}

TEST_CASE("fit_bgnbd recovers simulated parameters and is a local optimum") {
  const auto data = simulated_summaries(1);
  const BgnbdParams truth{0.25, 4.4, 0.8, 2.4};
  const auto fit = fit_bgnbd(data);
  CHECK(std::abs(fit.r / truth.r - 1) < 0.15);
  CHECK(std::abs(fit.alpha / truth.alpha - 1) < 0.15);
  CHECK(std::abs(fit.a / truth.a - 1) < 0.15);
  CHECK(std::abs(fit.b / truth.b - 1) < 0.15);

  const double best = bgnbd_loglik(fit, data);
  const auto refit = fit_bgnbd(data, fit);
  CHECK(bgnbd_loglik(refit, data) - best < 1e-6);

  const auto other = fit_bgnbd(data, {2.0, 1.0, 3.0, 0.5});
  CHECK(std::abs(bgnbd_loglik(other, data) - best) < 1e-6);
  CHECK(std::abs(other.r / fit.r - 1) < 1e-3);
  CHECK(std::abs(other.b / fit.b - 1) < 1e-3);

  for (int k = 0; k < 4; ++k) {
    for (double f : {0.9, 1.1}) {
      BgnbdParams q = fit;
      double* field[] = {&q.r, &q.alpha, &q.a, &q.b};
      *field[k] *= f;
      CHECK(bgnbd_loglik(q, data) < best);
    }
  }
}

TEST_CASE("2F1 series agrees with boost and guards non-convergence") {
  for (auto [a, b, c, z] : std::vector<std::array<double, 4>>{
           {0.25, 2.4, 2.2, 0.3}, {3.5, 4.1, 6.0, 0.8}, {1.0, 1.0, 2.0, 0.5}, {10.25, 12.4, 13.2, 0.37}}) {
    const double ref = boost::math::hypergeometric_pFq({a, b}, {c}, z);
    CHECK(hyp2f1_series(a, b, c, z) == doctest::Approx(ref).epsilon(1e-10));
  }
  CHECK_THROWS_AS(hyp2f1_series(1, 1, 1, 1.0), NumericError);
  CHECK_THROWS_AS(hyp2f1_series(1, 1, 1, 0.99999), NumericError);
}

TEST_CASE("expected transactions: zero horizon, monotone, Monte-Carlo oracle") {
  const BgnbdParams p{0.25, 4.4, 0.8, 2.4};
  const std::vector<std::array<double, 4>> grid = {
      {0, 0, 20, 4}, {2, 10, 30, 13}, {5, 38, 40, 26}, {1, 3, 52, 26}, {10, 50, 52, 13}};
  for (const auto& g : grid) {
    const RfmSummary s = rfm(g[0], g[1], g[2]);
    CHECK(bgnbd_expected_transactions(p, s, 0.0) == 0.0);
    double prev = 0.0;
    for (double h = 0.5; h <= 30; h += 0.5) {
      const double e = bgnbd_expected_transactions(p, s, h);
      CHECK(e >= prev);
      prev = e;
    }
    const double analytic = bgnbd_expected_transactions(p, s, g[3]);
    const double mc = expected_transactions_mc(p, s, g[3], 1000000, 41);
    CHECK(std::abs(analytic - mc) / mc < 0.02);
  }
  CHECK_THROWS_AS(bgnbd_expected_transactions(p, rfm(1, 1, 2), -1.0), UsageError);
}

TEST_CASE("Gamma-Gamma: recovery, limits, monotonicity") {
  const auto data = simulated_summaries(1);
  const auto gg = fit_gamma_gamma(data);
  CHECK(std::abs(gg.p / 1.0 - 1) < 0.15);
  CHECK(std::abs(gg.q / 4.0 - 1) < 0.15);
  CHECK(std::abs(gg.gamma / 10.0 - 1) < 0.15);

  const GammaGammaParams g{6.0, 4.0, 16.0};
  double prev = 0.0;
  for (double m = 0.5; m < 50; m += 0.5) {
    const double e = expected_monetary(g, rfm(3, 5, 10, m));
    CHECK(e > prev);
    prev = e;
  }
  CHECK(expected_monetary(g, rfm(1e7, 5, 10, 7.5)) == doctest::Approx(7.5).epsilon(1e-5));
  CHECK(expected_monetary(g, RfmSummary{}) == doctest::Approx(g.population_mean()));

  // heavy-tailed spend (q < 1) has no conditional mean
  std::mt19937_64 gen(5);
  std::gamma_distribution<double> nu(0.6, 1.0 / 2.0);
  std::vector<RfmSummary> heavy;
  for (int i = 0; i < 3000; ++i) {
    const double v = nu(gen);
    std::gamma_distribution<double> spend(2.0, 1.0 / v);
    const double total = spend(gen) + spend(gen) + spend(gen);
    heavy.push_back(rfm(2, 1, 2, total / 3));
  }
  CHECK_THROWS_AS(fit_gamma_gamma(heavy), FitError);
}

TEST_CASE("btyd_forecast composes its parts") {
  const BgnbdParams b{0.25, 4.4, 0.8, 2.4};
  const GammaGammaParams g{6.0, 4.0, 16.0};
  const RfmSummary s = rfm(3, 20, 30, 12.0);
  CHECK(btyd_forecast(b, g, s, 13) == bgnbd_expected_transactions(b, s, 13) * expected_monetary(g, s));
  CHECK(btyd_forecast(b, g, s, 0) == 0.0);
  RfmSummary none;
  none.T = 10;
  CHECK(btyd_forecast(b, g, none, 4) ==
        bgnbd_expected_transactions(b, none, 4) * g.population_mean());
  const auto [b2, g2] = btyd_from_json(btyd_to_json(b, g));
  CHECK(b2 == b);
  CHECK(g2 == g);
}

TEST_CASE("ridge: constant target, large penalty, elimination oracle, reordering") {
  std::mt19937_64 gen(3);
  std::normal_distribution<double> nd(0.0, 1.0);
  const std::size_t n = 40, p = 4;
  Matrix X(n, p);
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t c = 0; c < p; ++c) X(r, c) = nd(gen);
  std::vector<std::uint8_t> mask(n, 1);

  std::vector<double> c(n, 3.25);
  auto fit = ridge_fit(X, c, mask, 1, 0.0);
  CHECK(fit.intercept[0] == doctest::Approx(3.25).epsilon(1e-10));
  for (std::size_t k = 0; k < p; ++k) CHECK(std::abs(fit.coefficients(0, k)) < 1e-8);

  std::vector<double> y(n);
  double mean = 0.0;
  for (std::size_t r = 0; r < n; ++r) {
    y[r] = 2 * X(r, 0) - X(r, 2) + 0.5 + 0.1 * nd(gen);
    mean += y[r] / n;
  }
  fit = ridge_fit(X, y, mask, 1, 1e12);
  for (std::size_t k = 0; k < p; ++k) CHECK(std::abs(fit.coefficients(0, k)) < 1e-9);
  CHECK(ridge_predict(fit, X.row(0))[0] == doctest::Approx(mean).epsilon(1e-8));

  const double lambda = 0.7;
  fit = ridge_fit(X, y, mask, 1, lambda);
  std::vector<std::vector<double>> A(p + 1, std::vector<double>(p + 1, 0.0));
  std::vector<double> b(p + 1, 0.0);
  for (std::size_t r = 0; r < n; ++r) {
    std::vector<double> row = {1.0};
    for (std::size_t k = 0; k < p; ++k) row.push_back(X(r, k));
    for (std::size_t i = 0; i <= p; ++i) {
      b[i] += row[i] * y[r];
      for (std::size_t k = 0; k <= p; ++k) A[i][k] += row[i] * row[k];
    }
  }
  for (std::size_t i = 1; i <= p; ++i) A[i][i] += lambda;
  const auto sol = gauss_solve(A, b);
  CHECK(fit.intercept[0] == doctest::Approx(sol[0]).epsilon(1e-8));
  for (std::size_t k = 0; k < p; ++k) CHECK(fit.coefficients(0, k) == doctest::Approx(sol[k + 1]).epsilon(1e-8));

  Matrix Xr(n, p);
  const std::size_t perm[] = {2, 0, 3, 1};
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t k = 0; k < p; ++k) Xr(r, k) = X(r, perm[k]);
  const auto fit_r = ridge_fit(Xr, y, mask, 1, lambda);
  for (std::size_t r = 0; r < n; ++r) {
    CHECK(ridge_predict(fit_r, Xr.row(r))[0] == doctest::Approx(ridge_predict(fit, X.row(r))[0]).epsilon(1e-10));
  }

  Matrix dup(n, 2);
  for (std::size_t r = 0; r < n; ++r) dup(r, 0) = dup(r, 1) = X(r, 0);
  CHECK_THROWS_AS(ridge_fit(dup, y, mask, 1, 0.0), NumericError);
  CHECK_NOTHROW(ridge_fit(dup, y, mask, 1, 1e-3));
}

TEST_CASE("ridge lag model on a prepared panel") {
  auto c = sim::default_config(400, 6);
  c.end_cohort = c.start_cohort + 100;
  c.horizon_days = 7 * 70;
  const auto data = pipeline::prepare(sim::simulate_cohorts(c), {});
  const auto model = ridge_lag_fit(data, 1.0);
  CHECK(model.feature_names.size() == 9);
  CHECK(model.fit.coefficients.rows() == 4);
  CHECK(RidgeLagModel::from_json(model.to_json()) == model);
  for (const auto* u : data.split(pipeline::Split::test)) {
    const auto f = ridge_lag_predict(model, data, *u, u->steps.back());
    REQUIRE(f.size() == 4);
    for (double v : f) CHECK(v >= 0.0);
  }
}
