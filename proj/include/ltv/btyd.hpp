#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"
#include "ltv/error.hpp"
#include "ltv/numeric.hpp"
#include "ltv/simulator.hpp"

namespace ltv::baselines {

// Recency/frequency/monetary summary. Times are in whatever unit the caller
// chose (days from rfm_summarize, periods after in_periods).
struct RfmSummary {
  bool has_purchase = false;
  double x = 0.0;           // repeat transactions
  double t_x = 0.0;         // last purchase - first purchase
  double T = 0.0;           // cutoff - first purchase (cutoff - cohort without purchases)
  double mean_value = 0.0;  // mean purchase-day value

  double purchases() const { return has_purchase ? x + 1.0 : 0.0; }
  RfmSummary in_periods(double period_days) const;
  bool operator==(const RfmSummary&) const = default;
};

// Purchases are days with z > 0 at ages 0..cutoff_age.
RfmSummary rfm_summarize(std::span<const double> daily, std::size_t cutoff_age);
RfmSummary rfm_summarize(const sim::UserSeries& series, Date cutoff);

struct BgnbdParams {
  double r = 1.0, alpha = 1.0, a = 1.0, b = 1.0;
  void validate() const;
  bool operator==(const BgnbdParams&) const = default;
};

struct GammaGammaParams {
  double p = 1.0, q = 2.0, gamma = 1.0;
  void validate() const;
  double population_mean() const { return p * gamma / (q - 1.0); }
  bool operator==(const GammaGammaParams&) const = default;
};

// Fitting failure; best() holds the best parameter vector found so far.
class FitError : public Error {
 public:
  FitError(const std::string& m, std::vector<double> best) : Error("fit", m), best_(std::move(best)) {}
  const std::vector<double>& best() const noexcept { return best_; }

 private:
  std::vector<double> best_;
};

// Users without a purchase are skipped; a non-finite term raises FitError
// naming the user index.
double bgnbd_user_loglik(const BgnbdParams& params, const RfmSummary& s);
double bgnbd_loglik(const BgnbdParams& params, std::span<const RfmSummary> summaries);

struct FitOptions {
  SimplexOptions simplex{0.5, 1e-6, 20000};
  int restarts = 2;
};

BgnbdParams fit_bgnbd(std::span<const RfmSummary> summaries, const BgnbdParams& init = {},
                      const FitOptions& options = {});

// Gauss 2F1 by its power series.
double hyp2f1_series(double a, double b, double c, double z);

// Expected repeat transactions in (T, T + h].
double bgnbd_expected_transactions(const BgnbdParams& params, const RfmSummary& s, double h);

double gamma_gamma_user_loglik(const GammaGammaParams& params, const RfmSummary& s);
double gamma_gamma_loglik(const GammaGammaParams& params, std::span<const RfmSummary> summaries);
GammaGammaParams fit_gamma_gamma(std::span<const RfmSummary> summaries,
                                 const GammaGammaParams& init = {}, const FitOptions& options = {});
double expected_monetary(const GammaGammaParams& params, const RfmSummary& s);

double btyd_forecast(const BgnbdParams& bgnbd, const GammaGammaParams& gg, const RfmSummary& s,
                     double horizon);

nlohmann::json btyd_to_json(const BgnbdParams& bgnbd, const GammaGammaParams& gg);
std::pair<BgnbdParams, GammaGammaParams> btyd_from_json(const nlohmann::json& j);

}  // namespace ltv::baselines
