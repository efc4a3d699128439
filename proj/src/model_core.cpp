#include "delib/model_core.hpp"

#include <cmath>
#include <stdexcept>

#include "delib/numeric.hpp"

namespace delib {

ParameterVector ParameterVector::zeros(const DesignMatrices& design) {
  ParameterVector p;
  for (int s = 0; s < kStakeholders; ++s) {
    // Placeholder thresholds must still be strictly increasing.
    p.thresholds[s] = Eigen::VectorXd::LinSpaced(kThresholds, -4.5, 4.5);
    p.wave_shifts[s] = Eigen::VectorXd::Zero(design.wave_dummies.cols());
    p.demographics[s] = Eigen::VectorXd::Zero(design.eq_covariates[s].cols());
  }
  p.beta.setZero();
  p.rho_terms = Eigen::VectorXd::Zero(design.reversion_covariates.cols());
  p.alpha_terms = Eigen::VectorXd::Zero(design.alpha_covariates.cols());
  p.calendar = Eigen::VectorXd::Zero(std::max(0, design.n_periods - 1));
  return p;
}

double decay(double delta_days, double alpha, double horizon_days) {
  if (!(horizon_days > 0.0)) {
    throw std::invalid_argument("decay: horizon D must be positive");
  }
  if (delta_days < 0.0) {
    throw std::invalid_argument("decay: elapsed days must be nonnegative");
  }
  if (alpha <= 0.0) return 0.0;          // reversion switched off
  if (delta_days >= horizon_days) return 1.0;  // fully reverted at the horizon
  const double c = 1.0 / horizon_days - 1.0 / (horizon_days - delta_days);
  const double d = 1.0 - std::exp(alpha * c);  // c <= 0, so d in [0, 1)
  return std::min(1.0, std::max(0.0, d));
}

double individual_reversion(double rho_base, const Eigen::VectorXd& rho_terms,
                            const Eigen::VectorXd& x, double sigma_rho,
                            double draw) {
  if (rho_terms.size() != x.size()) {
    throw std::invalid_argument(
        "individual_reversion: covariate/term length mismatch");
  }
  return rho_base + rho_terms.dot(x) + sigma_rho * draw;
}

double individual_alpha(double alpha_base, const Eigen::VectorXd& alpha_terms,
                        const Eigen::VectorXd& x, double sigma_alpha,
                        double draw) {
  if (alpha_terms.size() != x.size()) {
    throw std::invalid_argument(
        "individual_alpha: covariate/term length mismatch");
  }
  return alpha_base + alpha_terms.dot(x) + sigma_alpha * draw;
}

Eigen::Matrix<double, kStakeholders, 1> linear_predictor(
    const PredictorContext& ctx, const ParameterVector& params,
    const IndividualRealization& real, double horizon_days) {
  if (ctx.calendar_period < 0 ||
      (ctx.calendar_period > 0 &&
       ctx.calendar_period > params.calendar.size())) {
    throw std::invalid_argument("linear_predictor: calendar period out of range");
  }
  const double common =
      real.eta +
      (ctx.calendar_period > 0 ? params.calendar[ctx.calendar_period - 1] : 0.0);

  Eigen::Matrix<double, kStakeholders, 1> v;
  for (int s = 0; s < kStakeholders; ++s) {
    if (params.wave_shifts[s].size() != ctx.wave_dummies.size() ||
        params.demographics[s].size() != ctx.covariates[s].size()) {
      throw std::invalid_argument(
          "linear_predictor: design row does not match parameter sizes");
    }
    double acc = common + real.xi[s];
    acc += params.wave_shifts[s].dot(ctx.wave_dummies);
    acc += params.demographics[s].dot(ctx.covariates[s]);
    for (int w = 0; w < kWorkshops; ++w) {
      if (!ctx.indicators[w]) continue;
      const double d = decay(ctx.delta_days[w], real.alpha, horizon_days);
      acc += params.beta(s, w) * (1.0 - real.rho * d);
    }
    v[s] = acc;
  }
  return v;
}

Eigen::VectorXd ordered_probs(double v, const Eigen::VectorXd& tau) {
  const int k = int(tau.size());
  if (k < 1) throw std::invalid_argument("ordered_probs: empty thresholds");
  for (int j = 1; j < k; ++j) {
    if (!(tau[j] > tau[j - 1])) {
      throw std::invalid_argument(
          "ordered_probs: thresholds must be strictly increasing");
    }
  }
  Eigen::VectorXd probs(k + 1);
  double prev = 0.0;  // Lambda(-inf)
  for (int j = 0; j < k; ++j) {
    const double cum = logistic(tau[j] - v);
    probs[j] = std::max(0.0, cum - prev);
    prev = cum;
  }
  probs[k] = std::max(0.0, 1.0 - prev);
  return probs;
}

double ordered_logprob(int rating, double v, const Eigen::VectorXd& tau) {
  const int k = int(tau.size());
  if (rating < 0 || rating > k) {
    throw std::invalid_argument("ordered_logprob: rating out of range");
  }
  if (rating == 0) return log_logistic(tau[0] - v);
  if (rating == k) return log_logistic(v - tau[k - 1]);
  const double a = tau[rating - 1] - v;
  const double b = tau[rating] - v;
  if (!(b > a)) {
    throw std::invalid_argument(
        "ordered_logprob: thresholds must be strictly increasing");
  }
  return log_logistic(b) + log_logistic(-a) + log1mexp(a - b);
}

}  // namespace delib
