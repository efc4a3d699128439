#pragma once

#include <Eigen/Core>
#include <array>
#include <vector>

#include "delib/data_model.hpp"

namespace delib {

// ---------------------------------------------------------------------------
// Structured parameter vector. Thresholds are stored at their natural values
// (strictly increasing within each stakeholder); during optimisation the
// estimator works on an unconstrained reparameterisation (first threshold +
// log-gaps) and sigma parameters may carry a sign, which the likelihood
// ignores by construction.
// ---------------------------------------------------------------------------

struct ParameterVector {
  // thresholds[s] holds tau_{s,1} < ... < tau_{s,10}.
  std::array<Eigen::VectorXd, kStakeholders> thresholds;
  // beta(s, w): workshop stimulus effects.
  Eigen::Matrix<double, kStakeholders, kWorkshops> beta;
  // Wave fixed effects, one column set per stakeholder (base wave omitted).
  std::array<Eigen::VectorXd, kStakeholders> wave_shifts;
  // Demographic effects per stakeholder equation.
  std::array<Eigen::VectorXd, kStakeholders> demographics;

  double rho_base = 0.0;
  Eigen::VectorXd rho_terms;
  double sigma_rho = 0.0;

  double alpha_base = 0.0;
  Eigen::VectorXd alpha_terms;
  double sigma_alpha = 0.0;

  Eigen::Matrix<double, kStakeholders, 1> sigma_xi = Eigen::Matrix<double, kStakeholders, 1>::Zero();
  double sigma_eta = 0.0;

  Eigen::VectorXd calendar;  // per non-base period

  static ParameterVector zeros(const DesignMatrices& design);
};

// One individual's realised mixing values for a single simulation draw.
struct IndividualRealization {
  double rho = 0.0;
  double alpha = 0.0;
  std::array<double, kStakeholders> xi{};
  double eta = 0.0;  // sigma_eta * draw; calendar shifts are added separately
};

// ---------------------------------------------------------------------------
// Core maps
// ---------------------------------------------------------------------------

// Fraction of a workshop's stimulus lost Delta days after the workshop:
//   d = clamp(1 - exp(alpha * (1/D - 1/(D - Delta))), 0, 1)   0 <= Delta < D
//   d = 1                                                     Delta >= D
// alpha <= 0 disables reversion (d = 0). D must be positive.
double decay(double delta_days, double alpha, double horizon_days);

// rho_i = rho_base + rho_terms'x + sigma_rho * draw (individual reversion
// share); alpha_i analogous.
double individual_reversion(double rho_base, const Eigen::VectorXd& rho_terms,
                            const Eigen::VectorXd& x, double sigma_rho,
                            double draw);
double individual_alpha(double alpha_base, const Eigen::VectorXd& alpha_terms,
                        const Eigen::VectorXd& x, double sigma_alpha,
                        double draw);

// Inputs for the deterministic part of one individual's time-t predictor.
struct PredictorContext {
  std::array<int, kWorkshops> indicators{};      // I_w(t)
  std::array<double, kWorkshops> delta_days{};   // valid where I_w = 1
  Eigen::VectorXd wave_dummies;                  // length n_waves-1
  std::array<Eigen::VectorXd, kStakeholders> covariates;  // per equation
  int calendar_period = 0;                       // 0-based; 0 is the base
};

// V_{i,s,t} for all five stakeholders:
//   V_s = sum_w beta_{s,w} (I_w - rho_i d(Delta_w; alpha_i, D))
//       + wave_shifts_s' chi + demographics_s' x + xi_{i,s}
//       + eta_i + calendar[period]
// The logistic measurement error is absorbed by the link, never added here.
Eigen::Matrix<double, kStakeholders, 1> linear_predictor(
    const PredictorContext& ctx, const ParameterVector& params,
    const IndividualRealization& real, double horizon_days);

// Ordered-logit category probabilities for latent mean v and thresholds tau
// (strictly increasing, length kThresholds). Probabilities are nonnegative
// and sum to one within 1e-12.
Eigen::VectorXd ordered_probs(double v, const Eigen::VectorXd& tau);

// log P(Y = r | v, tau), computed on the log scale:
//   log P = log Lambda(b) + log Lambda(-a) + log(1 - exp(a - b))
// with a = tau_r - v, b = tau_{r+1} - v, which never cancels
// catastrophically in the tails.
double ordered_logprob(int rating, double v, const Eigen::VectorXd& tau);

}  // namespace delib
