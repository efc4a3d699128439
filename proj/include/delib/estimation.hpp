#pragma once

#include <Eigen/Core>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "delib/data_model.hpp"
#include "delib/draws.hpp"
#include "delib/model_core.hpp"

namespace delib {

// Draw dimensions consumed per (individual, draw): rho, alpha, five xi's,
// eta. Always generated in full so that differently configured models share
// bit-identical draw streams.
inline constexpr int kDrawRho = 0;
inline constexpr int kDrawAlpha = 1;
inline constexpr int kDrawXi0 = 2;
inline constexpr int kDrawEta = 7;
inline constexpr int kDrawDimensions = 8;

// ---------------------------------------------------------------------------
// Free-parameter layout. The optimiser works on an unconstrained vector:
// thresholds become (tau_1, log gaps), everything else enters one-to-one.
// Sigma parameters are searched with a free sign and reported as |sigma|.
// ---------------------------------------------------------------------------

struct ParameterLayout {
  std::vector<std::string> names;  // reported-space labels, length n_free
  int n_free = 0;

  std::array<int, kStakeholders> tau_offset{};
  int beta_offset = 0;  // s-major, workshop fastest
  std::array<int, kStakeholders> wave_offset{};
  int n_wave_terms = 0;
  std::array<int, kStakeholders> gamma_offset{};
  std::array<int, kStakeholders> n_gamma{};
  int rho_offset = -1;  // base; terms follow contiguously
  int n_rho_terms = 0;
  int sigma_rho_index = -1;
  int alpha_offset = -1;
  int n_alpha_terms = 0;
  int sigma_alpha_index = -1;
  std::array<int, kStakeholders> sigma_xi_index{};
  int sigma_eta_index = -1;
  int calendar_offset = -1;
  int n_calendar = 0;

  static ParameterLayout make(const DesignMatrices& design);

  // Natural (structured) <-> free vector. pack requires strictly increasing
  // thresholds; sigmas pass through signed.
  Eigen::VectorXd pack(const ParameterVector& params) const;
  ParameterVector unpack(const Eigen::VectorXd& free) const;

  // Reported space: thresholds at natural values, sigmas as magnitudes.
  Eigen::VectorXd to_reported(const Eigen::VectorXd& free) const;
  // Jacobian d(reported)/d(free) for the delta method.
  Eigen::MatrixXd reported_jacobian(const Eigen::VectorXd& free) const;
};

// ---------------------------------------------------------------------------
// Simulated log-likelihood
// ---------------------------------------------------------------------------

struct LoglikOptions {
  bool gradient = false;  // fill `gradient` (free space)
  bool scores = false;    // fill `scores` (N x n_free, free space)
  int threads = 1;
  // Score/gradient columns follow this layout when given (fixed-sigma runs
  // use a layout without sigma entries); defaults to the design's layout.
  const ParameterLayout* layout = nullptr;
};

struct LoglikResult {
  double total = 0.0;
  Eigen::VectorXd contributions;  // per individual
  Eigen::VectorXd gradient;
  Eigen::MatrixXd scores;
  int floored_individuals = 0;          // contribution hit the ln(1e-300) floor
  int nonpositive_alpha_individuals = 0;  // some alpha_i draw <= 0 (decay off)
};

// L_i = Q^{-1} sum_q prod_{s,t} P(y_(i,s,t) | draw q), accumulated in log
// space with a log-sum-exp over draws. Individuals whose likelihood
// underflows across all draws contribute ln(1e-300) and are counted.
// Gradients are analytic and accumulated per individual, then reduced in
// index order, so results are identical for any thread count.
LoglikResult simulated_loglik(const ParameterVector& params,
                              const DesignMatrices& design,
                              const DrawMatrix& draws,
                              const LoglikOptions& options = {});

// ---------------------------------------------------------------------------
// Quasi-Newton maximiser (BFGS with Armijo backtracking). Maximises f by
// minimising -f internally; non-finite trial values shrink the step.
// ---------------------------------------------------------------------------

using ValueFn = std::function<double(const Eigen::VectorXd&)>;
// Returns f(x) and fills g with the gradient of f at x.
using ValueGradFn =
    std::function<double(const Eigen::VectorXd&, Eigen::VectorXd&)>;

struct MaximizeSettings {
  int max_iterations = 500;
  double gradient_tol = 1e-6;  // on ||g||_inf / max(1, |f|)
  double step_tol = 1e-8;      // on ||dx||_inf
  std::function<void(int, double, double)> on_iteration;  // iter, f, ||g||
};

struct MaximizeResult {
  Eigen::VectorXd x;
  double value = 0.0;
  bool converged = false;
  int iterations = 0;
  double gradient_norm = 0.0;
  int evaluations = 0;
};

MaximizeResult maximize(const ValueGradFn& fg, const Eigen::VectorXd& x0,
                        const MaximizeSettings& settings = {});

// Central finite differences (relative step) for objectives without an
// analytic gradient.
ValueGradFn with_fd_gradient(const ValueFn& f, double rel_step = 1e-6);

// Central finite-difference Hessian of f built from its gradient.
Eigen::MatrixXd fd_hessian(const ValueGradFn& fg, const Eigen::VectorXd& x,
                           double rel_step = 1e-5);

// ---------------------------------------------------------------------------
// Covariance and the full estimation pipeline
// ---------------------------------------------------------------------------

struct CovarianceResult {
  Eigen::MatrixXd covariance;  // H^{-1} B H^{-1}, symmetrised
  bool pseudo_inverse = false; // H was singular; eigen pseudo-inverse used
};

// Sandwich estimator from the (free-space) Hessian of the log-likelihood and
// the N x P matrix of per-individual scores; B = S'S.
CovarianceResult robust_covariance(const Eigen::MatrixXd& hessian,
                                   const Eigen::MatrixXd& scores);

// Data-driven starting point: per-stakeholder thresholds from pooled
// cumulative response shares (0.5 pseudo-count smoothing when a category is
// empty), slopes at zero, sigmas at 0.1, rho at 0, alpha at D/2.
Eigen::VectorXd starting_values(const DesignMatrices& design,
                                const ParameterLayout& layout);

struct EstimateOptions {
  int threads = 1;
  int max_iterations = 500;
  // Pin every sigma that the config activates at this value instead of
  // estimating it (0 turns mixing off entirely).
  std::optional<double> fix_sigmas;
  std::function<void(int, double, double)> on_iteration;
};

struct EstimationResult {
  ParameterLayout layout;
  Eigen::VectorXd free_estimate;
  Eigen::VectorXd reported;        // to_reported(free_estimate)
  ParameterVector parameters;      // structured, sigmas as magnitudes
  Eigen::MatrixXd covariance;      // reported space (delta method)
  Eigen::VectorXd robust_se;
  Eigen::VectorXd robust_t;        // estimate / se (reported space)
  double loglik = 0.0;
  Eigen::VectorXd contributions;
  std::vector<std::string> individual_ids;
  bool converged = false;
  int iterations = 0;
  double gradient_norm = 0.0;
  int draw_count = 0;
  std::uint64_t seed = 0;
  int horizon_days = 0;
  int floored_individuals = 0;
  int nonpositive_alpha_individuals = 0;
  bool covariance_warning = false;
  std::vector<std::string> fixed_sigma_names;  // pinned by fix_sigmas
  std::optional<double> fixed_sigma_value;

  // Carried along for reversion-curve reporting.
  std::vector<std::string> reversion_term_names;
  std::vector<std::string> alpha_term_names;
  std::map<std::string, std::pair<std::vector<std::string>, std::string>>
      mixing_covariates;  // covariate -> (levels, base)
};

// Full pipeline: starting values -> BFGS on the simulated log-likelihood with
// analytic gradients and common random numbers -> finite-difference Hessian
// of the gradient -> sandwich covariance -> delta method to reported space.
EstimationResult estimate_model(const DesignMatrices& design,
                                const DrawMatrix& draws,
                                const EstimateOptions& options = {});

// ---------------------------------------------------------------------------
// Serialization. JSON shape is shared by estimates files, simulation truth
// files, and scenario specs, so round trips are exact by construction.
// ---------------------------------------------------------------------------

std::string parameters_to_json_text(const ParameterVector& params,
                                    const ParameterLayout& layout,
                                    const DesignMatrices& design);
ParameterVector parameters_from_json_text(const std::string& text,
                                          const ParameterLayout& layout,
                                          const DesignMatrices& design);

std::string estimation_result_to_json_text(const EstimationResult& result,
                                           const DesignMatrices& design);
std::string estimation_result_to_table_text(const EstimationResult& result,
                                            const DesignMatrices& design);

// Partial loader for downstream reporting: fills the reversion and alpha
// blocks, their term metadata, and the horizon from an estimates JSON file.
EstimationResult estimation_result_from_json_text(const std::string& text);

}  // namespace delib
