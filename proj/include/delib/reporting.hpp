#pragma once

#include <Eigen/Core>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "delib/data_model.hpp"
#include "delib/estimation.hpp"

namespace delib {

// ---------------------------------------------------------------------------
// Paired t-test (two-sided), used for before/after mean-change tables.
// ---------------------------------------------------------------------------

struct TTestResult {
  double t = 0.0;
  int df = 0;
  double p = 1.0;
  // Zero-variance differences: p = 1 when the mean is also zero, else p = 0;
  // flagged so tables can annotate the degenerate case.
  bool degenerate = false;
};

// differences must hold at least two values.
TTestResult paired_t_test(const Eigen::VectorXd& differences);

// Regularized incomplete beta I_x(a, b) (continued fraction) and the
// two-sided Student-t p-value built on it. Exposed for verification.
double incomplete_beta(double a, double b, double x);
double student_t_two_sided_p(double t, int df);

// ---------------------------------------------------------------------------
// Descriptives: pooled means plus paired first-vs-last change per stakeholder
// and for all ratings pooled.
// ---------------------------------------------------------------------------

struct DescriptiveRow {
  std::string label;      // "all" or stakeholder name
  double mean = 0.0;      // pooled over every observation
  int n_obs = 0;
  // Paired block: individuals observed at both t=1 and t=10 for this row.
  int n_pairs = 0;
  double mean_first = 0.0;
  double mean_last = 0.0;
  double change = 0.0;
  std::optional<double> p_value;  // absent when n_pairs < 2
  bool degenerate_p = false;
};

std::vector<DescriptiveRow> describe(const Dataset& data);

struct TrajectoryCell {
  int stakeholder = 0;
  int time_index = 0;
  int n = 0;
  double mean = 0.0;  // meaningful only when n > 0
};

// Mean rating per (stakeholder, t); cells with no observations keep n = 0.
std::vector<TrajectoryCell> trajectories(const Dataset& data);

// ---------------------------------------------------------------------------
// Reversion curves: percent of a workshop stimulus remaining Delta days out,
// 100 * (1 - rho_g * d(Delta; alpha_g, D)), for named covariate groups.
// ---------------------------------------------------------------------------

struct GroupSetting {
  std::string label;
  // covariate -> level; covariates omitted here sit at the base level.
  std::map<std::string, std::string> levels;
};

struct ReversionCurve {
  std::string label;
  double rho = 0.0;
  double alpha = 0.0;
  std::vector<double> delta_days;
  std::vector<double> percent_remaining;
};

// Uses the reversion/alpha blocks of an estimation result. Group settings
// must reference covariate terms that exist in the result; unknown names are
// a validation error.
std::vector<ReversionCurve> reversion_curves(
    const EstimationResult& result, const std::vector<GroupSetting>& groups,
    double horizon_days, double grid_step = 1.0);

// ---------------------------------------------------------------------------
// CSV writers
// ---------------------------------------------------------------------------

void write_descriptives_csv(const std::vector<DescriptiveRow>& rows,
                            const std::string& path);
void write_trajectories_csv(const std::vector<TrajectoryCell>& cells,
                            const std::string& path);
void write_curves_csv(const std::vector<ReversionCurve>& curves,
                      const std::string& path);

}  // namespace delib
