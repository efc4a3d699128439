#include "delib/reporting.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "delib/model_core.hpp"

namespace delib {

// ---------------------------------------------------------------------------
// Student-t machinery
// ---------------------------------------------------------------------------

namespace {

// Continued fraction for the incomplete beta (modified Lentz).
double betacf(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-15;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 300; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) break;
  }
  return h;
}

}  // namespace

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) {
    throw std::invalid_argument("incomplete_beta: a and b must be positive");
  }
  if (x <= 0.0) return 0.0;
  if (x >= 1.0) return 1.0;
  const double bt = std::exp(std::lgamma(a + b) - std::lgamma(a) -
                             std::lgamma(b) + a * std::log(x) +
                             b * std::log1p(-x));
  if (x < (a + 1.0) / (a + b + 2.0)) {
    return bt * betacf(a, b, x) / a;
  }
  return 1.0 - bt * betacf(b, a, 1.0 - x) / b;
}

double student_t_two_sided_p(double t, int df) {
  if (df < 1) {
    throw std::invalid_argument("student_t_two_sided_p: df must be >= 1");
  }
  if (std::isinf(t)) return 0.0;
  return incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
}

TTestResult paired_t_test(const Eigen::VectorXd& differences) {
  const int n = int(differences.size());
  if (n < 2) {
    throw std::invalid_argument("paired_t_test: need at least two pairs");
  }
  TTestResult res;
  res.df = n - 1;
  const double mean = differences.mean();
  const double ssq = (differences.array() - mean).square().sum();
  const double sd = std::sqrt(ssq / (n - 1));
  if (sd == 0.0) {
    res.degenerate = true;
    if (mean == 0.0) {
      res.t = 0.0;
      res.p = 1.0;
    } else {
      res.t = mean > 0.0 ? std::numeric_limits<double>::infinity()
                         : -std::numeric_limits<double>::infinity();
      res.p = 0.0;
    }
    return res;
  }
  res.t = mean / (sd / std::sqrt(double(n)));
  res.p = student_t_two_sided_p(res.t, res.df);
  return res;
}

// ---------------------------------------------------------------------------
// Descriptives
// ---------------------------------------------------------------------------

std::vector<DescriptiveRow> describe(const Dataset& data) {
  const int n_ind = int(data.individuals.size());
  // rating at t=1 and t=10 per (individual, stakeholder); -1 = unobserved
  std::vector<std::array<int, kStakeholders>> first(n_ind), last(n_ind);
  for (auto& a : first) a.fill(-1);
  for (auto& a : last) a.fill(-1);

  double sum_all = 0.0;
  int n_all = 0;
  double sum_s[kStakeholders] = {0};
  int n_s[kStakeholders] = {0};

  for (const auto& obs : data.observations) {
    sum_all += obs.rating;
    ++n_all;
    sum_s[obs.stakeholder] += obs.rating;
    ++n_s[obs.stakeholder];
    const auto it = data.individual_slot.find(obs.individual_id);
    if (it == data.individual_slot.end()) continue;
    if (obs.time_index == 1) first[it->second][obs.stakeholder] = obs.rating;
    if (obs.time_index == kTimeIndices) {
      last[it->second][obs.stakeholder] = obs.rating;
    }
  }

  auto build_row = [&](const std::string& label, double sum, int n,
                       const std::vector<double>& diffs, double fsum,
                       double lsum) {
    DescriptiveRow row;
    row.label = label;
    row.n_obs = n;
    row.mean = n > 0 ? sum / n : 0.0;
    row.n_pairs = int(diffs.size());
    if (row.n_pairs > 0) {
      row.mean_first = fsum / row.n_pairs;
      row.mean_last = lsum / row.n_pairs;
      row.change = row.mean_last - row.mean_first;
    }
    if (row.n_pairs >= 2) {
      Eigen::VectorXd d(row.n_pairs);
      for (int k = 0; k < row.n_pairs; ++k) d[k] = diffs[k];
      const TTestResult t = paired_t_test(d);
      row.p_value = t.p;
      row.degenerate_p = t.degenerate;
    }
    return row;
  };

  std::vector<DescriptiveRow> rows;
  {
    std::vector<double> diffs;
    double fsum = 0.0, lsum = 0.0;
    for (int i = 0; i < n_ind; ++i) {
      for (int s = 0; s < kStakeholders; ++s) {
        if (first[i][s] >= 0 && last[i][s] >= 0) {
          diffs.push_back(double(last[i][s] - first[i][s]));
          fsum += first[i][s];
          lsum += last[i][s];
        }
      }
    }
    rows.push_back(build_row("all", sum_all, n_all, diffs, fsum, lsum));
  }
  for (int s = 0; s < kStakeholders; ++s) {
    std::vector<double> diffs;
    double fsum = 0.0, lsum = 0.0;
    for (int i = 0; i < n_ind; ++i) {
      if (first[i][s] >= 0 && last[i][s] >= 0) {
        diffs.push_back(double(last[i][s] - first[i][s]));
        fsum += first[i][s];
        lsum += last[i][s];
      }
    }
    rows.push_back(
        build_row(stakeholder_name(s), sum_s[s], n_s[s], diffs, fsum, lsum));
  }
  return rows;
}

std::vector<TrajectoryCell> trajectories(const Dataset& data) {
  double sum[kStakeholders][kTimeIndices] = {};
  int n[kStakeholders][kTimeIndices] = {};
  for (const auto& obs : data.observations) {
    sum[obs.stakeholder][obs.time_index - 1] += obs.rating;
    ++n[obs.stakeholder][obs.time_index - 1];
  }
  std::vector<TrajectoryCell> cells;
  cells.reserve(kStakeholders * kTimeIndices);
  for (int s = 0; s < kStakeholders; ++s) {
    for (int t = 1; t <= kTimeIndices; ++t) {
      TrajectoryCell c;
      c.stakeholder = s;
      c.time_index = t;
      c.n = n[s][t - 1];
      c.mean = c.n > 0 ? sum[s][t - 1] / c.n : 0.0;
      cells.push_back(c);
    }
  }
  return cells;
}

// ---------------------------------------------------------------------------
// Reversion curves
// ---------------------------------------------------------------------------

std::vector<ReversionCurve> reversion_curves(
    const EstimationResult& result, const std::vector<GroupSetting>& groups,
    double horizon_days, double grid_step) {
  if (!(horizon_days > 0.0)) {
    throw std::invalid_argument("reversion_curves: horizon must be positive");
  }
  if (!(grid_step > 0.0)) {
    throw std::invalid_argument("reversion_curves: grid step must be positive");
  }

  std::vector<ReversionCurve> curves;
  for (const auto& group : groups) {
    double rho = result.parameters.rho_base;
    double alpha = result.parameters.alpha_base;
    for (const auto& [cov, level] : group.levels) {
      const auto it = result.mixing_covariates.find(cov);
      if (it == result.mixing_covariates.end()) {
        throw ValidationError("curves: group '" + group.label +
                              "' references unknown covariate '" + cov + "'");
      }
      const auto& [levels, base] = it->second;
      if (std::find(levels.begin(), levels.end(), level) == levels.end()) {
        throw ValidationError("curves: covariate '" + cov +
                              "' has no level '" + level + "'");
      }
      if (level == base) continue;
      const std::string term = cov + "=" + level;
      for (std::size_t k = 0; k < result.reversion_term_names.size(); ++k) {
        if (result.reversion_term_names[k] == term) {
          rho += result.parameters.rho_terms[int(k)];
        }
      }
      for (std::size_t k = 0; k < result.alpha_term_names.size(); ++k) {
        if (result.alpha_term_names[k] == term) {
          alpha += result.parameters.alpha_terms[int(k)];
        }
      }
    }

    ReversionCurve curve;
    curve.label = group.label;
    curve.rho = rho;
    curve.alpha = alpha;
    for (double delta = 0.0; delta < horizon_days; delta += grid_step) {
      curve.delta_days.push_back(delta);
      curve.percent_remaining.push_back(
          100.0 * (1.0 - rho * decay(delta, alpha, horizon_days)));
    }
    curve.delta_days.push_back(horizon_days);
    curve.percent_remaining.push_back(
        100.0 * (1.0 - rho * decay(horizon_days, alpha, horizon_days)));
    curves.push_back(std::move(curve));
  }
  return curves;
}

// ---------------------------------------------------------------------------
// CSV writers
// ---------------------------------------------------------------------------

namespace {

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write file: " + path);
  return out;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

}  // namespace

void write_descriptives_csv(const std::vector<DescriptiveRow>& rows,
                            const std::string& path) {
  std::ofstream out = open_out(path);
  out << "group,mean,n_obs,n_pairs,mean_first,mean_last,change,p_value,"
         "degenerate\n";
  for (const auto& r : rows) {
    out << r.label << ',' << num(r.mean) << ',' << r.n_obs << ',' << r.n_pairs
        << ',';
    if (r.n_pairs > 0) {
      out << num(r.mean_first) << ',' << num(r.mean_last) << ','
          << num(r.change);
    } else {
      out << ",,";
    }
    out << ',';
    if (r.p_value) out << num(*r.p_value);
    out << ',' << (r.degenerate_p ? 1 : 0) << '\n';
  }
  if (!out) throw IoError("failed writing " + path);
}

void write_trajectories_csv(const std::vector<TrajectoryCell>& cells,
                            const std::string& path) {
  std::ofstream out = open_out(path);
  out << "stakeholder,time_index,n,mean\n";
  for (const auto& c : cells) {
    out << stakeholder_name(c.stakeholder) << ',' << c.time_index << ','
        << c.n << ',';
    if (c.n > 0) out << num(c.mean);
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path);
}

void write_curves_csv(const std::vector<ReversionCurve>& curves,
                      const std::string& path) {
  std::ofstream out = open_out(path);
  out << "group,rho,alpha,delta_days,percent_remaining\n";
  for (const auto& c : curves) {
    for (std::size_t k = 0; k < c.delta_days.size(); ++k) {
      out << c.label << ',' << num(c.rho) << ',' << num(c.alpha) << ','
          << num(c.delta_days[k]) << ',' << num(c.percent_remaining[k])
          << '\n';
    }
  }
  if (!out) throw IoError("failed writing " + path);
}

}  // namespace delib
