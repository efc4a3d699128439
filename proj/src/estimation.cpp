#include "delib/estimation.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <set>
#include <sstream>
#include <stdexcept>

#include "delib/numeric.hpp"
#include "delib/threading.hpp"
#include "json.hpp"

namespace delib {

namespace {
constexpr double kLogFloor = -690.77552789821368;  // ln(1e-300)
}

// ---------------------------------------------------------------------------
// ParameterLayout
// ---------------------------------------------------------------------------

ParameterLayout ParameterLayout::make(const DesignMatrices& design) {
  ParameterLayout L;
  auto add = [&L](const std::string& name) {
    L.names.push_back(name);
    return L.n_free++;
  };

  for (int s = 0; s < kStakeholders; ++s) {
    L.tau_offset[s] = L.n_free;
    for (int k = 1; k <= kThresholds; ++k) {
      add(std::string(stakeholder_name(s)) + ".tau_" + std::to_string(k));
    }
  }
  L.beta_offset = L.n_free;
  for (int s = 0; s < kStakeholders; ++s) {
    for (int w = 1; w <= kWorkshops; ++w) {
      add(std::string(stakeholder_name(s)) + ".workshop_" + std::to_string(w));
    }
  }
  L.n_wave_terms = int(design.wave_terms.size());
  for (int s = 0; s < kStakeholders; ++s) {
    L.wave_offset[s] = L.n_free;
    for (const auto& term : design.wave_terms) {
      add(std::string(stakeholder_name(s)) + "." + term);
    }
  }
  for (int s = 0; s < kStakeholders; ++s) {
    L.gamma_offset[s] = L.n_free;
    L.n_gamma[s] = int(design.eq_terms[s].size());
    for (const auto& term : design.eq_terms[s]) {
      add(std::string(stakeholder_name(s)) + "." + term);
    }
  }
  L.rho_offset = add("reversion.base");
  L.n_rho_terms = int(design.reversion_terms.size());
  for (const auto& term : design.reversion_terms) add("reversion." + term);
  if (design.config.sigma_rho) L.sigma_rho_index = add("reversion.sigma");

  L.alpha_offset = add("alpha.base");
  L.n_alpha_terms = int(design.alpha_terms.size());
  for (const auto& term : design.alpha_terms) add("alpha." + term);
  if (design.config.sigma_alpha) L.sigma_alpha_index = add("alpha.sigma");

  for (int s = 0; s < kStakeholders; ++s) {
    L.sigma_xi_index[s] =
        design.config.sigma_xi[s]
            ? add("sigma_xi." + std::string(stakeholder_name(s)))
            : -1;
  }
  L.sigma_eta_index = design.config.sigma_eta ? add("sigma_eta") : -1;

  L.calendar_offset = L.n_free;
  L.n_calendar = std::max(0, design.n_periods - 1);
  for (int p = 1; p < design.n_periods; ++p) {
    add("calendar." + design.period_labels[p]);
  }
  return L;
}

Eigen::VectorXd ParameterLayout::pack(const ParameterVector& p) const {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(n_free);
  for (int s = 0; s < kStakeholders; ++s) {
    const auto& tau = p.thresholds[s];
    if (tau.size() != kThresholds) {
      throw std::invalid_argument("pack: thresholds must have 10 entries");
    }
    x[tau_offset[s]] = tau[0];
    for (int k = 1; k < kThresholds; ++k) {
      const double gap = tau[k] - tau[k - 1];
      if (!(gap > 0.0)) {
        throw std::invalid_argument(
            "pack: thresholds must be strictly increasing");
      }
      x[tau_offset[s] + k] = std::log(gap);
    }
    if (p.wave_shifts[s].size() != n_wave_terms ||
        p.demographics[s].size() != n_gamma[s]) {
      throw std::invalid_argument("pack: parameter block sizes do not match");
    }
    for (int w = 0; w < kWorkshops; ++w) {
      x[beta_offset + s * kWorkshops + w] = p.beta(s, w);
    }
    x.segment(wave_offset[s], n_wave_terms) = p.wave_shifts[s];
    x.segment(gamma_offset[s], n_gamma[s]) = p.demographics[s];
  }
  x[rho_offset] = p.rho_base;
  if (p.rho_terms.size() != n_rho_terms ||
      p.alpha_terms.size() != n_alpha_terms ||
      p.calendar.size() != n_calendar) {
    throw std::invalid_argument("pack: parameter block sizes do not match");
  }
  x.segment(rho_offset + 1, n_rho_terms) = p.rho_terms;
  if (sigma_rho_index >= 0) x[sigma_rho_index] = p.sigma_rho;
  x[alpha_offset] = p.alpha_base;
  x.segment(alpha_offset + 1, n_alpha_terms) = p.alpha_terms;
  if (sigma_alpha_index >= 0) x[sigma_alpha_index] = p.sigma_alpha;
  for (int s = 0; s < kStakeholders; ++s) {
    if (sigma_xi_index[s] >= 0) x[sigma_xi_index[s]] = p.sigma_xi[s];
  }
  if (sigma_eta_index >= 0) x[sigma_eta_index] = p.sigma_eta;
  x.segment(calendar_offset, n_calendar) = p.calendar;
  return x;
}

ParameterVector ParameterLayout::unpack(const Eigen::VectorXd& x) const {
  if (x.size() != n_free) {
    throw std::invalid_argument("unpack: wrong free-vector length");
  }
  ParameterVector p;
  for (int s = 0; s < kStakeholders; ++s) {
    p.thresholds[s].resize(kThresholds);
    double tau = x[tau_offset[s]];
    p.thresholds[s][0] = tau;
    for (int k = 1; k < kThresholds; ++k) {
      tau += std::exp(x[tau_offset[s] + k]);
      p.thresholds[s][k] = tau;
    }
    for (int w = 0; w < kWorkshops; ++w) {
      p.beta(s, w) = x[beta_offset + s * kWorkshops + w];
    }
    p.wave_shifts[s] = x.segment(wave_offset[s], n_wave_terms);
    p.demographics[s] = x.segment(gamma_offset[s], n_gamma[s]);
  }
  p.rho_base = x[rho_offset];
  p.rho_terms = x.segment(rho_offset + 1, n_rho_terms);
  p.sigma_rho = sigma_rho_index >= 0 ? x[sigma_rho_index] : 0.0;
  p.alpha_base = x[alpha_offset];
  p.alpha_terms = x.segment(alpha_offset + 1, n_alpha_terms);
  p.sigma_alpha = sigma_alpha_index >= 0 ? x[sigma_alpha_index] : 0.0;
  for (int s = 0; s < kStakeholders; ++s) {
    p.sigma_xi[s] = sigma_xi_index[s] >= 0 ? x[sigma_xi_index[s]] : 0.0;
  }
  p.sigma_eta = sigma_eta_index >= 0 ? x[sigma_eta_index] : 0.0;
  p.calendar = x.segment(calendar_offset, n_calendar);
  return p;
}

Eigen::VectorXd ParameterLayout::to_reported(const Eigen::VectorXd& x) const {
  Eigen::VectorXd r = x;
  for (int s = 0; s < kStakeholders; ++s) {
    double tau = x[tau_offset[s]];
    for (int k = 1; k < kThresholds; ++k) {
      tau += std::exp(x[tau_offset[s] + k]);
      r[tau_offset[s] + k] = tau;
    }
  }
  auto abs_at = [&r](int idx) {
    if (idx >= 0) r[idx] = std::abs(r[idx]);
  };
  abs_at(sigma_rho_index);
  abs_at(sigma_alpha_index);
  for (int s = 0; s < kStakeholders; ++s) abs_at(sigma_xi_index[s]);
  abs_at(sigma_eta_index);
  return r;
}

Eigen::MatrixXd ParameterLayout::reported_jacobian(
    const Eigen::VectorXd& x) const {
  Eigen::MatrixXd J = Eigen::MatrixXd::Identity(n_free, n_free);
  for (int s = 0; s < kStakeholders; ++s) {
    const int o = tau_offset[s];
    // tau_k = tau_1 + sum_{j<=k} exp(phi_j): lower-triangular block.
    for (int k = 1; k < kThresholds; ++k) {
      const double gap = std::exp(x[o + k]);
      for (int row = k; row < kThresholds; ++row) J(o + row, o + k) = gap;
    }
    for (int row = 1; row < kThresholds; ++row) J(o + row, o) = 1.0;
  }
  auto sign_at = [&](int idx) {
    if (idx >= 0) J(idx, idx) = x[idx] < 0.0 ? -1.0 : 1.0;
  };
  sign_at(sigma_rho_index);
  sign_at(sigma_alpha_index);
  for (int s = 0; s < kStakeholders; ++s) sign_at(sigma_xi_index[s]);
  sign_at(sigma_eta_index);
  return J;
}

// ---------------------------------------------------------------------------
// Simulated log-likelihood evaluator. Draw-major: every per-observation
// quantity is an ArrayXd over the Q draws, so the transcendental work
// vectorises; gradients reuse the same exponentials, making a fused
// value-and-gradient pass cost well under two plain evaluations.
// ---------------------------------------------------------------------------

namespace {

struct EvalScratch {
  Eigen::ArrayXd zr, za, zeta;             // raw draws
  std::array<Eigen::ArrayXd, kStakeholders> zxi;
  Eigen::ArrayXd rho, alpha, eta;          // realised components
  std::array<Eigen::ArrayXd, kStakeholders> xi;
  Eigen::ArrayXd ll, a, b, ta, tb, lnp, gv, r1, r2, La, Lna, Lb, Lnb, tmp, wts;
  std::array<Eigen::ArrayXd, kWorkshops> d_arr, dd_arr;   // d and dd/dalpha
  std::array<Eigen::ArrayXd, kStakeholders> dsum_arr, gsum_arr;
  Eigen::MatrixXd g;          // Q x P natural-space score accumulation
  Eigen::VectorXd s_nat, s_free;

  void resize(int Q, int P, bool want_scores) {
    for (auto* v : {&zr, &za, &zeta, &rho, &alpha, &eta, &ll, &a, &b, &ta,
                    &tb, &lnp, &gv, &r1, &r2, &La, &Lna, &Lb, &Lnb, &tmp,
                    &wts}) {
      v->resize(Q);
    }
    for (auto& v : zxi) v.resize(Q);
    for (auto& v : xi) v.resize(Q);
    for (auto& v : d_arr) v.resize(Q);
    for (auto& v : dd_arr) v.resize(Q);
    for (auto& v : dsum_arr) v.resize(Q);
    for (auto& v : gsum_arr) v.resize(Q);
    if (want_scores) {
      g.resize(Q, P);
      s_nat.resize(P);
      s_free.resize(P);
    }
  }
};

// Logistic pieces from t = exp(-|x|):  Lambda(x), Lambda(-x).
inline void logistic_pair(const Eigen::ArrayXd& x, const Eigen::ArrayXd& t,
                          Eigen::ArrayXd& pos, Eigen::ArrayXd& neg,
                          Eigen::ArrayXd& tmp) {
  tmp = 1.0 / (1.0 + t);
  pos = (x >= 0.0).select(tmp, t * tmp);
  neg = (x >= 0.0).select(t * tmp, tmp);
}

}  // namespace

LoglikResult simulated_loglik(const ParameterVector& params,
                              const DesignMatrices& design,
                              const DrawMatrix& draws,
                              const LoglikOptions& options) {
  const int N = design.n_individuals;
  const int Q = draws.n_draws;
  if (draws.n_individuals != N) {
    throw std::invalid_argument(
        "simulated_loglik: draw matrix does not cover the design individuals");
  }
  if (draws.n_dimensions != kDrawDimensions) {
    throw std::invalid_argument("simulated_loglik: draw matrix needs " +
                                std::to_string(kDrawDimensions) +
                                " dimensions");
  }

  ParameterLayout default_layout;
  const bool want_scores = options.gradient || options.scores;
  const ParameterLayout* L = options.layout;
  if (want_scores && L == nullptr) {
    default_layout = ParameterLayout::make(design);
    L = &default_layout;
  }
  const int P = want_scores ? L->n_free : 0;

  LoglikResult out;
  out.contributions.resize(N);
  if (want_scores) out.scores.setZero(N, P);
  std::vector<char> floored(N, 0), badalpha(N, 0);

  // Workshop-sum of beta per (s, t); shared by all individuals.
  double wsum[kStakeholders][kTimeIndices + 1];
  for (int t = 1; t <= kTimeIndices; ++t) {
    const auto ind = workshop_indicators(t);
    for (int s = 0; s < kStakeholders; ++s) {
      double acc = 0.0;
      for (int w = 0; w < kWorkshops; ++w) {
        if (ind[w]) acc += params.beta(s, w);
      }
      wsum[s][t] = acc;
    }
  }

  const bool alpha_scalar = params.sigma_alpha == 0.0;
  const bool rho_random = params.sigma_rho != 0.0;
  const int K = draws.n_dimensions;

  const int workers = std::max(1, std::min(options.threads, N));
  std::vector<EvalScratch> scratch(workers);
  for (auto& ws : scratch) ws.resize(Q, P, want_scores);

  auto run = [&](int worker, int begin, int end) {
    EvalScratch& ws = scratch[worker];
    for (int i = begin; i < end; ++i) {
      // Raw draws, split by slot.
      const double* base_ptr =
          draws.values.data() + std::size_t(i) * Q * K;
      for (int q = 0; q < Q; ++q) {
        const double* r = base_ptr + std::size_t(q) * K;
        ws.zr[q] = r[kDrawRho];
        ws.za[q] = r[kDrawAlpha];
        for (int s = 0; s < kStakeholders; ++s) ws.zxi[s][q] = r[kDrawXi0 + s];
        ws.zeta[q] = r[kDrawEta];
      }

      // Mixing realisations.
      double rho_mean = params.rho_base;
      if (design.reversion_covariates.cols() > 0) {
        rho_mean += params.rho_terms.dot(design.reversion_covariates.row(i));
      }
      if (rho_random) {
        ws.rho = rho_mean + params.sigma_rho * ws.zr;
      } else {
        ws.rho.setConstant(rho_mean);
      }
      double alpha_mean = params.alpha_base;
      if (design.alpha_covariates.cols() > 0) {
        alpha_mean += params.alpha_terms.dot(design.alpha_covariates.row(i));
      }
      double alpha_val = alpha_mean;
      if (alpha_scalar) {
        if (alpha_val <= 0.0) badalpha[i] = 1;
      } else {
        ws.alpha = alpha_mean + params.sigma_alpha * ws.za;
        if (ws.alpha.minCoeff() <= 0.0) badalpha[i] = 1;
      }
      for (int s = 0; s < kStakeholders; ++s) {
        ws.xi[s] = params.sigma_xi[s] * ws.zxi[s];
      }
      ws.eta = params.sigma_eta * ws.zeta;

      // Time-invariant deterministic parts.
      double fixed[kStakeholders];
      for (int s = 0; s < kStakeholders; ++s) {
        double acc = 0.0;
        if (design.wave_dummies.cols() > 0) {
          acc += params.wave_shifts[s].dot(design.wave_dummies.row(i));
        }
        if (design.eq_covariates[s].cols() > 0) {
          acc += params.demographics[s].dot(design.eq_covariates[s].row(i));
        }
        fixed[s] = acc;
      }

      const int wave_slot = design.wave_of[i];
      ws.ll.setZero();
      if (want_scores) ws.g.setZero();

      double dsum_sc[kStakeholders] = {0, 0, 0, 0, 0};
      double gsum_sc[kStakeholders] = {0, 0, 0, 0, 0};
      double d_sc[kWorkshops] = {0, 0, 0, 0, 0};
      double dd_sc[kWorkshops] = {0, 0, 0, 0, 0};
      const DecayCell* cell = nullptr;
      int cur_t = -1, period = 0;
      double cal = 0.0;

      for (const CompactObs& ob : design.obs[i]) {
        const int t = ob.time_index;
        const int s = ob.stakeholder;
        const int r = ob.rating;

        if (t != cur_t) {
          cur_t = t;
          cell = &design.decay[wave_slot][t - 1];
          period = design.period_of[wave_slot][t - 1];
          cal = period > 0 ? params.calendar[period - 1] : 0.0;

          // Decay pieces d_w and dd_w/dalpha for the active workshops.
          if (alpha_scalar) {
            for (int w = 0; w < cell->n_active; ++w) {
              switch (cell->kind[w]) {
                case 0:
                  d_sc[w] = dd_sc[w] = 0.0;
                  break;
                case 1:
                  d_sc[w] = alpha_val > 0.0 ? 1.0 : 0.0;
                  dd_sc[w] = 0.0;
                  break;
                default: {
                  if (alpha_val > 0.0) {
                    const double e = std::exp(alpha_val * cell->coef[w]);
                    d_sc[w] = 1.0 - e;
                    dd_sc[w] = -cell->coef[w] * e;
                  } else {
                    d_sc[w] = dd_sc[w] = 0.0;
                  }
                }
              }
            }
            for (int s2 = 0; s2 < kStakeholders; ++s2) {
              double ds = 0.0, gs = 0.0;
              for (int w = 0; w < cell->n_active; ++w) {
                ds += params.beta(s2, w) * d_sc[w];
                gs += params.beta(s2, w) * dd_sc[w];
              }
              dsum_sc[s2] = ds;
              gsum_sc[s2] = gs;
            }
          } else {
            for (int w = 0; w < cell->n_active; ++w) {
              switch (cell->kind[w]) {
                case 0:
                  ws.d_arr[w].setZero();
                  ws.dd_arr[w].setZero();
                  break;
                case 1:
                  ws.d_arr[w] = (ws.alpha > 0.0).select(
                      Eigen::ArrayXd::Ones(Q), Eigen::ArrayXd::Zero(Q));
                  ws.dd_arr[w].setZero();
                  break;
                default: {
                  const double c = cell->coef[w];
                  ws.tmp = (ws.alpha * c).exp();
                  ws.d_arr[w] =
                      (ws.alpha > 0.0).select(1.0 - ws.tmp, 0.0);
                  ws.dd_arr[w] =
                      (ws.alpha > 0.0).select(-c * ws.tmp, 0.0);
                }
              }
            }
            for (int s2 = 0; s2 < kStakeholders; ++s2) {
              ws.dsum_arr[s2].setZero();
              ws.gsum_arr[s2].setZero();
              for (int w = 0; w < cell->n_active; ++w) {
                if (cell->kind[w] == 0) continue;
                ws.dsum_arr[s2] += params.beta(s2, w) * ws.d_arr[w];
                ws.gsum_arr[s2] += params.beta(s2, w) * ws.dd_arr[w];
              }
            }
          }
        }

        // Latent mean over draws.
        const double base = fixed[s] + wsum[s][t] + cal;
        if (alpha_scalar) {
          ws.b = base + ws.xi[s] + ws.eta - dsum_sc[s] * ws.rho;  // b <- V
        } else {
          ws.b = base + ws.xi[s] + ws.eta - ws.rho * ws.dsum_arr[s];
        }

        // Ordered-logit log-probability and dlnp/dV, reusing exp(-|.|).
        const auto& tau = params.thresholds[s];
        if (r == 0) {
          ws.b = tau[0] - ws.b;
          ws.tb = (-ws.b.abs()).exp();
          ws.lnp = ws.b.min(0.0) - ws.tb.log1p();
          if (want_scores) {
            logistic_pair(ws.b, ws.tb, ws.Lb, ws.Lnb, ws.tmp);
            ws.gv = -ws.Lnb;
            ws.g.col(L->tau_offset[s]) += ws.Lnb.matrix();
          }
        } else if (r == kThresholds) {
          ws.a = tau[kThresholds - 1] - ws.b;
          ws.ta = (-ws.a.abs()).exp();
          ws.lnp = (-ws.a).min(0.0) - ws.ta.log1p();
          if (want_scores) {
            logistic_pair(ws.a, ws.ta, ws.La, ws.Lna, ws.tmp);
            ws.gv = ws.La;
            ws.g.col(L->tau_offset[s] + kThresholds - 1) -= ws.La.matrix();
          }
        } else {
          ws.a = tau[r - 1] - ws.b;
          ws.b = tau[r] - ws.b;
          const double gap = tau[r] - tau[r - 1];
          const double lcomp = log1mexp(-gap);       // log(1 - e^{a-b})
          const double scomp = -std::expm1(-gap);    // 1 - e^{a-b}
          ws.ta = (-ws.a.abs()).exp();
          ws.tb = (-ws.b.abs()).exp();
          ws.lnp =
              ws.b.min(0.0) - ws.tb.log1p() - ws.a.max(0.0) - ws.ta.log1p() +
              lcomp;
          if (want_scores) {
            logistic_pair(ws.a, ws.ta, ws.La, ws.Lna, ws.tmp);
            logistic_pair(ws.b, ws.tb, ws.Lb, ws.Lnb, ws.tmp);
            ws.r2 = ws.La / (ws.Lb * scomp).max(1e-300);
            ws.r1 = ws.Lnb / (ws.Lna * scomp).max(1e-300);
            ws.gv = ws.r2 - ws.r1;
            ws.g.col(L->tau_offset[s] + r - 1) -= ws.r2.matrix();
            ws.g.col(L->tau_offset[s] + r) += ws.r1.matrix();
          }
        }
        ws.ll += ws.lnp;

        if (!want_scores) continue;

        // Chain rule through V for every remaining block.
        for (int w = 0; w < cell->n_active; ++w) {
          const int col = L->beta_offset + s * kWorkshops + w;
          if (cell->kind[w] == 0) {
            ws.g.col(col) += ws.gv.matrix();
          } else if (alpha_scalar) {
            ws.g.col(col) += (ws.gv * (1.0 - d_sc[w] * ws.rho)).matrix();
          } else {
            ws.g.col(col) += (ws.gv * (1.0 - ws.rho * ws.d_arr[w])).matrix();
          }
        }
        if (design.n_waves > 1 && wave_slot + 1 < design.n_waves) {
          ws.g.col(L->wave_offset[s] + wave_slot) += ws.gv.matrix();
        }
        for (int j = 0; j < L->n_gamma[s]; ++j) {
          if (design.eq_covariates[s](i, j) != 0.0) {
            ws.g.col(L->gamma_offset[s] + j) += ws.gv.matrix();
          }
        }
        // rho block: dV/drho_i = -dsum_s.
        if (alpha_scalar) {
          ws.tmp = ws.gv * (-dsum_sc[s]);
        } else {
          ws.tmp = -(ws.gv * ws.dsum_arr[s]);
        }
        ws.g.col(L->rho_offset) += ws.tmp.matrix();
        for (int j = 0; j < L->n_rho_terms; ++j) {
          if (design.reversion_covariates(i, j) != 0.0) {
            ws.g.col(L->rho_offset + 1 + j) += ws.tmp.matrix();
          }
        }
        if (L->sigma_rho_index >= 0) {
          ws.g.col(L->sigma_rho_index) += (ws.tmp * ws.zr).matrix();
        }
        // alpha block: dV/dalpha_i = -rho * sum_w beta dd_w.
        if (alpha_scalar) {
          ws.tmp = ws.gv * ws.rho * (-gsum_sc[s]);
        } else {
          ws.tmp = -(ws.gv * ws.rho * ws.gsum_arr[s]);
        }
        ws.g.col(L->alpha_offset) += ws.tmp.matrix();
        for (int j = 0; j < L->n_alpha_terms; ++j) {
          if (design.alpha_covariates(i, j) != 0.0) {
            ws.g.col(L->alpha_offset + 1 + j) += ws.tmp.matrix();
          }
        }
        if (L->sigma_alpha_index >= 0) {
          ws.g.col(L->sigma_alpha_index) += (ws.tmp * ws.za).matrix();
        }
        if (L->sigma_xi_index[s] >= 0) {
          ws.g.col(L->sigma_xi_index[s]) += (ws.gv * ws.zxi[s]).matrix();
        }
        if (L->sigma_eta_index >= 0) {
          ws.g.col(L->sigma_eta_index) += (ws.gv * ws.zeta).matrix();
        }
        if (period > 0) {
          ws.g.col(L->calendar_offset + period - 1) += ws.gv.matrix();
        }
      }

      // Log-sum-exp over draws.
      const double m = ws.ll.maxCoeff();
      double contribution;
      double sumw = 0.0;
      if (std::isfinite(m)) {
        ws.wts = (ws.ll - m).exp();
        sumw = ws.wts.sum();
        contribution = m + std::log(sumw / Q);
      } else {
        contribution = -std::numeric_limits<double>::infinity();
      }
      if (contribution < kLogFloor) {
        contribution = kLogFloor;
        floored[i] = 1;
      }
      out.contributions[i] = contribution;

      if (want_scores) {
        if (floored[i] || !(sumw > 0.0) || !std::isfinite(sumw)) {
          out.scores.row(i).setZero();
          continue;
        }
        ws.wts *= 1.0 / sumw;
        ws.s_nat.noalias() = ws.g.transpose() * ws.wts.matrix();
        ws.s_free = ws.s_nat;
        // Thresholds: natural tau-level scores -> (tau_1, log-gap) space.
        for (int s = 0; s < kStakeholders; ++s) {
          const int o = L->tau_offset[s];
          const auto& tau = params.thresholds[s];
          double suffix = 0.0;
          for (int k = kThresholds - 1; k >= 1; --k) {
            suffix += ws.s_nat[o + k];
            ws.s_free[o + k] = (tau[k] - tau[k - 1]) * suffix;
          }
          ws.s_free[o] = suffix + ws.s_nat[o];
        }
        out.scores.row(i) = ws.s_free.transpose();
      }
    }
  };

  parallel_for_chunks(N, workers, run);

  // Index-order reductions keep totals identical for any worker count.
  double total = 0.0;
  for (int i = 0; i < N; ++i) total += out.contributions[i];
  out.total = total;
  if (options.gradient) {
    out.gradient = Eigen::VectorXd::Zero(P);
    for (int i = 0; i < N; ++i) out.gradient += out.scores.row(i).transpose();
  }
  if (!options.scores) out.scores.resize(0, 0);
  for (int i = 0; i < N; ++i) {
    out.floored_individuals += floored[i];
    out.nonpositive_alpha_individuals += badalpha[i];
  }
  return out;
}

// ---------------------------------------------------------------------------
// BFGS maximiser
// ---------------------------------------------------------------------------

MaximizeResult maximize(const ValueGradFn& fg, const Eigen::VectorXd& x0,
                        const MaximizeSettings& settings) {
  const int n = int(x0.size());
  MaximizeResult res;
  res.x = x0;

  // Work on the minimisation problem min -f.
  Eigen::VectorXd g(n), g_new(n);
  double f = -fg(res.x, g);
  g = -g;
  ++res.evaluations;
  if (!std::isfinite(f)) {
    throw std::runtime_error("maximize: objective not finite at start");
  }

  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(n, n);
  bool h_scaled = false;
  Eigen::VectorXd d(n), x_trial(n), s(n), y(n);
  constexpr double kArmijo = 1e-4;

  auto relgrad = [&](double fv, const Eigen::VectorXd& gv) {
    return gv.lpNorm<Eigen::Infinity>() / std::max(1.0, std::abs(fv));
  };

  if (relgrad(f, g) < settings.gradient_tol) {
    res.converged = true;
    res.value = -f;
    res.gradient_norm = relgrad(f, g);
    return res;
  }

  for (int iter = 1; iter <= settings.max_iterations; ++iter) {
    d.noalias() = -(H * g);
    double slope = g.dot(d);
    if (!(slope < 0.0)) {  // not a descent direction; reset curvature
      H.setIdentity();
      h_scaled = false;
      d = -g;
      slope = g.dot(d);
    }

    double step = 1.0;
    if (iter == 1) {
      const double dn = d.lpNorm<Eigen::Infinity>();
      if (dn > 1.0) step = 1.0 / dn;
    }

    double f_trial = 0.0;
    bool accepted = false;
    for (int half = 0; half < 60; ++half) {
      x_trial = res.x + step * d;
      f_trial = -fg(x_trial, g_new);
      g_new = -g_new;
      ++res.evaluations;
      if (std::isfinite(f_trial) && f_trial <= f + kArmijo * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    res.iterations = iter;
    if (!accepted) break;  // line search exhausted

    s = x_trial - res.x;
    y = g_new - g;
    res.x = x_trial;
    f = f_trial;
    g = g_new;

    const double gnorm = relgrad(f, g);
    if (settings.on_iteration) settings.on_iteration(iter, -f, gnorm);
    if (gnorm < settings.gradient_tol ||
        s.lpNorm<Eigen::Infinity>() < settings.step_tol) {
      res.converged = true;
      break;
    }

    const double sy = s.dot(y);
    if (sy > 1e-10 * s.norm() * y.norm()) {
      if (!h_scaled) {
        H *= sy / y.dot(y);
        h_scaled = true;
      }
      // Inverse BFGS update.
      const Eigen::VectorXd Hy = H * y;
      const double yHy = y.dot(Hy);
      const double rho_bfgs = 1.0 / sy;
      H += ((sy + yHy) * rho_bfgs * rho_bfgs) * (s * s.transpose());
      H -= rho_bfgs * (Hy * s.transpose() + s * Hy.transpose());
    }
  }

  res.value = -f;
  res.gradient_norm = relgrad(f, g);
  if (!res.converged) {
    res.converged = res.gradient_norm < settings.gradient_tol;
  }
  return res;
}

ValueGradFn with_fd_gradient(const ValueFn& f, double rel_step) {
  return [f, rel_step](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    const double fx = f(x);
    g.resize(x.size());
    Eigen::VectorXd xp = x;
    for (int j = 0; j < x.size(); ++j) {
      const double h = rel_step * std::max(1.0, std::abs(x[j]));
      xp[j] = x[j] + h;
      const double fp = f(xp);
      xp[j] = x[j] - h;
      const double fm = f(xp);
      xp[j] = x[j];
      g[j] = (fp - fm) / (2.0 * h);
    }
    return fx;
  };
}

Eigen::MatrixXd fd_hessian(const ValueGradFn& fg, const Eigen::VectorXd& x,
                           double rel_step) {
  const int n = int(x.size());
  Eigen::MatrixXd H(n, n);
  Eigen::VectorXd gp(n), gm(n), xp = x;
  for (int j = 0; j < n; ++j) {
    const double h = rel_step * std::max(1.0, std::abs(x[j]));
    xp[j] = x[j] + h;
    fg(xp, gp);
    xp[j] = x[j] - h;
    fg(xp, gm);
    xp[j] = x[j];
    H.col(j) = (gp - gm) / (2.0 * h);
  }
  return 0.5 * (H + H.transpose());
}

CovarianceResult robust_covariance(const Eigen::MatrixXd& hessian,
                                   const Eigen::MatrixXd& scores) {
  const int n = int(hessian.rows());
  if (hessian.cols() != n || scores.cols() != n) {
    throw std::invalid_argument("robust_covariance: dimension mismatch");
  }
  const Eigen::MatrixXd Hs = 0.5 * (hessian + hessian.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Hs);
  const Eigen::VectorXd& ev = es.eigenvalues();
  const double largest = ev.cwiseAbs().maxCoeff();

  CovarianceResult out;
  Eigen::VectorXd inv(n);
  const double tol = largest > 0.0 ? largest * 1e-12 : 1.0;
  for (int j = 0; j < n; ++j) {
    if (std::abs(ev[j]) <= tol) {
      inv[j] = 0.0;
      out.pseudo_inverse = true;
    } else {
      inv[j] = 1.0 / ev[j];
    }
  }
  const Eigen::MatrixXd Hinv =
      es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
  const Eigen::MatrixXd B = scores.transpose() * scores;
  Eigen::MatrixXd C = Hinv * B * Hinv;
  out.covariance = 0.5 * (C + C.transpose());
  return out;
}

Eigen::VectorXd starting_values(const DesignMatrices& design,
                                const ParameterLayout& layout) {
  Eigen::VectorXd x = Eigen::VectorXd::Zero(layout.n_free);

  for (int s = 0; s < kStakeholders; ++s) {
    double counts[kCategories] = {0};
    for (int i = 0; i < design.n_individuals; ++i) {
      for (const auto& ob : design.obs[i]) {
        if (ob.stakeholder == s) counts[ob.rating] += 1.0;
      }
    }
    bool any_empty = false;
    for (double c : counts) any_empty |= (c == 0.0);
    if (any_empty) {
      for (double& c : counts) c += 0.5;
    }
    double total = 0.0;
    for (double c : counts) total += c;
    double cum = 0.0, prev_tau = 0.0;
    for (int k = 0; k < kThresholds; ++k) {
      cum += counts[k];
      const double share = cum / total;
      const double tau = std::log(share / (1.0 - share));
      if (k == 0) {
        x[layout.tau_offset[s]] = tau;
      } else {
        x[layout.tau_offset[s] + k] = std::log(tau - prev_tau);
      }
      prev_tau = tau;
    }
  }

  x[layout.alpha_offset] = design.horizon_days / 2.0;
  auto seed_sigma = [&x](int idx) {
    if (idx >= 0) x[idx] = 0.1;
  };
  seed_sigma(layout.sigma_rho_index);
  seed_sigma(layout.sigma_alpha_index);
  for (int s = 0; s < kStakeholders; ++s) seed_sigma(layout.sigma_xi_index[s]);
  seed_sigma(layout.sigma_eta_index);
  return x;
}

// ---------------------------------------------------------------------------
// estimate_model
// ---------------------------------------------------------------------------

EstimationResult estimate_model(const DesignMatrices& design,
                                const DrawMatrix& draws,
                                const EstimateOptions& options) {
  // Fixed-sigma runs drop the sigma entries from the free layout and inject
  // the pinned value into every evaluation instead.
  DesignMatrices layout_design = design;
  const ModelConfig& cfg = design.config;
  std::vector<std::string> fixed_names;
  if (options.fix_sigmas) {
    if (cfg.sigma_rho) fixed_names.push_back("reversion.sigma");
    if (cfg.sigma_alpha) fixed_names.push_back("alpha.sigma");
    for (int s = 0; s < kStakeholders; ++s) {
      if (cfg.sigma_xi[s]) {
        fixed_names.push_back("sigma_xi." + std::string(stakeholder_name(s)));
      }
    }
    if (cfg.sigma_eta) fixed_names.push_back("sigma_eta");
    layout_design.config.sigma_rho = false;
    layout_design.config.sigma_alpha = false;
    layout_design.config.sigma_xi.fill(false);
    layout_design.config.sigma_eta = false;
  }
  const ParameterLayout layout = ParameterLayout::make(layout_design);

  auto materialize = [&](const Eigen::VectorXd& x) {
    ParameterVector p = layout.unpack(x);
    if (options.fix_sigmas) {
      const double v = *options.fix_sigmas;
      if (cfg.sigma_rho) p.sigma_rho = v;
      if (cfg.sigma_alpha) p.sigma_alpha = v;
      for (int s = 0; s < kStakeholders; ++s) {
        if (cfg.sigma_xi[s]) p.sigma_xi[s] = v;
      }
      if (cfg.sigma_eta) p.sigma_eta = v;
    }
    return p;
  };

  ValueGradFn fg = [&](const Eigen::VectorXd& x, Eigen::VectorXd& g) {
    LoglikOptions lo;
    lo.gradient = true;
    lo.threads = options.threads;
    lo.layout = &layout;
    const LoglikResult r = simulated_loglik(materialize(x), design, draws, lo);
    g = r.gradient;
    return r.total;
  };

  MaximizeSettings ms;
  ms.max_iterations = options.max_iterations;
  ms.on_iteration = options.on_iteration;
  const Eigen::VectorXd x0 = starting_values(design, layout);
  const MaximizeResult opt = maximize(fg, x0, ms);

  // Scores and diagnostics at the optimum.
  LoglikOptions lo;
  lo.gradient = true;
  lo.scores = true;
  lo.threads = options.threads;
  lo.layout = &layout;
  const ParameterVector p_hat = materialize(opt.x);
  const LoglikResult at_opt = simulated_loglik(p_hat, design, draws, lo);

  const Eigen::MatrixXd hessian = fd_hessian(fg, opt.x);
  const CovarianceResult cov = robust_covariance(hessian, at_opt.scores);

  EstimationResult res;
  res.layout = layout;
  res.free_estimate = opt.x;
  res.reported = layout.to_reported(opt.x);
  res.parameters = p_hat;
  {  // reported structure carries |sigma|
    res.parameters.sigma_rho = std::abs(res.parameters.sigma_rho);
    res.parameters.sigma_alpha = std::abs(res.parameters.sigma_alpha);
    for (int s = 0; s < kStakeholders; ++s) {
      res.parameters.sigma_xi[s] = std::abs(res.parameters.sigma_xi[s]);
    }
    res.parameters.sigma_eta = std::abs(res.parameters.sigma_eta);
  }
  const Eigen::MatrixXd J = layout.reported_jacobian(opt.x);
  res.covariance = J * cov.covariance * J.transpose();
  res.covariance = 0.5 * (res.covariance + res.covariance.transpose()).eval();
  res.robust_se.resize(layout.n_free);
  res.robust_t.resize(layout.n_free);
  for (int j = 0; j < layout.n_free; ++j) {
    const double v = res.covariance(j, j);
    res.robust_se[j] = v > 0.0 ? std::sqrt(v) : 0.0;
    res.robust_t[j] = res.robust_se[j] > 0.0
                          ? res.reported[j] / res.robust_se[j]
                          : std::numeric_limits<double>::quiet_NaN();
  }
  res.loglik = opt.value;
  res.contributions = at_opt.contributions;
  res.individual_ids = design.individual_ids;
  res.converged = opt.converged;
  res.iterations = opt.iterations;
  res.gradient_norm = opt.gradient_norm;
  res.draw_count = draws.n_draws;
  res.seed = draws.seed;
  res.horizon_days = design.horizon_days;
  res.floored_individuals = at_opt.floored_individuals;
  res.nonpositive_alpha_individuals = at_opt.nonpositive_alpha_individuals;
  res.covariance_warning = cov.pseudo_inverse;
  res.fixed_sigma_names = fixed_names;
  if (options.fix_sigmas) res.fixed_sigma_value = *options.fix_sigmas;
  res.reversion_term_names = design.reversion_terms;
  res.alpha_term_names = design.alpha_terms;
  res.mixing_covariates = design.mixing_covariates;
  return res;
}

// ---------------------------------------------------------------------------
// Serialization
// ---------------------------------------------------------------------------

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

ordered_json parameters_to_json(const ParameterVector& p,
                                const DesignMatrices& design) {
  ordered_json j;
  ordered_json th, beta, wave, demo;
  for (int s = 0; s < kStakeholders; ++s) {
    th[stakeholder_name(s)] = std::vector<double>(
        p.thresholds[s].data(), p.thresholds[s].data() + kThresholds);
    std::vector<double> b(kWorkshops);
    for (int w = 0; w < kWorkshops; ++w) b[w] = p.beta(s, w);
    beta[stakeholder_name(s)] = b;
    ordered_json ws;
    for (std::size_t m = 0; m < design.wave_terms.size(); ++m) {
      ws[design.wave_terms[m]] = p.wave_shifts[s][int(m)];
    }
    wave[stakeholder_name(s)] = ws;
    ordered_json ds;
    for (std::size_t k = 0; k < design.eq_terms[s].size(); ++k) {
      ds[design.eq_terms[s][k]] = p.demographics[s][int(k)];
    }
    demo[stakeholder_name(s)] = ds;
  }
  j["thresholds"] = th;
  j["workshop_effects"] = beta;
  j["wave_shifts"] = wave;
  j["demographics"] = demo;

  ordered_json rev;
  rev["base"] = p.rho_base;
  ordered_json rterms;
  for (std::size_t k = 0; k < design.reversion_terms.size(); ++k) {
    rterms[design.reversion_terms[k]] = p.rho_terms[int(k)];
  }
  rev["terms"] = rterms;
  rev["sigma"] = p.sigma_rho;
  j["reversion"] = rev;

  ordered_json al;
  al["base"] = p.alpha_base;
  ordered_json aterms;
  for (std::size_t k = 0; k < design.alpha_terms.size(); ++k) {
    aterms[design.alpha_terms[k]] = p.alpha_terms[int(k)];
  }
  al["terms"] = aterms;
  al["sigma"] = p.sigma_alpha;
  j["alpha"] = al;

  ordered_json sx;
  for (int s = 0; s < kStakeholders; ++s) {
    sx[stakeholder_name(s)] = p.sigma_xi[s];
  }
  j["sigma_xi"] = sx;
  j["sigma_eta"] = p.sigma_eta;

  ordered_json cal;
  for (int per = 1; per < design.n_periods; ++per) {
    cal[design.period_labels[per]] = p.calendar[per - 1];
  }
  j["calendar"] = cal;
  return j;
}

double named_or_zero(const json& obj, const std::string& key,
                     const std::string& where) {
  if (!obj.contains(key)) return 0.0;
  if (!obj.at(key).is_number()) {
    throw ValidationError("parameters: " + where + "." + key +
                          " must be a number");
  }
  return obj.at(key).get<double>();
}

void check_known_names(const json& obj, const std::vector<std::string>& known,
                       const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (std::find(known.begin(), known.end(), it.key()) == known.end()) {
      throw ValidationError("parameters: unknown name '" + it.key() +
                            "' under " + where);
    }
  }
}

ParameterVector parameters_from_json(const json& j,
                                     const DesignMatrices& design) {
  static const std::set<std::string> kTop = {
      "thresholds", "workshop_effects", "wave_shifts", "demographics",
      "reversion",  "alpha",            "sigma_xi",    "sigma_eta",
      "calendar"};
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!kTop.count(it.key())) {
      throw ValidationError("parameters: unknown top-level key '" + it.key() +
                            "'");
    }
  }

  ParameterVector p = ParameterVector::zeros(design);
  auto stakeholder_block = [&](const json& blk,
                               const std::string& where) -> const json& {
    for (auto it = blk.begin(); it != blk.end(); ++it) {
      if (!stakeholder_index(it.key())) {
        throw ValidationError("parameters: unknown stakeholder '" + it.key() +
                              "' under " + where);
      }
    }
    return blk;
  };

  if (j.contains("thresholds")) {
    const auto& blk = stakeholder_block(j.at("thresholds"), "thresholds");
    for (int s = 0; s < kStakeholders; ++s) {
      if (!blk.contains(stakeholder_name(s))) continue;
      const auto& v = blk.at(stakeholder_name(s));
      if (!v.is_array() || v.size() != kThresholds) {
        throw ValidationError(
            "parameters: thresholds blocks must hold 10 values");
      }
      for (int k = 0; k < kThresholds; ++k) {
        p.thresholds[s][k] = v[k].get<double>();
      }
    }
  }
  if (j.contains("workshop_effects")) {
    const auto& blk =
        stakeholder_block(j.at("workshop_effects"), "workshop_effects");
    for (int s = 0; s < kStakeholders; ++s) {
      if (!blk.contains(stakeholder_name(s))) continue;
      const auto& v = blk.at(stakeholder_name(s));
      if (!v.is_array() || v.size() != kWorkshops) {
        throw ValidationError(
            "parameters: workshop_effects blocks must hold 5 values");
      }
      for (int w = 0; w < kWorkshops; ++w) p.beta(s, w) = v[w].get<double>();
    }
  }
  if (j.contains("wave_shifts")) {
    const auto& blk = stakeholder_block(j.at("wave_shifts"), "wave_shifts");
    for (int s = 0; s < kStakeholders; ++s) {
      if (!blk.contains(stakeholder_name(s))) continue;
      const auto& v = blk.at(stakeholder_name(s));
      check_known_names(v, design.wave_terms, "wave_shifts");
      for (std::size_t m = 0; m < design.wave_terms.size(); ++m) {
        p.wave_shifts[s][int(m)] =
            named_or_zero(v, design.wave_terms[m], "wave_shifts");
      }
    }
  }
  if (j.contains("demographics")) {
    const auto& blk = stakeholder_block(j.at("demographics"), "demographics");
    for (int s = 0; s < kStakeholders; ++s) {
      if (!blk.contains(stakeholder_name(s))) continue;
      const auto& v = blk.at(stakeholder_name(s));
      check_known_names(v, design.eq_terms[s],
                        "demographics." + std::string(stakeholder_name(s)));
      for (std::size_t k = 0; k < design.eq_terms[s].size(); ++k) {
        p.demographics[s][int(k)] =
            named_or_zero(v, design.eq_terms[s][k], "demographics");
      }
    }
  }
  if (j.contains("reversion")) {
    const auto& v = j.at("reversion");
    for (auto it = v.begin(); it != v.end(); ++it) {
      if (it.key() != "base" && it.key() != "terms" && it.key() != "sigma") {
        throw ValidationError("parameters: unknown key '" + it.key() +
                              "' under reversion");
      }
    }
    p.rho_base = named_or_zero(v, "base", "reversion");
    if (v.contains("terms")) {
      check_known_names(v.at("terms"), design.reversion_terms,
                        "reversion.terms");
      for (std::size_t k = 0; k < design.reversion_terms.size(); ++k) {
        p.rho_terms[int(k)] = named_or_zero(v.at("terms"),
                                            design.reversion_terms[k],
                                            "reversion.terms");
      }
    }
    p.sigma_rho = named_or_zero(v, "sigma", "reversion");
  }
  if (j.contains("alpha")) {
    const auto& v = j.at("alpha");
    for (auto it = v.begin(); it != v.end(); ++it) {
      if (it.key() != "base" && it.key() != "terms" && it.key() != "sigma") {
        throw ValidationError("parameters: unknown key '" + it.key() +
                              "' under alpha");
      }
    }
    p.alpha_base = named_or_zero(v, "base", "alpha");
    if (v.contains("terms")) {
      check_known_names(v.at("terms"), design.alpha_terms, "alpha.terms");
      for (std::size_t k = 0; k < design.alpha_terms.size(); ++k) {
        p.alpha_terms[int(k)] =
            named_or_zero(v.at("terms"), design.alpha_terms[k], "alpha.terms");
      }
    }
    p.sigma_alpha = named_or_zero(v, "sigma", "alpha");
  }
  if (j.contains("sigma_xi")) {
    const auto& blk = stakeholder_block(j.at("sigma_xi"), "sigma_xi");
    for (int s = 0; s < kStakeholders; ++s) {
      p.sigma_xi[s] = named_or_zero(blk, stakeholder_name(s), "sigma_xi");
    }
  }
  if (j.contains("sigma_eta")) {
    p.sigma_eta = j.at("sigma_eta").get<double>();
  }
  if (j.contains("calendar")) {
    const auto& v = j.at("calendar");
    std::vector<std::string> known(design.period_labels.begin() + 1,
                                   design.period_labels.end());
    check_known_names(v, known, "calendar");
    for (int per = 1; per < design.n_periods; ++per) {
      p.calendar[per - 1] =
          named_or_zero(v, design.period_labels[per], "calendar");
    }
  }

  // A sigma the config leaves out of the model must not smuggle mixing in.
  const ModelConfig& cfg = design.config;
  if (!cfg.sigma_rho && p.sigma_rho != 0.0) {
    throw ValidationError(
        "parameters: reversion.sigma is nonzero but the config disables it");
  }
  if (!cfg.sigma_alpha && p.sigma_alpha != 0.0) {
    throw ValidationError(
        "parameters: alpha.sigma is nonzero but the config disables it");
  }
  for (int s = 0; s < kStakeholders; ++s) {
    if (!cfg.sigma_xi[s] && p.sigma_xi[s] != 0.0) {
      throw ValidationError("parameters: sigma_xi." +
                            std::string(stakeholder_name(s)) +
                            " is nonzero but the config disables it");
    }
  }
  if (!cfg.sigma_eta && p.sigma_eta != 0.0) {
    throw ValidationError(
        "parameters: sigma_eta is nonzero but the config disables it");
  }
  return p;
}

}  // namespace

std::string parameters_to_json_text(const ParameterVector& params,
                                    const ParameterLayout& /*layout*/,
                                    const DesignMatrices& design) {
  return parameters_to_json(params, design).dump(2) + "\n";
}

ParameterVector parameters_from_json_text(const std::string& text,
                                          const ParameterLayout& /*layout*/,
                                          const DesignMatrices& design) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("parameters: invalid JSON: ") +
                          e.what());
  }
  try {
    return parameters_from_json(j, design);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("parameters: ") + e.what());
  }
}

std::string estimation_result_to_json_text(const EstimationResult& result,
                                           const DesignMatrices& design) {
  ordered_json j;
  ordered_json model;
  model["n_individuals"] = design.n_individuals;
  model["draws"] = result.draw_count;
  model["seed"] = result.seed;
  model["horizon_days"] = result.horizon_days;
  std::vector<std::string> stakeholders;
  for (int s = 0; s < kStakeholders; ++s) {
    stakeholders.push_back(stakeholder_name(s));
  }
  model["stakeholders"] = stakeholders;
  model["waves"] = design.wave_numbers;
  model["base_wave"] =
      design.wave_numbers.empty() ? 0 : design.wave_numbers.back();
  model["calendar_periods"] = design.period_labels;
  model["reversion_terms"] = result.reversion_term_names;
  model["alpha_terms"] = result.alpha_term_names;
  ordered_json mix;
  for (const auto& [name, meta] : result.mixing_covariates) {
    ordered_json entry;
    entry["levels"] = meta.first;
    entry["base"] = meta.second;
    mix[name] = entry;
  }
  model["mixing_covariates"] = mix;
  if (result.fixed_sigma_value) {
    ordered_json fixed;
    for (const auto& n : result.fixed_sigma_names) {
      fixed[n] = *result.fixed_sigma_value;
    }
    model["fixed_sigmas"] = fixed;
  }
  j["model"] = model;

  ordered_json conv;
  conv["converged"] = result.converged;
  conv["iterations"] = result.iterations;
  conv["gradient_norm"] = result.gradient_norm;
  conv["loglik"] = result.loglik;
  conv["floored_individuals"] = result.floored_individuals;
  conv["nonpositive_alpha_individuals"] = result.nonpositive_alpha_individuals;
  conv["covariance_warning"] = result.covariance_warning;
  j["convergence"] = conv;

  j["parameters"] = parameters_to_json(result.parameters, design);

  ordered_json est;
  est["names"] = result.layout.names;
  est["reported"] = std::vector<double>(
      result.reported.data(), result.reported.data() + result.reported.size());
  est["free"] = std::vector<double>(
      result.free_estimate.data(),
      result.free_estimate.data() + result.free_estimate.size());
  est["robust_se"] = std::vector<double>(
      result.robust_se.data(),
      result.robust_se.data() + result.robust_se.size());
  ordered_json tvals = ordered_json::array();
  for (int k = 0; k < result.robust_t.size(); ++k) {
    if (std::isfinite(result.robust_t[k])) {
      tvals.push_back(result.robust_t[k]);
    } else {
      tvals.push_back(nullptr);
    }
  }
  est["robust_t"] = tvals;
  j["estimates"] = est;
  return j.dump(2) + "\n";
}

EstimationResult estimation_result_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("estimates: invalid JSON: ") + e.what());
  }
  EstimationResult res;
  try {
    const auto& model = j.at("model");
    res.horizon_days = model.at("horizon_days").get<int>();
    res.draw_count = model.value("draws", 0);
    res.seed = model.value("seed", std::uint64_t(0));
    res.reversion_term_names =
        model.at("reversion_terms").get<std::vector<std::string>>();
    res.alpha_term_names =
        model.at("alpha_terms").get<std::vector<std::string>>();
    if (model.contains("mixing_covariates")) {
      for (auto it = model.at("mixing_covariates").begin();
           it != model.at("mixing_covariates").end(); ++it) {
        res.mixing_covariates[it.key()] = {
            it.value().at("levels").get<std::vector<std::string>>(),
            it.value().at("base").get<std::string>()};
      }
    }
    const auto& params = j.at("parameters");
    const auto& rev = params.at("reversion");
    res.parameters.rho_base = rev.at("base").get<double>();
    res.parameters.rho_terms.resize(int(res.reversion_term_names.size()));
    for (std::size_t k = 0; k < res.reversion_term_names.size(); ++k) {
      res.parameters.rho_terms[int(k)] =
          rev.at("terms").value(res.reversion_term_names[k], 0.0);
    }
    res.parameters.sigma_rho = rev.value("sigma", 0.0);
    const auto& al = params.at("alpha");
    res.parameters.alpha_base = al.at("base").get<double>();
    res.parameters.alpha_terms.resize(int(res.alpha_term_names.size()));
    for (std::size_t k = 0; k < res.alpha_term_names.size(); ++k) {
      res.parameters.alpha_terms[int(k)] =
          al.at("terms").value(res.alpha_term_names[k], 0.0);
    }
    res.parameters.sigma_alpha = al.value("sigma", 0.0);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("estimates: ") + e.what());
  }
  return res;
}

std::string estimation_result_to_table_text(const EstimationResult& result,
                                            const DesignMatrices& design) {
  std::ostringstream out;
  char buf[160];
  const auto& L = result.layout;

  auto cell = [&](int idx) -> std::string {
    if (idx < 0) return std::string(17, ' ');
    const double est = result.reported[idx];
    const double t = result.robust_t[idx];
    if (std::isfinite(t)) {
      std::snprintf(buf, sizeof(buf), "%9.4f (%5.1f)", est, t);
    } else {
      std::snprintf(buf, sizeof(buf), "%9.4f (    )", est);
    }
    return buf;
  };
  auto row_label = [&](const std::string& label) {
    std::snprintf(buf, sizeof(buf), "%-26s", label.c_str());
    return std::string(buf);
  };
  static const char* kDisplay[kStakeholders] = {
      "Government", "Supermarkets", "Food industry", "Farmers", "Individuals"};

  out << "Multivariate ordered-logit decay model (simulated maximum "
         "likelihood)\n";
  out << "======================================================================"
         "==\n";
  std::snprintf(buf, sizeof(buf),
                "individuals: %d   draws: %d   log-likelihood: %.4f\n",
                design.n_individuals, result.draw_count, result.loglik);
  out << buf;
  std::snprintf(buf, sizeof(buf),
                "converged: %s   iterations: %d   |gradient|: %.2e\n\n",
                result.converged ? "yes" : "NO", result.iterations,
                result.gradient_norm);
  out << buf;

  out << row_label("");
  for (int s = 0; s < kStakeholders; ++s) {
    std::snprintf(buf, sizeof(buf), " %16s", kDisplay[s]);
    out << buf;
  }
  out << "\n";
  for (int w = 0; w < kWorkshops; ++w) {
    out << row_label("Workshop " + std::to_string(w + 1));
    for (int s = 0; s < kStakeholders; ++s) {
      out << ' ' << cell(L.beta_offset + s * kWorkshops + w);
    }
    out << "\n";
  }
  for (int m = 0; m < L.n_wave_terms; ++m) {
    out << row_label("Wave " + design.wave_terms[m].substr(5));
    for (int s = 0; s < kStakeholders; ++s) {
      out << ' ' << cell(L.wave_offset[s] + m);
    }
    out << "\n";
  }
  {
    // Union of demographic terms across equations, in first-seen order.
    std::vector<std::string> terms;
    for (int s = 0; s < kStakeholders; ++s) {
      for (const auto& t : design.eq_terms[s]) {
        if (std::find(terms.begin(), terms.end(), t) == terms.end()) {
          terms.push_back(t);
        }
      }
    }
    for (const auto& term : terms) {
      out << row_label(term);
      for (int s = 0; s < kStakeholders; ++s) {
        int idx = -1;
        for (std::size_t k = 0; k < design.eq_terms[s].size(); ++k) {
          if (design.eq_terms[s][k] == term) idx = L.gamma_offset[s] + int(k);
        }
        out << ' ' << (idx >= 0 ? cell(idx) : std::string(17, ' '));
      }
      out << "\n";
    }
  }

  out << "\nReversion share (rho)\n";
  out << row_label("  base") << ' ' << cell(L.rho_offset) << "\n";
  for (int k = 0; k < L.n_rho_terms; ++k) {
    out << row_label("  " + design.reversion_terms[k]) << ' '
        << cell(L.rho_offset + 1 + k) << "\n";
  }
  if (L.sigma_rho_index >= 0) {
    out << row_label("  sigma") << ' ' << cell(L.sigma_rho_index) << "\n";
  }
  out << "Reversion speed (alpha)\n";
  out << row_label("  base") << ' ' << cell(L.alpha_offset) << "\n";
  for (int k = 0; k < L.n_alpha_terms; ++k) {
    out << row_label("  " + design.alpha_terms[k]) << ' '
        << cell(L.alpha_offset + 1 + k) << "\n";
  }
  if (L.sigma_alpha_index >= 0) {
    out << row_label("  sigma") << ' ' << cell(L.sigma_alpha_index) << "\n";
  }

  bool any_xi = false;
  for (int s = 0; s < kStakeholders; ++s) any_xi |= L.sigma_xi_index[s] >= 0;
  if (any_xi) {
    out << row_label("Sigma xi");
    for (int s = 0; s < kStakeholders; ++s) {
      out << ' '
          << (L.sigma_xi_index[s] >= 0 ? cell(L.sigma_xi_index[s])
                                       : std::string(17, ' '));
    }
    out << "\n";
  }
  if (L.sigma_eta_index >= 0) {
    out << row_label("Sigma eta") << ' ' << cell(L.sigma_eta_index) << "\n";
  }
  if (!result.fixed_sigma_names.empty()) {
    std::snprintf(buf, sizeof(buf), "(sigmas pinned at %.4f:",
                  result.fixed_sigma_value.value_or(0.0));
    out << buf;
    for (const auto& n : result.fixed_sigma_names) out << ' ' << n;
    out << ")\n";
  }

  if (L.n_calendar > 0) {
    out << "\nCalendar effects (base " << design.period_labels[0] << ")\n";
    for (int p = 0; p < L.n_calendar; ++p) {
      out << row_label("  " + design.period_labels[p + 1]) << ' '
          << cell(L.calendar_offset + p) << "\n";
    }
  }

  out << "\nThresholds\n";
  for (int k = 0; k < kThresholds; ++k) {
    out << row_label("  tau_" + std::to_string(k + 1));
    for (int s = 0; s < kStakeholders; ++s) {
      out << ' ' << cell(L.tau_offset[s] + k);
    }
    out << "\n";
  }

  if (result.floored_individuals > 0) {
    out << "\nwarning: " << result.floored_individuals
        << " individual likelihood(s) hit the underflow floor\n";
  }
  if (result.covariance_warning) {
    out << "\nwarning: Hessian singular at the optimum; covariance uses a "
           "pseudo-inverse\n";
  }
  return out.str();
}

}  // namespace delib
