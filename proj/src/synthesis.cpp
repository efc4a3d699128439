#include "delib/synthesis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "delib/dates.hpp"
#include "delib/numeric.hpp"
#include "json.hpp"

namespace delib {

namespace {

using nlohmann::json;

// Simulation randomness: one engine per (individual, purpose), chained with
// splitmix64 so streams never overlap. Purposes: 0 covariates, 1 mixing
// draws, 2 rating draws.
std::mt19937_64 substream(std::uint64_t seed, std::uint64_t individual,
                          std::uint64_t purpose) {
  std::uint64_t h = splitmix64(seed ^ 0x9E3779B97F4A7C15ULL * (individual + 1));
  h = splitmix64(h ^ 0xBF58476D1CE4E5B9ULL * (purpose + 1));
  return std::mt19937_64(h);
}

double uniform_open(std::mt19937_64& eng) {
  return (double(eng() >> 11) + 0.5) * 0x1.0p-53;
}

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* k) {
          return it.key() == k;
        }) == allowed.end()) {
      throw ValidationError("scenario: unknown key '" + it.key() + "' in " +
                            where);
    }
  }
}

}  // namespace

ScenarioSpec scenario_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("scenario: invalid JSON: ") + e.what());
  }
  if (!j.is_object()) {
    throw ValidationError("scenario: top level must be an object");
  }
  check_keys(j, {"waves", "covariates", "config", "truth", "seed"},
             "the scenario");

  ScenarioSpec sc;
  try {
    if (!j.contains("waves") || !j.at("waves").is_array() ||
        j.at("waves").empty()) {
      throw ValidationError("scenario: waves must be a nonempty array");
    }
    for (const auto& wj : j.at("waves")) {
      check_keys(wj, {"wave", "individuals", "workshop_dates"}, "a wave plan");
      WavePlan plan;
      plan.wave_number = wj.at("wave").get<int>();
      plan.individuals = wj.at("individuals").get<int>();
      if (plan.individuals < 1) {
        throw ValidationError("scenario: wave " +
                              std::to_string(plan.wave_number) +
                              " needs at least one individual");
      }
      const auto& dates = wj.at("workshop_dates");
      if (!dates.is_array() || dates.size() != kWorkshops) {
        throw ValidationError("scenario: workshop_dates must list 5 dates");
      }
      for (int w = 0; w < kWorkshops; ++w) {
        plan.workshop_dates[w] = dates[w].get<std::string>();
      }
      for (const auto& other : sc.waves) {
        if (other.wave_number == plan.wave_number) {
          throw ValidationError("scenario: duplicate wave " +
                                std::to_string(plan.wave_number));
        }
      }
      sc.waves.push_back(plan);
    }

    if (j.contains("covariates")) {
      if (!j.at("covariates").is_array()) {
        throw ValidationError("scenario: covariates must be an array");
      }
      for (const auto& cj : j.at("covariates")) {
        check_keys(cj, {"name", "levels", "probs"}, "a covariate marginal");
        CovariateMarginal m;
        m.name = cj.at("name").get<std::string>();
        if (m.name.empty()) {
          throw ValidationError("scenario: covariate names must be nonempty");
        }
        for (const auto& other : sc.covariates) {
          if (other.name == m.name) {
            throw ValidationError("scenario: duplicate covariate '" + m.name +
                                  "'");
          }
        }
        m.levels = cj.at("levels").get<std::vector<std::string>>();
        m.probs = cj.at("probs").get<std::vector<double>>();
        if (m.levels.empty() || m.levels.size() != m.probs.size()) {
          throw ValidationError("scenario: covariate '" + m.name +
                                "' needs matching levels and probs");
        }
        for (std::size_t a = 0; a < m.levels.size(); ++a) {
          for (std::size_t b = a + 1; b < m.levels.size(); ++b) {
            if (m.levels[a] == m.levels[b]) {
              throw ValidationError("scenario: covariate '" + m.name +
                                    "' repeats level '" + m.levels[a] + "'");
            }
          }
        }
        double total = 0.0;
        for (double p : m.probs) {
          if (p < 0.0) {
            throw ValidationError("scenario: covariate '" + m.name +
                                  "' has a negative probability");
          }
          total += p;
        }
        if (std::abs(total - 1.0) > 1e-9) {
          throw ValidationError("scenario: covariate '" + m.name +
                                "' probabilities must sum to 1");
        }
        sc.covariates.push_back(std::move(m));
      }
    }

    if (!j.contains("config")) {
      throw ValidationError("scenario: missing config");
    }
    sc.config = model_config_from_json_text(j.at("config").dump());

    if (!j.contains("truth") || !j.at("truth").is_object()) {
      throw ValidationError("scenario: missing truth parameters");
    }
    sc.truth_json = j.at("truth").dump();

    if (j.contains("seed")) sc.seed = j.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw ValidationError(std::string("scenario: ") + e.what());
  }
  return sc;
}

ScenarioSpec parse_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open scenario file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return scenario_from_json_text(buf.str());
}

SimulationOutput simulate_dataset(const ScenarioSpec& scenario) {
  Dataset data;

  // Event calendar, one row of five workshop days per wave.
  std::vector<WavePlan> plans = scenario.waves;
  std::sort(plans.begin(), plans.end(),
            [](const WavePlan& a, const WavePlan& b) {
              return a.wave_number < b.wave_number;
            });
  for (const auto& plan : plans) {
    std::array<int, kWorkshops> days{};
    for (int w = 0; w < kWorkshops; ++w) {
      days[w] = parse_date(plan.workshop_dates[w]);
      if (w > 0 && days[w] <= days[w - 1]) {
        throw ValidationError("scenario: wave " +
                              std::to_string(plan.wave_number) +
                              " workshop dates must be strictly increasing");
      }
    }
    data.schedule.wave_numbers.push_back(plan.wave_number);
    data.schedule.dates.push_back(days);
  }
  data.schedule.horizon_days = data.schedule.max_gap_days();

  // Covariate table: loader convention, levels sorted within a covariate.
  for (const auto& m : scenario.covariates) {
    data.covariates.names.push_back(m.name);
    std::vector<std::string> sorted = m.levels;
    std::sort(sorted.begin(), sorted.end());
    data.covariates.levels.push_back(sorted);
  }

  // Population with covariates drawn from the marginals.
  int counter = 0;
  char idbuf[32];
  for (const auto& plan : plans) {
    for (int k = 0; k < plan.individuals; ++k) {
      std::snprintf(idbuf, sizeof(idbuf), "sim%05d", counter + 1);
      IndividualRecord rec;
      rec.individual_id = idbuf;
      rec.wave = plan.wave_number;
      std::mt19937_64 eng = substream(scenario.seed, counter, 0);
      for (std::size_t c = 0; c < scenario.covariates.size(); ++c) {
        const auto& m = scenario.covariates[c];
        const double u = uniform_open(eng);
        double cum = 0.0;
        std::size_t pick = m.levels.size() - 1;
        for (std::size_t l = 0; l < m.levels.size(); ++l) {
          cum += m.probs[l];
          if (u < cum) {
            pick = l;
            break;
          }
        }
        rec.levels.push_back(
            data.covariates.level_index(int(c), m.levels[pick]));
      }
      data.individuals.push_back(std::move(rec));
      ++counter;
    }
  }

  // Full measurement panel, ratings filled in below.
  for (const auto& rec : data.individuals) {
    for (int t = 1; t <= kTimeIndices; ++t) {
      const int date = data.schedule.measurement_date(rec.wave, t);
      for (int s = 0; s < kStakeholders; ++s) {
        RatingObservation obs;
        obs.individual_id = rec.individual_id;
        obs.wave = rec.wave;
        obs.time_index = t;
        obs.stakeholder = s;
        obs.rating = 0;
        obs.date = date;
        data.observations.push_back(std::move(obs));
      }
    }
  }
  finalize_dataset(data);

  // Geometry first; the design is rebuilt once ratings exist.
  DesignMatrices design = build_design(data, scenario.config);
  const ParameterLayout layout = ParameterLayout::make(design);
  ParameterVector truth =
      parameters_from_json_text(scenario.truth_json, layout, design);
  for (int s = 0; s < kStakeholders; ++s) {
    for (int k = 1; k < kThresholds; ++k) {
      if (!(truth.thresholds[s][k] > truth.thresholds[s][k - 1])) {
        throw ValidationError(
            "scenario: truth thresholds must be strictly increasing");
      }
    }
  }

  const int N = design.n_individuals;
  for (int i = 0; i < N; ++i) {
    std::mt19937_64 eng_mix = substream(scenario.seed, i, 1);
    std::mt19937_64 eng_rate = substream(scenario.seed, i, 2);
    double z[kDrawDimensions];
    for (int k = 0; k < kDrawDimensions; ++k) {
      z[k] = inverse_normal_cdf(uniform_open(eng_mix));
    }
    IndividualRealization real;
    real.rho = individual_reversion(
        truth.rho_base, truth.rho_terms,
        design.reversion_covariates.row(i).transpose(), truth.sigma_rho,
        z[kDrawRho]);
    real.alpha = individual_alpha(
        truth.alpha_base, truth.alpha_terms,
        design.alpha_covariates.row(i).transpose(), truth.sigma_alpha,
        z[kDrawAlpha]);
    for (int s = 0; s < kStakeholders; ++s) {
      real.xi[s] = truth.sigma_xi[s] * z[kDrawXi0 + s];
    }
    real.eta = truth.sigma_eta * z[kDrawEta];

    const int wave_slot = design.wave_of[i];
    const int wave_number = design.wave_numbers[wave_slot];
    PredictorContext ctx;
    ctx.wave_dummies = design.wave_dummies.row(i).transpose();
    for (int s = 0; s < kStakeholders; ++s) {
      ctx.covariates[s] = design.eq_covariates[s].row(i).transpose();
    }
    for (int t = 1; t <= kTimeIndices; ++t) {
      ctx.indicators = workshop_indicators(t);
      for (int w = 0; w < kWorkshops; ++w) {
        ctx.delta_days[w] =
            ctx.indicators[w]
                ? elapsed_days(data.schedule, wave_number, w + 1, t)
                : 0.0;
      }
      ctx.calendar_period = design.period_of[wave_slot][t - 1];
      const auto v =
          linear_predictor(ctx, truth, real, double(design.horizon_days));
      for (int s = 0; s < kStakeholders; ++s) {
        const Eigen::VectorXd probs = ordered_probs(v[s], truth.thresholds[s]);
        const double u = uniform_open(eng_rate);
        double cum = 0.0;
        int rating = kCategories - 1;
        for (int r = 0; r < kCategories; ++r) {
          cum += probs[r];
          if (u < cum) {
            rating = r;
            break;
          }
        }
        data.observations[std::size_t(i) * kTimeIndices * kStakeholders +
                          std::size_t(t - 1) * kStakeholders + s]
            .rating = rating;
      }
    }
  }

  finalize_dataset(data);
  SimulationOutput out;
  out.dataset = std::move(data);
  out.design = build_design(out.dataset, scenario.config);
  out.layout = ParameterLayout::make(out.design);
  out.truth = truth;
  try {
    out.truth_free = out.layout.pack(truth);
  } catch (const std::invalid_argument& e) {
    throw ValidationError(std::string("scenario: ") + e.what());
  }
  return out;
}

RecoveryReport recovery_experiment(const ScenarioSpec& scenario,
                                   int repetitions,
                                   const EstimateOptions& options) {
  if (repetitions < 1) {
    throw std::invalid_argument("recovery_experiment: repetitions must be >= 1");
  }
  RecoveryReport report;
  report.repetitions = repetitions;
  int counted = 0, within = 0;

  for (int rep = 0; rep < repetitions; ++rep) {
    ScenarioSpec sc = scenario;
    sc.seed = scenario.seed + std::uint64_t(rep);
    sc.config.seed = scenario.config.seed + std::uint64_t(rep);
    const SimulationOutput sim = simulate_dataset(sc);
    const DrawMatrix draws =
        mlhs_draws(sim.design.n_individuals, sc.config.draws, kDrawDimensions,
                   sc.config.seed);
    const EstimationResult est = estimate_model(sim.design, draws, options);
    if (est.converged) ++report.converged_runs;

    const Eigen::VectorXd truth_rep = sim.layout.to_reported(sim.truth_free);
    for (int j = 0; j < est.layout.n_free; ++j) {
      // Match truth by name; a fixed-sigma run drops entries from the
      // estimated layout.
      const auto& name = est.layout.names[j];
      int truth_idx = -1;
      for (int k = 0; k < sim.layout.n_free; ++k) {
        if (sim.layout.names[k] == name) {
          truth_idx = k;
          break;
        }
      }
      if (truth_idx < 0) continue;
      RecoveryRow row;
      row.name = name;
      row.truth = truth_rep[truth_idx];
      row.estimate = est.reported[j];
      row.se = est.robust_se[j];
      row.within_2se =
          row.se > 0.0 && std::abs(row.estimate - row.truth) <= 2.0 * row.se;
      if (row.se > 0.0) {
        ++counted;
        within += row.within_2se ? 1 : 0;
      }
      report.rows.push_back(std::move(row));
    }
  }
  report.share_within_2se = counted > 0 ? double(within) / counted : 0.0;
  return report;
}

}  // namespace delib
