#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "delib/data_model.hpp"
#include "delib/estimation.hpp"
#include "delib/model_core.hpp"

namespace delib {

// ---------------------------------------------------------------------------
// Scenario specification: a population, an event calendar, a model config,
// and the ground-truth parameters that generate ratings.
// ---------------------------------------------------------------------------

struct CovariateMarginal {
  std::string name;
  std::vector<std::string> levels;
  std::vector<double> probs;  // same length, nonnegative, sums to 1 (1e-9)
};

struct WavePlan {
  int wave_number = 0;
  int individuals = 0;
  std::array<std::string, kWorkshops> workshop_dates;  // ISO, strictly increasing
};

struct ScenarioSpec {
  std::vector<WavePlan> waves;
  std::vector<CovariateMarginal> covariates;
  ModelConfig config;
  std::string truth_json;  // structured parameter values (estimates format)
  std::uint64_t seed = kDefaultSeed;
};

ScenarioSpec parse_scenario(const std::string& path);
ScenarioSpec scenario_from_json_text(const std::string& text);

// ---------------------------------------------------------------------------
// Simulation. Draws covariates from the marginals, realises the mixing
// distribution, composes predictors through model_core::linear_predictor and
// samples ratings from model_core::ordered_probs, so the generator and the
// estimator share one implementation of the model equations.
// ---------------------------------------------------------------------------

struct SimulationOutput {
  Dataset dataset;
  DesignMatrices design;     // design implied by the scenario config
  ParameterLayout layout;
  ParameterVector truth;     // parsed against that layout
  Eigen::VectorXd truth_free;
};

SimulationOutput simulate_dataset(const ScenarioSpec& scenario);

// ---------------------------------------------------------------------------
// Recovery experiment: simulate -> estimate -> compare against truth.
// ---------------------------------------------------------------------------

struct RecoveryRow {
  std::string name;
  double truth = 0.0;
  double estimate = 0.0;
  double se = 0.0;
  bool within_2se = false;
};

struct RecoveryReport {
  std::vector<RecoveryRow> rows;   // all repetitions stacked
  int repetitions = 0;
  int converged_runs = 0;
  double share_within_2se = 0.0;   // over rows with se > 0
};

RecoveryReport recovery_experiment(const ScenarioSpec& scenario,
                                   int repetitions,
                                   const EstimateOptions& options = {});

}  // namespace delib
