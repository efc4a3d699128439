#pragma once

#include <Eigen/Core>
#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "delib/errors.hpp"

namespace delib {

// ---------------------------------------------------------------------------
// Panel geometry. Five stakeholder dimensions are rated on an 11-point scale
// (0..10) immediately before and after each of five workshops, giving time
// indices t = 1..10; workshop w runs between t = 2w-1 and t = 2w.
// ---------------------------------------------------------------------------

inline constexpr int kStakeholders = 5;
inline constexpr int kWorkshops = 5;
inline constexpr int kTimeIndices = 10;
inline constexpr int kCategories = 11;
inline constexpr int kThresholds = kCategories - 1;

enum class Stakeholder : int {
  kGovernment = 0,
  kSupermarkets = 1,
  kFoodIndustry = 2,
  kFarmers = 3,
  kIndividuals = 4,
};

const char* stakeholder_name(int s);
std::optional<int> stakeholder_index(const std::string& name);

// I_w(t) = 1 once workshop w has taken place by time index t, i.e. t >= 2w.
std::array<int, kWorkshops> workshop_indicators(int time_index);

// ---------------------------------------------------------------------------
// Raw records
// ---------------------------------------------------------------------------

struct RatingObservation {
  std::string individual_id;
  int wave = 0;        // wave number as it appears in the files
  int time_index = 0;  // 1..10
  int stakeholder = 0; // index into stakeholder_name order
  int rating = 0;      // 0..10
  int date = 0;        // days since 1970-01-01
};

struct IndividualRecord {
  std::string individual_id;
  int wave = 0;
  // One level index per covariate, aligned with CovariateTable::names.
  std::vector<int> levels;
};

struct CovariateTable {
  std::vector<std::string> names;                 // file column order
  std::vector<std::vector<std::string>> levels;   // sorted unique per covariate
  int covariate_index(const std::string& name) const;
  int level_index(int covariate, const std::string& level) const;
};

struct WaveSchedule {
  std::vector<int> wave_numbers;                        // sorted ascending
  std::vector<std::array<int, kWorkshops>> dates;       // per wave, strictly increasing
  int horizon_days = 0;  // D; defaults to the longest between-workshop gap

  int wave_slot(int wave_number) const;         // -1 if unknown
  int workshop_date(int wave_number, int workshop) const;  // workshop 1..5
  // Measurement t is taken on the day of workshop ceil(t/2).
  int measurement_date(int wave_number, int time_index) const;
  int max_gap_days() const;
};

// Days between workshop w and measurement t for one wave's calendar.
// Requires I_w(t) = 1; asking about a workshop that has not yet occurred
// at t is a caller bug.
int elapsed_days(const WaveSchedule& schedule, int wave_number, int workshop,
                 int time_index);

struct Dataset {
  std::vector<IndividualRecord> individuals;
  std::vector<RatingObservation> observations;
  WaveSchedule schedule;
  CovariateTable covariates;
  // Default calendar-period mapping: calendar-month bins of the measurement
  // dates occurring in `observations`, indexed 1..n_periods in date order.
  std::map<int, int> period_of_date;
  int n_periods = 0;
  // Individuals with a one-sided measurement pair around an attended workshop.
  std::vector<std::string> incomplete_individuals;
  int unknown_level_warnings = 0;

  std::unordered_map<std::string, int> individual_slot;  // id -> individuals[]
};

Dataset load_dataset(const std::string& ratings_csv,
                     const std::string& individuals_csv,
                     const std::string& schedule_csv);

// Recomputes derived fields (id -> slot map, incomplete flags, default
// calendar periods) after the record vectors change. load_dataset and the
// simulator both run through this.
void finalize_dataset(Dataset& data);

void write_dataset(const Dataset& data, const std::string& out_dir);

// Copy with flagged incomplete individuals (and their observations) removed.
Dataset drop_incomplete(const Dataset& data);

// ---------------------------------------------------------------------------
// Model configuration
// ---------------------------------------------------------------------------

inline constexpr std::uint64_t kDefaultSeed = 20240305ULL;
inline constexpr int kDefaultDraws = 500;

struct ModelConfig {
  // Covariate names entering each stakeholder equation.
  std::array<std::vector<std::string>, kStakeholders> stakeholder_covariates;
  std::vector<std::string> reversion_covariates;  // z's shifting rho
  std::vector<std::string> alpha_covariates;      // z's shifting alpha
  bool sigma_rho = false;
  bool sigma_alpha = false;
  std::array<bool, kStakeholders> sigma_xi{};     // per-equation random intercept
  bool sigma_eta = false;                         // shared survey-occasion noise
  int draws = kDefaultDraws;
  std::uint64_t seed = kDefaultSeed;
  std::optional<int> horizon_days;                // override for D
  std::string calendar_binning = "month";         // month | week | none
  std::map<std::string, std::string> base_levels; // covariate -> base level
};

ModelConfig parse_model_config(const std::string& path);
ModelConfig model_config_from_json_text(const std::string& text);
std::string model_config_to_json_text(const ModelConfig& config);

// ---------------------------------------------------------------------------
// Estimation design: everything the likelihood needs, laid out numerically.
// ---------------------------------------------------------------------------

struct CompactObs {
  std::int8_t stakeholder;
  std::int8_t time_index;  // 1..10
  std::int8_t rating;      // 0..10
};

// Pre-resolved decay geometry for one (wave, t) cell: the set of workshops
// with I_w(t) = 1 together with how d(Delta_w) behaves there.
struct DecayCell {
  int n_active = 0;
  // kind: 0 -> d = 0 (Delta = 0, same-day measurement), 1 -> d = 1
  // (Delta >= D), 2 -> interior with coefficient c = 1/D - 1/(D - Delta).
  std::array<std::int8_t, kWorkshops> kind{};
  std::array<double, kWorkshops> coef{};
  std::array<int, kWorkshops> delta_days{};
};

struct DesignMatrices {
  ModelConfig config;  // as applied (horizon resolved, bases resolved)
  int n_individuals = 0;
  int n_waves = 0;
  int n_periods = 0;   // calendar periods actually observed
  int horizon_days = 0;

  std::vector<std::string> individual_ids;
  std::vector<int> wave_of;       // individual -> wave slot
  std::vector<int> wave_numbers;  // wave slot -> wave number (sorted)

  // Wave fixed-effect dummies; the highest-numbered wave is the base.
  Eigen::MatrixXd wave_dummies;   // N x (n_waves - 1)
  std::vector<std::string> wave_terms;

  std::array<Eigen::MatrixXd, kStakeholders> eq_covariates;  // N x terms_s
  std::array<std::vector<std::string>, kStakeholders> eq_terms;

  Eigen::MatrixXd reversion_covariates;  // N x terms
  std::vector<std::string> reversion_terms;
  Eigen::MatrixXd alpha_covariates;
  std::vector<std::string> alpha_terms;
  // Levels and resolved base for every covariate used by the reversion or
  // alpha blocks; reporting needs these to validate group definitions.
  std::map<std::string, std::pair<std::vector<std::string>, std::string>>
      mixing_covariates;

  // Per individual, observations sorted by (time_index, stakeholder).
  std::vector<std::vector<CompactObs>> obs;

  // Per wave slot: calendar period (0-based) and decay geometry for each t.
  std::vector<std::array<int, kTimeIndices>> period_of;
  std::vector<std::array<DecayCell, kTimeIndices>> decay;
  std::vector<std::string> period_labels;  // chronological; index 0 is base
};

// Expands the configured covariates into dummy columns, resolves the decay
// geometry from the schedule, and validates the config against the data.
DesignMatrices build_design(const Dataset& data, const ModelConfig& config);

}  // namespace delib
