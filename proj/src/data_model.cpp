#include "delib/data_model.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "delib/dates.hpp"
#include "json.hpp"

namespace delib {

namespace {

using nlohmann::json;
using nlohmann::ordered_json;

const char* kStakeholderNames[kStakeholders] = {
    "government", "supermarkets", "food_industry", "farmers", "individuals"};

// Values (beyond the empty string) that demographic columns map to the
// "missing" level, counted as warnings.
const std::set<std::string> kUnknownMarkers = {
    "NA", "N/A", "na", "n/a", "NaN", "nan", "?", "unknown", "Unknown",
    "UNKNOWN"};

std::string trim(const std::string& s) {
  std::size_t b = 0, e = s.size();
  while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
  while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r'))
    --e;
  return s.substr(b, e - b);
}

std::vector<std::string> split_line(const std::string& line) {
  // Field values in these schemas never contain commas or quotes, so a
  // plain split is the whole grammar.
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + 1;
  }
  return out;
}

struct CsvFile {
  std::string path;
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::vector<int> line_numbers;
};

CsvFile read_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open " + path);
  CsvFile out;
  out.path = path;
  std::string line;
  int line_no = 0;
  bool have_header = false;
  while (std::getline(f, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    auto fields = split_line(line);
    if (!have_header) {
      out.header = std::move(fields);
      have_header = true;
    } else {
      out.rows.push_back(std::move(fields));
      out.line_numbers.push_back(line_no);
    }
  }
  if (!have_header) throw ValidationError(path + ": empty file, header expected");
  return out;
}

std::string row_ref(const CsvFile& csv, std::size_t row) {
  return csv.path + ":" + std::to_string(csv.line_numbers[row]);
}

long parse_long(const std::string& s, const std::string& where) {
  if (s.empty()) throw ValidationError(where + ": empty integer field");
  std::size_t used = 0;
  long v = 0;
  try {
    v = std::stol(s, &used);
  } catch (const std::exception&) {
    throw ValidationError(where + ": '" + s + "' is not an integer");
  }
  if (used != s.size()) {
    throw ValidationError(where + ": '" + s + "' is not an integer");
  }
  return v;
}

void require_header(const CsvFile& csv, const std::vector<std::string>& want) {
  if (csv.header.size() < want.size()) {
    throw ValidationError(csv.path + ": header must start with the columns " +
                          [&] {
                            std::string s;
                            for (const auto& w : want) s += w + ",";
                            s.pop_back();
                            return s;
                          }());
  }
  for (std::size_t i = 0; i < want.size(); ++i) {
    if (csv.header[i] != want[i]) {
      throw ValidationError(csv.path + ": expected column " +
                            std::to_string(i + 1) + " to be '" + want[i] +
                            "', found '" + csv.header[i] + "'");
    }
  }
}

}  // namespace

const char* stakeholder_name(int s) { return kStakeholderNames[s]; }

std::optional<int> stakeholder_index(const std::string& name) {
  for (int s = 0; s < kStakeholders; ++s) {
    if (name == kStakeholderNames[s]) return s;
  }
  return std::nullopt;
}

std::array<int, kWorkshops> workshop_indicators(int time_index) {
  if (time_index < 1 || time_index > kTimeIndices) {
    throw std::invalid_argument("workshop_indicators: time index out of range");
  }
  std::array<int, kWorkshops> ind{};
  for (int w = 1; w <= kWorkshops; ++w) {
    ind[w - 1] = time_index >= 2 * w ? 1 : 0;
  }
  return ind;
}

int CovariateTable::covariate_index(const std::string& name) const {
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return int(i);
  }
  return -1;
}

int CovariateTable::level_index(int covariate, const std::string& level) const {
  const auto& ls = levels[covariate];
  for (std::size_t i = 0; i < ls.size(); ++i) {
    if (ls[i] == level) return int(i);
  }
  return -1;
}

int WaveSchedule::wave_slot(int wave_number) const {
  for (std::size_t i = 0; i < wave_numbers.size(); ++i) {
    if (wave_numbers[i] == wave_number) return int(i);
  }
  return -1;
}

int WaveSchedule::workshop_date(int wave_number, int workshop) const {
  const int slot = wave_slot(wave_number);
  if (slot < 0 || workshop < 1 || workshop > kWorkshops) {
    throw std::invalid_argument("workshop_date: unknown wave or workshop");
  }
  return dates[slot][workshop - 1];
}

int WaveSchedule::measurement_date(int wave_number, int time_index) const {
  if (time_index < 1 || time_index > kTimeIndices) {
    throw std::invalid_argument("measurement_date: time index out of range");
  }
  // t sits on the day of workshop ceil(t/2): before (odd t) or after (even t).
  return workshop_date(wave_number, (time_index + 1) / 2);
}

int WaveSchedule::max_gap_days() const {
  int gap = 0;
  for (const auto& d : dates) {
    for (int w = 1; w < kWorkshops; ++w) gap = std::max(gap, d[w] - d[w - 1]);
  }
  return gap;
}

int elapsed_days(const WaveSchedule& schedule, int wave_number, int workshop,
                 int time_index) {
  const auto ind = workshop_indicators(time_index);
  if (workshop < 1 || workshop > kWorkshops || !ind[workshop - 1]) {
    throw std::invalid_argument(
        "elapsed_days: workshop has not occurred by this time index");
  }
  return schedule.measurement_date(wave_number, time_index) -
         schedule.workshop_date(wave_number, workshop);
}

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

void finalize_dataset(Dataset& data) {
  data.individual_slot.clear();
  for (std::size_t i = 0; i < data.individuals.size(); ++i) {
    const auto& id = data.individuals[i].individual_id;
    if (!data.individual_slot.emplace(id, int(i)).second) {
      throw ValidationError("duplicate individual_id '" + id + "'");
    }
  }

  // Flag one-sided workshop pairs: attended workshop w contributes t = 2w-1
  // (before) and t = 2w (after); having one side without the other makes the
  // before/after change undefined for that individual.
  std::vector<std::array<int, kTimeIndices>> seen(
      data.individuals.size(), std::array<int, kTimeIndices>{});
  for (const auto& obs : data.observations) {
    const int slot = data.individual_slot.at(obs.individual_id);
    seen[slot][obs.time_index - 1] = 1;
  }
  data.incomplete_individuals.clear();
  for (std::size_t i = 0; i < data.individuals.size(); ++i) {
    for (int w = 1; w <= kWorkshops; ++w) {
      const int before = seen[i][2 * w - 2], after = seen[i][2 * w - 1];
      if (before != after) {
        data.incomplete_individuals.push_back(
            data.individuals[i].individual_id);
        break;
      }
    }
  }

  // Default calendar periods: month bins over observed measurement dates.
  std::set<std::pair<int, int>> months;
  for (const auto& obs : data.observations) {
    months.insert(year_month(obs.date));
  }
  std::map<std::pair<int, int>, int> month_period;
  int p = 0;
  for (const auto& ym : months) month_period[ym] = ++p;
  data.n_periods = p;
  data.period_of_date.clear();
  for (const auto& obs : data.observations) {
    data.period_of_date[obs.date] = month_period.at(year_month(obs.date));
  }
}

Dataset load_dataset(const std::string& ratings_csv,
                     const std::string& individuals_csv,
                     const std::string& schedule_csv) {
  Dataset data;

  // --- schedule ---
  {
    CsvFile csv = read_csv(schedule_csv);
    require_header(csv, {"wave", "workshop", "date"});
    std::map<int, std::array<int, kWorkshops>> dates;
    std::map<int, std::array<bool, kWorkshops>> seen;
    for (std::size_t r = 0; r < csv.rows.size(); ++r) {
      const auto& row = csv.rows[r];
      if (row.size() != 3) {
        throw ValidationError(row_ref(csv, r) + ": expected 3 fields");
      }
      const int wave = int(parse_long(row[0], row_ref(csv, r)));
      const int workshop = int(parse_long(row[1], row_ref(csv, r)));
      if (wave < 1) {
        throw ValidationError(row_ref(csv, r) + ": wave must be positive");
      }
      if (workshop < 1 || workshop > kWorkshops) {
        throw ValidationError(row_ref(csv, r) + ": workshop must be 1..5");
      }
      if (seen[wave][workshop - 1]) {
        throw ValidationError(row_ref(csv, r) + ": duplicate (wave, workshop)");
      }
      seen[wave][workshop - 1] = true;
      dates[wave][workshop - 1] = parse_date(row[2]);
    }
    if (dates.empty()) throw ValidationError(schedule_csv + ": no rows");
    for (const auto& [wave, flags] : seen) {
      for (int w = 0; w < kWorkshops; ++w) {
        if (!flags[w]) {
          throw ValidationError(schedule_csv + ": wave " +
                                std::to_string(wave) + " lacks workshop " +
                                std::to_string(w + 1));
        }
      }
    }
    for (const auto& [wave, d] : dates) {
      for (int w = 1; w < kWorkshops; ++w) {
        if (!(d[w] > d[w - 1])) {
          throw ValidationError(schedule_csv + ": wave " +
                                std::to_string(wave) +
                                " workshop dates must be strictly increasing");
        }
      }
      data.schedule.wave_numbers.push_back(wave);
      data.schedule.dates.push_back(d);
    }
    data.schedule.horizon_days = data.schedule.max_gap_days();
  }

  // --- individuals ---
  {
    CsvFile csv = read_csv(individuals_csv);
    require_header(csv, {"individual_id", "wave"});
    for (std::size_t c = 2; c < csv.header.size(); ++c) {
      const std::string& name = csv.header[c];
      if (name.empty()) {
        throw ValidationError(individuals_csv + ": empty covariate name");
      }
      if (std::find(data.covariates.names.begin(), data.covariates.names.end(),
                    name) != data.covariates.names.end()) {
        throw ValidationError(individuals_csv + ": duplicate covariate '" +
                              name + "'");
      }
      data.covariates.names.push_back(name);
    }
    const std::size_t n_cov = data.covariates.names.size();

    // First pass: canonicalise values and collect level sets.
    std::vector<std::vector<std::string>> raw(csv.rows.size());
    std::vector<std::set<std::string>> level_sets(n_cov);
    for (std::size_t r = 0; r < csv.rows.size(); ++r) {
      const auto& row = csv.rows[r];
      if (row.size() != 2 + n_cov) {
        throw ValidationError(row_ref(csv, r) + ": expected " +
                              std::to_string(2 + n_cov) + " fields");
      }
      raw[r].resize(n_cov);
      for (std::size_t c = 0; c < n_cov; ++c) {
        std::string v = row[2 + c];
        if (v.empty()) {
          v = "missing";
        } else if (kUnknownMarkers.count(v)) {
          v = "missing";
          ++data.unknown_level_warnings;
        }
        raw[r][c] = v;
        level_sets[c].insert(v);
      }
    }
    data.covariates.levels.resize(n_cov);
    for (std::size_t c = 0; c < n_cov; ++c) {
      data.covariates.levels[c].assign(level_sets[c].begin(),
                                       level_sets[c].end());
    }

    for (std::size_t r = 0; r < csv.rows.size(); ++r) {
      const auto& row = csv.rows[r];
      IndividualRecord rec;
      rec.individual_id = row[0];
      if (rec.individual_id.empty()) {
        throw ValidationError(row_ref(csv, r) + ": empty individual_id");
      }
      rec.wave = int(parse_long(row[1], row_ref(csv, r)));
      if (data.schedule.wave_slot(rec.wave) < 0) {
        throw ValidationError(row_ref(csv, r) + ": wave " +
                              std::to_string(rec.wave) +
                              " is not in the schedule");
      }
      rec.levels.resize(n_cov);
      for (std::size_t c = 0; c < n_cov; ++c) {
        rec.levels[c] = data.covariates.level_index(int(c), raw[r][c]);
      }
      data.individuals.push_back(std::move(rec));
    }
  }

  // Slot map needed before ratings cross-referencing; full finalize runs at
  // the end once observations exist.
  {
    data.individual_slot.clear();
    for (std::size_t i = 0; i < data.individuals.size(); ++i) {
      const auto& id = data.individuals[i].individual_id;
      if (!data.individual_slot.emplace(id, int(i)).second) {
        throw ValidationError(individuals_csv + ": duplicate individual_id '" +
                              id + "'");
      }
    }
  }

  // --- ratings ---
  {
    CsvFile csv = read_csv(ratings_csv);
    require_header(csv, {"individual_id", "wave", "time_index", "stakeholder",
                         "rating", "date"});
    std::set<std::tuple<int, int, int>> keys;  // (slot, stakeholder, t)
    for (std::size_t r = 0; r < csv.rows.size(); ++r) {
      const auto& row = csv.rows[r];
      if (row.size() != 6) {
        throw ValidationError(row_ref(csv, r) + ": expected 6 fields");
      }
      RatingObservation obs;
      obs.individual_id = row[0];
      const auto it = data.individual_slot.find(obs.individual_id);
      if (it == data.individual_slot.end()) {
        throw ValidationError(row_ref(csv, r) + ": individual '" + row[0] +
                              "' has no demographics record");
      }
      obs.wave = int(parse_long(row[1], row_ref(csv, r)));
      if (obs.wave != data.individuals[it->second].wave) {
        throw ValidationError(row_ref(csv, r) + ": wave " + row[1] +
                              " disagrees with the individuals file");
      }
      obs.time_index = int(parse_long(row[2], row_ref(csv, r)));
      if (obs.time_index < 1 || obs.time_index > kTimeIndices) {
        throw ValidationError(row_ref(csv, r) + ": time_index must be 1..10");
      }
      const auto s = stakeholder_index(row[3]);
      if (!s) {
        throw ValidationError(row_ref(csv, r) + ": unknown stakeholder '" +
                              row[3] + "'");
      }
      obs.stakeholder = *s;
      obs.rating = int(parse_long(row[4], row_ref(csv, r)));
      if (obs.rating < 0 || obs.rating >= kCategories) {
        throw ValidationError(row_ref(csv, r) + ": rating must be 0..10");
      }
      obs.date = parse_date(row[5]);
      const int expected =
          data.schedule.measurement_date(obs.wave, obs.time_index);
      if (obs.date != expected) {
        throw ValidationError(
            row_ref(csv, r) + ": date " + row[5] +
            " does not match the schedule for wave " + row[1] +
            ", time index " + row[2] + " (expected " + format_date(expected) +
            ")");
      }
      if (!keys.emplace(it->second, obs.stakeholder, obs.time_index).second) {
        throw ValidationError(row_ref(csv, r) +
                              ": duplicate (individual, stakeholder, time)");
      }
      data.observations.push_back(std::move(obs));
    }
  }

  finalize_dataset(data);
  return data;
}

void write_dataset(const Dataset& data, const std::string& out_dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(out_dir, ec);

  {
    std::ofstream f(out_dir + "/ratings.csv");
    if (!f) throw IoError("cannot write " + out_dir + "/ratings.csv");
    f << "individual_id,wave,time_index,stakeholder,rating,date\n";
    for (const auto& o : data.observations) {
      f << o.individual_id << ',' << o.wave << ',' << o.time_index << ','
        << stakeholder_name(o.stakeholder) << ',' << o.rating << ','
        << format_date(o.date) << '\n';
    }
  }
  {
    std::ofstream f(out_dir + "/individuals.csv");
    if (!f) throw IoError("cannot write " + out_dir + "/individuals.csv");
    f << "individual_id,wave";
    for (const auto& n : data.covariates.names) f << ',' << n;
    f << '\n';
    for (const auto& ind : data.individuals) {
      f << ind.individual_id << ',' << ind.wave;
      for (std::size_t c = 0; c < ind.levels.size(); ++c) {
        const std::string& level = data.covariates.levels[c][ind.levels[c]];
        f << ',' << (level == "missing" ? "" : level);
      }
      f << '\n';
    }
  }
  {
    std::ofstream f(out_dir + "/schedule.csv");
    if (!f) throw IoError("cannot write " + out_dir + "/schedule.csv");
    f << "wave,workshop,date\n";
    for (std::size_t m = 0; m < data.schedule.wave_numbers.size(); ++m) {
      for (int w = 0; w < kWorkshops; ++w) {
        f << data.schedule.wave_numbers[m] << ',' << (w + 1) << ','
          << format_date(data.schedule.dates[m][w]) << '\n';
      }
    }
  }
}

Dataset drop_incomplete(const Dataset& data) {
  std::set<std::string> flagged(data.incomplete_individuals.begin(),
                                data.incomplete_individuals.end());
  Dataset out;
  out.schedule = data.schedule;
  out.covariates = data.covariates;
  out.unknown_level_warnings = data.unknown_level_warnings;
  for (const auto& ind : data.individuals) {
    if (!flagged.count(ind.individual_id)) out.individuals.push_back(ind);
  }
  for (const auto& obs : data.observations) {
    if (!flagged.count(obs.individual_id)) out.observations.push_back(obs);
  }
  finalize_dataset(out);
  return out;
}

// ---------------------------------------------------------------------------
// ModelConfig
// ---------------------------------------------------------------------------

namespace {

void check_keys(const json& obj, const std::set<std::string>& allowed,
                const std::string& where) {
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw ValidationError("config: unknown key '" + it.key() + "' in " +
                            where);
    }
  }
}

std::vector<std::string> string_list(const json& j, const std::string& where) {
  if (!j.is_array()) throw ValidationError("config: " + where + " must be a list");
  std::vector<std::string> out;
  for (const auto& v : j) {
    if (!v.is_string()) {
      throw ValidationError("config: " + where + " entries must be strings");
    }
    out.push_back(v.get<std::string>());
  }
  return out;
}

ModelConfig config_from_json(const json& j) {
  if (!j.is_object()) throw ValidationError("config: top level must be an object");
  check_keys(j,
             {"stakeholder_covariates", "reversion_covariates",
              "alpha_covariates", "random_components", "draws", "seed",
              "horizon_days", "calendar_binning", "base_levels"},
             "the config");
  ModelConfig cfg;
  if (j.contains("stakeholder_covariates")) {
    const auto& sc = j.at("stakeholder_covariates");
    if (!sc.is_object()) {
      throw ValidationError("config: stakeholder_covariates must be an object");
    }
    for (auto it = sc.begin(); it != sc.end(); ++it) {
      const auto s = stakeholder_index(it.key());
      if (!s) {
        throw ValidationError("config: unknown stakeholder '" + it.key() + "'");
      }
      cfg.stakeholder_covariates[*s] =
          string_list(it.value(), "stakeholder_covariates." + it.key());
    }
  }
  if (j.contains("reversion_covariates")) {
    cfg.reversion_covariates =
        string_list(j.at("reversion_covariates"), "reversion_covariates");
  }
  if (j.contains("alpha_covariates")) {
    cfg.alpha_covariates =
        string_list(j.at("alpha_covariates"), "alpha_covariates");
  }
  if (j.contains("random_components")) {
    const auto& rc = j.at("random_components");
    check_keys(rc, {"sigma_rho", "sigma_alpha", "sigma_xi", "sigma_eta"},
               "random_components");
    cfg.sigma_rho = rc.value("sigma_rho", false);
    cfg.sigma_alpha = rc.value("sigma_alpha", false);
    cfg.sigma_eta = rc.value("sigma_eta", false);
    if (rc.contains("sigma_xi")) {
      const auto& sx = rc.at("sigma_xi");
      if (sx.is_boolean()) {
        cfg.sigma_xi.fill(sx.get<bool>());
      } else if (sx.is_object()) {
        for (auto it = sx.begin(); it != sx.end(); ++it) {
          const auto s = stakeholder_index(it.key());
          if (!s) {
            throw ValidationError("config: unknown stakeholder '" + it.key() +
                                  "' under sigma_xi");
          }
          cfg.sigma_xi[*s] = it.value().get<bool>();
        }
      } else {
        throw ValidationError(
            "config: sigma_xi must be a bool or a per-stakeholder object");
      }
    }
  }
  if (j.contains("draws")) {
    cfg.draws = j.at("draws").get<int>();
    if (cfg.draws < 1) throw ValidationError("config: draws must be >= 1");
  }
  if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
  if (j.contains("horizon_days")) {
    cfg.horizon_days = j.at("horizon_days").get<int>();
    if (*cfg.horizon_days < 1) {
      throw ValidationError("config: horizon_days must be positive");
    }
  }
  if (j.contains("calendar_binning")) {
    cfg.calendar_binning = j.at("calendar_binning").get<std::string>();
    if (cfg.calendar_binning != "month" && cfg.calendar_binning != "week" &&
        cfg.calendar_binning != "none") {
      throw ValidationError(
          "config: calendar_binning must be month, week, or none");
    }
  }
  if (j.contains("base_levels")) {
    const auto& bl = j.at("base_levels");
    if (!bl.is_object()) {
      throw ValidationError("config: base_levels must be an object");
    }
    for (auto it = bl.begin(); it != bl.end(); ++it) {
      cfg.base_levels[it.key()] = it.value().get<std::string>();
    }
  }
  return cfg;
}

json config_to_json(const ModelConfig& cfg) {
  ordered_json j;
  ordered_json sc;
  for (int s = 0; s < kStakeholders; ++s) {
    sc[stakeholder_name(s)] = cfg.stakeholder_covariates[s];
  }
  j["stakeholder_covariates"] = sc;
  j["reversion_covariates"] = cfg.reversion_covariates;
  j["alpha_covariates"] = cfg.alpha_covariates;
  ordered_json rc;
  rc["sigma_rho"] = cfg.sigma_rho;
  rc["sigma_alpha"] = cfg.sigma_alpha;
  ordered_json sx;
  for (int s = 0; s < kStakeholders; ++s) {
    sx[stakeholder_name(s)] = cfg.sigma_xi[s];
  }
  rc["sigma_xi"] = sx;
  rc["sigma_eta"] = cfg.sigma_eta;
  j["random_components"] = rc;
  j["draws"] = cfg.draws;
  j["seed"] = cfg.seed;
  if (cfg.horizon_days) j["horizon_days"] = *cfg.horizon_days;
  j["calendar_binning"] = cfg.calendar_binning;
  j["base_levels"] = cfg.base_levels;
  return j;
}

}  // namespace

ModelConfig model_config_from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: invalid JSON: ") + e.what());
  }
  try {
    return config_from_json(j);
  } catch (const json::exception& e) {
    throw ValidationError(std::string("config: ") + e.what());
  }
}

ModelConfig parse_model_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return model_config_from_json_text(ss.str());
}

std::string model_config_to_json_text(const ModelConfig& config) {
  return config_to_json(config).dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Design construction
// ---------------------------------------------------------------------------

namespace {

// Dummy columns for one covariate list: terms are "cov=level" for every
// non-base level, base defaulting to the lexicographically smallest.
void expand_covariates(
    const Dataset& data, const std::vector<std::string>& cov_names,
    const ModelConfig& config,
    const std::vector<int>& kept,  // dataset slots
    Eigen::MatrixXd* matrix, std::vector<std::string>* terms,
    std::map<std::string, std::pair<std::vector<std::string>, std::string>>*
        covariate_meta = nullptr) {
  std::vector<std::pair<int, int>> columns;  // (covariate, level)
  terms->clear();
  std::set<std::string> seen;
  for (const auto& name : cov_names) {
    if (!seen.insert(name).second) {
      throw ValidationError("config: covariate '" + name +
                            "' listed twice in one block");
    }
    const int c = data.covariates.covariate_index(name);
    if (c < 0) {
      std::string known;
      for (const auto& n : data.covariates.names) known += " " + n;
      throw ValidationError("config: covariate '" + name +
                            "' is not in the individuals file; available:" +
                            (known.empty() ? " (none)" : known));
    }
    std::string base = data.covariates.levels[c].front();
    const auto it = config.base_levels.find(name);
    if (it != config.base_levels.end()) {
      if (data.covariates.level_index(c, it->second) < 0) {
        throw ValidationError("config: base level '" + it->second +
                              "' does not occur for covariate '" + name + "'");
      }
      base = it->second;
    }
    if (covariate_meta) {
      (*covariate_meta)[name] = {data.covariates.levels[c], base};
    }
    for (std::size_t l = 0; l < data.covariates.levels[c].size(); ++l) {
      const std::string& level = data.covariates.levels[c][l];
      if (level == base) continue;
      columns.emplace_back(c, int(l));
      terms->push_back(name + "=" + level);
    }
  }
  matrix->resize(int(kept.size()), int(columns.size()));
  for (std::size_t i = 0; i < kept.size(); ++i) {
    const auto& rec = data.individuals[kept[i]];
    for (std::size_t j = 0; j < columns.size(); ++j) {
      (*matrix)(int(i), int(j)) =
          rec.levels[columns[j].first] == columns[j].second ? 1.0 : 0.0;
    }
  }
}

}  // namespace

DesignMatrices build_design(const Dataset& data, const ModelConfig& config) {
  DesignMatrices design;
  design.config = config;

  // Individuals retained: everyone with at least one observation, in dataset
  // order. (Incomplete-pair filtering is a separate, explicit step.)
  std::vector<std::vector<CompactObs>> obs_by_slot(data.individuals.size());
  for (const auto& obs : data.observations) {
    const auto it = data.individual_slot.find(obs.individual_id);
    if (it == data.individual_slot.end()) {
      throw ValidationError("design: observation for unknown individual '" +
                            obs.individual_id + "'");
    }
    obs_by_slot[it->second].push_back(CompactObs{
        std::int8_t(obs.stakeholder), std::int8_t(obs.time_index),
        std::int8_t(obs.rating)});
  }
  std::vector<int> kept;
  for (std::size_t i = 0; i < data.individuals.size(); ++i) {
    if (!obs_by_slot[i].empty()) kept.push_back(int(i));
  }
  if (kept.empty()) throw ValidationError("design: no rated individuals");

  design.n_individuals = int(kept.size());
  for (const int slot : kept) {
    design.individual_ids.push_back(data.individuals[slot].individual_id);
    auto& v = obs_by_slot[slot];
    std::sort(v.begin(), v.end(), [](const CompactObs& a, const CompactObs& b) {
      return std::make_pair(a.time_index, a.stakeholder) <
             std::make_pair(b.time_index, b.stakeholder);
    });
    design.obs.push_back(std::move(v));
  }

  // Waves actually observed; the highest-numbered one is the base.
  {
    std::set<int> waves;
    for (const int slot : kept) waves.insert(data.individuals[slot].wave);
    design.wave_numbers.assign(waves.begin(), waves.end());
    design.n_waves = int(design.wave_numbers.size());
    design.wave_dummies =
        Eigen::MatrixXd::Zero(design.n_individuals, design.n_waves - 1);
    for (int m = 0; m + 1 < design.n_waves; ++m) {
      design.wave_terms.push_back("wave_" +
                                  std::to_string(design.wave_numbers[m]));
    }
    for (std::size_t i = 0; i < kept.size(); ++i) {
      const int wave = data.individuals[kept[i]].wave;
      const int m = int(std::lower_bound(design.wave_numbers.begin(),
                                         design.wave_numbers.end(), wave) -
                        design.wave_numbers.begin());
      design.wave_of.push_back(m);
      if (m + 1 < design.n_waves) design.wave_dummies(int(i), m) = 1.0;
    }
  }

  // Horizon D: config override (never below the longest observed gap) or the
  // schedule default.
  {
    const int max_gap = data.schedule.max_gap_days();
    design.horizon_days = config.horizon_days.value_or(
        data.schedule.horizon_days > 0 ? data.schedule.horizon_days : max_gap);
    if (design.horizon_days < max_gap) {
      throw ValidationError(
          "config: horizon_days " + std::to_string(design.horizon_days) +
          " is shorter than the longest between-workshop gap (" +
          std::to_string(max_gap) + " days)");
    }
    if (design.horizon_days <= 0) {
      throw ValidationError("config: horizon must be positive");
    }
  }

  // Covariate blocks.
  for (int s = 0; s < kStakeholders; ++s) {
    expand_covariates(data, config.stakeholder_covariates[s], config, kept,
                      &design.eq_covariates[s], &design.eq_terms[s]);
  }
  expand_covariates(data, config.reversion_covariates, config, kept,
                    &design.reversion_covariates, &design.reversion_terms,
                    &design.mixing_covariates);
  expand_covariates(data, config.alpha_covariates, config, kept,
                    &design.alpha_covariates, &design.alpha_terms,
                    &design.mixing_covariates);

  // Calendar periods over observed measurement dates.
  std::map<int, int> period_of_date;  // 0-based
  {
    std::set<int> dates;
    for (const auto& obs : data.observations) dates.insert(obs.date);
    if (config.calendar_binning == "none") {
      for (const int d : dates) period_of_date[d] = 0;
      design.n_periods = 1;
      design.period_labels = {"all"};
    } else if (config.calendar_binning == "month") {
      std::map<std::pair<int, int>, int> bins;
      for (const int d : dates) bins.emplace(year_month(d), 0);
      int p = 0;
      for (auto& [ym, idx] : bins) idx = p++;
      design.n_periods = p;
      design.period_labels.resize(p);
      for (const int d : dates) {
        const int idx = bins.at(year_month(d));
        period_of_date[d] = idx;
        design.period_labels[idx] = month_label(d);
      }
    } else {  // week: 7-day bins anchored at the earliest observed date
      const int anchor = *dates.begin();
      std::map<int, int> bins;
      for (const int d : dates) bins.emplace((d - anchor) / 7, 0);
      int p = 0;
      for (auto& [wk, idx] : bins) idx = p++;
      design.n_periods = p;
      design.period_labels.resize(p);
      for (const auto& [wk, idx] : bins) {
        design.period_labels[idx] = "week_" + format_date(anchor + 7 * wk);
      }
      for (const int d : dates) period_of_date[d] = bins.at((d - anchor) / 7);
    }
  }

  // Per (wave, t): calendar period and decay geometry.
  design.period_of.resize(design.n_waves);
  design.decay.resize(design.n_waves);
  for (int m = 0; m < design.n_waves; ++m) {
    const int wave = design.wave_numbers[m];
    for (int t = 1; t <= kTimeIndices; ++t) {
      const int date = data.schedule.measurement_date(wave, t);
      const auto it = period_of_date.find(date);
      design.period_of[m][t - 1] = it == period_of_date.end() ? -1 : it->second;

      DecayCell cell;
      const auto ind = workshop_indicators(t);
      for (int w = 0; w < kWorkshops; ++w) {
        if (!ind[w]) break;  // workshops occur in order
        const int delta = date - data.schedule.workshop_date(wave, w + 1);
        cell.delta_days[cell.n_active] = delta;
        if (delta <= 0) {
          cell.kind[cell.n_active] = 0;
        } else if (delta >= design.horizon_days) {
          cell.kind[cell.n_active] = 1;
        } else {
          cell.kind[cell.n_active] = 2;
          cell.coef[cell.n_active] =
              1.0 / design.horizon_days -
              1.0 / (design.horizon_days - double(delta));
        }
        ++cell.n_active;
      }
      design.decay[m][t - 1] = cell;
    }
  }

  return design;
}

}  // namespace delib
