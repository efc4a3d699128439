// delib: estimate, simulate, describe, and report on repeated opinion
// ratings from deliberative events.

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "delib/data_model.hpp"
#include "delib/draws.hpp"
#include "delib/estimation.hpp"
#include "delib/numeric.hpp"
#include "delib/reporting.hpp"
#include "delib/synthesis.hpp"
#include "delib/version.hpp"
#include "json.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw delib::IoError("cannot open file: " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw delib::IoError("failed reading " + path);
  return buf.str();
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw delib::IoError("cannot write file: " + path);
  out << content;
  if (!out) throw delib::IoError("failed writing " + path);
}

std::string file_hash(const std::string& path) {
  const std::string bytes = read_file(path);
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%016llx",
                (unsigned long long)delib::fnv1a(bytes.data(), bytes.size()));
  return buf;
}

std::string iso_now() {
  const std::time_t now =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Every command writes one manifest per output directory: what ran, on which
// inputs (content-hashed), with which seed/draw settings, and how it ended.
struct ManifestBuilder {
  ordered_json j;

  ManifestBuilder(const std::string& command, int argc, char** argv) {
    j["command"] = command;
    std::vector<std::string> args(argv, argv + argc);
    j["invocation"] = args;
    j["toolkit_version"] = delib::kToolkitVersion;
    j["started_at"] = iso_now();
  }
  void input(const std::string& role, const std::string& path) {
    ordered_json entry;
    entry["path"] = path;
    entry["fnv1a"] = file_hash(path);
    j["inputs"][role] = entry;
  }
  void write(const std::string& out_dir) {
    j["finished_at"] = iso_now();
    write_file((fs::path(out_dir) / "manifest.json").string(),
               j.dump(2) + "\n");
  }
};

void ensure_out_dir(const std::string& out_dir) {
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) {
    throw delib::IoError("cannot create output directory: " + out_dir + " (" +
                         ec.message() + ")");
  }
}

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// estimate
// ---------------------------------------------------------------------------

struct EstimateArgs {
  std::string ratings, individuals, schedule, config, out;
  std::optional<std::uint64_t> seed;
  std::optional<int> draws;
  int threads = 1;
  int max_iterations = 500;
  std::optional<double> fix_sigmas;
  bool keep_incomplete = false;
  std::string draw_cache;
  bool quiet = false;
};

delib::DrawMatrix obtain_draws(const std::string& cache_path, int n, int q,
                               std::uint64_t seed) {
  if (!cache_path.empty() && fs::exists(cache_path)) {
    try {
      delib::DrawMatrix cached = delib::load_draws(cache_path);
      if (cached.n_individuals == n && cached.n_draws == q &&
          cached.n_dimensions == delib::kDrawDimensions &&
          cached.seed == seed) {
        return cached;
      }
      std::cerr << "note: draw cache does not match this run; regenerating\n";
    } catch (const delib::IoError& e) {
      std::cerr << "note: " << e.what() << "; regenerating draws\n";
    }
  }
  delib::DrawMatrix draws =
      delib::mlhs_draws(n, q, delib::kDrawDimensions, seed);
  if (!cache_path.empty()) delib::save_draws(draws, cache_path);
  return draws;
}

int cmd_estimate(const EstimateArgs& args, int argc, char** argv) {
  ManifestBuilder manifest("estimate", argc, argv);
  manifest.input("ratings", args.ratings);
  manifest.input("individuals", args.individuals);
  manifest.input("schedule", args.schedule);
  manifest.input("config", args.config);
  manifest.j["config_path"] = args.config;

  delib::Dataset data =
      delib::load_dataset(args.ratings, args.individuals, args.schedule);
  if (data.unknown_level_warnings > 0) {
    std::cerr << "note: " << data.unknown_level_warnings
              << " covariate value(s) treated as missing\n";
  }
  if (!args.keep_incomplete && !data.incomplete_individuals.empty()) {
    std::cerr << "note: dropping " << data.incomplete_individuals.size()
              << " individual(s) with one-sided workshop measurements\n";
    data = delib::drop_incomplete(data);
  }

  delib::ModelConfig config = delib::parse_model_config(args.config);
  if (args.seed) config.seed = *args.seed;
  if (args.draws) config.draws = *args.draws;

  const delib::DesignMatrices design = delib::build_design(data, config);
  const delib::DrawMatrix draws = obtain_draws(
      args.draw_cache, design.n_individuals, config.draws, config.seed);

  delib::EstimateOptions opts;
  opts.threads = args.threads;
  opts.max_iterations = args.max_iterations;
  opts.fix_sigmas = args.fix_sigmas;
  if (!args.quiet) {
    opts.on_iteration = [](int iter, double f, double gnorm) {
      std::fprintf(stderr, "iter %4d  loglik %14.6f  |grad| %9.3e\n", iter, f,
                   gnorm);
    };
  }
  const delib::EstimationResult result =
      delib::estimate_model(design, draws, opts);

  ensure_out_dir(args.out);
  const fs::path out(args.out);
  write_file((out / "estimates.json").string(),
             delib::estimation_result_to_json_text(result, design));
  write_file((out / "estimates.txt").string(),
             delib::estimation_result_to_table_text(result, design));
  {
    std::ostringstream cov;
    cov << "parameter";
    for (const auto& n : result.layout.names) cov << ',' << n;
    cov << '\n';
    for (int r = 0; r < result.layout.n_free; ++r) {
      cov << result.layout.names[r];
      for (int c = 0; c < result.layout.n_free; ++c) {
        cov << ',' << fmt17(result.covariance(r, c));
      }
      cov << '\n';
    }
    write_file((out / "covariance.csv").string(), cov.str());
  }
  {
    std::ostringstream con;
    con << "individual_id,loglik\n";
    for (std::size_t i = 0; i < result.individual_ids.size(); ++i) {
      con << result.individual_ids[i] << ','
          << fmt17(result.contributions[int(i)]) << '\n';
    }
    write_file((out / "contributions.csv").string(), con.str());
  }

  ordered_json conv;
  conv["converged"] = result.converged;
  conv["iterations"] = result.iterations;
  conv["gradient_norm"] = result.gradient_norm;
  conv["loglik"] = result.loglik;
  conv["floored_individuals"] = result.floored_individuals;
  conv["nonpositive_alpha_individuals"] = result.nonpositive_alpha_individuals;
  conv["covariance_warning"] = result.covariance_warning;
  manifest.j["seed"] = config.seed;
  manifest.j["draws"] = config.draws;
  manifest.j["threads"] = args.threads;
  manifest.j["n_individuals"] = design.n_individuals;
  manifest.j["convergence"] = conv;
  manifest.write(args.out);

  if (result.floored_individuals > 0) {
    std::cerr << "warning: " << result.floored_individuals
              << " individual likelihood(s) hit the underflow floor\n";
  }
  if (result.covariance_warning) {
    std::cerr << "warning: singular Hessian; covariance is a pseudo-inverse\n";
  }
  if (!result.converged) {
    std::cerr << "warning: optimizer did not converge after "
              << result.iterations << " iterations\n";
    return 3;
  }
  if (!args.quiet) {
    std::fprintf(stderr, "converged: loglik %.6f after %d iterations\n",
                 result.loglik, result.iterations);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string scenario, out;
  std::optional<std::uint64_t> seed;
  std::optional<int> draws;
};

int cmd_simulate(const SimulateArgs& args, int argc, char** argv) {
  ManifestBuilder manifest("simulate", argc, argv);
  manifest.input("scenario", args.scenario);

  delib::ScenarioSpec scenario = delib::parse_scenario(args.scenario);
  if (args.seed) scenario.seed = *args.seed;
  if (args.draws) scenario.config.draws = *args.draws;

  const delib::SimulationOutput sim = delib::simulate_dataset(scenario);
  ensure_out_dir(args.out);
  delib::write_dataset(sim.dataset, args.out);
  const fs::path out(args.out);
  write_file((out / "truth.json").string(),
             delib::parameters_to_json_text(sim.truth, sim.layout, sim.design));
  write_file((out / "config.json").string(),
             delib::model_config_to_json_text(scenario.config));

  manifest.j["seed"] = scenario.seed;
  manifest.j["draws"] = scenario.config.draws;
  manifest.j["n_individuals"] = sim.design.n_individuals;
  manifest.write(args.out);
  return 0;
}

// ---------------------------------------------------------------------------
// describe
// ---------------------------------------------------------------------------

struct DescribeArgs {
  std::string ratings, individuals, schedule, out;
  bool keep_incomplete = false;
};

int cmd_describe(const DescribeArgs& args, int argc, char** argv) {
  ManifestBuilder manifest("describe", argc, argv);
  manifest.input("ratings", args.ratings);
  manifest.input("individuals", args.individuals);
  manifest.input("schedule", args.schedule);

  delib::Dataset data =
      delib::load_dataset(args.ratings, args.individuals, args.schedule);
  if (!args.keep_incomplete && !data.incomplete_individuals.empty()) {
    std::cerr << "note: dropping " << data.incomplete_individuals.size()
              << " individual(s) with one-sided workshop measurements\n";
    data = delib::drop_incomplete(data);
  }

  ensure_out_dir(args.out);
  const fs::path out(args.out);
  delib::write_descriptives_csv(delib::describe(data),
                                (out / "descriptives.csv").string());
  delib::write_trajectories_csv(delib::trajectories(data),
                                (out / "trajectories.csv").string());
  manifest.j["n_individuals"] = int(data.individuals.size());
  manifest.write(args.out);
  return 0;
}

// ---------------------------------------------------------------------------
// curves
// ---------------------------------------------------------------------------

struct CurvesArgs {
  std::string estimates, groups, out;
  double grid_step = 1.0;
};

int cmd_curves(const CurvesArgs& args, int argc, char** argv) {
  ManifestBuilder manifest("curves", argc, argv);
  manifest.input("estimates", args.estimates);

  const delib::EstimationResult result =
      delib::estimation_result_from_json_text(read_file(args.estimates));

  std::vector<delib::GroupSetting> groups;
  if (args.groups.empty()) {
    groups.push_back({"base", {}});
  } else {
    manifest.input("groups", args.groups);
    json spec;
    try {
      spec = json::parse(read_file(args.groups));
    } catch (const json::exception& e) {
      throw delib::ValidationError(std::string("groups: invalid JSON: ") +
                                   e.what());
    }
    try {
      if (!spec.is_object() || !spec.contains("groups") ||
          !spec.at("groups").is_array()) {
        throw delib::ValidationError(
            "groups: expected an object with a 'groups' array");
      }
      for (const auto& g : spec.at("groups")) {
        delib::GroupSetting setting;
        setting.label = g.at("label").get<std::string>();
        if (g.contains("levels")) {
          for (auto it = g.at("levels").begin(); it != g.at("levels").end();
               ++it) {
            setting.levels[it.key()] = it.value().get<std::string>();
          }
        }
        groups.push_back(std::move(setting));
      }
    } catch (const json::exception& e) {
      throw delib::ValidationError(std::string("groups: ") + e.what());
    }
  }

  const auto curves = delib::reversion_curves(
      result, groups, double(result.horizon_days), args.grid_step);
  ensure_out_dir(args.out);
  delib::write_curves_csv(curves,
                          (fs::path(args.out) / "curves.csv").string());
  manifest.write(args.out);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Deliberative-event opinion dynamics toolkit"};
  app.set_version_flag("--version", delib::kToolkitVersion);
  app.require_subcommand(1);

  EstimateArgs est;
  CLI::App* cmd_est = app.add_subcommand(
      "estimate", "Fit the reversion model by simulated maximum likelihood");
  cmd_est->add_option("--ratings", est.ratings, "ratings CSV")->required();
  cmd_est->add_option("--individuals", est.individuals, "individuals CSV")
      ->required();
  cmd_est->add_option("--schedule", est.schedule, "workshop schedule CSV")
      ->required();
  cmd_est->add_option("--config", est.config, "model config JSON")->required();
  cmd_est->add_option("--out", est.out, "output directory")->required();
  cmd_est->add_option("--seed", est.seed, "override the config draw seed");
  cmd_est->add_option("--draws", est.draws, "override the config draw count");
  cmd_est->add_option("--threads", est.threads, "worker threads");
  cmd_est->add_option("--max-iterations", est.max_iterations,
                      "optimizer iteration cap");
  cmd_est->add_option("--fix-sigmas", est.fix_sigmas,
                      "pin all active sigmas at this value");
  cmd_est->add_flag("--keep-incomplete", est.keep_incomplete,
                    "keep individuals with one-sided workshop measurements");
  cmd_est->add_option("--draw-cache", est.draw_cache,
                      "binary draw cache file (reused when it matches)");
  cmd_est->add_flag("--quiet", est.quiet, "suppress progress output");

  SimulateArgs sim;
  CLI::App* cmd_sim = app.add_subcommand(
      "simulate", "Generate a synthetic panel from a scenario file");
  cmd_sim->add_option("--scenario", sim.scenario, "scenario JSON")->required();
  cmd_sim->add_option("--out", sim.out, "output directory")->required();
  cmd_sim->add_option("--seed", sim.seed, "override the scenario seed");
  cmd_sim->add_option("--draws", sim.draws,
                      "override the config draw count written with the data");

  DescribeArgs des;
  CLI::App* cmd_des = app.add_subcommand(
      "describe", "Write descriptive tables for a ratings panel");
  cmd_des->add_option("--ratings", des.ratings, "ratings CSV")->required();
  cmd_des->add_option("--individuals", des.individuals, "individuals CSV")
      ->required();
  cmd_des->add_option("--schedule", des.schedule, "workshop schedule CSV")
      ->required();
  cmd_des->add_option("--out", des.out, "output directory")->required();
  cmd_des->add_flag("--keep-incomplete", des.keep_incomplete,
                    "keep individuals with one-sided workshop measurements");

  CurvesArgs cur;
  CLI::App* cmd_cur = app.add_subcommand(
      "curves", "Tabulate reversion curves from an estimates file");
  cmd_cur->add_option("--estimates", cur.estimates, "estimates JSON")
      ->required();
  cmd_cur->add_option("--groups", cur.groups, "group definition JSON");
  cmd_cur->add_option("--out", cur.out, "output directory")->required();
  cmd_cur->add_option("--grid-step", cur.grid_step, "days between grid points");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (cmd_est->parsed()) return cmd_estimate(est, argc, argv);
    if (cmd_sim->parsed()) return cmd_simulate(sim, argc, argv);
    if (cmd_des->parsed()) return cmd_describe(des, argc, argv);
    if (cmd_cur->parsed()) return cmd_curves(cur, argc, argv);
  } catch (const delib::IoError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const delib::ValidationError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}
