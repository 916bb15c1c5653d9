// bench: experiment driver for Lasso / RF / RERF comparisons.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "rerf/bench.hpp"

namespace {

using namespace rerf;

void print_summary(const RunSummary& summary) {
  std::size_t failed = 0;
  for (const auto& r : summary.records) {
    failed += r.ok ? 0 : 1;
  }
  fmt::print("units: {} total, {} resumed, {} run; {} records, {} failed\n", summary.units_total,
             summary.units_resumed, summary.units_run, summary.records.size(), failed);
}

int run_config(const ExperimentConfig& config) {
  const auto summary = run_experiment(config);
  print_summary(summary);
  if (!config.output_dir.empty()) {
    fmt::print("results: {}\n", (config.output_dir / "results.csv").string());
  }
  return summary.all_completed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Lasso / random forest / RERF benchmark driver"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::size_t> threads;
  auto* run = app.add_subcommand("run", "Run an experiment described by a JSON config");
  run->add_option("--config", config_path, "Config file")->required()->check(CLI::ExistingFile);
  run->add_option("--threads", threads, "Worker threads (default: RERF_THREADS or all cores)");

  bool list = false;
  auto* scenarios = app.add_subcommand("scenarios", "List simulation scenarios");
  scenarios->add_flag("--list", list, "Print scenario labels");

  std::string csv;
  std::string split_name;
  std::string response;
  std::string cement;
  std::string water;
  std::string out_dir = "concrete_out";
  std::size_t replicates = 50;
  std::uint64_t seed = 1;
  std::vector<std::string> methods{"lasso", "rf", "rerf"};
  std::string search = "exhaustive";
  auto* concrete = app.add_subcommand("concrete", "Concrete-strength split experiment");
  concrete->add_option("--csv", csv, "Concrete CSV")->required()->check(CLI::ExistingFile);
  concrete->add_option("--split", split_name, "INT1, INT2, EXT1, EXT2, EXT3 or EXT4")
      ->required()
      ->check(CLI::IsMember(concrete_split_names()));
  concrete->add_option("--response", response, "Response column (default: first column starting with 'concrete')");
  concrete->add_option("--cement", cement, "Cement column (default: first column starting with 'cement')");
  concrete->add_option("--water", water, "Water column (default: first column starting with 'water')");
  concrete->add_option("--replicates", replicates, "Repetitions");
  concrete->add_option("--seed", seed, "Master seed");
  concrete->add_option("--methods", methods, "Subset of lasso, rf, rerf");
  concrete->add_option("--search", search, "exhaustive or approximate")
      ->check(CLI::IsMember({"exhaustive", "approximate"}));
  concrete->add_option("--out", out_dir, "Output directory");
  concrete->add_option("--threads", threads, "Worker threads");

  std::string figure_out = "intro_figure";
  IntroFigureOptions figure_opts;
  std::string figure_search = "approximate";
  auto* figure = app.add_subcommand("intro-figure", "Pointwise errors against z on the intro scenario");
  figure->add_option("--out", figure_out, "Output directory");
  figure->add_option("--seed", figure_opts.seed, "Seed");
  figure->add_option("--search", figure_search, "exhaustive or approximate")
      ->check(CLI::IsMember({"exhaustive", "approximate"}));
  figure->add_option("--threads", threads, "Worker threads");

  std::string gen_label;
  std::string gen_out;
  std::uint64_t gen_seed = 1;
  auto* gen = app.add_subcommand("generate", "Write one simulated train/validation pair as CSV");
  gen->add_option("--scenario", gen_label, "Scenario label, e.g. NxE or INTRO")->required();
  gen->add_option("--out", gen_out, "Output directory")->required();
  gen->add_option("--seed", gen_seed, "Seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    // --help exits 0; usage errors share the generic error code
    return app.exit(e) == 0 ? 0 : 2;
  }

  try {
    if (*run) {
      auto config = load_config(config_path);
      if (threads) {
        config.threads = *threads;
      }
      return run_config(config);
    }
    if (*scenarios) {
      for (const auto& label : scenario_labels()) {
        fmt::print("{}\n", label);
      }
      fmt::print("INTRO\n");
      return 0;
    }
    if (*concrete) {
      if (response.empty()) {
        response = find_csv_column(csv, "concrete");
      }
      if (cement.empty()) {
        cement = find_csv_column(csv, "cement");
      }
      if (water.empty()) {
        water = find_csv_column(csv, "water");
      }
      ExperimentConfig config;
      config.experiment_id = fmt::format("concrete-{}", split_name);
      config.kind = ExperimentConfig::Kind::dataset;
      config.dataset.csv = csv;
      config.dataset.response = response;
      config.dataset.derived.custom_ratios = {{cement, water}};
      config.dataset.splits = {*concrete_split(split_name, ratio_name(cement, water))};
      config.methods.clear();
      for (const auto& m : methods) {
        auto method = parse_method(m);
        if (!method) {
          throw DataError(fmt::format("unknown method '{}'", m));
        }
        if (std::find(config.methods.begin(), config.methods.end(), *method) == config.methods.end()) {
          config.methods.push_back(*method);
        }
      }
      std::sort(config.methods.begin(), config.methods.end());
      config.replicates = replicates;
      config.seed = seed;
      config.search = search == "exhaustive" ? SearchKind::exhaustive : SearchKind::approximate;
      config.output_dir = out_dir;
      config.threads = threads.value_or(0);
      return run_config(config);
    }
    if (*figure) {
      figure_opts.search = figure_search == "exhaustive" ? SearchKind::exhaustive : SearchKind::approximate;
      figure_opts.threads = threads.value_or(0);
      const auto fig = run_intro_figure(figure_opts);
      std::filesystem::create_directories(figure_out);
      std::ofstream f(std::filesystem::path(figure_out) / "pointwise_errors.csv");
      f << "method,z,error\n";
      for (const auto& e : fig.rf) {
        f << fmt::format("rf,{:.17g},{:.17g}\n", e.focus, e.error);
      }
      for (const auto& e : fig.rerf) {
        f << fmt::format("rerf,{:.17g},{:.17g}\n", e.focus, e.error);
      }
      fmt::print("tail error ratio (z > 0.8 vs z <= 0.8): rf {:.3f}, rerf {:.3f}\n", fig.rf_ratio, fig.rerf_ratio);
      return 0;
    }
    if (*gen) {
      auto spec = ScenarioSpec::from_label(gen_label);
      if (!spec) {
        throw DataError(fmt::format("unknown scenario '{}'", gen_label));
      }
      spec->seed = gen_seed;
      const auto data = generate(*spec);
      std::filesystem::create_directories(gen_out);
      write_csv(data.train, std::filesystem::path(gen_out) / "train.csv");
      write_csv(data.validation, std::filesystem::path(gen_out) / "validation.csv");
      return 0;
    }
  } catch (const std::exception& e) {
    fmt::print(stderr, "error: {}\n", e.what());
    return 2;
  }
  return 0;
}
