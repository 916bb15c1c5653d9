#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "rerf/dataset.hpp"
#include "rerf/metrics.hpp"
#include "rerf/simgen.hpp"
#include "rerf/tuning.hpp"

namespace rerf {

enum class Method { lasso, rf, rerf };
std::string_view method_name(Method m);
std::optional<Method> parse_method(std::string_view name);

enum class SearchKind { exhaustive, approximate };

struct NamedSplit {
  std::string name;
  SplitRule rule;
};

/// Concrete-strength partitions INT1, INT2, EXT1..EXT4. `ratio_column` names
/// the cement-to-water column used by EXT3/EXT4.
std::optional<NamedSplit> concrete_split(std::string_view name, std::string_view ratio_column = "cement/water");
std::vector<std::string> concrete_split_names();

/// First header field of `csv` whose lower-cased name starts with `prefix`.
std::string find_csv_column(const std::filesystem::path& csv, std::string_view prefix);

struct DatasetSource {
  std::filesystem::path csv;
  std::string response;
  /// Derived predictors added at load time and visible to every method.
  FeatureExpansionSpec derived;
  std::vector<std::string> drop_columns;
  std::vector<NamedSplit> splits;
};

struct ExperimentConfig {
  enum class Kind { simulation, dataset };

  std::string experiment_id = "experiment";
  Kind kind = Kind::simulation;
  std::vector<ScenarioSpec> scenarios;
  DatasetSource dataset;
  /// Step-1 expansion used by the Lasso and RERF methods.
  FeatureExpansionSpec expansion;
  std::vector<Method> methods{Method::lasso, Method::rf, Method::rerf};
  std::size_t replicates = 50;
  std::size_t k_folds = 5;
  std::uint64_t seed = 1;
  SearchKind search = SearchKind::exhaustive;
  std::size_t cv_trees = 100;
  std::size_t final_trees = 500;
  bool forest_on_expanded = false;
  /// Overrides the default lambda grid when set.
  std::optional<PenaltyGrid> lambdas;
  std::vector<std::size_t> mtry;      // empty: default_grid(p)
  std::vector<std::size_t> nodesize;  // empty: {1, 5}
  std::filesystem::path output_dir;
  bool resume = true;
  std::size_t threads = 0;
  /// Stop after this many newly completed units (interruption test hook).
  std::optional<std::size_t> stop_after_units;
};

/// Parses the JSON config schema documented in docs/config.md. Relative
/// paths resolve against `base_dir`. Throws DataError on unknown keys.
ExperimentConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json config_to_json(const ExperimentConfig& config);

struct ResultRecord {
  std::string experiment_id;
  std::string scenario;
  Method method = Method::rerf;
  std::size_t replicate = 0;
  std::optional<double> lambda;
  std::optional<std::size_t> mtry;
  std::optional<std::size_t> nodesize;
  std::size_t n_train = 0;
  std::size_t n_validation = 0;
  double cv_rmse = 0.0;
  double rmse = 0.0;
  double wall_seconds = 0.0;
  bool ok = true;
  std::string error;
};

std::string results_csv_header();
/// One CSV line without wall time, so reruns are byte-identical.
std::string format_record(const ResultRecord& record);
ResultRecord parse_record(std::string_view line);

struct RunSummary {
  std::vector<ResultRecord> records;
  std::size_t units_total = 0;
  std::size_t units_resumed = 0;
  std::size_t units_run = 0;
  bool all_completed = false;
};

/// Tunes each method by CV on the training partition only, refits at the
/// selected values and scores validation RMSE. Writes results.csv,
/// timings.csv and manifest.json under output_dir (when set), resuming from a
/// previous partial run.
RunSummary run_experiment(const ExperimentConfig& config);

/// Training and validation data for one (scenario, replicate) unit.
struct UnitData {
  std::string scenario;
  DataMatrix train;
  DataMatrix validation;
};

/// Runs the requested methods on one unit; tuning never sees `validation`.
std::vector<ResultRecord> run_methods(const ExperimentConfig& config, const UnitData& unit, std::size_t replicate,
                                      std::uint64_t tuning_seed, std::size_t threads);

using Predictor = std::function<std::vector<double>(const DataMatrix&)>;

struct PointwiseError {
  double focus = 0.0;
  double error = 0.0;  // y - prediction
};

std::vector<PointwiseError> pointwise_errors(const Predictor& model, const DataMatrix& validation,
                                             std::string_view focus_column);

/// Mean |error| for focus > cut divided by mean |error| for focus <= cut.
double tail_error_ratio(const std::vector<PointwiseError>& errors, double cut);

struct IntroFigureOptions {
  std::uint64_t seed = 1;
  std::size_t k_folds = 5;
  SearchKind search = SearchKind::approximate;
  std::size_t cv_trees = 100;
  std::size_t final_trees = 500;
  std::optional<PenaltyGrid> lambdas;
  std::size_t threads = 0;
};

struct IntroFigure {
  std::vector<PointwiseError> rf;
  std::vector<PointwiseError> rerf;
  double rf_ratio = 0.0;
  double rerf_ratio = 0.0;
};

/// Fits tuned RF and RERF on the intro scenario and records validation
/// errors against z.
IntroFigure run_intro_figure(const IntroFigureOptions& options);

}  // namespace rerf
