#include "rerf/bench.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <sstream>

#include <fmt/format.h>

#include "rerf/parallel.hpp"
#include "rerf/rerf.hpp"
#include "rerf/rng.hpp"

namespace rerf {

using nlohmann::json;

std::string_view method_name(Method m) {
  switch (m) {
    case Method::lasso:
      return "lasso";
    case Method::rf:
      return "rf";
    case Method::rerf:
      return "rerf";
  }
  return "?";
}

std::optional<Method> parse_method(std::string_view name) {
  if (name == "lasso") {
    return Method::lasso;
  }
  if (name == "rf") {
    return Method::rf;
  }
  if (name == "rerf") {
    return Method::rerf;
  }
  return std::nullopt;
}

std::optional<NamedSplit> concrete_split(std::string_view name, std::string_view ratio_column) {
  const std::string col(ratio_column);
  if (name == "INT1") {
    return NamedSplit{"INT1", SplitRule::random(0.75, 0)};
  }
  if (name == "INT2") {
    return NamedSplit{"INT2", SplitRule::random(0.5, 0)};
  }
  if (name == "EXT1") {
    return NamedSplit{"EXT1", SplitRule::response_threshold(25.0, Side::above)};
  }
  if (name == "EXT2") {
    return NamedSplit{"EXT2", SplitRule::response_band_complement(16.0, 56.0)};
  }
  if (name == "EXT3") {
    return NamedSplit{"EXT3", SplitRule::feature_threshold(col, 2.0, Side::below)};
  }
  if (name == "EXT4") {
    return NamedSplit{"EXT4", SplitRule::feature_band_complement(col, 1.0, 3.0)};
  }
  return std::nullopt;
}

std::vector<std::string> concrete_split_names() { return {"INT1", "INT2", "EXT1", "EXT2", "EXT3", "EXT4"}; }

std::string find_csv_column(const std::filesystem::path& csv, std::string_view prefix) {
  for (const auto& name : read_csv_header(csv)) {
    std::string low = name;
    std::transform(low.begin(), low.end(), low.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    if (low.starts_with(prefix)) {
      return name;
    }
  }
  throw DataError(fmt::format("no column starting with '{}' in '{}'; pass it explicitly", prefix, csv.string()));
}

namespace {

std::uint64_t label_hash(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

void check_keys(const json& j, std::initializer_list<std::string_view> allowed, std::string_view where) {
  if (!j.is_object()) {
    throw DataError(fmt::format("config: '{}' must be an object", where));
  }
  for (const auto& [key, value] : j.items()) {
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end()) {
      throw DataError(fmt::format("config: unknown key '{}' in {}", key, where));
    }
  }
}

std::vector<std::pair<std::string, std::string>> parse_pairs(const json& j, std::string_view what) {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& item : j) {
    if (!item.is_array() || item.size() != 2) {
      throw DataError(fmt::format("config: each {} entry must be a two-element array", what));
    }
    out.emplace_back(item[0].get<std::string>(), item[1].get<std::string>());
  }
  return out;
}

FeatureExpansionSpec parse_expansion(const json& j, std::string_view where) {
  check_keys(j, {"quadratic", "interactions", "ratios"}, where);
  FeatureExpansionSpec spec;
  if (j.contains("quadratic")) {
    spec.quadratic_columns = j["quadratic"].get<std::vector<std::string>>();
  }
  if (j.contains("interactions")) {
    spec.interaction_pairs = parse_pairs(j["interactions"], "interactions");
  }
  if (j.contains("ratios")) {
    spec.custom_ratios = parse_pairs(j["ratios"], "ratios");
  }
  return spec;
}

json expansion_json(const FeatureExpansionSpec& spec) {
  json j = json::object();
  j["quadratic"] = spec.quadratic_columns;
  j["interactions"] = json::array();
  for (const auto& [a, b] : spec.interaction_pairs) {
    j["interactions"].push_back({a, b});
  }
  j["ratios"] = json::array();
  for (const auto& [a, b] : spec.custom_ratios) {
    j["ratios"].push_back({a, b});
  }
  return j;
}

Side parse_side(const std::string& s) {
  if (s == "above") {
    return Side::above;
  }
  if (s == "below") {
    return Side::below;
  }
  throw DataError(fmt::format("config: side must be 'above' or 'below', got '{}'", s));
}

NamedSplit parse_split(const json& j, std::string_view ratio_column) {
  if (j.is_string()) {
    auto named = concrete_split(j.get<std::string>(), ratio_column);
    if (!named) {
      throw DataError(fmt::format("config: unknown split '{}'", j.get<std::string>()));
    }
    return *named;
  }
  check_keys(j, {"name", "kind", "fraction", "threshold", "low", "high", "side", "column", "seed"}, "split");
  NamedSplit out;
  out.name = j.at("name").get<std::string>();
  const auto kind = j.at("kind").get<std::string>();
  const std::string column = j.value("column", "");
  if (kind == "random_fraction") {
    out.rule = SplitRule::random(j.at("fraction").get<double>(), j.value("seed", std::uint64_t{0}));
  } else if (kind == "response_threshold") {
    out.rule = SplitRule::response_threshold(j.at("threshold").get<double>(), parse_side(j.at("side")));
  } else if (kind == "response_band_complement") {
    out.rule = SplitRule::response_band_complement(j.at("low").get<double>(), j.at("high").get<double>());
  } else if (kind == "feature_threshold") {
    out.rule = SplitRule::feature_threshold(column, j.at("threshold").get<double>(), parse_side(j.at("side")));
  } else if (kind == "feature_band_complement") {
    out.rule = SplitRule::feature_band_complement(column, j.at("low").get<double>(), j.at("high").get<double>());
  } else {
    throw DataError(fmt::format("config: unknown split kind '{}'", kind));
  }
  return out;
}

json split_json(const NamedSplit& s) {
  json j;
  j["name"] = s.name;
  const SplitRule& r = s.rule;
  switch (r.kind) {
    case SplitKind::random_fraction:
      j["kind"] = "random_fraction";
      j["fraction"] = r.fraction;
      break;
    case SplitKind::response_threshold:
      j["kind"] = "response_threshold";
      j["threshold"] = r.threshold;
      j["side"] = r.side == Side::above ? "above" : "below";
      break;
    case SplitKind::response_band_complement:
      j["kind"] = "response_band_complement";
      j["low"] = r.low;
      j["high"] = r.high;
      break;
    case SplitKind::feature_threshold:
      j["kind"] = "feature_threshold";
      j["column"] = r.column;
      j["threshold"] = r.threshold;
      j["side"] = r.side == Side::above ? "above" : "below";
      break;
    case SplitKind::feature_band_complement:
      j["kind"] = "feature_band_complement";
      j["column"] = r.column;
      j["low"] = r.low;
      j["high"] = r.high;
      break;
  }
  return j;
}

ScenarioSpec parse_scenario(const json& j) {
  if (j.is_string()) {
    auto spec = ScenarioSpec::from_label(j.get<std::string>());
    if (!spec) {
      throw DataError(fmt::format("config: unknown scenario '{}'", j.get<std::string>()));
    }
    return *spec;
  }
  check_keys(j, {"label", "n_train", "n_validation", "noise_sd"}, "scenario");
  auto spec = ScenarioSpec::from_label(j.at("label").get<std::string>());
  if (!spec) {
    throw DataError(fmt::format("config: unknown scenario '{}'", j.at("label").get<std::string>()));
  }
  spec->n_train = j.value("n_train", spec->n_train);
  spec->n_validation = j.value("n_validation", spec->n_validation);
  spec->noise_sd = j.value("noise_sd", spec->noise_sd);
  return *spec;
}

}  // namespace

ExperimentConfig parse_config(const json& j, const std::filesystem::path& base_dir) {
  try {
    check_keys(j,
               {"experiment_id", "kind", "scenarios", "dataset", "expansion", "methods", "replicates", "k_folds",
                "seed", "search", "cv_trees", "final_trees", "forest_on_expanded", "grid", "output_dir", "resume",
                "threads"},
               "top level");
    ExperimentConfig c;
    c.experiment_id = j.value("experiment_id", c.experiment_id);
    const std::string kind = j.value("kind", "simulation");
    if (kind == "simulation") {
      c.kind = ExperimentConfig::Kind::simulation;
      if (!j.contains("scenarios")) {
        throw DataError("config: simulation experiments need 'scenarios'");
      }
      for (const auto& s : j["scenarios"]) {
        c.scenarios.push_back(parse_scenario(s));
      }
      if (c.scenarios.empty()) {
        throw DataError("config: 'scenarios' is empty");
      }
    } else if (kind == "dataset") {
      c.kind = ExperimentConfig::Kind::dataset;
      const json& d = j.at("dataset");
      check_keys(d, {"csv", "response", "derived", "drop_columns", "splits", "ratio_column"}, "dataset");
      std::filesystem::path csv = d.at("csv").get<std::string>();
      c.dataset.csv = csv.is_relative() && !base_dir.empty() ? base_dir / csv : csv;
      c.dataset.response = d.at("response").get<std::string>();
      if (d.contains("derived")) {
        c.dataset.derived = parse_expansion(d["derived"], "dataset.derived");
      }
      if (d.contains("drop_columns")) {
        c.dataset.drop_columns = d["drop_columns"].get<std::vector<std::string>>();
      }
      const std::string ratio_column = d.value("ratio_column", "cement/water");
      for (const auto& s : d.at("splits")) {
        c.dataset.splits.push_back(parse_split(s, ratio_column));
      }
      if (c.dataset.splits.empty()) {
        throw DataError("config: 'dataset.splits' is empty");
      }
    } else {
      throw DataError(fmt::format("config: kind must be 'simulation' or 'dataset', got '{}'", kind));
    }
    if (j.contains("expansion")) {
      c.expansion = parse_expansion(j["expansion"], "expansion");
    }
    if (j.contains("methods")) {
      c.methods.clear();
      for (const auto& m : j["methods"]) {
        auto method = parse_method(m.get<std::string>());
        if (!method) {
          throw DataError(fmt::format("config: unknown method '{}'", m.get<std::string>()));
        }
        if (std::find(c.methods.begin(), c.methods.end(), *method) == c.methods.end()) {
          c.methods.push_back(*method);
        }
      }
      std::sort(c.methods.begin(), c.methods.end());
    }
    if (c.methods.empty()) {
      throw DataError("config: at least one method is required");
    }
    c.replicates = j.value("replicates", c.replicates);
    if (c.replicates < 1) {
      throw DataError("config: replicates must be >= 1");
    }
    c.k_folds = j.value("k_folds", c.k_folds);
    if (c.k_folds < 2) {
      throw DataError("config: k_folds must be >= 2");
    }
    c.seed = j.value("seed", c.seed);
    const std::string search = j.value("search", "exhaustive");
    if (search == "exhaustive") {
      c.search = SearchKind::exhaustive;
    } else if (search == "approximate") {
      c.search = SearchKind::approximate;
    } else {
      throw DataError(fmt::format("config: search must be 'exhaustive' or 'approximate', got '{}'", search));
    }
    c.cv_trees = j.value("cv_trees", c.cv_trees);
    c.final_trees = j.value("final_trees", c.final_trees);
    if (c.cv_trees < 1 || c.final_trees < 1) {
      throw DataError("config: tree counts must be >= 1");
    }
    c.forest_on_expanded = j.value("forest_on_expanded", c.forest_on_expanded);
    if (j.contains("grid")) {
      const json& g = j["grid"];
      check_keys(g, {"lambdas", "lambda_min", "lambda_max", "lambda_count", "mtry", "nodesize"}, "grid");
      if (g.contains("lambdas")) {
        PenaltyGrid grid;
        grid.values = g["lambdas"].get<std::vector<double>>();
        if (grid.values.empty() || !std::is_sorted(grid.values.begin(), grid.values.end()) ||
            std::adjacent_find(grid.values.begin(), grid.values.end()) != grid.values.end() ||
            !(grid.values.front() > 0.0)) {
          throw DataError("config: grid.lambdas must be positive and strictly increasing");
        }
        c.lambdas = grid;
      } else if (g.contains("lambda_min") || g.contains("lambda_max") || g.contains("lambda_count")) {
        c.lambdas = log_penalty_grid(g.value("lambda_min", 0.001), g.value("lambda_max", 100.0), g.value("lambda_count", 100));
      }
      if (g.contains("mtry")) {
        c.mtry = g["mtry"].get<std::vector<std::size_t>>();
      }
      if (g.contains("nodesize")) {
        c.nodesize = g["nodesize"].get<std::vector<std::size_t>>();
      }
    }
    if (j.contains("output_dir")) {
      std::filesystem::path out = j["output_dir"].get<std::string>();
      c.output_dir = out.is_relative() && !base_dir.empty() ? base_dir / out : out;
    }
    c.resume = j.value("resume", c.resume);
    c.threads = j.value("threads", c.threads);
    return c;
  } catch (const json::exception& e) {
    throw DataError(fmt::format("config: {}", e.what()));
  }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError(fmt::format("cannot open config '{}'", path.string()));
  }
  json j;
  try {
    j = json::parse(in, nullptr, true, true);
  } catch (const json::exception& e) {
    throw DataError(fmt::format("config '{}' is not valid JSON: {}", path.string(), e.what()));
  }
  return parse_config(j, path.parent_path());
}

json config_to_json(const ExperimentConfig& c) {
  json j;
  j["experiment_id"] = c.experiment_id;
  if (c.kind == ExperimentConfig::Kind::simulation) {
    j["kind"] = "simulation";
    j["scenarios"] = json::array();
    for (const auto& s : c.scenarios) {
      j["scenarios"].push_back(
          {{"label", s.label()}, {"n_train", s.n_train}, {"n_validation", s.n_validation}, {"noise_sd", s.noise_sd}});
    }
  } else {
    j["kind"] = "dataset";
    json d;
    d["csv"] = c.dataset.csv.string();
    d["response"] = c.dataset.response;
    d["derived"] = expansion_json(c.dataset.derived);
    d["drop_columns"] = c.dataset.drop_columns;
    d["splits"] = json::array();
    for (const auto& s : c.dataset.splits) {
      d["splits"].push_back(split_json(s));
    }
    j["dataset"] = d;
  }
  j["expansion"] = expansion_json(c.expansion);
  j["methods"] = json::array();
  for (Method m : c.methods) {
    j["methods"].push_back(std::string(method_name(m)));
  }
  j["replicates"] = c.replicates;
  j["k_folds"] = c.k_folds;
  j["seed"] = c.seed;
  j["search"] = c.search == SearchKind::exhaustive ? "exhaustive" : "approximate";
  j["cv_trees"] = c.cv_trees;
  j["final_trees"] = c.final_trees;
  j["forest_on_expanded"] = c.forest_on_expanded;
  json g = json::object();
  if (c.lambdas) {
    g["lambdas"] = c.lambdas->values;
  }
  if (!c.mtry.empty()) {
    g["mtry"] = c.mtry;
  }
  if (!c.nodesize.empty()) {
    g["nodesize"] = c.nodesize;
  }
  j["grid"] = g;
  return j;
}

std::string results_csv_header() {
  return "experiment_id,scenario,method,replicate,lambda,mtry,nodesize,n_train,n_validation,cv_rmse,rmse,status";
}

namespace {

std::string sanitize(std::string_view s) {
  std::string out(s);
  std::replace_if(out.begin(), out.end(), [](char c) { return c == ',' || c == '\n' || c == '\r'; }, ' ');
  return out;
}

std::string opt_num(const std::optional<double>& v) { return v ? fmt::format("{:.17g}", *v) : "NA"; }
std::string opt_num(const std::optional<std::size_t>& v) { return v ? fmt::format("{}", *v) : "NA"; }

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

double to_double(std::string_view s) {
  std::size_t pos = 0;
  const std::string str(s);
  double v = std::stod(str, &pos);
  if (pos != str.size()) {
    throw DataError(fmt::format("bad number '{}'", s));
  }
  return v;
}

std::size_t to_size(std::string_view s) {
  std::size_t pos = 0;
  const std::string str(s);
  auto v = std::stoull(str, &pos);
  if (pos != str.size()) {
    throw DataError(fmt::format("bad integer '{}'", s));
  }
  return static_cast<std::size_t>(v);
}

}  // namespace

std::string format_record(const ResultRecord& r) {
  return fmt::format("{},{},{},{},{},{},{},{},{},{},{},{}", sanitize(r.experiment_id), sanitize(r.scenario),
                     method_name(r.method), r.replicate, opt_num(r.lambda), opt_num(r.mtry), opt_num(r.nodesize),
                     r.n_train, r.n_validation, r.ok ? fmt::format("{:.17g}", r.cv_rmse) : "NA",
                     r.ok ? fmt::format("{:.17g}", r.rmse) : "NA", r.ok ? "ok" : "error: " + sanitize(r.error));
}

ResultRecord parse_record(std::string_view line) {
  auto f = split_csv(line);
  if (f.size() != 12) {
    throw DataError(fmt::format("result line has {} fields, expected 12", f.size()));
  }
  try {
    ResultRecord r;
    r.experiment_id = f[0];
    r.scenario = f[1];
    auto m = parse_method(f[2]);
    if (!m) {
      throw DataError(fmt::format("unknown method '{}'", f[2]));
    }
    r.method = *m;
    r.replicate = to_size(f[3]);
    if (f[4] != "NA") {
      r.lambda = to_double(f[4]);
    }
    if (f[5] != "NA") {
      r.mtry = to_size(f[5]);
    }
    if (f[6] != "NA") {
      r.nodesize = to_size(f[6]);
    }
    r.n_train = to_size(f[7]);
    r.n_validation = to_size(f[8]);
    r.ok = f[11] == "ok";
    if (r.ok) {
      r.cv_rmse = to_double(f[9]);
      r.rmse = to_double(f[10]);
    } else {
      r.error = f[11].starts_with("error: ") ? f[11].substr(7) : f[11];
    }
    return r;
  } catch (const std::logic_error& e) {
    throw DataError(fmt::format("malformed result line: {}", e.what()));
  }
}

std::vector<ResultRecord> run_methods(const ExperimentConfig& config, const UnitData& unit, std::size_t replicate,
                                      std::uint64_t tuning_seed, std::size_t threads) {
  const DataMatrix& train = unit.train;
  const DataMatrix validation = unit.validation;
  const auto y_val = validation.response();

  SearchOptions options;
  options.cv_trees = config.cv_trees;
  options.final_trees = config.final_trees;
  options.forest_on_expanded = config.forest_on_expanded;
  options.threads = threads;

  auto make_grid = [&](std::size_t p) {
    TuningGrid grid = default_grid(p);
    if (config.lambdas) {
      grid.lambdas = *config.lambdas;
    }
    if (!config.mtry.empty()) {
      grid.mtry_candidates = config.mtry;
    }
    if (!config.nodesize.empty()) {
      grid.nodesize_candidates = config.nodesize;
    }
    return grid;
  };

  std::vector<ResultRecord> out;
  for (Method method : config.methods) {
    ResultRecord r;
    r.experiment_id = config.experiment_id;
    r.scenario = unit.scenario;
    r.method = method;
    r.replicate = replicate;
    r.n_train = train.n_rows();
    r.n_validation = validation.n_rows();
    const auto start = std::chrono::steady_clock::now();
    try {
      std::vector<double> pred;
      switch (method) {
        case Method::lasso: {
          const TuningGrid grid = make_grid(train.n_cols());
          auto tuned = tune_lasso(train, config.expansion, grid.lambdas, config.k_folds, tuning_seed);
          r.lambda = tuned.lambda;
          r.cv_rmse = tuned.cv_rmse;
          pred = predict_linear(tuned.fit,
                                expand_features(validation.select_columns(train.column_names()), config.expansion)
                                    .without_response());
          break;
        }
        case Method::rf: {
          const TuningGrid grid = make_grid(train.n_cols());
          auto tuned = tune_forest(train, grid.mtry_candidates, grid.nodesize_candidates, config.k_folds, tuning_seed,
                                   options);
          r.mtry = tuned.mtry;
          r.nodesize = tuned.nodesize;
          r.cv_rmse = tuned.cv_rmse;
          pred = predict_forest(tuned.forest, validation.select_columns(train.column_names()).without_response());
          break;
        }
        case Method::rerf: {
          const std::size_t p_forest = config.forest_on_expanded
                                           ? expand_features(train, config.expansion).n_cols()
                                           : train.n_cols();
          const TuningGrid grid = make_grid(p_forest);
          auto tuned = config.search == SearchKind::exhaustive
                           ? grid_search(train, config.expansion, grid, config.k_folds, tuning_seed, options)
                           : approximate_search(train, config.expansion, grid, config.k_folds, tuning_seed, options);
          r.lambda = tuned.selected.lambda;
          r.mtry = tuned.selected.mtry;
          r.nodesize = tuned.selected.nodesize;
          r.cv_rmse = tuned.selected_cv_rmse;
          pred = predict_rerf(*tuned.model, validation);
          break;
        }
      }
      r.rmse = rmse(pred, y_val);
    } catch (const std::exception& e) {
      r.ok = false;
      r.error = e.what();
    }
    r.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.push_back(std::move(r));
  }
  return out;
}

namespace {

struct UnitKey {
  std::size_t source;  // scenario or split index
  std::size_t replicate;
};

std::string source_label(const ExperimentConfig& c, std::size_t source) {
  return c.kind == ExperimentConfig::Kind::simulation ? c.scenarios[source].label() : c.dataset.splits[source].name;
}

constexpr std::uint64_t kDataStream = 0;
constexpr std::uint64_t kTuningStream = 1;

class OrderedWriter {
 public:
  OrderedWriter(std::size_t first_unit, std::size_t n_units, std::ofstream* results, std::ofstream* timings)
      : next_(first_unit), slots_(n_units), results_(results), timings_(timings) {}

  void complete(std::size_t unit, std::vector<ResultRecord> records) {
    std::lock_guard<std::mutex> lock(mutex_);
    slots_[unit] = std::move(records);
    while (next_ < slots_.size() && slots_[next_]) {
      for (const auto& r : *slots_[next_]) {
        if (results_ != nullptr) {
          *results_ << format_record(r) << '\n';
        }
        if (timings_ != nullptr) {
          *timings_ << fmt::format("{},{},{},{:.6f}\n", sanitize(r.scenario), method_name(r.method), r.replicate,
                                   r.wall_seconds);
        }
      }
      if (results_ != nullptr) {
        results_->flush();
      }
      if (timings_ != nullptr) {
        timings_->flush();
      }
      ++next_;
    }
  }

  std::vector<ResultRecord> take_all() {
    std::vector<ResultRecord> out;
    for (auto& s : slots_) {
      if (s) {
        for (auto& r : *s) {
          out.push_back(std::move(r));
        }
      }
    }
    return out;
  }

 private:
  std::mutex mutex_;
  std::size_t next_;
  std::vector<std::optional<std::vector<ResultRecord>>> slots_;
  std::ofstream* results_;
  std::ofstream* timings_;
};

/// Complete leading units of an earlier results.csv, or nothing when the file
/// is absent. Incomplete trailing units are discarded.
std::vector<std::vector<ResultRecord>> read_completed(const std::filesystem::path& path,
                                                      const std::vector<UnitKey>& units,
                                                      const ExperimentConfig& c) {
  std::vector<std::vector<ResultRecord>> done;
  std::ifstream in(path);
  if (!in) {
    return done;
  }
  std::string line;
  if (!std::getline(in, line) || line != results_csv_header()) {
    throw DataError(fmt::format("'{}' has an unexpected header; refusing to resume", path.string()));
  }
  std::vector<std::string> lines;
  while (std::getline(in, line)) {
    lines.push_back(line);
  }
  // a line without a trailing newline may be torn
  in.clear();
  in.seekg(0, std::ios::end);
  const auto size = static_cast<std::streamoff>(in.tellg());
  if (size > 0 && !lines.empty()) {
    std::ifstream probe(path, std::ios::binary);
    probe.seekg(size - 1);
    char last = 0;
    probe.get(last);
    if (last != '\n') {
      lines.pop_back();
    }
  }
  const std::size_t per_unit = c.methods.size();
  std::size_t pos = 0;
  for (const auto& unit : units) {
    if (pos + per_unit > lines.size()) {
      break;
    }
    std::vector<ResultRecord> recs;
    bool ok = true;
    for (std::size_t m = 0; m < per_unit && ok; ++m) {
      try {
        auto r = parse_record(lines[pos + m]);
        ok = r.scenario == source_label(c, unit.source) && r.replicate == unit.replicate && r.method == c.methods[m];
        recs.push_back(std::move(r));
      } catch (const DataError&) {
        ok = false;
      }
    }
    if (!ok) {
      break;
    }
    done.push_back(std::move(recs));
    pos += per_unit;
  }
  return done;
}

}  // namespace

RunSummary run_experiment(const ExperimentConfig& config) {
  if (config.methods.empty()) {
    throw DataError("at least one method is required");
  }
  if (config.replicates < 1) {
    throw DataError("replicates must be >= 1");
  }
  const bool simulation = config.kind == ExperimentConfig::Kind::simulation;
  const std::size_t n_sources = simulation ? config.scenarios.size() : config.dataset.splits.size();
  if (n_sources == 0) {
    throw DataError("experiment has no scenarios or splits");
  }

  DataMatrix full;
  if (!simulation) {
    auto loaded = load_csv(config.dataset.csv, config.dataset.response);
    full = expand_features(loaded.data, config.dataset.derived);
    if (!config.dataset.drop_columns.empty()) {
      full = full.drop_columns(config.dataset.drop_columns);
    }
  }

  std::vector<UnitKey> units;
  for (std::size_t s = 0; s < n_sources; ++s) {
    for (std::size_t r = 0; r < config.replicates; ++r) {
      units.push_back({s, r});
    }
  }

  RunSummary summary;
  summary.units_total = units.size();

  std::ofstream results;
  std::ofstream timings;
  std::vector<std::vector<ResultRecord>> resumed;
  const bool to_disk = !config.output_dir.empty();
  if (to_disk) {
    std::filesystem::create_directories(config.output_dir);
    const auto results_path = config.output_dir / "results.csv";
    const auto timings_path = config.output_dir / "timings.csv";
    const auto manifest_path = config.output_dir / "manifest.json";
    const json echo = config_to_json(config);
    if (config.resume && std::filesystem::exists(results_path)) {
      std::ifstream mf(manifest_path);
      json previous;
      if (mf) {
        try {
          previous = json::parse(mf);
        } catch (const json::exception&) {
        }
      }
      if (!previous.contains("config") || previous["config"] != echo) {
        throw DataError(fmt::format("'{}' holds results from a different configuration; use a new output "
                                    "directory or disable resume",
                                    config.output_dir.string()));
      }
      resumed = read_completed(results_path, units, config);
    }
    {
      json manifest;
      manifest["format"] = "rerf-bench-run";
      manifest["version"] = 1;
      manifest["config"] = echo;
      manifest["threads"] = config.threads == 0 ? default_thread_count() : config.threads;
      manifest["units_total"] = units.size();
      std::ofstream mf(manifest_path);
      mf << manifest.dump(2) << '\n';
    }
    // rewrite the completed prefix, dropping any torn tail
    results.open(results_path, std::ios::trunc);
    if (!results) {
      throw DataError(fmt::format("cannot write '{}'", results_path.string()));
    }
    results << results_csv_header() << '\n';
    for (const auto& recs : resumed) {
      for (const auto& r : recs) {
        results << format_record(r) << '\n';
      }
    }
    results.flush();
    std::set<std::pair<std::string, std::size_t>> kept;
    for (const auto& recs : resumed) {
      kept.emplace(recs.front().scenario, recs.front().replicate);
    }
    std::vector<std::string> old_timings;
    if (std::ifstream tin(timings_path); tin) {
      std::string line;
      std::getline(tin, line);
      while (std::getline(tin, line)) {
        auto f = split_csv(line);
        if (f.size() == 4) {
          try {
            if (kept.contains({std::string(f[0]), to_size(f[2])})) {
              old_timings.push_back(line);
            }
          } catch (const std::exception&) {
          }
        }
      }
    }
    timings.open(timings_path, std::ios::trunc);
    timings << "scenario,method,replicate,wall_seconds\n";
    for (const auto& line : old_timings) {
      timings << line << '\n';
    }
    timings.flush();
  }

  summary.units_resumed = resumed.size();
  std::size_t first = resumed.size();
  std::size_t last = units.size();
  if (config.stop_after_units) {
    last = std::min(last, first + *config.stop_after_units);
  }

  const std::size_t threads = config.threads == 0 ? default_thread_count() : config.threads;
  const std::size_t todo = last - first;
  const bool outer = todo >= threads;
  const std::size_t inner_threads = outer ? 1 : threads;

  OrderedWriter writer(first, units.size(), to_disk ? &results : nullptr, to_disk ? &timings : nullptr);
  parallel_for(
      todo,
      [&](std::size_t i) {
        const UnitKey& key = units[first + i];
        const std::string label = source_label(config, key.source);
        const std::uint64_t data_seed = derive_seed(config.seed, {label_hash(label), key.replicate, kDataStream});
        const std::uint64_t tuning_seed = derive_seed(config.seed, {label_hash(label), key.replicate, kTuningStream});
        std::vector<ResultRecord> recs;
        try {
          UnitData unit;
          unit.scenario = label;
          if (simulation) {
            ScenarioSpec spec = config.scenarios[key.source];
            spec.seed = data_seed;
            auto data = generate(spec);
            unit.train = std::move(data.train);
            unit.validation = std::move(data.validation);
          } else {
            SplitRule rule = config.dataset.splits[key.source].rule;
            if (rule.kind == SplitKind::random_fraction) {
              rule.seed = data_seed;
            }
            auto parts = split(full, rule);
            unit.train = std::move(parts.train);
            unit.validation = std::move(parts.validation);
          }
          recs = run_methods(config, unit, key.replicate, tuning_seed, inner_threads);
        } catch (const std::exception& e) {
          for (Method m : config.methods) {
            ResultRecord r;
            r.experiment_id = config.experiment_id;
            r.scenario = label;
            r.method = m;
            r.replicate = key.replicate;
            r.ok = false;
            r.error = e.what();
            recs.push_back(std::move(r));
          }
        }
        writer.complete(first + i, std::move(recs));
      },
      outer ? threads : 1);

  summary.units_run = todo;
  for (auto& recs : resumed) {
    for (auto& r : recs) {
      summary.records.push_back(std::move(r));
    }
  }
  for (auto& r : writer.take_all()) {
    summary.records.push_back(std::move(r));
  }
  summary.all_completed = last == units.size() && std::all_of(summary.records.begin(), summary.records.end(),
                                                              [](const ResultRecord& r) { return r.ok; });
  return summary;
}

std::vector<PointwiseError> pointwise_errors(const Predictor& model, const DataMatrix& validation,
                                             std::string_view focus_column) {
  const auto focus = validation.column(validation.column_index(focus_column));
  const auto y = validation.response();
  const auto pred = model(validation);
  if (pred.size() != y.size()) {
    throw DataError("predictor returned the wrong number of values");
  }
  std::vector<PointwiseError> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) {
    out[i] = {focus[i], y[i] - pred[i]};
  }
  return out;
}

double tail_error_ratio(const std::vector<PointwiseError>& errors, double cut) {
  double hi = 0.0;
  double lo = 0.0;
  std::size_t n_hi = 0;
  std::size_t n_lo = 0;
  for (const auto& e : errors) {
    if (e.focus > cut) {
      hi += std::abs(e.error);
      ++n_hi;
    } else {
      lo += std::abs(e.error);
      ++n_lo;
    }
  }
  if (n_hi == 0 || n_lo == 0 || lo == 0.0) {
    throw DataError("tail_error_ratio: both sides of the cut need nonzero error mass");
  }
  return (hi / static_cast<double>(n_hi)) / (lo / static_cast<double>(n_lo));
}

IntroFigure run_intro_figure(const IntroFigureOptions& options) {
  const auto data = generate(ScenarioSpec::intro(options.seed));
  const DataMatrix& train = data.train;
  TuningGrid grid = default_grid(train.n_cols());
  if (options.lambdas) {
    grid.lambdas = *options.lambdas;
  }
  SearchOptions so;
  so.cv_trees = options.cv_trees;
  so.final_trees = options.final_trees;
  so.threads = options.threads;
  const std::uint64_t tuning_seed = derive_seed(options.seed, {kTuningStream});

  auto rf = tune_forest(train, grid.mtry_candidates, grid.nodesize_candidates, options.k_folds, tuning_seed, so);
  auto tuned = options.search == SearchKind::exhaustive
                   ? grid_search(train, {}, grid, options.k_folds, tuning_seed, so)
                   : approximate_search(train, {}, grid, options.k_folds, tuning_seed, so);
  const RerfModel& model = *tuned.model;

  IntroFigure fig;
  fig.rf = pointwise_errors(
      [&](const DataMatrix& d) { return predict_forest(rf.forest, d.without_response()); }, data.validation, "z");
  fig.rerf = pointwise_errors([&](const DataMatrix& d) { return predict_rerf(model, d); }, data.validation, "z");
  fig.rf_ratio = tail_error_ratio(fig.rf, 0.8);
  fig.rerf_ratio = tail_error_ratio(fig.rerf, 0.8);
  return fig;
}

}  // namespace rerf
