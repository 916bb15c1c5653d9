#include "rerf/rerf.hpp"

#include <fstream>

#include <fmt/format.h>
#include <json.hpp>

namespace rerf {

namespace {

DataMatrix forest_design(const DataMatrix& raw, const DataMatrix& expanded, bool on_expanded) {
  return on_expanded ? expanded : raw;
}

}  // namespace

RerfModel fit_rerf_with_lasso(const DataMatrix& train, const FeatureExpansionSpec& expansion, LassoFit lasso,
                              std::size_t mtry, std::size_t nodesize, std::uint64_t seed,
                              const RerfOptions& options) {
  const DataMatrix expanded = expand_features(train, expansion);
  auto resid = residuals(lasso, expanded);

  ForestParams params;
  params.n_trees = options.n_trees;
  params.mtry = mtry;
  params.nodesize = nodesize;
  params.seed = seed;
  params.bootstrap = options.bootstrap;

  RerfModel model;
  model.input_columns = train.column_names();
  model.expansion = expansion;
  model.forest_on_expanded = options.forest_on_expanded;
  model.forest = fit_forest(forest_design(train, expanded, options.forest_on_expanded).with_response(std::move(resid)),
                            params, options.threads);
  model.tuning = TuningTriple{lasso.lambda, mtry, nodesize};
  model.lasso = std::move(lasso);
  return model;
}

RerfModel fit_rerf(const DataMatrix& train, const FeatureExpansionSpec& expansion, double lambda, std::size_t mtry,
                   std::size_t nodesize, std::uint64_t seed, const RerfOptions& options) {
  LassoFit lasso = fit_lasso(expand_features(train, expansion), lambda, options.lasso);
  return fit_rerf_with_lasso(train, expansion, std::move(lasso), mtry, nodesize, seed, options);
}

RerfPrediction predict_rerf_parts(const RerfModel& model, const DataMatrix& points) {
  const DataMatrix raw = points.select_columns(model.input_columns).without_response();
  const DataMatrix expanded = expand_features(raw, model.expansion);
  RerfPrediction out;
  out.linear = predict_linear(model.lasso, expanded);
  out.forest = predict_forest(model.forest, forest_design(raw, expanded, model.forest_on_expanded));
  out.total.resize(out.linear.size());
  for (std::size_t i = 0; i < out.total.size(); ++i) {
    out.total[i] = out.linear[i] + out.forest[i];
  }
  return out;
}

std::vector<double> predict_rerf(const RerfModel& model, const DataMatrix& points) {
  return predict_rerf_parts(model, points).total;
}

namespace {

using nlohmann::json;

json expansion_to_json(const FeatureExpansionSpec& spec) {
  json j;
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

FeatureExpansionSpec expansion_from_json(const json& j) {
  FeatureExpansionSpec spec;
  spec.quadratic_columns = j.at("quadratic").get<std::vector<std::string>>();
  for (const auto& pair : j.at("interactions")) {
    spec.interaction_pairs.emplace_back(pair.at(0).get<std::string>(), pair.at(1).get<std::string>());
  }
  for (const auto& pair : j.at("ratios")) {
    spec.custom_ratios.emplace_back(pair.at(0).get<std::string>(), pair.at(1).get<std::string>());
  }
  return spec;
}

json tree_to_json(const Tree& tree) {
  json nodes = json::array();
  for (const auto& n : tree.nodes) {
    if (n.is_leaf()) {
      nodes.push_back({-1, n.prediction, n.sample_begin, n.sample_end});
    } else {
      nodes.push_back({n.split_column, n.threshold, n.left, n.right});
    }
  }
  return json{{"nodes", std::move(nodes)}, {"samples", tree.leaf_samples}};
}

Tree tree_from_json(const json& j) {
  Tree tree;
  for (const auto& n : j.at("nodes")) {
    TreeNode node;
    node.split_column = n.at(0).get<std::int32_t>();
    if (node.is_leaf()) {
      node.prediction = n.at(1).get<double>();
      node.sample_begin = n.at(2).get<std::uint32_t>();
      node.sample_end = n.at(3).get<std::uint32_t>();
    } else {
      node.threshold = n.at(1).get<double>();
      node.left = n.at(2).get<std::uint32_t>();
      node.right = n.at(3).get<std::uint32_t>();
    }
    tree.nodes.push_back(node);
  }
  tree.leaf_samples = j.at("samples").get<std::vector<std::uint32_t>>();
  return tree;
}

/// Rejects structures that prediction could not traverse safely.
void check_structure(const RerfModel& model) {
  const auto& lasso = model.lasso;
  const std::size_t q = lasso.feature_names.size();
  if (lasso.coefficients.size() != q || lasso.centers.size() != q || lasso.scales.size() != q ||
      lasso.standardized_coefficients.size() != q) {
    throw DataError("lasso vectors do not match the feature count");
  }
  for (std::size_t j : lasso.active_set) {
    if (j >= q) {
      throw DataError("lasso active set index out of range");
    }
  }
  const auto& forest = model.forest;
  if (forest.trees.empty()) {
    throw DataError("forest has no trees");
  }
  const std::size_t p = forest.feature_names.size();
  for (const auto& tree : forest.trees) {
    if (tree.nodes.empty()) {
      throw DataError("tree has no nodes");
    }
    for (std::size_t id = 0; id < tree.nodes.size(); ++id) {
      const TreeNode& n = tree.nodes[id];
      if (n.is_leaf()) {
        if (n.sample_begin >= n.sample_end || n.sample_end > tree.leaf_samples.size()) {
          throw DataError("leaf sample range out of bounds");
        }
      } else if (static_cast<std::size_t>(n.split_column) >= p || n.left <= id || n.right <= id ||
                 n.left >= tree.nodes.size() || n.right >= tree.nodes.size()) {
        throw DataError("tree node references are out of range");
      }
    }
    for (std::uint32_t row : tree.leaf_samples) {
      if (row >= forest.n_train) {
        throw DataError("leaf sample row out of range");
      }
    }
  }
}

}  // namespace

void save_model(const RerfModel& model, const std::filesystem::path& path) {
  const auto& lasso = model.lasso;
  const auto& forest = model.forest;
  json j;
  j["format"] = "rerf-model";
  j["version"] = kModelFormatVersion;
  j["input_columns"] = model.input_columns;
  j["expansion"] = expansion_to_json(model.expansion);
  j["forest_on_expanded"] = model.forest_on_expanded;
  j["tuning"] = {{"lambda", model.tuning.lambda}, {"mtry", model.tuning.mtry}, {"nodesize", model.tuning.nodesize}};
  j["lasso"] = {
      {"feature_names", lasso.feature_names},
      {"coefficients", lasso.coefficients},
      {"intercept", lasso.intercept},
      {"lambda", lasso.lambda},
      {"active_set", lasso.active_set},
      {"n_iterations", lasso.n_iterations},
      {"converged", lasso.converged},
      {"centers", lasso.centers},
      {"scales", lasso.scales},
      {"standardized_coefficients", lasso.standardized_coefficients},
      {"response_mean", lasso.response_mean},
  };
  json trees = json::array();
  for (const auto& t : forest.trees) {
    trees.push_back(tree_to_json(t));
  }
  j["forest"] = {
      {"feature_names", forest.feature_names},
      {"n_trees", forest.params.n_trees},
      {"mtry", forest.params.mtry},
      {"nodesize", forest.params.nodesize},
      {"seed", forest.params.seed},
      {"bootstrap", forest.params.bootstrap},
      {"n_train", forest.n_train},
      {"response_min", forest.response_min},
      {"response_max", forest.response_max},
      {"trees", std::move(trees)},
  };
  std::ofstream out(path);
  if (!out) {
    throw DataError(fmt::format("cannot write model file '{}'", path.string()));
  }
  out << j.dump() << '\n';
  if (!out) {
    throw DataError(fmt::format("failed writing model file '{}'", path.string()));
  }
}

RerfModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) {
    throw DataError(fmt::format("cannot open model file '{}'", path.string()));
  }
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(fmt::format("model file '{}' is not valid JSON: {}", path.string(), e.what()));
  }
  if (j.value("format", "") != "rerf-model") {
    throw DataError(fmt::format("'{}' is not a model file", path.string()));
  }
  if (j.value("version", 0) != kModelFormatVersion) {
    throw DataError(fmt::format("unsupported model version {}", j.value("version", 0)));
  }
  try {
    RerfModel model;
    model.input_columns = j.at("input_columns").get<std::vector<std::string>>();
    model.expansion = expansion_from_json(j.at("expansion"));
    model.forest_on_expanded = j.at("forest_on_expanded").get<bool>();
    const auto& t = j.at("tuning");
    model.tuning = {t.at("lambda").get<double>(), t.at("mtry").get<std::size_t>(), t.at("nodesize").get<std::size_t>()};

    const auto& l = j.at("lasso");
    auto& lasso = model.lasso;
    lasso.feature_names = l.at("feature_names").get<std::vector<std::string>>();
    lasso.coefficients = l.at("coefficients").get<std::vector<double>>();
    lasso.intercept = l.at("intercept").get<double>();
    lasso.lambda = l.at("lambda").get<double>();
    lasso.active_set = l.at("active_set").get<std::vector<std::size_t>>();
    lasso.n_iterations = l.at("n_iterations").get<std::size_t>();
    lasso.converged = l.at("converged").get<bool>();
    lasso.centers = l.at("centers").get<std::vector<double>>();
    lasso.scales = l.at("scales").get<std::vector<double>>();
    lasso.standardized_coefficients = l.at("standardized_coefficients").get<std::vector<double>>();
    lasso.response_mean = l.at("response_mean").get<double>();

    const auto& f = j.at("forest");
    auto& forest = model.forest;
    forest.feature_names = f.at("feature_names").get<std::vector<std::string>>();
    forest.params.n_trees = f.at("n_trees").get<std::size_t>();
    forest.params.mtry = f.at("mtry").get<std::size_t>();
    forest.params.nodesize = f.at("nodesize").get<std::size_t>();
    forest.params.seed = f.at("seed").get<std::uint64_t>();
    forest.params.bootstrap = f.at("bootstrap").get<bool>();
    forest.n_train = f.at("n_train").get<std::size_t>();
    forest.response_min = f.at("response_min").get<double>();
    forest.response_max = f.at("response_max").get<double>();
    for (const auto& tree : f.at("trees")) {
      forest.trees.push_back(tree_from_json(tree));
    }
    check_structure(model);
    return model;
  } catch (const json::exception& e) {
    throw DataError(fmt::format("malformed model file '{}': {}", path.string(), e.what()));
  } catch (const DataError& e) {
    throw DataError(fmt::format("malformed model file '{}': {}", path.string(), e.what()));
  }
}

}  // namespace rerf
