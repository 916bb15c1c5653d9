#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "rerf/dataset.hpp"
#include "rerf/forest.hpp"
#include "rerf/lasso.hpp"

namespace rerf {

/// Selected (lambda, mtry, nodesize).
struct TuningTriple {
  double lambda = 0.0;
  std::size_t mtry = 1;
  std::size_t nodesize = 5;

  friend bool operator==(const TuningTriple&, const TuningTriple&) = default;
};

struct RerfOptions {
  std::size_t n_trees = 500;
  /// Grow the forest on the expanded design instead of the raw predictors.
  bool forest_on_expanded = false;
  bool bootstrap = true;
  std::size_t threads = 0;
  LassoOptions lasso;
};

/// Lasso on the expanded design plus a forest on the Lasso residuals.
struct RerfModel {
  std::vector<std::string> input_columns;
  FeatureExpansionSpec expansion;
  LassoFit lasso;
  Forest forest;
  TuningTriple tuning;
  bool forest_on_expanded = false;
};

/// expand -> Lasso(lambda) -> residuals -> forest(m, s) on (X, residuals).
/// The forest is seeded with `seed` unchanged, so a null Lasso reproduces a
/// plain forest fitted with the same seed.
RerfModel fit_rerf(const DataMatrix& train, const FeatureExpansionSpec& expansion, double lambda, std::size_t mtry,
                   std::size_t nodesize, std::uint64_t seed, const RerfOptions& options = {});

/// Same pipeline with an already fitted Lasso on expand_features(train).
RerfModel fit_rerf_with_lasso(const DataMatrix& train, const FeatureExpansionSpec& expansion, LassoFit lasso,
                              std::size_t mtry, std::size_t nodesize, std::uint64_t seed,
                              const RerfOptions& options = {});

struct RerfPrediction {
  std::vector<double> linear;
  std::vector<double> forest;
  std::vector<double> total;
};

/// `points` carries the raw input columns (extra columns are ignored).
RerfPrediction predict_rerf_parts(const RerfModel& model, const DataMatrix& points);
std::vector<double> predict_rerf(const RerfModel& model, const DataMatrix& points);

inline constexpr int kModelFormatVersion = 1;

void save_model(const RerfModel& model, const std::filesystem::path& path);
RerfModel load_model(const std::filesystem::path& path);

}  // namespace rerf
