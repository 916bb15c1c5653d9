#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "rerf/dataset.hpp"
#include "rerf/forest.hpp"
#include "rerf/lasso.hpp"
#include "rerf/rerf.hpp"

namespace rerf {

struct TuningGrid {
  PenaltyGrid lambdas;
  std::vector<std::size_t> mtry_candidates;
  std::vector<std::size_t> nodesize_candidates;

  std::size_t size() const {
    return lambdas.values.size() * mtry_candidates.size() * nodesize_candidates.size();
  }
};

/// max(1, floor(p / 3))
std::size_t default_mtry(std::size_t p);

/// The default lambda grid, mtry in {d/2, d, 2d} (floored at 1, capped at p,
/// deduplicated) with d = default_mtry(p), and nodesize in {1, 5}.
TuningGrid default_grid(std::size_t p);

/// k disjoint folds covering 0..n-1, sizes differing by at most one (the
/// first n % k folds get the extra row). Each fold is sorted ascending.
std::vector<std::vector<std::size_t>> kfold_indices(std::size_t n, std::size_t k, std::uint64_t seed);

struct CvCell {
  std::size_t lambda_index = 0;
  std::size_t mtry_index = 0;
  std::size_t nodesize_index = 0;
  double lambda = 0.0;
  std::size_t mtry = 0;
  std::size_t nodesize = 0;
  std::vector<double> fold_rmse;
  double mean_rmse = 0.0;
  bool failed = false;
  std::string error;
};

struct SearchOptions {
  std::size_t cv_trees = 100;
  std::size_t final_trees = 500;
  /// Refit the selected cell on the full training data.
  bool refit = true;
  bool forest_on_expanded = false;
  std::size_t threads = 0;
  LassoOptions lasso;
};

struct TuningResult {
  TuningTriple selected;
  double selected_cv_rmse = 0.0;
  /// Every evaluated cell, in grid order.
  std::vector<CvCell> cv_table;
  std::size_t fold_count = 0;
  std::uint64_t seed = 0;
  /// Cell evaluations charged by the search procedure.
  std::size_t evaluations = 0;
  std::optional<RerfModel> model;
};

/// Scores every (lambda, mtry, nodesize) cell by the mean held-out RMSE of
/// the full Lasso + forest pipeline over shared folds, and selects the
/// minimizer (ties: earliest in grid order).
TuningResult grid_search(const DataMatrix& train, const FeatureExpansionSpec& expansion, const TuningGrid& grid,
                         std::size_t k, std::uint64_t seed, const SearchOptions& options = {});

/// Three sweeps: lambda at the default (mtry, nodesize), then (mtry,
/// nodesize) at that lambda, then lambda again at the chosen (mtry, nodesize).
TuningResult approximate_search(const DataMatrix& train, const FeatureExpansionSpec& expansion,
                                const TuningGrid& grid, std::size_t k, std::uint64_t seed,
                                const SearchOptions& options = {});

/// CSV with columns lambda,mtry,nodesize,fold,rmse.
void write_cv_table(const TuningResult& result, std::ostream& out);

struct LassoTuning {
  double lambda = 0.0;
  double cv_rmse = 0.0;
  std::vector<double> mean_rmse;  // per grid value
  LassoFit fit;
};

/// Lasso-only CV over the penalty grid on the same folds as the RERF searches.
LassoTuning tune_lasso(const DataMatrix& train, const FeatureExpansionSpec& expansion, const PenaltyGrid& lambdas,
                       std::size_t k, std::uint64_t seed, const LassoOptions& options = {});

struct ForestTuning {
  std::size_t mtry = 1;
  std::size_t nodesize = 5;
  double cv_rmse = 0.0;
  std::vector<CvCell> cv_table;
  Forest forest;
};

/// Plain-forest CV over (mtry, nodesize). Fold assignment and forest seeds
/// match the RERF searches, so a null-Lasso RERF cell scores identically.
ForestTuning tune_forest(const DataMatrix& train, const std::vector<std::size_t>& mtry_candidates,
                         const std::vector<std::size_t>& nodesize_candidates, std::size_t k, std::uint64_t seed,
                         const SearchOptions& options = {});

/// Seed used for the final refit of any search with master seed `seed`.
std::uint64_t refit_seed(std::uint64_t seed);

}  // namespace rerf
