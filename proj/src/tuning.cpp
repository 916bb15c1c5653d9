#include "rerf/tuning.hpp"

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>
#include <tuple>

#include <fmt/format.h>
#include <fmt/ostream.h>

#include "rerf/metrics.hpp"
#include "rerf/parallel.hpp"
#include "rerf/rng.hpp"

namespace rerf {

namespace {

constexpr std::uint64_t kFoldStream = 0x464f4c44;    // fold assignment
constexpr std::uint64_t kForestStream = 0x54524545;  // per (fold, mtry, nodesize) forests
constexpr std::uint64_t kRefitStream = 0x52454649;   // final refit

std::uint64_t cv_forest_seed(std::uint64_t seed, std::size_t fold, std::size_t mtry, std::size_t nodesize) {
  return derive_seed(seed, {kForestStream, fold, mtry, nodesize});
}

}  // namespace

std::uint64_t refit_seed(std::uint64_t seed) { return derive_seed(seed, {kRefitStream}); }

std::size_t default_mtry(std::size_t p) { return std::max<std::size_t>(1, p / 3); }

TuningGrid default_grid(std::size_t p) {
  if (p < 1) {
    throw DataError("default_grid needs p >= 1");
  }
  const std::size_t d = default_mtry(p);
  TuningGrid grid;
  grid.lambdas = default_penalty_grid();
  for (std::size_t m : {std::max<std::size_t>(1, d / 2), d, std::min(p, 2 * d)}) {
    if (std::find(grid.mtry_candidates.begin(), grid.mtry_candidates.end(), m) == grid.mtry_candidates.end()) {
      grid.mtry_candidates.push_back(m);
    }
  }
  grid.nodesize_candidates = {1, 5};
  return grid;
}

std::vector<std::vector<std::size_t>> kfold_indices(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2 || k > n) {
    throw DataError(fmt::format("k-fold needs 2 <= k <= n (k={}, n={})", k, n));
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    std::swap(perm[i - 1], perm[rng.uniform_index(i)]);
  }
  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t pos = 0;
  for (std::size_t f = 0; f < k; ++f) {
    const std::size_t size = n / k + (f < n % k ? 1 : 0);
    folds[f].assign(perm.begin() + static_cast<std::ptrdiff_t>(pos),
                    perm.begin() + static_cast<std::ptrdiff_t>(pos + size));
    std::sort(folds[f].begin(), folds[f].end());
    pos += size;
  }
  return folds;
}

namespace {

struct Fold {
  DataMatrix train_raw;
  DataMatrix train_expanded;
  DataMatrix validation_raw;
  DataMatrix validation_expanded;
  std::vector<double> validation_y;
  std::vector<LassoFit> path;  // one fit per grid lambda
};

std::vector<Fold> make_folds(const DataMatrix& train, const FeatureExpansionSpec& expansion, std::size_t k,
                             std::uint64_t seed) {
  if (train.n_rows() < 2 * k) {
    throw DataError(fmt::format("cross-validation needs n >= 2k (n={}, k={})", train.n_rows(), k));
  }
  const auto held_out = kfold_indices(train.n_rows(), k, derive_seed(seed, {kFoldStream}));
  std::vector<Fold> folds(k);
  for (std::size_t f = 0; f < k; ++f) {
    std::vector<char> in_validation(train.n_rows(), 0);
    for (std::size_t i : held_out[f]) {
      in_validation[i] = 1;
    }
    std::vector<std::size_t> fit_rows;
    for (std::size_t i = 0; i < train.n_rows(); ++i) {
      if (!in_validation[i]) {
        fit_rows.push_back(i);
      }
    }
    Fold& fold = folds[f];
    fold.train_raw = train.select_rows(fit_rows);
    fold.train_expanded = expand_features(fold.train_raw, expansion);
    fold.validation_raw = train.select_rows(held_out[f]);
    fold.validation_expanded = expand_features(fold.validation_raw, expansion);
    auto y = fold.validation_raw.response();
    fold.validation_y.assign(y.begin(), y.end());
  }
  return folds;
}

using CellKey = std::tuple<std::size_t, std::size_t, std::size_t>;  // (lambda, mtry, nodesize) indices

/// Memoized cross-validated scoring of RERF cells over shared folds.
class CrossValidator {
 public:
  CrossValidator(const DataMatrix& train, const FeatureExpansionSpec& expansion, const TuningGrid& grid,
                 std::size_t k, std::uint64_t seed, const SearchOptions& options)
      : grid_(grid), seed_(seed), options_(options) {
    if (grid.lambdas.values.empty() || grid.mtry_candidates.empty() || grid.nodesize_candidates.empty()) {
      throw DataError("tuning grid has an empty dimension");
    }
    const std::size_t p_forest =
        options.forest_on_expanded ? expand_features(train, expansion).n_cols() : train.n_cols();
    for (std::size_t m : grid.mtry_candidates) {
      if (m < 1 || m > p_forest) {
        throw DataError(fmt::format("mtry candidate {} outside [1, {}]", m, p_forest));
      }
    }
    for (std::size_t s : grid.nodesize_candidates) {
      if (s < 1) {
        throw DataError("nodesize candidates must be >= 1");
      }
    }
    folds_ = make_folds(train, expansion, k, seed);
    parallel_for(
        folds_.size(),
        [&](std::size_t f) {
          folds_[f].path = fit_lasso_path(folds_[f].train_expanded, grid.lambdas.values, options.lasso);
        },
        options.threads);
  }

  std::size_t fold_count() const { return folds_.size(); }

  /// Scores any not-yet-seen cells and returns them all in the order given.
  std::vector<CvCell> evaluate(const std::vector<CellKey>& keys) {
    // unique forest fits; cells whose Lasso is null on a fold share one fit
    struct Task {
      std::size_t fold;
      std::size_t mtry_index;
      std::size_t nodesize_index;
      std::optional<std::size_t> lambda_index;  // nullopt: null Lasso
    };
    auto task_id = [](const Task& t) {
      return std::make_tuple(t.fold, t.mtry_index, t.nodesize_index, t.lambda_index.value_or(kNull));
    };
    std::map<std::tuple<std::size_t, std::size_t, std::size_t, std::size_t>, std::size_t> task_index;
    std::vector<Task> tasks;
    std::vector<CellKey> pending;
    for (const auto& key : keys) {
      if (memo_.contains(key) || std::find(pending.begin(), pending.end(), key) != pending.end()) {
        continue;
      }
      pending.push_back(key);
      const auto [li, mi, si] = key;
      for (std::size_t f = 0; f < folds_.size(); ++f) {
        Task t{f, mi, si, folds_[f].path[li].is_null() ? std::nullopt : std::optional<std::size_t>(li)};
        if (task_index.emplace(task_id(t), tasks.size()).second) {
          tasks.push_back(t);
        }
      }
    }

    std::vector<double> task_rmse(tasks.size(), 0.0);
    std::vector<std::string> task_error(tasks.size());
    parallel_for(
        tasks.size(),
        [&](std::size_t i) {
          const Task& t = tasks[i];
          // null fits all have intercept == mean(y), so any null lambda gives identical residuals
          const std::size_t li = t.lambda_index ? *t.lambda_index : first_null(t.fold);
          try {
            task_rmse[i] = score(t.fold, li, t.mtry_index, t.nodesize_index);
          } catch (const std::exception& e) {
            task_error[i] = e.what();
          }
        },
        options_.threads);

    for (const auto& key : pending) {
      const auto [li, mi, si] = key;
      CvCell cell;
      cell.lambda_index = li;
      cell.mtry_index = mi;
      cell.nodesize_index = si;
      cell.lambda = grid_.lambdas.values[li];
      cell.mtry = grid_.mtry_candidates[mi];
      cell.nodesize = grid_.nodesize_candidates[si];
      double sum = 0.0;
      for (std::size_t f = 0; f < folds_.size(); ++f) {
        Task t{f, mi, si, folds_[f].path[li].is_null() ? std::nullopt : std::optional<std::size_t>(li)};
        const std::size_t ti = task_index.at(task_id(t));
        if (!task_error[ti].empty()) {
          cell.failed = true;
          cell.error = fmt::format("fold {}: {}", f, task_error[ti]);
        }
        cell.fold_rmse.push_back(task_rmse[ti]);
        sum += task_rmse[ti];
      }
      cell.mean_rmse = sum / static_cast<double>(folds_.size());
      if (cell.failed) {
        fmt::print(stderr, "warning: excluding cell (lambda={}, mtry={}, nodesize={}): {}\n", cell.lambda,
                   cell.mtry, cell.nodesize, cell.error);
      }
      memo_.emplace(key, std::move(cell));
    }

    std::vector<CvCell> out;
    out.reserve(keys.size());
    for (const auto& key : keys) {
      out.push_back(memo_.at(key));
    }
    return out;
  }

  /// All memoized cells in grid order.
  std::vector<CvCell> table() const {
    std::vector<CvCell> out;
    for (const auto& [key, cell] : memo_) {
      out.push_back(cell);
    }
    return out;
  }

 private:
  static constexpr std::size_t kNull = std::numeric_limits<std::size_t>::max();

  std::size_t first_null(std::size_t fold) const {
    const auto& path = folds_[fold].path;
    for (std::size_t li = 0; li < path.size(); ++li) {
      if (path[li].is_null()) {
        return li;
      }
    }
    throw DataError("no null Lasso fit on fold");
  }

  double score(std::size_t f, std::size_t li, std::size_t mi, std::size_t si) const {
    const Fold& fold = folds_[f];
    const LassoFit& lasso = fold.path[li];
    const std::size_t mtry = grid_.mtry_candidates[mi];
    const std::size_t nodesize = grid_.nodesize_candidates[si];
    ForestParams params;
    params.n_trees = options_.cv_trees;
    params.mtry = mtry;
    params.nodesize = nodesize;
    params.seed = cv_forest_seed(seed_, f, mtry, nodesize);
    const DataMatrix& forest_train = options_.forest_on_expanded ? fold.train_expanded : fold.train_raw;
    const DataMatrix& forest_val = options_.forest_on_expanded ? fold.validation_expanded : fold.validation_raw;
    const Forest forest = fit_forest(forest_train.with_response(residuals(lasso, fold.train_expanded)), params, 1);
    auto pred = predict_linear(lasso, fold.validation_expanded.without_response());
    const auto forest_part = predict_forest(forest, forest_val.without_response());
    for (std::size_t i = 0; i < pred.size(); ++i) {
      pred[i] += forest_part[i];
    }
    return rmse(pred, fold.validation_y);
  }

  const TuningGrid& grid_;
  std::uint64_t seed_;
  SearchOptions options_;
  std::vector<Fold> folds_;
  std::map<CellKey, CvCell> memo_;
};

/// Lowest mean RMSE among non-failed cells; ties keep the earliest grid position.
const CvCell& best_cell(const std::vector<CvCell>& cells) {
  const CvCell* best = nullptr;
  for (const auto& c : cells) {
    if (c.failed) {
      continue;
    }
    if (best == nullptr || c.mean_rmse < best->mean_rmse ||
        (c.mean_rmse == best->mean_rmse &&
         std::tie(c.lambda_index, c.mtry_index, c.nodesize_index) <
             std::tie(best->lambda_index, best->mtry_index, best->nodesize_index))) {
      best = &c;
    }
  }
  if (best == nullptr) {
    throw DataError("every tuning cell failed");
  }
  return *best;
}

void finish(TuningResult& result, const CvCell& best, const DataMatrix& train, const FeatureExpansionSpec& expansion,
            std::uint64_t seed, const SearchOptions& options) {
  result.selected = TuningTriple{best.lambda, best.mtry, best.nodesize};
  result.selected_cv_rmse = best.mean_rmse;
  result.seed = seed;
  if (options.refit) {
    RerfOptions ro;
    ro.n_trees = options.final_trees;
    ro.forest_on_expanded = options.forest_on_expanded;
    ro.threads = options.threads;
    ro.lasso = options.lasso;
    result.model = fit_rerf(train, expansion, best.lambda, best.mtry, best.nodesize, refit_seed(seed), ro);
  }
}

std::size_t index_of_or(const std::vector<std::size_t>& values, std::size_t wanted, std::size_t fallback) {
  auto it = std::find(values.begin(), values.end(), wanted);
  return it == values.end() ? fallback : static_cast<std::size_t>(it - values.begin());
}

}  // namespace

TuningResult grid_search(const DataMatrix& train, const FeatureExpansionSpec& expansion, const TuningGrid& grid,
                         std::size_t k, std::uint64_t seed, const SearchOptions& options) {
  CrossValidator cv(train, expansion, grid, k, seed, options);
  std::vector<CellKey> keys;
  for (std::size_t li = 0; li < grid.lambdas.values.size(); ++li) {
    for (std::size_t mi = 0; mi < grid.mtry_candidates.size(); ++mi) {
      for (std::size_t si = 0; si < grid.nodesize_candidates.size(); ++si) {
        keys.emplace_back(li, mi, si);
      }
    }
  }
  TuningResult result;
  result.cv_table = cv.evaluate(keys);
  result.fold_count = cv.fold_count();
  result.evaluations = keys.size();
  finish(result, best_cell(result.cv_table), train, expansion, seed, options);
  return result;
}

TuningResult approximate_search(const DataMatrix& train, const FeatureExpansionSpec& expansion,
                                const TuningGrid& grid, std::size_t k, std::uint64_t seed,
                                const SearchOptions& options) {
  CrossValidator cv(train, expansion, grid, k, seed, options);
  const std::size_t p_forest = options.forest_on_expanded ? expand_features(train, expansion).n_cols() : train.n_cols();
  const std::size_t n_lambda = grid.lambdas.values.size();
  std::size_t mi = index_of_or(grid.mtry_candidates, default_mtry(p_forest), grid.mtry_candidates.size() / 2);
  std::size_t si = index_of_or(grid.nodesize_candidates, 5, 0);

  auto sweep_lambda = [&](std::size_t m_idx, std::size_t s_idx) {
    std::vector<CellKey> keys;
    for (std::size_t li = 0; li < n_lambda; ++li) {
      keys.emplace_back(li, m_idx, s_idx);
    }
    return best_cell(cv.evaluate(keys)).lambda_index;
  };

  const std::size_t stage1 = sweep_lambda(mi, si);

  std::vector<CellKey> forest_keys;
  for (std::size_t m = 0; m < grid.mtry_candidates.size(); ++m) {
    for (std::size_t s = 0; s < grid.nodesize_candidates.size(); ++s) {
      forest_keys.emplace_back(stage1, m, s);
    }
  }
  const CvCell stage2 = best_cell(cv.evaluate(forest_keys));
  mi = stage2.mtry_index;
  si = stage2.nodesize_index;

  const std::size_t stage3 = sweep_lambda(mi, si);
  const CvCell selected = cv.evaluate({CellKey{stage3, mi, si}}).front();

  TuningResult result;
  result.cv_table = cv.table();
  result.fold_count = cv.fold_count();
  result.evaluations = 2 * n_lambda + forest_keys.size();
  finish(result, selected, train, expansion, seed, options);
  return result;
}

void write_cv_table(const TuningResult& result, std::ostream& out) {
  out << "lambda,mtry,nodesize,fold,rmse\n";
  for (const auto& cell : result.cv_table) {
    for (std::size_t f = 0; f < cell.fold_rmse.size(); ++f) {
      if (cell.failed) {
        fmt::print(out, "{:.17g},{},{},{},NA\n", cell.lambda, cell.mtry, cell.nodesize, f);
      } else {
        fmt::print(out, "{:.17g},{},{},{},{:.17g}\n", cell.lambda, cell.mtry, cell.nodesize, f, cell.fold_rmse[f]);
      }
    }
  }
}

LassoTuning tune_lasso(const DataMatrix& train, const FeatureExpansionSpec& expansion, const PenaltyGrid& lambdas,
                       std::size_t k, std::uint64_t seed, const LassoOptions& options) {
  if (lambdas.values.empty()) {
    throw DataError("empty penalty grid");
  }
  auto folds = make_folds(train, expansion, k, seed);
  LassoTuning out;
  out.mean_rmse.assign(lambdas.values.size(), 0.0);
  for (auto& fold : folds) {
    fold.path = fit_lasso_path(fold.train_expanded, lambdas.values, options);
    const DataMatrix val = fold.validation_expanded.without_response();
    for (std::size_t li = 0; li < lambdas.values.size(); ++li) {
      out.mean_rmse[li] += rmse(predict_linear(fold.path[li], val), fold.validation_y) / static_cast<double>(k);
    }
  }
  std::size_t best = 0;
  for (std::size_t li = 1; li < out.mean_rmse.size(); ++li) {
    if (out.mean_rmse[li] < out.mean_rmse[best]) {
      best = li;
    }
  }
  out.lambda = lambdas.values[best];
  out.cv_rmse = out.mean_rmse[best];
  out.fit = fit_lasso(expand_features(train, expansion), out.lambda, options);
  return out;
}

ForestTuning tune_forest(const DataMatrix& train, const std::vector<std::size_t>& mtry_candidates,
                         const std::vector<std::size_t>& nodesize_candidates, std::size_t k, std::uint64_t seed,
                         const SearchOptions& options) {
  // a single huge penalty makes every fold's Lasso null: the forest then sees y - mean(y)
  TuningGrid grid;
  grid.lambdas.values = {std::numeric_limits<double>::max()};
  grid.mtry_candidates = mtry_candidates;
  grid.nodesize_candidates = nodesize_candidates;
  SearchOptions cv_options = options;
  cv_options.forest_on_expanded = false;
  CrossValidator cv(train, FeatureExpansionSpec{}, grid, k, seed, cv_options);
  std::vector<CellKey> keys;
  for (std::size_t mi = 0; mi < mtry_candidates.size(); ++mi) {
    for (std::size_t si = 0; si < nodesize_candidates.size(); ++si) {
      keys.emplace_back(0, mi, si);
    }
  }
  ForestTuning out;
  out.cv_table = cv.evaluate(keys);
  const CvCell& best = best_cell(out.cv_table);
  out.mtry = best.mtry;
  out.nodesize = best.nodesize;
  out.cv_rmse = best.mean_rmse;
  ForestParams params;
  params.n_trees = options.final_trees;
  params.mtry = best.mtry;
  params.nodesize = best.nodesize;
  params.seed = refit_seed(seed);
  out.forest = fit_forest(train, params, options.threads);
  return out;
}

}  // namespace rerf
