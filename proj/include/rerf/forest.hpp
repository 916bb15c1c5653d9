#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "rerf/dataset.hpp"
#include "rerf/rng.hpp"

namespace rerf {

/// Flat tree node. Internal nodes route x[split_column] <= threshold to
/// `left`. Leaves own the half-open range [sample_begin, sample_end) of
/// Tree::leaf_samples, i.e. the (bootstrap) training rows they average.
struct TreeNode {
  std::int32_t split_column = -1;
  double threshold = 0.0;
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  double prediction = 0.0;
  std::uint32_t sample_begin = 0;
  std::uint32_t sample_end = 0;

  bool is_leaf() const { return split_column < 0; }
  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

class Tree {
 public:
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  std::vector<std::uint32_t> leaf_samples;

  std::size_t leaf_for(std::span<const double> point) const;
  double predict(std::span<const double> point) const { return nodes[leaf_for(point)].prediction; }
  std::size_t n_leaves() const;

  friend bool operator==(const Tree&, const Tree&) = default;
};

struct ForestParams {
  std::size_t n_trees = 500;
  std::size_t mtry = 1;
  std::size_t nodesize = 5;
  std::uint64_t seed = 0;
  /// Sample n rows with replacement per tree. Disabled only by tests.
  bool bootstrap = true;

  friend bool operator==(const ForestParams&, const ForestParams&) = default;
};

struct Forest {
  std::vector<std::string> feature_names;
  std::vector<Tree> trees;
  ForestParams params;
  std::size_t n_train = 0;
  double response_min = 0.0;
  double response_max = 0.0;

  friend bool operator==(const Forest&, const Forest&) = default;
};

/// Grows one regression tree on all rows of `train` (no resampling). A node
/// is split only when it holds more than `nodesize` rows; each split draws
/// `mtry` candidate columns without replacement and picks the midpoint
/// threshold minimizing the children's summed squared error. Ties (scores
/// within 1e-12 of the node's sum of squares) go to the lowest column index,
/// then the smallest threshold.
Tree fit_tree(const DataMatrix& train, std::size_t mtry, std::size_t nodesize, Rng& rng);

/// Tree on an explicit row multiset (rows may repeat).
Tree fit_tree(const DataMatrix& train, std::vector<std::uint32_t> sample, std::size_t mtry, std::size_t nodesize,
              Rng& rng);

/// Bagged forest. Tree t uses Rng(derive_seed(seed, {t})), so the result is
/// identical for any `threads` (0 means default_thread_count()).
Forest fit_forest(const DataMatrix& train, const ForestParams& params, std::size_t threads = 0);

double predict_forest(const Forest& forest, std::span<const double> point);
/// Throws DataError when column names differ from the training data.
std::vector<double> predict_forest(const Forest& forest, const DataMatrix& points);

/// Convex weights over the training rows with prediction == weights . y.
std::vector<double> extract_weights(const Forest& forest, std::span<const double> point);

void validate(const ForestParams& params, std::size_t n_features);

}  // namespace rerf
