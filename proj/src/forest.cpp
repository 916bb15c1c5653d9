#include "rerf/forest.hpp"

#include <algorithm>
#include <numeric>
#include <optional>
#include <utility>

#include <fmt/format.h>

#include "rerf/parallel.hpp"

namespace rerf {

std::size_t Tree::leaf_for(std::span<const double> point) const {
  std::size_t id = 0;
  while (!nodes[id].is_leaf()) {
    const TreeNode& node = nodes[id];
    id = point[static_cast<std::size_t>(node.split_column)] <= node.threshold ? node.left : node.right;
  }
  return id;
}

std::size_t Tree::n_leaves() const {
  return static_cast<std::size_t>(std::count_if(nodes.begin(), nodes.end(), [](const TreeNode& n) { return n.is_leaf(); }));
}

void validate(const ForestParams& params, std::size_t n_features) {
  if (params.n_trees < 1) {
    throw DataError("n_trees must be at least 1");
  }
  if (params.nodesize < 1) {
    throw DataError("nodesize must be at least 1");
  }
  if (params.mtry < 1 || params.mtry > n_features) {
    throw DataError(fmt::format("mtry {} outside [1, {}]", params.mtry, n_features));
  }
}

namespace {

class TreeBuilder {
 public:
  TreeBuilder(const DataMatrix& train, std::size_t mtry, std::size_t nodesize, Rng& rng)
      : y_(train.response()), mtry_(mtry), nodesize_(nodesize), rng_(rng) {
    columns_.reserve(train.n_cols());
    for (std::size_t j = 0; j < train.n_cols(); ++j) {
      columns_.push_back(train.column(j));
    }
    candidates_.resize(train.n_cols());
  }

  Tree build(std::vector<std::uint32_t> sample) {
    Tree tree;
    tree.leaf_samples = std::move(sample);
    samples_ = &tree.leaf_samples;
    nodes_ = &tree.nodes;
    nodes_->push_back(TreeNode{});
    struct Pending {
      std::uint32_t id;
      std::uint32_t begin;
      std::uint32_t end;
    };
    std::vector<Pending> stack{{0, 0, static_cast<std::uint32_t>(samples_->size())}};
    // depth-first, left child first, so node numbering is fixed by the data
    while (!stack.empty()) {
      const Pending cur = stack.back();
      stack.pop_back();
      if (auto split = try_split(cur.begin, cur.end)) {
        const auto [column, threshold, mid] = *split;
        const auto left = static_cast<std::uint32_t>(nodes_->size());
        nodes_->push_back(TreeNode{});
        nodes_->push_back(TreeNode{});
        TreeNode& node = (*nodes_)[cur.id];
        node.split_column = static_cast<std::int32_t>(column);
        node.threshold = threshold;
        node.left = left;
        node.right = left + 1;
        stack.push_back({left + 1, mid, cur.end});
        stack.push_back({left, cur.begin, mid});
      } else {
        make_leaf(cur.id, cur.begin, cur.end);
      }
    }
    return tree;
  }

 private:
  struct Split {
    std::size_t column;
    double threshold;
    std::uint32_t mid;
  };

  void make_leaf(std::uint32_t id, std::uint32_t begin, std::uint32_t end) {
    TreeNode& node = (*nodes_)[id];
    node.split_column = -1;
    node.sample_begin = begin;
    node.sample_end = end;
    // running mean: exact when all responses are equal
    double mean = 0.0;
    std::size_t k = 0;
    for (std::uint32_t pos = begin; pos < end; ++pos) {
      ++k;
      mean += (y_[(*samples_)[pos]] - mean) / static_cast<double>(k);
    }
    node.prediction = mean;
  }

  std::optional<Split> try_split(std::uint32_t begin, std::uint32_t end) {
    const std::size_t n = end - begin;
    if (n <= nodesize_ || n < 2) {
      return std::nullopt;
    }
    auto& s = *samples_;
    const double first = y_[s[begin]];
    bool pure = true;
    double mean = 0.0;
    std::size_t k = 0;
    for (std::uint32_t pos = begin; pos < end; ++pos) {
      const double v = y_[s[pos]];
      pure = pure && v == first;
      ++k;
      mean += (v - mean) / static_cast<double>(k);
    }
    if (pure) {
      return std::nullopt;
    }
    double sst = 0.0;
    for (std::uint32_t pos = begin; pos < end; ++pos) {
      const double d = y_[s[pos]] - mean;
      sst += d * d;
    }
    // scores of identical partitions differ only by summation order
    const double tie = 1e-12 * sst;

    // mtry distinct columns, scanned in ascending index order
    const std::size_t p = columns_.size();
    std::iota(candidates_.begin(), candidates_.end(), 0);
    for (std::size_t i = 0; i < mtry_; ++i) {
      const std::size_t j = i + rng_.uniform_index(p - i);
      std::swap(candidates_[i], candidates_[j]);
    }
    std::sort(candidates_.begin(), candidates_.begin() + static_cast<std::ptrdiff_t>(mtry_));

    const auto nd = static_cast<double>(n);
    bool found = false;
    double best_score = 0.0;
    std::size_t best_column = 0;
    double best_threshold = 0.0;

    pairs_.resize(n);
    for (std::size_t c = 0; c < mtry_; ++c) {
      const std::size_t col = candidates_[c];
      const auto x = columns_[col];
      for (std::size_t i = 0; i < n; ++i) {
        const std::uint32_t row = s[begin + i];
        pairs_[i] = {x[row], y_[row] - mean};
      }
      std::sort(pairs_.begin(), pairs_.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
      if (pairs_.front().first == pairs_.back().first) {
        continue;
      }
      double total = 0.0;
      for (const auto& pr : pairs_) {
        total += pr.second;
      }
      const double parent = total * total / nd;
      double left_sum = 0.0;
      for (std::size_t i = 0; i + 1 < n; ++i) {
        left_sum += pairs_[i].second;
        if (pairs_[i].first == pairs_[i + 1].first) {
          continue;
        }
        const auto nl = static_cast<double>(i + 1);
        const double right_sum = total - left_sum;
        // SSE_parent - SSE_children
        const double score = left_sum * left_sum / nl + right_sum * right_sum / (nd - nl) - parent;
        if (!found || score > best_score + tie) {
          found = true;
          best_score = score;
          best_column = col;
          const double a = pairs_[i].first;
          const double b = pairs_[i + 1].first;
          double mid = a + (b - a) * 0.5;
          if (!(mid < b)) {
            mid = a;
          }
          best_threshold = mid;
        }
      }
    }
    if (!found || !(best_score > tie)) {
      return std::nullopt;
    }

    auto* first_pos = s.data() + begin;
    auto* mid_pos = std::stable_partition(first_pos, s.data() + end, [&](std::uint32_t row) {
      return columns_[best_column][row] <= best_threshold;
    });
    return Split{best_column, best_threshold, static_cast<std::uint32_t>(begin + (mid_pos - first_pos))};
  }

  std::span<const double> y_;
  std::vector<std::span<const double>> columns_;
  std::size_t mtry_;
  std::size_t nodesize_;
  Rng& rng_;
  std::vector<std::size_t> candidates_;
  std::vector<std::pair<double, double>> pairs_;
  std::vector<std::uint32_t>* samples_ = nullptr;
  std::vector<TreeNode>* nodes_ = nullptr;
};

void check_tree_inputs(const DataMatrix& train, std::size_t mtry, std::size_t nodesize) {
  if (train.n_rows() < 1) {
    throw DataError("cannot grow a tree on zero rows");
  }
  ForestParams params;
  params.mtry = mtry;
  params.nodesize = nodesize;
  validate(params, train.n_cols());
}

}  // namespace

Tree fit_tree(const DataMatrix& train, std::vector<std::uint32_t> sample, std::size_t mtry, std::size_t nodesize,
              Rng& rng) {
  check_tree_inputs(train, mtry, nodesize);
  return TreeBuilder(train, mtry, nodesize, rng).build(std::move(sample));
}

Tree fit_tree(const DataMatrix& train, std::size_t mtry, std::size_t nodesize, Rng& rng) {
  std::vector<std::uint32_t> sample(train.n_rows());
  std::iota(sample.begin(), sample.end(), 0U);
  return fit_tree(train, std::move(sample), mtry, nodesize, rng);
}

Forest fit_forest(const DataMatrix& train, const ForestParams& params, std::size_t threads) {
  validate(params, train.n_cols());
  if (train.n_rows() < 1) {
    throw DataError("cannot fit a forest on zero rows");
  }
  const auto y = train.response();
  Forest forest;
  forest.feature_names = train.column_names();
  forest.params = params;
  forest.n_train = train.n_rows();
  const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
  forest.response_min = *lo;
  forest.response_max = *hi;
  forest.trees.resize(params.n_trees);

  const auto n = static_cast<std::uint32_t>(train.n_rows());
  parallel_for(
      params.n_trees,
      [&](std::size_t t) {
        Rng rng(derive_seed(params.seed, {t}));
        std::vector<std::uint32_t> sample(n);
        if (params.bootstrap) {
          for (auto& row : sample) {
            row = static_cast<std::uint32_t>(rng.uniform_index(n));
          }
        } else {
          std::iota(sample.begin(), sample.end(), 0U);
        }
        forest.trees[t] = TreeBuilder(train, params.mtry, params.nodesize, rng).build(std::move(sample));
      },
      threads);
  return forest;
}

double predict_forest(const Forest& forest, std::span<const double> point) {
  if (point.size() != forest.feature_names.size()) {
    throw DataError(fmt::format("point has {} coordinates, forest expects {}", point.size(), forest.feature_names.size()));
  }
  double mean = 0.0;
  std::size_t k = 0;
  for (const auto& tree : forest.trees) {
    ++k;
    mean += (tree.predict(point) - mean) / static_cast<double>(k);
  }
  return mean;
}

std::vector<double> predict_forest(const Forest& forest, const DataMatrix& points) {
  if (points.column_names() != forest.feature_names) {
    throw DataError(fmt::format("column mismatch: forest has {} features, data has {} columns",
                                forest.feature_names.size(), points.n_cols()));
  }
  std::vector<double> out(points.n_rows());
  std::vector<double> point(points.n_cols());
  for (std::size_t i = 0; i < out.size(); ++i) {
    for (std::size_t j = 0; j < point.size(); ++j) {
      point[j] = points.at(i, j);
    }
    out[i] = predict_forest(forest, point);
  }
  return out;
}

std::vector<double> extract_weights(const Forest& forest, std::span<const double> point) {
  if (point.size() != forest.feature_names.size()) {
    throw DataError(fmt::format("point has {} coordinates, forest expects {}", point.size(), forest.feature_names.size()));
  }
  std::vector<double> weights(forest.n_train, 0.0);
  const auto n_trees = static_cast<double>(forest.trees.size());
  for (const auto& tree : forest.trees) {
    const TreeNode& leaf = tree.nodes[tree.leaf_for(point)];
    const double mass = 1.0 / (n_trees * static_cast<double>(leaf.sample_end - leaf.sample_begin));
    for (std::uint32_t pos = leaf.sample_begin; pos < leaf.sample_end; ++pos) {
      weights[tree.leaf_samples[pos]] += mass;
    }
  }
  return weights;
}

}  // namespace rerf
