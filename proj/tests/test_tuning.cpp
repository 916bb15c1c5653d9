#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>
#include <sstream>
#include <vector>

#include "rerf/simgen.hpp"
#include "rerf/tuning.hpp"

using namespace rerf;

namespace {

DataMatrix scenario_train(const char* label, std::size_t n, std::uint64_t seed, double noise = 0.5) {
  auto spec = *ScenarioSpec::from_label(label);
  spec.n_train = n;
  spec.n_validation = 10;
  spec.noise_sd = noise;
  spec.seed = seed;
  return generate(spec).train;
}

SearchOptions fast(std::size_t cv_trees = 20, std::size_t final_trees = 20) {
  SearchOptions o;
  o.cv_trees = cv_trees;
  o.final_trees = final_trees;
  o.threads = 1;
  return o;
}

TuningGrid small_grid(std::vector<double> lambdas, std::vector<std::size_t> mtry = {1, 3},
                      std::vector<std::size_t> nodesize = {1, 5}) {
  TuningGrid g;
  g.lambdas.values = std::move(lambdas);
  g.mtry_candidates = std::move(mtry);
  g.nodesize_candidates = std::move(nodesize);
  return g;
}

}  // namespace

TEST_CASE("default grid") {
  const auto g10 = default_grid(10);
  CHECK(default_mtry(10) == 3);
  CHECK(g10.mtry_candidates == std::vector<std::size_t>{1, 3, 6});
  CHECK(g10.nodesize_candidates == std::vector<std::size_t>{1, 5});
  CHECK(g10.lambdas.values.size() == 100);
  CHECK(g10.size() == 600);
  CHECK(default_grid(1).mtry_candidates == std::vector<std::size_t>{1});
  CHECK(default_grid(9).mtry_candidates == std::vector<std::size_t>{1, 3, 6});
  CHECK(default_grid(2).mtry_candidates == std::vector<std::size_t>{1, 2});
  CHECK(default_grid(11).mtry_candidates == std::vector<std::size_t>{1, 3, 6});
  CHECK(default_grid(30).mtry_candidates == std::vector<std::size_t>{5, 10, 20});
  CHECK_THROWS_AS(default_grid(0), DataError);
}

TEST_CASE("k-fold indices") {
  SUBCASE("n=10, k=5") {
    const auto folds = kfold_indices(10, 5, 1);
    REQUIRE(folds.size() == 5);
    for (const auto& f : folds) {
      CHECK(f.size() == 2);
    }
  }
  SUBCASE("n=7, k=3") {
    const auto folds = kfold_indices(7, 3, 1);
    CHECK(folds[0].size() == 3);
    CHECK(folds[1].size() == 2);
    CHECK(folds[2].size() == 2);
  }
  SUBCASE("partition property and determinism") {
    for (std::size_t n = 2; n < 60; n += 7) {
      for (std::size_t k = 2; k <= std::min<std::size_t>(n, 9); ++k) {
        const auto folds = kfold_indices(n, k, n * 31 + k);
        std::vector<std::size_t> all;
        std::size_t lo = n;
        std::size_t hi = 0;
        for (const auto& f : folds) {
          CHECK(std::is_sorted(f.begin(), f.end()));
          all.insert(all.end(), f.begin(), f.end());
          lo = std::min(lo, f.size());
          hi = std::max(hi, f.size());
        }
        CHECK(hi - lo <= 1);
        std::sort(all.begin(), all.end());
        std::vector<std::size_t> expected(n);
        std::iota(expected.begin(), expected.end(), 0);
        CHECK(all == expected);
        CHECK(kfold_indices(n, k, n * 31 + k) == folds);
      }
    }
    CHECK(kfold_indices(50, 5, 1) != kfold_indices(50, 5, 2));
  }
  SUBCASE("errors") {
    CHECK_THROWS_AS(kfold_indices(3, 4, 1), DataError);
    CHECK_THROWS_AS(kfold_indices(10, 1, 1), DataError);
  }
}

TEST_CASE("single-cell grid") {
  const auto train = scenario_train("NxI", 60, 1);
  const auto grid = small_grid({0.05}, {3}, {5});
  const auto exhaustive = grid_search(train, {}, grid, 3, 9, fast());
  const auto approx = approximate_search(train, {}, grid, 3, 9, fast());
  CHECK(exhaustive.selected == TuningTriple{0.05, 3, 5});
  CHECK(approx.selected == exhaustive.selected);
  CHECK(approx.selected_cv_rmse == exhaustive.selected_cv_rmse);
  CHECK(exhaustive.cv_table.size() == 1);
  CHECK(exhaustive.fold_count == 3);
  CHECK(exhaustive.seed == 9);
  REQUIRE(exhaustive.model.has_value());
  CHECK(exhaustive.model->tuning == exhaustive.selected);
  CHECK(exhaustive.model->forest.trees.size() == 20);
}

TEST_CASE("selection attains the minimum of the cv table") {
  const auto train = scenario_train("PxE", 80, 2);
  const auto grid = small_grid({0.001, 0.03, 1.0, 30.0});
  const auto result = grid_search(train, {}, grid, 4, 3, fast());
  REQUIRE(result.cv_table.size() == 16);
  double lowest = result.cv_table.front().mean_rmse;
  for (const auto& c : result.cv_table) {
    lowest = std::min(lowest, c.mean_rmse);
    CHECK(c.fold_rmse.size() == 4);
    CHECK(c.mean_rmse == doctest::Approx(std::accumulate(c.fold_rmse.begin(), c.fold_rmse.end(), 0.0) / 4.0));
  }
  CHECK(result.selected_cv_rmse == lowest);
  CHECK(result.evaluations == 16);
  // grid order: lambda-major, then mtry, then nodesize
  CHECK(result.cv_table[1].nodesize_index == 1);
  CHECK(result.cv_table[2].mtry_index == 1);
  CHECK(result.cv_table[4].lambda_index == 1);
}

TEST_CASE("equal scores resolve to the earliest grid cell") {
  // both penalties exceed lambda_max on every fold, so the two cells share a forest
  const auto train = scenario_train("LxI", 60, 3);
  const auto grid = small_grid({1000.0, 2000.0}, {2}, {5});
  const auto result = grid_search(train, {}, grid, 3, 1, fast());
  REQUIRE(result.cv_table.size() == 2);
  CHECK(result.cv_table[0].mean_rmse == result.cv_table[1].mean_rmse);
  CHECK(result.selected.lambda == 1000.0);
}

TEST_CASE("evaluation counts for the default p=10 grid") {
  const auto train = scenario_train("LxI", 50, 4);
  const auto grid = default_grid(10);
  SearchOptions o = fast(1, 1);
  o.refit = false;
  const auto exhaustive = grid_search(train, {}, grid, 5, 1, o);
  const auto approx = approximate_search(train, {}, grid, 5, 1, o);
  CHECK(exhaustive.evaluations == 600);
  CHECK(approx.evaluations == 206);
  CHECK(approx.cv_table.size() <= 206);
  CHECK_FALSE(exhaustive.model.has_value());
  // the approximate selection is a grid member and scores the same as in the full table
  const auto& s = approx.selected;
  const auto it = std::find_if(exhaustive.cv_table.begin(), exhaustive.cv_table.end(), [&](const CvCell& c) {
    return c.lambda == s.lambda && c.mtry == s.mtry && c.nodesize == s.nodesize;
  });
  REQUIRE(it != exhaustive.cv_table.end());
  CHECK(it->mean_rmse == approx.selected_cv_rmse);
  CHECK(exhaustive.selected_cv_rmse <= approx.selected_cv_rmse);
}

TEST_CASE("linear data: the linear part carries the signal") {
  const auto train = scenario_train("LxI", 200, 5, 0.05);
  PenaltyGrid lambdas;
  for (double l : {0.001, 0.01, 0.1, 1.0, 10.0}) {
    lambdas.values.push_back(l);
  }
  TuningGrid grid = default_grid(10);
  grid.lambdas = lambdas;
  const auto o = fast(30, 30);
  const auto rerf = approximate_search(train, {}, grid, 5, 7, o);
  const auto rf = tune_forest(train, grid.mtry_candidates, grid.nodesize_candidates, 5, 7, o);
  CHECK(rerf.selected.lambda <= 0.01);
  CHECK_FALSE(rerf.model->lasso.is_null());
  CHECK(rerf.selected_cv_rmse <= rf.cv_rmse);
}

TEST_CASE("plain-forest CV equals the null-Lasso RERF cells") {
  const auto train = scenario_train("NxE", 70, 6);
  const std::vector<std::size_t> mtry{1, 3};
  const std::vector<std::size_t> nodesize{1, 5};
  const auto o = fast(15, 15);
  const auto rf = tune_forest(train, mtry, nodesize, 5, 11, o);
  const auto grid = small_grid({500.0, 5000.0}, mtry, nodesize);
  const auto rerf = grid_search(train, {}, grid, 5, 11, o);
  REQUIRE(rf.cv_table.size() == 4);
  for (std::size_t c = 0; c < 4; ++c) {
    CHECK(rf.cv_table[c].mean_rmse == rerf.cv_table[c].mean_rmse);
  }
  // selected penalty at the top of the grid: predictions coincide with the tuned forest
  CHECK(rerf.selected.mtry == rf.mtry);
  CHECK(rerf.selected.nodesize == rf.nodesize);
  CHECK(rerf.model->lasso.is_null());
  const auto test = scenario_train("NxE", 30, 99);
  const auto a = predict_rerf(*rerf.model, test);
  const auto b = predict_forest(rf.forest, test.without_response());
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::abs(a[i] - b[i]) <= 1e-10);
  }
}

TEST_CASE("tuning does not depend on the thread count") {
  const auto train = scenario_train("PxI", 80, 8);
  const auto grid = small_grid({0.01, 0.3, 10.0});
  auto one = fast(10, 10);
  auto four = one;
  four.threads = 4;
  const auto a = grid_search(train, {}, grid, 4, 5, one);
  const auto b = grid_search(train, {}, grid, 4, 5, four);
  CHECK(a.selected == b.selected);
  REQUIRE(a.cv_table.size() == b.cv_table.size());
  for (std::size_t c = 0; c < a.cv_table.size(); ++c) {
    CHECK(a.cv_table[c].fold_rmse == b.cv_table[c].fold_rmse);
  }
  CHECK(a.model->forest == b.model->forest);
  const auto c = approximate_search(train, {}, grid, 4, 5, one);
  const auto d = approximate_search(train, {}, grid, 4, 5, four);
  CHECK(c.selected == d.selected);
  CHECK(c.selected_cv_rmse == d.selected_cv_rmse);
}

TEST_CASE("feature expansion flows through the search") {
  const auto train = scenario_train("NxI", 60, 9);
  FeatureExpansionSpec spec;
  spec.interaction_pairs = {{"x3", "x4"}};
  const auto grid = small_grid({0.01, 1.0}, {3}, {5});
  const auto result = grid_search(train, spec, grid, 3, 1, fast());
  CHECK(result.model->lasso.feature_names.size() == 11);
  CHECK(result.model->forest.feature_names.size() == 10);
  auto o = fast();
  o.forest_on_expanded = true;
  const auto expanded = grid_search(train, spec, small_grid({0.01}, {11}, {5}), 3, 1, o);
  CHECK(expanded.model->forest.feature_names.size() == 11);
  CHECK_THROWS_AS(grid_search(train, spec, small_grid({0.01}, {11}, {5}), 3, 1, fast()), DataError);
}

TEST_CASE("cv table export") {
  const auto train = scenario_train("LxE", 40, 10);
  const auto result = grid_search(train, {}, small_grid({0.1}, {1}, {1, 5}), 2, 1, fast());
  std::ostringstream out;
  write_cv_table(result, out);
  std::istringstream in(out.str());
  std::string line;
  std::getline(in, line);
  CHECK(line == "lambda,mtry,nodesize,fold,rmse");
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    CHECK(std::count(line.begin(), line.end(), ',') == 4);
  }
  CHECK(rows == 4);
}

TEST_CASE("lasso-only tuning") {
  const auto train = scenario_train("LxI", 100, 11, 0.1);
  const auto grid = default_penalty_grid();
  const auto tuned = tune_lasso(train, {}, grid, 5, 3);
  CHECK(tuned.mean_rmse.size() == 100);
  CHECK(tuned.lambda < 0.05);
  CHECK(tuned.cv_rmse == *std::min_element(tuned.mean_rmse.begin(), tuned.mean_rmse.end()));
  CHECK(tuned.fit.lambda == tuned.lambda);
  // all-null grid: every score ties, the smallest penalty wins
  PenaltyGrid huge;
  huge.values = {1e4, 1e5};
  const auto tie = tune_lasso(train, {}, huge, 5, 3);
  CHECK(tie.mean_rmse[0] == tie.mean_rmse[1]);
  CHECK(tie.lambda == 1e4);
  CHECK_THROWS_AS(tune_lasso(train, {}, PenaltyGrid{}, 5, 3), DataError);
}

TEST_CASE("search input errors") {
  const auto train = scenario_train("LxI", 20, 12);
  CHECK_THROWS_AS(grid_search(train, {}, small_grid({0.1}), 11, 1, fast()), DataError);
  CHECK_THROWS_AS(grid_search(train, {}, small_grid({}), 2, 1, fast()), DataError);
  CHECK_THROWS_AS(grid_search(train, {}, small_grid({0.1}, {0}), 2, 1, fast()), DataError);
  CHECK_THROWS_AS(grid_search(train, {}, small_grid({0.1}, {11}), 2, 1, fast()), DataError);
  CHECK_THROWS_AS(grid_search(train, {}, small_grid({0.1}, {1}, {0}), 2, 1, fast()), DataError);
  CHECK_THROWS_AS(approximate_search(train, {}, small_grid({0.1}), 11, 1, fast()), DataError);
}
