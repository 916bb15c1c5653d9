#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "rerf/rng.hpp"
#include "rerf/simgen.hpp"

using namespace rerf;

namespace {

double column_mean(const DataMatrix& d, std::size_t j) {
  double s = 0.0;
  for (std::size_t i = 0; i < d.n_rows(); ++i) {
    s += d.at(i, j);
  }
  return s / static_cast<double>(d.n_rows());
}

double fraction_below(const DataMatrix& d, std::size_t j, double cut) {
  std::size_t count = 0;
  for (std::size_t i = 0; i < d.n_rows(); ++i) {
    count += d.at(i, j) < cut ? 1 : 0;
  }
  return static_cast<double>(count) / static_cast<double>(d.n_rows());
}

std::vector<double> row(const DataMatrix& d, std::size_t i, std::size_t cols = kSimDimension) {
  std::vector<double> x(cols);
  for (std::size_t j = 0; j < cols; ++j) {
    x[j] = d.at(i, j);
  }
  return x;
}

}  // namespace

TEST_CASE("mean functions") {
  const std::vector<double> ones{1, 1, 1, 1, 0, 0, 0, 0, 0, 0};
  CHECK(eval_mean_function(SimModel::linear, ones) == 6.0);
  const std::vector<double> halves{0.5, 0.5, 0.5, 0.5, 0, 0, 0, 0, 0, 0};
  CHECK(eval_mean_function(SimModel::partial, halves) == doctest::Approx(5.0).epsilon(1e-14));
  CHECK(eval_mean_function(SimModel::nonadditive, halves) == doctest::Approx(5.75).epsilon(1e-14));
  // intro at x = 0 and z = 0: 0.1 + 4 / (1 + e^10)
  const std::vector<double> zeros(10, 0.0);
  CHECK(eval_mean_function(SimModel::intro, zeros, 0.0) == doctest::Approx(0.1 + 4.0 / (1.0 + std::exp(10.0))));
  CHECK(eval_mean_function(SimModel::intro, zeros, 0.5) - eval_mean_function(SimModel::intro, zeros, 0.0) ==
        doctest::Approx(5.0));

  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> x(10);
    for (auto& v : x) {
      v = rng.uniform(-2.0, 2.0);
    }
    const double diff = eval_mean_function(SimModel::nonadditive, x) - eval_mean_function(SimModel::partial, x);
    CHECK(diff == doctest::Approx(3.0 * x[2] * x[3]).epsilon(1e-12));
    // the noise coordinates are inert
    auto y = x;
    for (std::size_t j = 5; j < 10; ++j) {
      y[j] = rng.uniform();
    }
    CHECK(eval_mean_function(SimModel::linear, x) == eval_mean_function(SimModel::linear, y));
    CHECK(eval_mean_function(SimModel::intro, x, 0.1) == eval_mean_function(SimModel::intro, y, 0.1));
  }
}

TEST_CASE("mean function errors") {
  CHECK_THROWS_AS(eval_mean_function(SimModel::linear, std::vector<double>(9, 0.0)), DataError);
  CHECK_THROWS_AS(eval_mean_function(SimModel::linear, std::vector<double>(10, 0.0), 0.5), DataError);
  CHECK_THROWS_AS(eval_mean_function(SimModel::intro, std::vector<double>(10, 0.0)), DataError);
}

TEST_CASE("scenario labels") {
  CHECK(scenario_labels() == std::vector<std::string>{"LxI", "PxI", "NxI", "LxE", "PxE", "NxE"});
  for (const auto& label : scenario_labels()) {
    const auto spec = ScenarioSpec::from_label(label);
    REQUIRE(spec.has_value());
    CHECK(spec->label() == label);
    CHECK(spec->n_train == 1000);
    CHECK(spec->n_validation == 100);
    CHECK(spec->noise_sd == 0.5);
  }
  const auto unicode = ScenarioSpec::from_label("N×E");
  REQUIRE(unicode.has_value());
  CHECK(unicode->model == SimModel::nonadditive);
  CHECK(unicode->sampling == Sampling::extrapolation);
  const auto intro = ScenarioSpec::from_label("INTRO");
  REQUIRE(intro.has_value());
  CHECK(intro->model == SimModel::intro);
  CHECK(intro->label() == "INTRO");
  CHECK_FALSE(ScenarioSpec::from_label("QxI").has_value());
  CHECK_FALSE(ScenarioSpec::from_label("LxZ").has_value());
  CHECK_FALSE(ScenarioSpec::from_label("L-I").has_value());
  CHECK_FALSE(ScenarioSpec::from_label("").has_value());
}

TEST_CASE("default sizes and columns") {
  const auto data = generate(*ScenarioSpec::from_label("LxI"));
  CHECK(data.train.n_rows() == 1000);
  CHECK(data.train.n_cols() == 10);
  CHECK(data.validation.n_rows() == 100);
  CHECK(data.validation.n_cols() == 10);
  CHECK(data.train.column_names().front() == "x1");
  CHECK(data.train.column_names().back() == "x10");
  CHECK(data.train.has_response());

  const auto intro = generate(ScenarioSpec::intro(4));
  CHECK(intro.train.n_rows() == 1500);
  CHECK(intro.validation.n_rows() == 300);
  CHECK(intro.train.n_cols() == 11);
  CHECK(intro.train.column_names().back() == "z");
}

TEST_CASE("interpolation sampling stays in the unit cube") {
  const auto data = generate(*ScenarioSpec::from_label("PxI"));
  for (const auto* d : {&data.train, &data.validation}) {
    for (std::size_t j = 0; j < 10; ++j) {
      for (std::size_t i = 0; i < d->n_rows(); ++i) {
        CHECK_FALSE((d->at(i, j) < 0.0 || d->at(i, j) > 1.0));
      }
    }
  }
  CHECK(std::abs(column_mean(data.train, 2) - 0.5) < 3.0 * std::sqrt(1.0 / 12.0 / 1000.0));
}

TEST_CASE("extrapolation sampling of x3") {
  auto spec = *ScenarioSpec::from_label("LxE");
  spec.n_validation = 1000;
  spec.seed = 21;
  const auto data = generate(spec);
  // Beta(4,8): mean 1/3, var 32/(144*13); Beta(5,1): mean 5/6, var 5/(36*7)
  const double se_train = std::sqrt(32.0 / (144.0 * 13.0) / 1000.0);
  const double se_validation = std::sqrt(5.0 / (36.0 * 7.0) / 1000.0);
  CHECK(std::abs(column_mean(data.train, 2) - 1.0 / 3.0) < 3.0 * se_train);
  CHECK(std::abs(column_mean(data.validation, 2) - 5.0 / 6.0) < 3.0 * se_validation);
  const double slack = 3.0 * std::sqrt(0.25 / 1000.0);
  CHECK(fraction_below(data.train, 2, 0.6) > 0.9 - slack);
  CHECK(1.0 - fraction_below(data.validation, 2, 0.6) > 0.85 - slack);
  // other coordinates stay uniform
  CHECK(std::abs(column_mean(data.validation, 0) - 0.5) < 3.0 * std::sqrt(1.0 / 12.0 / 1000.0));
}

TEST_CASE("intro sampling of z") {
  const auto data = generate(ScenarioSpec::intro(5));
  const std::size_t z = 10;
  double train_max = 0.0;
  for (std::size_t i = 0; i < data.train.n_rows(); ++i) {
    train_max = std::max(train_max, data.train.at(i, z));
  }
  CHECK(train_max <= 0.8);
  double validation_max = 0.0;
  for (std::size_t i = 0; i < data.validation.n_rows(); ++i) {
    validation_max = std::max(validation_max, data.validation.at(i, z));
  }
  CHECK(validation_max > 0.8);
  CHECK(std::abs(column_mean(data.train, z) - 0.4) < 3.0 * 0.8 * std::sqrt(1.0 / 12.0 / 1500.0));
}

TEST_CASE("noiseless responses equal the mean function") {
  for (const auto& label : {"LxI", "PxE", "NxE", "INTRO"}) {
    auto spec = *ScenarioSpec::from_label(label);
    spec.noise_sd = 0.0;
    spec.n_train = 200;
    spec.n_validation = 50;
    const auto data = generate(spec);
    const bool intro = spec.model == SimModel::intro;
    for (const auto* d : {&data.train, &data.validation}) {
      for (std::size_t i = 0; i < d->n_rows(); ++i) {
        const auto x = row(*d, i);
        const auto z = intro ? std::optional<double>(d->at(i, 10)) : std::nullopt;
        CHECK(d->response()[i] == eval_mean_function(spec.model, x, z));
      }
    }
  }
}

TEST_CASE("noise has the requested spread") {
  auto spec = *ScenarioSpec::from_label("NxI");
  spec.n_train = 4000;
  spec.seed = 8;
  const auto data = generate(spec);
  double s = 0.0;
  double ss = 0.0;
  for (std::size_t i = 0; i < data.train.n_rows(); ++i) {
    const double e = data.train.response()[i] - eval_mean_function(spec.model, row(data.train, i));
    s += e;
    ss += e * e;
  }
  const double n = 4000.0;
  CHECK(std::abs(s / n) < 3.0 * 0.5 / std::sqrt(n));
  CHECK(std::abs(std::sqrt(ss / n) - 0.5) < 0.03);
}

TEST_CASE("generation is deterministic under the seed") {
  auto spec = *ScenarioSpec::from_label("PxE");
  spec.n_train = 100;
  spec.seed = 77;
  const auto a = generate(spec);
  const auto b = generate(spec);
  CHECK(a.train == b.train);
  CHECK(a.validation == b.validation);
  spec.seed = 78;
  const auto c = generate(spec);
  CHECK_FALSE(a.train == c.train);
}

TEST_CASE("generation errors") {
  auto spec = *ScenarioSpec::from_label("LxI");
  spec.n_train = 0;
  CHECK_THROWS_AS(generate(spec), DataError);
  spec.n_train = 10;
  spec.noise_sd = -1.0;
  CHECK_THROWS_AS(generate(spec), DataError);
  spec.noise_sd = std::nan("");
  CHECK_THROWS_AS(generate(spec), DataError);
}
