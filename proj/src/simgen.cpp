#include "rerf/simgen.hpp"

#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "rerf/rng.hpp"

namespace rerf {

namespace {

char model_code(SimModel m) {
  switch (m) {
    case SimModel::linear:
      return 'L';
    case SimModel::partial:
      return 'P';
    case SimModel::nonadditive:
      return 'N';
    case SimModel::intro:
      break;
  }
  return '?';
}

double logistic_step(double x2) { return 4.0 / (1.0 + std::exp(-20.0 * x2 + 10.0)); }

}  // namespace

std::string ScenarioSpec::label() const {
  if (model == SimModel::intro) {
    return "INTRO";
  }
  return fmt::format("{}x{}", model_code(model), sampling == Sampling::interpolation ? 'I' : 'E');
}

ScenarioSpec ScenarioSpec::intro(std::uint64_t seed) {
  ScenarioSpec spec;
  spec.model = SimModel::intro;
  spec.n_train = 1500;
  spec.n_validation = 300;
  spec.seed = seed;
  return spec;
}

std::optional<ScenarioSpec> ScenarioSpec::from_label(std::string_view label) {
  if (label == "INTRO" || label == "intro") {
    return intro();
  }
  std::string_view rest = label;
  if (rest.size() < 3) {
    return std::nullopt;
  }
  ScenarioSpec spec;
  switch (rest.front()) {
    case 'L':
      spec.model = SimModel::linear;
      break;
    case 'P':
      spec.model = SimModel::partial;
      break;
    case 'N':
      spec.model = SimModel::nonadditive;
      break;
    default:
      return std::nullopt;
  }
  rest.remove_prefix(1);
  if (rest.starts_with("x") || rest.starts_with("X")) {
    rest.remove_prefix(1);
  } else if (rest.starts_with("×")) {
    rest.remove_prefix(std::string_view("×").size());
  } else {
    return std::nullopt;
  }
  if (rest == "I") {
    spec.sampling = Sampling::interpolation;
  } else if (rest == "E") {
    spec.sampling = Sampling::extrapolation;
  } else {
    return std::nullopt;
  }
  return spec;
}

std::vector<std::string> scenario_labels() { return {"LxI", "PxI", "NxI", "LxE", "PxE", "NxE"}; }

double eval_mean_function(SimModel model, std::span<const double> x, std::optional<double> z) {
  if (x.size() != kSimDimension) {
    throw DataError(fmt::format("mean function needs {} coordinates, got {}", kSimDimension, x.size()));
  }
  if ((model == SimModel::intro) != z.has_value()) {
    throw DataError("z must be supplied exactly for the intro model");
  }
  switch (model) {
    case SimModel::intro:
      return 0.1 * std::exp(4.0 * x[0]) + 4.0 / (1.0 + std::exp(-20.0 * (x[1] - 0.5))) + 3.0 * x[2] + 2.0 * x[3] +
             x[4] + 10.0 * *z;
    case SimModel::linear:
      return x[0] + x[1] + 2.0 * x[2] + 2.0 * x[3];
    case SimModel::partial:
      return std::sin(std::numbers::pi * x[0]) + logistic_step(x[1]) + 2.0 * x[2] + 2.0 * x[3];
    case SimModel::nonadditive:
      return std::sin(std::numbers::pi * x[0]) + logistic_step(x[1]) + 2.0 * x[2] + 2.0 * x[3] +
             3.0 * x[2] * x[3];
  }
  throw DataError("unknown model");
}

namespace {

DataMatrix draw(const ScenarioSpec& spec, std::size_t n, bool training, Rng& rng) {
  const bool intro = spec.model == SimModel::intro;
  const std::size_t p = kSimDimension + (intro ? 1 : 0);
  std::vector<std::vector<double>> cols(p, std::vector<double>(n));
  std::vector<double> y(n);
  std::vector<double> x(kSimDimension);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < kSimDimension; ++j) {
      if (j == 2 && !intro && spec.sampling == Sampling::extrapolation) {
        x[j] = training ? rng.beta_integer(4, 8) : rng.beta_integer(5, 1);
      } else {
        x[j] = rng.uniform();
      }
      cols[j][i] = x[j];
    }
    std::optional<double> z;
    if (intro) {
      z = rng.uniform(0.0, training ? 0.8 : 1.0);
      cols[kSimDimension][i] = *z;
    }
    const double noise = spec.noise_sd > 0.0 ? spec.noise_sd * rng.normal() : 0.0;
    y[i] = eval_mean_function(spec.model, x, z) + noise;
  }
  std::vector<std::string> names;
  for (std::size_t j = 1; j <= kSimDimension; ++j) {
    names.push_back(fmt::format("x{}", j));
  }
  if (intro) {
    names.emplace_back("z");
  }
  return DataMatrix(std::move(names), std::move(cols), std::move(y));
}

}  // namespace

GeneratedData generate(const ScenarioSpec& spec) {
  if (spec.n_train == 0 || spec.n_validation == 0) {
    throw DataError("scenario sizes must be positive");
  }
  if (!(spec.noise_sd >= 0.0) || !std::isfinite(spec.noise_sd)) {
    throw DataError(fmt::format("noise sd must be finite and nonnegative, got {}", spec.noise_sd));
  }
  Rng train_rng(derive_seed(spec.seed, {0}));
  Rng validation_rng(derive_seed(spec.seed, {1}));
  return GeneratedData{draw(spec, spec.n_train, true, train_rng), draw(spec, spec.n_validation, false, validation_rng)};
}

}  // namespace rerf
