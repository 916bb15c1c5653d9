#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "rerf/dataset.hpp"

namespace rerf {

/// Mean functions. `intro` is the Friedman additive function with an extra
/// 10 z term; the others are the linear, partially linear and non-additive
/// simulation models.
enum class SimModel { intro, linear, partial, nonadditive };

/// interpolation: every x ~ U(0,1). extrapolation: x3 ~ Beta(4,8) in
/// training and Beta(5,1) in validation.
enum class Sampling { interpolation, extrapolation };

inline constexpr std::size_t kSimDimension = 10;

struct ScenarioSpec {
  SimModel model = SimModel::linear;
  Sampling sampling = Sampling::interpolation;
  std::size_t n_train = 1000;
  std::size_t n_validation = 100;
  double noise_sd = 0.5;
  std::uint64_t seed = 0;

  /// "LxI", "PxE", ..., or "INTRO".
  std::string label() const;

  /// Defaults for the introductory example: 1500 training, 300 validation.
  static ScenarioSpec intro(std::uint64_t seed = 0);
  /// Parses "LxI" style labels (also "L×I") and "INTRO".
  static std::optional<ScenarioSpec> from_label(std::string_view label);
};

/// The six simulation labels in canonical order.
std::vector<std::string> scenario_labels();

/// Exact mean function value. `x` must hold 10 coordinates; `z` is required
/// for the intro model and rejected otherwise.
double eval_mean_function(SimModel model, std::span<const double> x, std::optional<double> z = std::nullopt);

struct GeneratedData {
  DataMatrix train;
  DataMatrix validation;
};

/// Columns x1..x10 (plus z for the intro model); response = mean + N(0, sd^2).
GeneratedData generate(const ScenarioSpec& spec);

}  // namespace rerf
