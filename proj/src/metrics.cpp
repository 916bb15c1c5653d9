#include "rerf/metrics.hpp"

#include <cmath>

#include <fmt/format.h>

#include "rerf/dataset.hpp"

namespace rerf {

double rmse(std::span<const double> predicted, std::span<const double> actual) {
  if (predicted.size() != actual.size()) {
    throw DataError(fmt::format("rmse: length mismatch ({} vs {})", predicted.size(), actual.size()));
  }
  if (predicted.empty()) {
    throw DataError("rmse: empty input");
  }
  double ss = 0.0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    const double d = predicted[i] - actual[i];
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(predicted.size()));
}

}  // namespace rerf
