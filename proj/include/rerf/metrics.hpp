#pragma once

#include <span>

namespace rerf {

/// sqrt(mean((predicted - actual)^2)). Throws DataError on empty or
/// mismatched inputs.
double rmse(std::span<const double> predicted, std::span<const double> actual);

}  // namespace rerf
