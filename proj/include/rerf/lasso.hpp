#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "rerf/dataset.hpp"

namespace rerf {

/// Strictly increasing positive penalty values.
struct PenaltyGrid {
  std::vector<double> values;
};

/// `count` log-equispaced penalties from lo to hi, endpoints exact.
PenaltyGrid log_penalty_grid(double lo, double hi, std::size_t count);
/// 100 log-equispaced penalties from 0.001 to 100.
PenaltyGrid default_penalty_grid();

struct LassoOptions {
  double tolerance = 1e-7;  // max standardized coefficient change per sweep
  std::size_t max_sweeps = 10000;
  bool track_objective = false;
};

/// Lasso fit for a single penalty. Coefficients are on the original feature
/// scale; the standardization used during fitting is kept for diagnostics and
/// serialization.
struct LassoFit {
  std::vector<std::string> feature_names;
  std::vector<double> coefficients;
  double intercept = 0.0;
  double lambda = 0.0;
  std::vector<std::size_t> active_set;
  std::size_t n_iterations = 0;
  bool converged = false;

  std::vector<double> centers;
  std::vector<double> scales;
  std::vector<double> standardized_coefficients;
  double response_mean = 0.0;
  /// Objective after each sweep when LassoOptions::track_objective is set.
  std::vector<double> objective_trace;

  bool is_null() const { return active_set.empty(); }
};

/// Smallest penalty giving the intercept-only model: max_j |z_j'(y - ybar)| / n
/// on standardized columns.
double lambda_max(const DataMatrix& train);

/// Minimizes (1/2n) sum (y_i - b0 - x_i'b)^2 + lambda * sum |b_j| over
/// standardized columns by cyclic coordinate descent. Non-convergence is
/// reported through `converged`, never thrown.
LassoFit fit_lasso(const DataMatrix& train, double lambda, const LassoOptions& options = {});

/// One fit per penalty, returned in input order. Solved from the largest
/// penalty down with warm starts.
std::vector<LassoFit> fit_lasso_path(const DataMatrix& train, std::span<const double> lambdas,
                                     const LassoOptions& options = {});

/// intercept + X b. Throws DataError when column names differ from the fit.
std::vector<double> predict_linear(const LassoFit& fit, const DataMatrix& data);

/// y - intercept - X b.
std::vector<double> residuals(const LassoFit& fit, const DataMatrix& data);

}  // namespace rerf
