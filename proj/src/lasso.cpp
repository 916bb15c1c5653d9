#include "rerf/lasso.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <fmt/format.h>

namespace rerf {

PenaltyGrid log_penalty_grid(double lo, double hi, std::size_t count) {
  if (!(lo > 0.0) || !(hi > lo) || !std::isfinite(hi) || count < 2) {
    throw DataError(fmt::format("penalty grid needs 0 < lo < hi and count >= 2, got ({}, {}, {})", lo, hi, count));
  }
  PenaltyGrid grid;
  grid.values.resize(count);
  const double a = std::log(lo);
  const double b = std::log(hi);
  for (std::size_t h = 0; h < count; ++h) {
    grid.values[h] = std::exp(a + static_cast<double>(h) * (b - a) / static_cast<double>(count - 1));
  }
  // pin the endpoints against exp/log rounding
  grid.values.front() = lo;
  grid.values.back() = hi;
  return grid;
}

PenaltyGrid default_penalty_grid() { return log_penalty_grid(0.001, 100.0, 100); }

namespace {

double soft_threshold(double z, double gamma) {
  if (z > gamma) {
    return z - gamma;
  }
  if (z < -gamma) {
    return z + gamma;
  }
  return 0.0;
}

/// Standardized design shared by every penalty on one training set.
struct Problem {
  std::size_t n = 0;
  std::size_t p = 0;
  Standardization stdz;
  std::vector<double> centered_y;
  std::vector<double> col_norms;  // z_j'z_j / n
  double y_mean = 0.0;

  explicit Problem(const DataMatrix& train) {
    n = train.n_rows();
    p = train.n_cols();
    if (n < 2) {
      throw DataError(fmt::format("lasso needs at least 2 rows, got {}", n));
    }
    auto y = train.response();
    stdz = standardize(train);
    y_mean = std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(n);
    centered_y.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      centered_y[i] = y[i] - y_mean;
    }
    col_norms.resize(p);
    for (std::size_t j = 0; j < p; ++j) {
      auto z = stdz.standardized.column(j);
      col_norms[j] = std::inner_product(z.begin(), z.end(), z.begin(), 0.0) / static_cast<double>(n);
    }
  }

  double objective(std::span<const double> r, std::span<const double> beta, double lambda) const {
    const double rss = std::inner_product(r.begin(), r.end(), r.begin(), 0.0);
    double l1 = 0.0;
    for (double b : beta) {
      l1 += std::abs(b);
    }
    return rss / (2.0 * static_cast<double>(n)) + lambda * l1;
  }

  /// Coordinate descent from `beta` (warm start); `r` must equal yc - Z beta.
  void solve(double lambda, std::vector<double>& beta, std::vector<double>& r, const LassoOptions& options,
             LassoFit& fit) const {
    const auto nd = static_cast<double>(n);
    if (options.track_objective) {
      fit.objective_trace.push_back(objective(r, beta, lambda));
    }
    fit.converged = false;
    fit.n_iterations = 0;
    for (std::size_t sweep = 0; sweep < options.max_sweeps; ++sweep) {
      double max_change = 0.0;
      for (std::size_t j = 0; j < p; ++j) {
        if (stdz.constant[j]) {
          continue;
        }
        auto z = stdz.standardized.column(j);
        const double grad = std::inner_product(z.begin(), z.end(), r.begin(), 0.0) / nd;
        const double old = beta[j];
        const double updated = soft_threshold(col_norms[j] * old + grad, lambda) / col_norms[j];
        const double delta = updated - old;
        if (delta != 0.0) {
          for (std::size_t i = 0; i < n; ++i) {
            r[i] -= delta * z[i];
          }
          beta[j] = updated;
          max_change = std::max(max_change, std::abs(delta));
        }
      }
      ++fit.n_iterations;
      if (options.track_objective) {
        fit.objective_trace.push_back(objective(r, beta, lambda));
      }
      if (max_change < options.tolerance) {
        fit.converged = true;
        break;
      }
    }
  }

  void finish(double lambda, const std::vector<double>& beta, const DataMatrix& train, LassoFit& fit) const {
    fit.feature_names = train.column_names();
    fit.lambda = lambda;
    fit.standardized_coefficients = beta;
    fit.centers = stdz.centers;
    fit.scales = stdz.scales;
    fit.response_mean = y_mean;
    fit.coefficients.assign(p, 0.0);
    fit.active_set.clear();
    double intercept = y_mean;
    for (std::size_t j = 0; j < p; ++j) {
      if (beta[j] != 0.0) {
        fit.coefficients[j] = beta[j] / stdz.scales[j];
        intercept -= fit.coefficients[j] * stdz.centers[j];
        fit.active_set.push_back(j);
      }
    }
    fit.intercept = intercept;
  }

  double max_gradient() const {
    double best = 0.0;
    for (std::size_t j = 0; j < p; ++j) {
      if (stdz.constant[j]) {
        continue;
      }
      auto z = stdz.standardized.column(j);
      const double g = std::inner_product(z.begin(), z.end(), centered_y.begin(), 0.0) / static_cast<double>(n);
      best = std::max(best, std::abs(g));
    }
    return best;
  }
};

void check_lambda(double lambda) {
  if (!(lambda >= 0.0) || !std::isfinite(lambda)) {
    throw DataError(fmt::format("penalty must be a finite nonnegative number, got {}", lambda));
  }
}

}  // namespace

double lambda_max(const DataMatrix& train) { return Problem(train).max_gradient(); }

LassoFit fit_lasso(const DataMatrix& train, double lambda, const LassoOptions& options) {
  check_lambda(lambda);
  Problem problem(train);
  std::vector<double> beta(problem.p, 0.0);
  std::vector<double> r = problem.centered_y;
  LassoFit fit;
  problem.solve(lambda, beta, r, options, fit);
  problem.finish(lambda, beta, train, fit);
  return fit;
}

std::vector<LassoFit> fit_lasso_path(const DataMatrix& train, std::span<const double> lambdas,
                                     const LassoOptions& options) {
  for (double l : lambdas) {
    check_lambda(l);
  }
  Problem problem(train);
  std::vector<std::size_t> order(lambdas.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return lambdas[a] > lambdas[b]; });

  std::vector<LassoFit> fits(lambdas.size());
  std::vector<double> beta(problem.p, 0.0);
  std::vector<double> r = problem.centered_y;
  const double null_threshold = problem.max_gradient();
  for (std::size_t idx : order) {
    LassoFit& fit = fits[idx];
    if (lambdas[idx] >= null_threshold && std::all_of(beta.begin(), beta.end(), [](double b) { return b == 0.0; })) {
      // zero is optimal; skip the sweep so null fits are bit-identical
      fit.converged = true;
      if (options.track_objective) {
        fit.objective_trace.push_back(problem.objective(r, beta, lambdas[idx]));
      }
    } else {
      problem.solve(lambdas[idx], beta, r, options, fit);
    }
    problem.finish(lambdas[idx], beta, train, fit);
  }
  return fits;
}

namespace {

void check_columns(const LassoFit& fit, const DataMatrix& data) {
  if (data.column_names() != fit.feature_names) {
    throw DataError(fmt::format("column mismatch: model has {} features, data has {} columns",
                                fit.feature_names.size(), data.n_cols()));
  }
}

}  // namespace

std::vector<double> predict_linear(const LassoFit& fit, const DataMatrix& data) {
  check_columns(fit, data);
  std::vector<double> out(data.n_rows(), fit.intercept);
  for (std::size_t j : fit.active_set) {
    auto x = data.column(j);
    const double b = fit.coefficients[j];
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] += b * x[i];
    }
  }
  return out;
}

std::vector<double> residuals(const LassoFit& fit, const DataMatrix& data) {
  auto pred = predict_linear(fit, data);
  auto y = data.response();
  for (std::size_t i = 0; i < pred.size(); ++i) {
    pred[i] = y[i] - pred[i];
  }
  return pred;
}

}  // namespace rerf
