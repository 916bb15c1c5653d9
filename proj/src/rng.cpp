#include "rerf/rng.hpp"

#include <algorithm>
#include <stdexcept>
#include <vector>

namespace rerf {

double Rng::beta_integer(unsigned a, unsigned b) {
  if (a == 0 || b == 0) {
    throw std::invalid_argument("beta_integer: shapes must be positive");
  }
  const unsigned n = a + b - 1;
  if (n == 1) {
    return uniform();
  }
  std::vector<double> draws(n);
  for (auto& d : draws) {
    d = uniform();
  }
  std::nth_element(draws.begin(), draws.begin() + (a - 1), draws.end());
  return draws[a - 1];
}

double Rng::portable_log(double x) {
  if (!(x > 0.0)) {
    throw std::domain_error("portable_log: argument must be positive");
  }
  constexpr double kLn2 = 0.693147180559945309417232121458176568;
  constexpr double kSqrtHalf = 0.707106781186547524400844362104849039;
  int exponent = 0;
  double mantissa = std::frexp(x, &exponent);  // mantissa in [0.5, 1)
  if (mantissa < kSqrtHalf) {
    mantissa *= 2.0;
    --exponent;
  }
  // log(m) = 2 atanh(t), t = (m - 1) / (m + 1), |t| <= 0.1716
  const double t = (mantissa - 1.0) / (mantissa + 1.0);
  const double t2 = t * t;
  double term = t;
  double sum = 0.0;
  for (int k = 0; k < 30; ++k) {
    sum += term / static_cast<double>(2 * k + 1);
    term *= t2;
  }
  return static_cast<double>(exponent) * kLn2 + 2.0 * sum;
}

}  // namespace rerf
