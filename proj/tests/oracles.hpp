// Independent reference computations used to check analytic gradients.
#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace ctd4::testing {

// Central difference of f at x along coordinate i, step h * max(1, |x_i|).
inline double central_difference(const std::function<double(const std::vector<double>&)>& f,
                                 std::vector<double> x, std::size_t i, double h = 1e-5) {
  const double step = h * std::max(1.0, std::abs(x[i]));
  const double x0 = x[i];
  x[i] = x0 + step;
  const double up = f(x);
  x[i] = x0 - step;
  const double down = f(x);
  return (up - down) / (2.0 * step);
}

inline std::vector<double> numeric_gradient(
    const std::function<double(const std::vector<double>&)>& f, const std::vector<double>& x,
    double h = 1e-5) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = central_difference(f, x, i, h);
  return g;
}

// |a - b| / max(|a|, |b|, floor); the floor keeps near-zero entries from
// dominating on account of cancellation noise.
inline double relative_error(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

inline double max_relative_error(const std::vector<double>& a, const std::vector<double>& b,
                                 double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, relative_error(a[i], b[i], floor));
  return worst;
}

// Fused mean of a Kalman left fold written directly from the gain and update
// formulas, independent of the library's fold.
inline double reference_kalman_mean(const std::vector<double>& means, const std::vector<double>& stds,
                                    bool paper_variance = true) {
  double mu = means[0];
  double var = stds[0] * stds[0];
  for (std::size_t i = 1; i < means.size(); ++i) {
    const double vb = stds[i] * stds[i];
    const double k = var / (var + vb);
    mu = mu + k * (means[i] - mu);
    var = paper_variance ? (1.0 - k) * var + k * vb : (1.0 - k) * var;
  }
  return mu;
}

}  // namespace ctd4::testing
