#pragma once

// Reference computations for the tests. Nothing here calls into the library's
// numerical code: inverses are found by plain bisection and integrals by
// composite Simpson rules on substituted variables.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <vector>

namespace oracle {

inline double normal_cdf(double t) { return 0.5 * std::erfc(-t / std::sqrt(2.0)); }
inline double normal_pdf(double t) { return std::exp(-0.5 * t * t) / std::sqrt(2.0 * M_PI); }

/// Smallest t with f(t) >= u for nondecreasing f, by bisection on [lo, hi].
inline double bisect(const std::function<double(double)>& f, double u, double lo, double hi,
                     int iters = 200) {
  for (int k = 0; k < iters; ++k) {
    const double mid = 0.5 * (lo + hi);
    if (f(mid) >= u) hi = mid; else lo = mid;
  }
  return hi;
}

inline double normal_quantile(double u) { return bisect(normal_cdf, u, -40.0, 40.0); }

/// Integral of the standard normal quantile over (a, b]: the antiderivative is -phi(Phi^{-1}).
inline double normal_cell_first(double a, double b) {
  auto g = [](double u) { return (u <= 0.0 || u >= 1.0) ? 0.0 : -normal_pdf(normal_quantile(u)); };
  return g(b) - g(a);
}

inline double simpson(const std::function<double(double)>& f, double a, double b, int n = 2000) {
  if (n % 2) ++n;
  const double h = (b - a) / n;
  double acc = f(a) + f(b);
  for (int k = 1; k < n; ++k) acc += f(a + k * h) * (k % 2 ? 4.0 : 2.0);
  return acc * h / 3.0;
}

/// CDF of a centred unit-variance Laplace variable.
inline double laplace_cdf(double t) {
  const double b = 1.0 / std::sqrt(2.0);
  return t < 0 ? 0.5 * std::exp(t / b) : 1.0 - 0.5 * std::exp(-t / b);
}
inline double laplace_pdf(double t) {
  const double b = 1.0 / std::sqrt(2.0);
  return std::exp(-std::abs(t) / b) / (2.0 * b);
}

/// CDF of a L1 + b L2 by numerical convolution.
inline double laplace_pair_cdf(double a, double b, double t) {
  auto f = [&](double x) { return laplace_pdf(x) * laplace_cdf((t - a * x) / b); };
  return simpson(f, -40.0, 40.0, 40000);
}

/// Exact permutation-free 1D W2 between two equal-size samples: sort both, pair in order.
inline double sorted_w2(std::vector<double> x, std::vector<double> y) {
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += (x[i] - y[i]) * (x[i] - y[i]);
  return std::sqrt(acc / static_cast<double>(x.size()));
}

/// Kolmogorov-Smirnov two-sample statistic.
inline double ks_statistic(std::vector<double> x, std::vector<double> y) {
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  std::size_t i = 0, j = 0;
  double best = 0.0;
  const double nx = static_cast<double>(x.size()), ny = static_cast<double>(y.size());
  while (i < x.size() && j < y.size()) {
    const double t = std::min(x[i], y[j]);
    while (i < x.size() && x[i] <= t) ++i;
    while (j < y.size() && y[j] <= t) ++j;
    best = std::max(best, std::abs(i / nx - j / ny));
  }
  return best;
}

}  // namespace oracle

namespace oracle {

/// min over permutations of ((1/m) sum (x_pi(i) - y_i)^2)^{1/2}, by exhaustive search.
inline double permutation_w2(std::vector<double> x, const std::vector<double>& y) {
  std::vector<std::size_t> idx(x.size());
  std::iota(idx.begin(), idx.end(), 0);
  double best = INFINITY;
  do {
    double acc = 0.0;
    for (std::size_t i = 0; i < idx.size(); ++i) acc += (x[idx[i]] - y[i]) * (x[idx[i]] - y[i]);
    best = std::min(best, acc);
  } while (std::next_permutation(idx.begin(), idx.end()));
  return std::sqrt(best / static_cast<double>(x.size()));
}

/// W2 of the empirical law of x against N(0,1), integrating each cell with Simpson's rule
/// in the variable t = Phi^{-1}(u) (du = phi(t) dt), truncated at |t| = 12.
inline double gaussian_w2(std::vector<double> x) {
  std::sort(x.begin(), x.end());
  const std::size_t m = x.size();
  double acc = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double lo = i == 0 ? -12.0 : normal_quantile(static_cast<double>(i) / m);
    const double hi = i + 1 == m ? 12.0 : normal_quantile(static_cast<double>(i + 1) / m);
    acc += simpson([&](double t) { return (x[i] - t) * (x[i] - t) * normal_pdf(t); }, lo, hi, 4000);
  }
  return std::sqrt(acc);
}

}  // namespace oracle
