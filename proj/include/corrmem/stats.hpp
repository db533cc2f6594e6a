#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include <boost/math/special_functions/beta.hpp>

#include "corrmem/errors.hpp"

namespace corrmem {

struct Interval {
  double lo = 0.0;
  double hi = 1.0;
};

/// Exact (Clopper-Pearson) two-sided interval for a binomial proportion.
inline Interval clopper_pearson(std::uint64_t hits, std::uint64_t trials,
                                double confidence = 0.95) {
  require(trials > 0, "clopper_pearson: need at least one trial");
  require(hits <= trials, "clopper_pearson: hits exceed trials");
  require(confidence > 0.0 && confidence < 1.0, "clopper_pearson: confidence must be in (0,1)");
  const double alpha = 1.0 - confidence;
  const double k = static_cast<double>(hits), n = static_cast<double>(trials);
  Interval ci;
  ci.lo = hits == 0 ? 0.0 : boost::math::ibeta_inv(k, n - k + 1.0, alpha / 2.0);
  ci.hi = hits == trials ? 1.0 : boost::math::ibeta_inv(k + 1.0, n - k, 1.0 - alpha / 2.0);
  return ci;
}

struct LinearFit {
  double slope = 0.0;
  double intercept = 0.0;
  double r_squared = 0.0;
  std::size_t points = 0;
};

/// Ordinary least squares y = slope * x + intercept.
inline LinearFit least_squares(std::span<const double> x, std::span<const double> y) {
  require(x.size() == y.size(), "least_squares: x and y differ in length");
  require(x.size() >= 2, "least_squares: need at least two points");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    require(std::isfinite(x[i]) && std::isfinite(y[i]), "least_squares: non-finite point");
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxx = 0.0, sxy = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
    syy += (y[i] - my) * (y[i] - my);
  }
  require(sxx > 1e-14 * std::max(1.0, mx * mx), "least_squares: degenerate abscissa");
  LinearFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = my - fit.slope * mx;
  fit.r_squared = syy == 0.0 ? 1.0 : (sxy * sxy) / (sxx * syy);
  fit.points = x.size();
  return fit;
}

/// Total-variation distance between two distributions on the same index set.
inline double total_variation(std::span<const double> p, std::span<const double> q) {
  require(p.size() == q.size(), "total_variation: size mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

/// Kolmogorov limiting survival function Q(lambda) = 2 sum (-1)^{k-1} e^{-2 k^2 lambda^2}.
inline double kolmogorov_survival(double lambda) {
  if (lambda <= 0.0) return 1.0;
  if (lambda < 0.2) return 1.0;  // series converges slowly; Q is 1 to double precision here
  double s = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * lambda * lambda);
    s += (k % 2 == 1 ? term : -term);
    if (term < 1e-18) break;
  }
  return std::clamp(2.0 * s, 0.0, 1.0);
}

/// Critical value of the one-sample KS statistic at level alpha for sample
/// size n (Stephens' finite-sample scaling of the Kolmogorov limit). For a
/// discrete reference law the test is conservative.
inline double ks_critical_value(std::size_t n, double alpha) {
  require(n > 0, "ks_critical_value: empty sample");
  require(alpha > 0.0 && alpha < 1.0, "ks_critical_value: alpha must be in (0,1)");
  double lo = 0.2, hi = 5.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (kolmogorov_survival(mid) > alpha ? lo : hi) = mid;
  }
  const double sn = std::sqrt(static_cast<double>(n));
  return 0.5 * (lo + hi) / (sn + 0.12 + 0.11 / sn);
}

/// sup_k |F_emp(k) - F(k)| for samples from {1, 2, ...} against
/// Geometric(p) with P(T = k) = (1-p)^{k-1} p. Both CDFs are step functions
/// on the integers, so the supremum is attained at an integer.
inline double ks_statistic_geometric(std::span<const std::uint64_t> samples, double p) {
  require(!samples.empty(), "ks_statistic_geometric: empty sample");
  require(p > 0.0 && p <= 1.0, "ks_statistic_geometric: p must be in (0,1]");
  std::vector<std::uint64_t> sorted(samples.begin(), samples.end());
  std::sort(sorted.begin(), sorted.end());
  require(sorted.front() >= 1, "ks_statistic_geometric: samples must be >= 1");
  const double n = static_cast<double>(sorted.size());
  double d = 0.0;
  std::size_t idx = 0;
  for (std::uint64_t k = 1; k <= sorted.back(); ++k) {
    while (idx < sorted.size() && sorted[idx] <= k) ++idx;
    const double emp = static_cast<double>(idx) / n;
    const double cdf = -std::expm1(static_cast<double>(k) * std::log1p(-p));
    d = std::max(d, std::abs(emp - cdf));
  }
  return d;
}

}  // namespace corrmem
