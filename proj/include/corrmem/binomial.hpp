#pragma once

// Binomial tail probabilities in log space.
//
// The adversarial-model analytics need P(Bin(m, p) > t) for m in {n, n-1, n-2}
// with n up to ~2^14 and tails far below the double underflow limit, so every
// routine has a log-domain form. Tails are summed on the side of the mean that
// excludes the mode (the small side) with Neumaier-compensated accumulation;
// the complementary side is obtained as log1p(-small side).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include "corrmem/errors.hpp"

namespace corrmem::binomial {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline void check(std::int64_t n, double p) {
  require(n >= 0, "binomial: trial count must be non-negative");
  require(p >= 0.0 && p <= 1.0, "binomial: success probability must lie in [0, 1]");
}

/// log P(Bin(n, p) = k); -inf outside the support.
inline double log_pmf(std::int64_t n, double p, std::int64_t k) {
  check(n, p);
  if (k < 0 || k > n) return kNegInf;
  if (p == 0.0) return k == 0 ? 0.0 : kNegInf;
  if (p == 1.0) return k == n ? 0.0 : kNegInf;
  const double nd = static_cast<double>(n), kd = static_cast<double>(k);
  return std::lgamma(nd + 1.0) - std::lgamma(kd + 1.0) - std::lgamma(nd - kd + 1.0) +
         kd * std::log(p) + (nd - kd) * std::log1p(-p);
}

inline double pmf(std::int64_t n, double p, std::int64_t k) {
  return std::exp(log_pmf(n, p, k));
}

/// Neumaier-compensated running sum.
class CompensatedSum {
 public:
  void add(double x) {
    const double t = sum_ + x;
    if (std::abs(sum_) >= std::abs(x))
      comp_ += (sum_ - t) + x;
    else
      comp_ += (x - t) + sum_;
    sum_ = t;
  }
  double value() const { return sum_ + comp_; }

 private:
  double sum_ = 0.0;
  double comp_ = 0.0;
};

/// log sum_{k=lo}^{hi} P(Bin(n,p) = k) for 0 <= lo <= hi <= n.
inline double log_range_sum(std::int64_t n, double p, std::int64_t lo, std::int64_t hi) {
  lo = std::max<std::int64_t>(lo, 0);
  hi = std::min(hi, n);
  if (lo > hi) return kNegInf;
  const auto mode = std::clamp(static_cast<std::int64_t>(std::floor((n + 1) * p)), lo, hi);
  const double ref =
      std::max({log_pmf(n, p, lo), log_pmf(n, p, hi), log_pmf(n, p, mode)});
  if (ref == kNegInf) return kNegInf;
  CompensatedSum acc;
  // Walk outward from the mode so that early termination only drops the
  // negligible far tail.
  for (std::int64_t k = mode; k <= hi; ++k) {
    const double term = std::exp(log_pmf(n, p, k) - ref);
    acc.add(term);
    if (k > mode && term < 1e-20 * acc.value()) break;
  }
  for (std::int64_t k = mode - 1; k >= lo; --k) {
    const double term = std::exp(log_pmf(n, p, k) - ref);
    acc.add(term);
    if (term < 1e-20 * acc.value()) break;
  }
  return ref + std::log(acc.value());
}

/// Smallest integer count strictly above t, clamped to [0, n + 1].
inline std::int64_t first_count_above(std::int64_t n, double t) {
  if (std::isnan(t)) throw ValidationError("binomial: threshold is NaN");
  if (t < 0.0) return 0;
  if (t >= static_cast<double>(n)) return n + 1;
  return static_cast<std::int64_t>(std::floor(t)) + 1;
}

/// log P(Bin(n, p) > t) for real t.
inline double log_upper_tail(std::int64_t n, double p, double t) {
  check(n, p);
  const std::int64_t m = first_count_above(n, t);
  if (m == 0) return 0.0;
  if (m > n) return kNegInf;
  if (static_cast<double>(m) > static_cast<double>(n) * p)
    return log_range_sum(n, p, m, n);
  const double lower = std::exp(log_range_sum(n, p, 0, m - 1));
  return std::log1p(-std::min(lower, 1.0));
}

/// log P(Bin(n, p) <= t) for real t.
inline double log_lower_tail(std::int64_t n, double p, double t) {
  check(n, p);
  const std::int64_t m = first_count_above(n, t);
  if (m == 0) return kNegInf;
  if (m > n) return 0.0;
  if (static_cast<double>(m - 1) < static_cast<double>(n) * p)
    return log_range_sum(n, p, 0, m - 1);
  const double upper = std::exp(log_range_sum(n, p, m, n));
  return std::log1p(-std::min(upper, 1.0));
}

/// P(Bin(n, p) > t).
inline double upper_tail(std::int64_t n, double p, double t) {
  return std::exp(log_upper_tail(n, p, t));
}

/// P(Bin(n, p) <= t).
inline double lower_tail(std::int64_t n, double p, double t) {
  return std::exp(log_lower_tail(n, p, t));
}

}  // namespace corrmem::binomial
