#pragma once

// The adversarial threshold model.
//
// X_1..X_n are i.i.d. Bernoulli(eps) and B = n*eps + sqrt(n)*C_n. When
// sum(X) <= B the errors copy the field (Y = X); otherwise every qubit is hit
// (Y = 1...1). The trigger event is A = {sum(X) > B}.
//
// Every quantity here is reduced to binomial tails of S_n = sum(X) and of the
// partial sums S_{n-1}, S_{n-2} that exclude one or two sites. With
// G_m(t) = P(S_m > t):
//
//   E[Y_i]       = eps + (1-eps) G_{n-1}(B)
//   cov(Y_i,Y_j) = (1-eps)^2 [ (1-2eps) G_{n-2}(B) + 2eps G_{n-2}(B-1) - G_{n-1}(B)^2 ]
//
// The second form has no cancellation between O(eps^2) terms, so the
// covariance stays accurate (in log space) far below 1e-300.

#include <algorithm>
#include <cmath>
#include <limits>
#include <cstdint>
#include <optional>
#include <span>
#include <variant>
#include <vector>

#include "corrmem/binomial.hpp"
#include "corrmem/errors.hpp"
#include "corrmem/field_model.hpp"
#include "corrmem/hidden_channel.hpp"
#include "corrmem/rng.hpp"
#include "corrmem/stats.hpp"

namespace corrmem {

/// C_n given directly.
struct ExplicitCn {
  double value = 1.0;
};
/// C_n = a * sqrt(ln n).
struct ParametricCn {
  double a = 1.0;
};
/// B_n given directly; C_n is backed out as (B_n - n*eps) / sqrt(n).
struct ExplicitThreshold {
  double b_n = 0.0;
};

using CnSchedule = std::variant<ExplicitCn, ParametricCn, ExplicitThreshold>;

struct ThresholdModelSpec {
  std::size_t n = 1;
  double eps = 0.1;
  CnSchedule schedule = ParametricCn{};

  static ThresholdModelSpec with_threshold(std::size_t n, double eps, double b_n) {
    return {n, eps, ExplicitThreshold{b_n}};
  }
  static ThresholdModelSpec with_cn(std::size_t n, double eps, double c_n) {
    return {n, eps, ExplicitCn{c_n}};
  }
  static ThresholdModelSpec parametric(std::size_t n, double eps, double a) {
    return {n, eps, ParametricCn{a}};
  }

  double c_n() const {
    const double nd = static_cast<double>(n);
    if (const auto* e = std::get_if<ExplicitCn>(&schedule)) return e->value;
    if (const auto* p = std::get_if<ParametricCn>(&schedule)) return p->a * std::sqrt(std::log(nd));
    return (std::get<ExplicitThreshold>(schedule).b_n - nd * eps) / std::sqrt(nd);
  }

  /// Recomputed on every call.
  double b_n() const {
    if (const auto* t = std::get_if<ExplicitThreshold>(&schedule)) return t->b_n;
    const double nd = static_cast<double>(n);
    return nd * eps + std::sqrt(nd) * c_n();
  }

  void validate() const {
    require(n >= 1, "threshold model: n must be >= 1");
    require(eps >= 0.0 && eps <= 1.0, "threshold model: eps must lie in [0,1]");
    std::visit(
        [](const auto& s) {
          using T = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<T, ExplicitCn>)
            require(std::isfinite(s.value) && s.value > 0.0, "threshold model: C_n must be > 0");
          else if constexpr (std::is_same_v<T, ParametricCn>)
            require(std::isfinite(s.a) && s.a > 0.0, "threshold model: a must be > 0");
          else
            require(!std::isnan(s.b_n), "threshold model: B_n is NaN");
        },
        schedule);
  }
};

/// The same law expressed as a hidden-field model (i.i.d. Bernoulli field,
/// global-threshold channel).
inline HiddenErrorModel as_hidden_model(const ThresholdModelSpec& spec) {
  spec.validate();
  return {MarkovFieldSpec::iid_bernoulli(spec.n, spec.eps), GlobalThresholdChannel{spec.b_n()}};
}

inline double log_prob_A(const ThresholdModelSpec& spec) {
  spec.validate();
  return binomial::log_upper_tail(static_cast<std::int64_t>(spec.n), spec.eps, spec.b_n());
}

/// P(sum X > B_n).
inline double prob_A(const ThresholdModelSpec& spec) { return std::exp(log_prob_A(spec)); }

class ThresholdDrawer {
 public:
  explicit ThresholdDrawer(const ThresholdModelSpec& spec) : n_(spec.n), eps_(spec.eps), b_n_(spec.b_n()) {}

  template <class Rng>
  std::size_t draw(Rng& rng, std::span<std::uint8_t> y) {
    std::size_t sum = 0;
    for (std::size_t i = 0; i < n_; ++i) {
      y[i] = rng.bernoulli(eps_) ? 1 : 0;
      sum += y[i];
    }
    if (static_cast<double>(sum) > b_n_) {
      std::fill(y.begin(), y.begin() + static_cast<std::ptrdiff_t>(n_), std::uint8_t{1});
      return n_;
    }
    return sum;
  }

 private:
  std::size_t n_;
  double eps_;
  double b_n_;
};

inline ErrorVector sample_adversarial_errors(const ThresholdModelSpec& spec, std::uint64_t seed) {
  spec.validate();
  CounterRng rng(seed);
  ThresholdDrawer drawer(spec);
  ErrorVector y(spec.n);
  drawer.draw(rng, y);
  return y;
}

/// Exact law of sum(Y): Bin(n, eps) below the threshold, all trigger mass at n.
inline std::vector<double> exact_weight_distribution(const ThresholdModelSpec& spec) {
  spec.validate();
  const auto n = static_cast<std::int64_t>(spec.n);
  const std::int64_t first_trigger = binomial::first_count_above(n, spec.b_n());
  std::vector<double> out(spec.n + 1, 0.0);
  for (std::int64_t k = 0; k < std::min(first_trigger, n + 1); ++k)
    out[static_cast<std::size_t>(k)] = binomial::pmf(n, spec.eps, k);
  out[spec.n] += prob_A(spec);
  return out;
}

struct MarginalErrorRate {
  double value = 0.0;      // E[Y_i]
  double deviation = 0.0;  // |E[Y_i] - eps|
  double ceiling = 0.0;    // P(A); deviation never exceeds it
};

/// E[Y_i] = P(X_i = 1, A^c) + P(A) = eps + P(X_i = 0, A).
inline MarginalErrorRate marginal_error_rate(const ThresholdModelSpec& spec, std::size_t site = 0) {
  spec.validate();
  require(site < spec.n, "marginal_error_rate: site out of range");
  const auto n = static_cast<std::int64_t>(spec.n);
  const double b = spec.b_n();
  MarginalErrorRate r;
  r.deviation = (1.0 - spec.eps) * binomial::upper_tail(n - 1, spec.eps, b);
  r.value = spec.eps + r.deviation;
  r.ceiling = prob_A(spec);
  return r;
}

/// sign * exp(log_abs); sign 0 means exactly zero.
struct SignedLog {
  int sign = 0;
  double log_abs = binomial::kNegInf;

  double value() const { return sign == 0 ? 0.0 : sign * std::exp(log_abs); }
};

/// cov(Y_i, Y_j) for i != j in signed log form. The construction is
/// exchangeable, so the value does not depend on the pair.
inline SignedLog log_covariance(const ThresholdModelSpec& spec) {
  spec.validate();
  require(spec.n >= 2, "covariance: needs at least two sites");
  const auto n = static_cast<std::int64_t>(spec.n);
  const double eps = spec.eps, b = spec.b_n();
  // A certain (B < 0) or Y = X a.s. (eps in {0,1}): Y is constant or independent.
  if (b < 0.0 || eps == 0.0 || eps == 1.0) return {};
  const double l1 = binomial::log_upper_tail(n - 2, eps, b);
  const double l2 = binomial::log_upper_tail(n - 2, eps, b - 1.0);
  const double l3 = 2.0 * binomial::log_upper_tail(n - 1, eps, b);
  const double ref = std::max({l1, l2, l3});
  if (ref == binomial::kNegInf) return {};
  const double v = (1.0 - 2.0 * eps) * std::exp(l1 - ref) + 2.0 * eps * std::exp(l2 - ref) - std::exp(l3 - ref);
  if (v == 0.0) return {};
  return {v > 0.0 ? 1 : -1, std::log(std::abs(v)) + ref + 2.0 * std::log1p(-eps)};
}

inline double exact_covariance(const ThresholdModelSpec& spec, std::size_t i, std::size_t j) {
  spec.validate();
  require(i != j, "exact_covariance: i == j; use the variance of the marginal instead");
  require(i < spec.n && j < spec.n, "exact_covariance: site out of range");
  return log_covariance(spec).value();
}

struct CovarianceDecomposition {
  double term_conditional = 0.0;  // E[cov(Y_i, Y_j | 1_A)]
  double term_between = 0.0;      // cov(E[Y_i | 1_A], E[Y_j | 1_A])
  double total = 0.0;
  double p_a = 0.0;
};

/// Law of total covariance conditioned on 1_A.
///
/// Given A every Y is 1, so only A^c contributes to the first term. On A^c
/// Y = X and S_n <= m = floor(B), which gives
///   term_conditional = eps^2 [ F_{n-2}(m-2) F_n(m) - F_{n-1}(m-1)^2 ] / F_n(m)
/// with F_k(t) = P(S_k <= t). When A is unlikely the F are near 1, so the
/// bracket is expanded in upper tails instead. The second term is
/// P(A) (1-eps)^2 F_{n-1}(B)^2 / F_n(B).
inline CovarianceDecomposition covariance_decomposition(const ThresholdModelSpec& spec, std::size_t i,
                                                        std::size_t j) {
  spec.validate();
  require(i != j, "covariance_decomposition: i == j");
  require(i < spec.n && j < spec.n, "covariance_decomposition: site out of range");
  const auto n = static_cast<std::int64_t>(spec.n);
  const double eps = spec.eps, b = spec.b_n();
  CovarianceDecomposition d;
  d.p_a = prob_A(spec);
  const double p_not_a = binomial::lower_tail(n, eps, b);
  if (p_not_a == 0.0 || d.p_a == 0.0) {
    // One branch has all the mass: 1_A is constant and the conditional
    // covariance is the covariance itself.
    d.term_conditional = exact_covariance(spec, i, j);
    d.total = d.term_conditional;
    return d;
  }
  const double f1 = binomial::lower_tail(n - 1, eps, b);
  d.term_between = d.p_a * (1.0 - eps) * (1.0 - eps) * f1 * f1 / p_not_a;

  const double m = std::floor(b);
  double bracket = 0.0;
  if (d.p_a <= 0.5) {
    // (1 - u2)(1 - u) - (1 - u1)^2 with u2 = P(S_{n-2} > m-2), u1 = P(S_{n-1} > m-1), u = P(A)
    const double u2 = binomial::upper_tail(n - 2, eps, m - 2.0);
    const double u1 = binomial::upper_tail(n - 1, eps, m - 1.0);
    const double u = d.p_a;
    bracket = (2.0 * u1 - u2 - u) + (u2 * u - u1 * u1);
  } else {
    const double f1 = binomial::lower_tail(n - 1, eps, m - 1.0);
    bracket = binomial::lower_tail(n - 2, eps, m - 2.0) * p_not_a - f1 * f1;
  }
  d.term_conditional = eps * eps * bracket / p_not_a;
  d.total = d.term_conditional + d.term_between;
  return d;
}

struct DeltaTails {
  double delta_n1 = 0.0;  // P(S_{n-1} > B)
  double delta_n2 = 0.0;  // P(S_{n-2} > B)
  std::optional<double> hoeffding_n1;  // exp(-2 (B - m eps)^2 / m), only when B > m eps
  std::optional<double> hoeffding_n2;
};

inline DeltaTails delta_tails(const ThresholdModelSpec& spec) {
  spec.validate();
  require(spec.n >= 2, "delta_tails: needs at least two sites");
  const auto n = static_cast<std::int64_t>(spec.n);
  const double b = spec.b_n(), eps = spec.eps;
  auto ceiling = [&](std::int64_t m) -> std::optional<double> {
    const double md = static_cast<double>(m);
    if (m <= 0 || !(b > md * eps)) return std::nullopt;
    return std::exp(-2.0 * (b - md * eps) * (b - md * eps) / md);
  };
  return {binomial::upper_tail(n - 1, eps, b), binomial::upper_tail(n - 2, eps, b), ceiling(n - 1),
          ceiling(n - 2)};
}

/// 1 / P(A): the expected number of epochs until the first all-ones epoch,
/// which caps the retention time of any code. +infinity when A is impossible.
inline double retention_upper_bound(const ThresholdModelSpec& spec) {
  const double lp = log_prob_A(spec);
  if (lp == binomial::kNegInf) return std::numeric_limits<double>::infinity();
  return std::exp(-lp);
}

struct TailScalingPoint {
  std::size_t n = 0;
  double c_n = 0.0;
  double b_n = 0.0;
  double log_p_a = 0.0;
};

struct TailScalingFit {
  std::vector<TailScalingPoint> points;
  LinearFit log_p_vs_cn_squared;               // ln P(A) = slope * C_n^2 + intercept
  std::optional<LinearFit> log_retention_vs_log_n;  // ln(1/P(A)) = exponent * ln n + const
  /// Fitted polynomial growth exponent of the retention ceiling 1/P(A) in n.
  std::optional<double> retention_exponent;
};

inline TailScalingFit tail_scaling_fit(std::span<const ThresholdModelSpec> family) {
  require(family.size() >= 4, "tail_scaling_fit: grid needs at least 4 points");
  TailScalingFit fit;
  std::vector<double> cn2, logp, logn, logret;
  for (const auto& spec : family) {
    TailScalingPoint p{spec.n, spec.c_n(), spec.b_n(), log_prob_A(spec)};
    require(std::isfinite(p.log_p_a), "tail_scaling_fit: P(A) = 0 at n = " + std::to_string(spec.n));
    cn2.push_back(p.c_n * p.c_n);
    logp.push_back(p.log_p_a);
    logn.push_back(std::log(static_cast<double>(spec.n)));
    logret.push_back(-p.log_p_a);
    fit.points.push_back(p);
  }
  fit.log_p_vs_cn_squared = least_squares(cn2, logp);
  try {
    fit.log_retention_vs_log_n = least_squares(logn, logret);
    fit.retention_exponent = fit.log_retention_vs_log_n->slope;
  } catch (const ValidationError&) {
    // single n on the grid: no growth exponent
  }
  return fit;
}

}  // namespace corrmem
