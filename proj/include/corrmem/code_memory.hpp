#pragma once

// Periodically corrected memory against an abstract minimum-distance code.
//
// Each epoch draws a fresh, independent error vector. The code recovers the
// stored state exactly iff the error weight is at most tau; otherwise the
// memory has failed and stays failed.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "corrmem/adversarial.hpp"
#include "corrmem/errors.hpp"
#include "corrmem/hidden_channel.hpp"
#include "corrmem/parallel.hpp"
#include "corrmem/rng.hpp"
#include "corrmem/stats.hpp"

namespace corrmem {

using ErrorSource = std::variant<HiddenErrorModel, ThresholdModelSpec>;

inline std::size_t source_sites(const ErrorSource& src) {
  if (const auto* m = std::get_if<HiddenErrorModel>(&src)) return m->field.n;
  return std::get<ThresholdModelSpec>(src).n;
}

inline void validate_source(const ErrorSource& src) {
  std::visit([](const auto& s) { s.validate(); }, src);
}

inline std::vector<double> exact_weight_distribution(const ErrorSource& src) {
  return std::visit([](const auto& s) { return exact_weight_distribution(s); }, src);
}

/// Draws error vectors from either source type.
class SourceDrawer {
 public:
  explicit SourceDrawer(const ErrorSource& src) : impl_(make(src)), y_(source_sites(src)) {}

  template <class Rng>
  std::size_t weight(Rng& rng) {
    return std::visit([&](auto& d) { return d.draw(rng, y_); }, impl_);
  }

  std::span<const std::uint8_t> last() const { return y_; }

 private:
  using Impl = std::variant<ErrorDrawer, ThresholdDrawer>;

  static Impl make(const ErrorSource& src) {
    if (const auto* m = std::get_if<HiddenErrorModel>(&src)) return Impl(std::in_place_type<ErrorDrawer>, *m);
    return Impl(std::in_place_type<ThresholdDrawer>, std::get<ThresholdModelSpec>(src));
  }

  Impl impl_;
  ErrorVector y_;
};

enum class DecodingMode {
  half_distance,   // tau = floor((d-1)/2)
  paper_distance,  // tau = d-1: every weight below d counts as correctable
  explicit_tau,    // tau supplied by the caller
};

struct CodeModel {
  std::size_t n = 1;
  std::size_t k = 0;
  std::size_t d = 1;
  std::size_t tau = 0;
  DecodingMode mode = DecodingMode::half_distance;

  static CodeModel from_distance(std::size_t n, std::size_t k, std::size_t d,
                                 DecodingMode mode = DecodingMode::half_distance) {
    require(mode != DecodingMode::explicit_tau, "code: explicit_tau needs with_tau()");
    require(d >= 1, "code: distance must be >= 1");
    const std::size_t tau = mode == DecodingMode::half_distance ? (d - 1) / 2 : d - 1;
    CodeModel c{n, k, d, tau, mode};
    c.validate();
    return c;
  }

  static CodeModel with_tau(std::size_t n, std::size_t k, std::size_t d, std::size_t tau) {
    CodeModel c{n, k, d, tau, DecodingMode::explicit_tau};
    c.validate();
    return c;
  }

  void validate() const {
    require(d >= 1 && d <= n, "code: need 1 <= d <= n");
    require(tau <= n, "code: need tau <= n");
    require(k < n, "code: need k < n");
  }
};

enum class EpochOutcome { corrected, failed };

inline EpochOutcome epoch_step(std::size_t weight, const CodeModel& code) {
  require(weight <= code.n, "epoch_step: weight " + std::to_string(weight) + " exceeds n = " +
                                std::to_string(code.n));
  return weight <= code.tau ? EpochOutcome::corrected : EpochOutcome::failed;
}

struct RetentionEstimate {
  std::uint64_t trials = 0;
  std::uint64_t max_epochs = 0;
  std::vector<std::uint64_t> failure_epochs;  // max_epochs for censored trials
  std::vector<std::uint8_t> censored;
  std::uint64_t censored_count = 0;
  double mean = std::numeric_limits<double>::quiet_NaN();            // over uncensored trials
  double standard_error = std::numeric_limits<double>::quiet_NaN();  // of that mean

  /// Mean with censored trials counted at max_epochs (a lower bound on the true mean).
  double restricted_mean() const {
    double s = 0.0;
    for (auto e : failure_epochs) s += static_cast<double>(e);
    return failure_epochs.empty() ? 0.0 : s / static_cast<double>(failure_epochs.size());
  }
};

/// Trial t runs epochs on stream derive_seed(seed, "retention", t) until the
/// first failure or max_epochs.
inline RetentionEstimate simulate_retention(const ErrorSource& src, const CodeModel& code,
                                            std::uint64_t max_epochs, std::uint64_t trials,
                                            std::uint64_t seed, Workers workers = {}) {
  validate_source(src);
  code.validate();
  require(code.n == source_sites(src), "simulate_retention: code length differs from model size");
  require(trials >= 1, "simulate_retention: trials must be >= 1");
  require(max_epochs >= 1, "simulate_retention: max_epochs must be >= 1");
  RetentionEstimate est;
  est.trials = trials;
  est.max_epochs = max_epochs;
  est.failure_epochs.assign(trials, max_epochs);
  est.censored.assign(trials, 1);
  for_each_chunk(trials, workers, [&](std::size_t begin, std::size_t end, std::size_t) {
    SourceDrawer drawer(src);
    for (std::size_t t = begin; t < end; ++t) {
      CounterRng rng(derive_seed(seed, "retention", t));
      for (std::uint64_t epoch = 1; epoch <= max_epochs; ++epoch) {
        if (epoch_step(drawer.weight(rng), code) == EpochOutcome::failed) {
          est.failure_epochs[t] = epoch;
          est.censored[t] = 0;
          break;
        }
      }
    }
  });
  double sum = 0.0, sum_sq = 0.0;
  std::uint64_t observed = 0;
  for (std::uint64_t t = 0; t < trials; ++t) {
    if (est.censored[t]) {
      ++est.censored_count;
      continue;
    }
    const double e = static_cast<double>(est.failure_epochs[t]);
    sum += e;
    sum_sq += e * e;
    ++observed;
  }
  if (observed > 0) {
    const double k = static_cast<double>(observed);
    est.mean = sum / k;
    if (observed > 1) {
      const double var = std::max(0.0, (sum_sq - k * est.mean * est.mean) / (k - 1.0));
      est.standard_error = std::sqrt(var / k);
    }
  }
  return est;
}

struct ProbabilityEstimate {
  double value = 0.0;
  Interval ci;  // Clopper-Pearson 95% on the MC path, [value, value] when exact
  std::uint64_t trials = 0;
  std::uint64_t hits = 0;
  bool exact = true;
};

/// P(weight(Y) > tau) from the exact weight law, summed from the top down.
inline ProbabilityEstimate per_epoch_failure_prob_exact(const ErrorSource& src, const CodeModel& code) {
  validate_source(src);
  code.validate();
  require(code.n == source_sites(src), "per_epoch_failure_prob: code length differs from model size");
  const std::vector<double> w = exact_weight_distribution(src);
  binomial::CompensatedSum acc;
  for (std::size_t k = w.size(); k-- > code.tau + 1;) acc.add(w[k]);
  ProbabilityEstimate p;
  p.value = std::clamp(acc.value(), 0.0, 1.0);
  p.ci = {p.value, p.value};
  return p;
}

inline ProbabilityEstimate per_epoch_failure_prob_mc(const ErrorSource& src, const CodeModel& code,
                                                     std::uint64_t trials, std::uint64_t seed,
                                                     Workers workers = {}) {
  validate_source(src);
  code.validate();
  require(code.n == source_sites(src), "per_epoch_failure_prob: code length differs from model size");
  require(trials >= 1, "per_epoch_failure_prob: trials must be >= 1");
  std::vector<std::uint64_t> hits(chunk_count(trials, workers), 0);
  for_each_chunk(trials, workers, [&](std::size_t begin, std::size_t end, std::size_t c) {
    SourceDrawer drawer(src);
    for (std::size_t t = begin; t < end; ++t) {
      CounterRng rng(derive_seed(seed, "failure", t));
      if (epoch_step(drawer.weight(rng), code) == EpochOutcome::failed) ++hits[c];
    }
  });
  ProbabilityEstimate p;
  p.exact = false;
  p.trials = trials;
  for (auto h : hits) p.hits += h;
  p.value = static_cast<double>(p.hits) / static_cast<double>(trials);
  p.ci = clopper_pearson(p.hits, trials);
  return p;
}

enum class EstimateMode { exact, monte_carlo };

inline ProbabilityEstimate per_epoch_failure_prob(const ErrorSource& src, const CodeModel& code,
                                                  EstimateMode mode, std::uint64_t trials = 0,
                                                  std::uint64_t seed = 0, Workers workers = {}) {
  return mode == EstimateMode::exact ? per_epoch_failure_prob_exact(src, code)
                                     : per_epoch_failure_prob_mc(src, code, trials, seed, workers);
}

struct LifetimeBound {
  double epochs = 0.0;                     // T
  double per_epoch_failure_ceiling = 0.0;  // exp(-b n)
  double success_probability_floor = 0.0;  // union bound: P(no failure in T epochs) >= this
  bool degenerate = false;                 // b == 0 or T < 1
};

/// Union-bound lifetime: if every epoch fails with probability at most
/// exp(-b n), then T = (1 - target) exp(b n) epochs all succeed with
/// probability >= target. The default target 1 - 1/n gives T = exp(b n - ln n).
inline LifetimeBound lifetime_lower_bound(std::size_t n, double b,
                                          std::optional<double> target_confidence = std::nullopt) {
  require(n >= 1, "lifetime_lower_bound: n must be >= 1");
  require(b >= 0.0 && b < 1.0, "lifetime_lower_bound: b must lie in [0,1)");
  const double nd = static_cast<double>(n);
  const double target = target_confidence.value_or(1.0 - 1.0 / nd);
  require(target >= 0.0 && target < 1.0, "lifetime_lower_bound: target confidence must lie in [0,1)");
  LifetimeBound r;
  r.per_epoch_failure_ceiling = std::exp(-b * nd);
  r.epochs = std::exp(b * nd + std::log1p(-target));
  r.success_probability_floor = target;
  r.degenerate = b == 0.0 || r.epochs < 1.0;
  return r;
}

using SourceFamily = std::function<ErrorSource(std::size_t n)>;

struct ScalingConfig {
  std::vector<std::size_t> sizes;
  double b = 0.3;  // d = ceil(b n)
  DecodingMode mode = DecodingMode::half_distance;
  std::uint64_t trials = 0;  // 0 selects the exact path
  std::uint64_t seed = 0;
  std::uint64_t min_failures = 10;
  Workers workers;
};

struct ScalingRow {
  std::size_t n = 0;
  std::size_t d = 0;
  std::size_t tau = 0;
  std::uint64_t trials = 0;
  std::uint64_t failures = 0;
  double p_fail = 0.0;
  Interval ci;
  double log_p_fail = 0.0;
  bool resolved = false;
};

enum class ScalingStatus { exponential_consistent, not_exponential, inconclusive };

inline const char* to_string(ScalingStatus s) {
  switch (s) {
    case ScalingStatus::exponential_consistent: return "exponential-consistent";
    case ScalingStatus::not_exponential: return "not-exponential";
    default: return "inconclusive";
  }
}

struct ScalingReport {
  std::vector<ScalingRow> rows;
  std::optional<LinearFit> fit;  // ln p_fail = slope * n + intercept over resolved rows
  ScalingStatus status = ScalingStatus::inconclusive;
};

inline constexpr double kExponentialMinR2 = 0.9;

/// Per-epoch failure probability over a size grid with d = ceil(b n), and a
/// log-linear fit in n. A negative slope with R^2 >= 0.9 is reported as
/// consistent with exponential lifetime. MC points with fewer than
/// min_failures failures (exact points with p_fail = 0) are unresolved and
/// excluded from the fit.
inline ScalingReport scaling_experiment(const SourceFamily& family, const ScalingConfig& cfg) {
  require(cfg.sizes.size() >= 4, "scaling_experiment: grid needs at least 4 sizes");
  require(cfg.b > 0.0 && cfg.b <= 1.0, "scaling_experiment: b must lie in (0,1]");
  require(cfg.mode != DecodingMode::explicit_tau, "scaling_experiment: mode must derive tau from d");
  ScalingReport report;
  std::vector<double> xs, ys;
  for (std::size_t idx = 0; idx < cfg.sizes.size(); ++idx) {
    const std::size_t n = cfg.sizes[idx];
    require(n >= 2, "scaling_experiment: sizes must be >= 2");
    const ErrorSource src = family(n);
    require(source_sites(src) == n, "scaling_experiment: family returned a model of the wrong size");
    const auto d = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::ceil(cfg.b * static_cast<double>(n) - 1e-12)), 1, n);
    const CodeModel code = CodeModel::from_distance(n, 1, d, cfg.mode);
    const ProbabilityEstimate p =
        cfg.trials == 0 ? per_epoch_failure_prob_exact(src, code)
                        : per_epoch_failure_prob_mc(src, code, cfg.trials, derive_seed(cfg.seed, "scaling", idx),
                                                    cfg.workers);
    ScalingRow row{n, d, code.tau, p.trials, p.hits, p.value, p.ci, std::log(p.value), false};
    row.resolved = p.exact ? p.value > 0.0 : p.hits >= cfg.min_failures;
    if (row.resolved) {
      xs.push_back(static_cast<double>(n));
      ys.push_back(row.log_p_fail);
    }
    report.rows.push_back(row);
  }
  if (xs.size() >= 2) {
    try {
      report.fit = least_squares(xs, ys);
    } catch (const ValidationError&) {
      report.fit.reset();
    }
  }
  if (report.fit)
    report.status = report.fit->slope < 0.0 && report.fit->r_squared >= kExponentialMinR2
                        ? ScalingStatus::exponential_consistent
                        : ScalingStatus::not_exponential;
  return report;
}

}  // namespace corrmem
