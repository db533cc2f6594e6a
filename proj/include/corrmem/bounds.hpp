#pragma once

// Concentration bounds for the error weight and their empirical checks.
//
// For P(sum Y > n(eps + delta)) the bound splits the deviation in two halves:
//   conditional part  |sum Y - psi(X)| >= n delta/2, Hoeffding given X:
//                     2 exp(-beta^2 n)
//   field part        |psi(X) - E psi| >= n delta/2, martingale bound for a
//                     c-Lipschitz function of an inhomogeneous Markov chain
//                     with mixing constant M_n: 2 exp(-beta^2 n / (2 c^2 M_n^2))
// with beta = delta / 2 in both.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "corrmem/adversarial.hpp"
#include "corrmem/code_memory.hpp"
#include "corrmem/errors.hpp"
#include "corrmem/field_model.hpp"
#include "corrmem/hidden_channel.hpp"
#include "corrmem/parallel.hpp"
#include "corrmem/stats.hpp"

namespace corrmem {

/// 2 exp(-beta^2 n). The textbook Hoeffding exponent for [0,1] summands is
/// 2 beta^2 n; this weaker form is kept as stated.
inline double hoeffding_conditional_bound(double beta, std::size_t n) {
  require(beta >= 0.0, "hoeffding_conditional_bound: beta must be >= 0");
  return 2.0 * std::exp(-beta * beta * static_cast<double>(n));
}

/// Exponent constant 1 / (2 c^2 M_n^2) of the Markov-chain bound.
inline double kr_constant(double c, double m_n) {
  require(c > 0.0, "kr_bound: Lipschitz constant must be > 0");
  require(m_n >= 1.0, "kr_bound: M_n must be >= 1");
  return 1.0 / (2.0 * c * c * m_n * m_n);
}

/// 2 exp(-beta^2 n / (2 c^2 M_n^2)).
inline double kr_bound(double beta, std::size_t n, double c, double m_n) {
  require(beta >= 0.0, "kr_bound: beta must be >= 0");
  return 2.0 * std::exp(-kr_constant(c, m_n) * beta * beta * static_cast<double>(n));
}

inline double combined_tail_bound(double delta, std::size_t n, double c, double m_n) {
  require(delta > 0.0, "combined_tail_bound: delta must be > 0");
  return hoeffding_conditional_bound(delta / 2.0, n) + kr_bound(delta / 2.0, n, c, m_n);
}

enum class Verdict { dominated, violated, unresolved };

inline const char* to_string(Verdict v) {
  switch (v) {
    case Verdict::dominated: return "dominated";
    case Verdict::violated: return "violated";
    default: return "unresolved";
  }
}

/// dominated iff the whole interval sits at or below the bound, violated iff
/// it sits strictly above, unresolved otherwise.
inline Verdict classify(const Interval& ci, double bound) {
  if (ci.hi <= bound) return Verdict::dominated;
  if (ci.lo > bound) return Verdict::violated;
  return Verdict::unresolved;
}

struct TailEstimate {
  double threshold = 0.0;
  std::uint64_t trials = 0;  // 0 on the exact path
  std::uint64_t hits = 0;
  double estimate = 0.0;
  Interval ci;
  bool exact = false;
};

inline constexpr std::uint64_t kMinTailTrials = 1000;

/// P(sum Y > threshold) from `trials` draws with a Clopper-Pearson 95% interval.
inline TailEstimate empirical_tail(const ErrorSource& src, double threshold, std::uint64_t trials,
                                   std::uint64_t seed, Workers workers = {}) {
  validate_source(src);
  require(trials >= kMinTailTrials, "empirical_tail: needs at least 1000 trials");
  std::vector<std::uint64_t> hits(chunk_count(trials, workers), 0);
  for_each_chunk(trials, workers, [&](std::size_t begin, std::size_t end, std::size_t c) {
    SourceDrawer drawer(src);
    for (std::size_t t = begin; t < end; ++t) {
      CounterRng rng(derive_seed(seed, "tail", t));
      if (static_cast<double>(drawer.weight(rng)) > threshold) ++hits[c];
    }
  });
  TailEstimate e;
  e.threshold = threshold;
  e.trials = trials;
  for (auto h : hits) e.hits += h;
  e.estimate = static_cast<double>(e.hits) / static_cast<double>(trials);
  e.ci = clopper_pearson(e.hits, trials);
  return e;
}

/// P(sum Y > threshold) from the exact weight law; the interval is the point.
inline TailEstimate exact_tail(const ErrorSource& src, double threshold) {
  const std::vector<double> w = exact_weight_distribution(src);
  binomial::CompensatedSum acc;
  for (std::size_t k = w.size(); k-- > 0;)
    if (static_cast<double>(k) > threshold) acc.add(w[k]);
  TailEstimate e;
  e.threshold = threshold;
  e.estimate = std::clamp(acc.value(), 0.0, 1.0);
  e.ci = {e.estimate, e.estimate};
  e.exact = true;
  return e;
}

/// Slack for ">= beta n" comparisons so floating ties count toward the tail.
inline constexpr double kTieSlack = 1e-9;

/// max_x P(|sum Y - psi(x)| >= beta n | X = x) over every field realization
/// with positive probability. Exact, by enumeration.
inline double exact_conditional_deviation_tail(const HiddenErrorModel& model, double beta) {
  model.validate();
  const std::size_t n = model.field.n;
  const std::vector<double> px = exact_field_distribution(model.field);
  FieldRealization x(n);
  std::vector<double> q(n), scratch, law(n + 1);
  const double radius = beta * static_cast<double>(n) - kTieSlack;
  double worst = 0.0;
  for (std::uint64_t xi = 0; xi < px.size(); ++xi) {
    if (px[xi] == 0.0) continue;
    decode_sequence(xi, model.field.alphabet, x);
    conditional_error_probs(model, x, q);
    double mean = 0.0;
    for (double v : q) mean += v;
    std::fill(law.begin(), law.end(), 0.0);
    accumulate_poisson_binomial(q, 1.0, scratch, law);
    double tail = 0.0;
    for (std::size_t k = 0; k <= n; ++k)
      if (std::abs(static_cast<double>(k) - mean) >= radius) tail += law[k];
    worst = std::max(worst, tail);
  }
  return worst;
}

/// P(|psi(X) - E psi(X)| >= beta n). Exact, by enumeration.
inline double exact_psi_deviation_tail(const HiddenErrorModel& model, double beta) {
  model.validate();
  const std::size_t n = model.field.n;
  const std::vector<double> px = exact_field_distribution(model.field);
  FieldRealization x(n);
  std::vector<double> q(n), values(px.size());
  double mean = 0.0;
  for (std::uint64_t xi = 0; xi < px.size(); ++xi) {
    decode_sequence(xi, model.field.alphabet, x);
    conditional_error_probs(model, x, q);
    double s = 0.0;
    for (double v : q) s += v;
    values[xi] = s;
    mean += px[xi] * s;
  }
  const double radius = beta * static_cast<double>(n) - kTieSlack;
  double tail = 0.0;
  for (std::uint64_t xi = 0; xi < px.size(); ++xi)
    if (std::abs(values[xi] - mean) >= radius) tail += px[xi];
  return tail;
}

/// Optional overrides for verify_bound; anything left empty is computed.
struct BoundInputs {
  std::optional<double> eps;        // error rate; default: exact rate of the model
  std::optional<double> lipschitz;  // c; default: lipschitz_constant()
  std::optional<double> m_n;        // default: mixing_bound_mn() of the field
};

struct TailReport {
  std::string model_id;
  std::size_t n = 0;
  double eps = 0.0;
  double delta = 0.0;
  double threshold = 0.0;  // n (eps + delta)
  double c = 0.0;
  double m_n = 1.0;
  double kr_exponent_constant = 0.0;  // 1 / (2 c^2 M_n^2); 0 when c = 0
  TailEstimate empirical;
  double bound = 0.0;
  Verdict verdict = Verdict::unresolved;
  bool vacuous = false;  // bound >= 1
};

struct ResolvedBoundInputs {
  double eps = 0.0;
  double c = 0.0;
  double m_n = 1.0;
};

inline ResolvedBoundInputs resolve_bound_inputs(const ErrorSource& src, const BoundInputs& in) {
  validate_source(src);
  const HiddenErrorModel model = std::holds_alternative<HiddenErrorModel>(src)
                                     ? std::get<HiddenErrorModel>(src)
                                     : as_hidden_model(std::get<ThresholdModelSpec>(src));
  ResolvedBoundInputs r;
  if (in.eps) {
    r.eps = *in.eps;
  } else if (const auto* t = std::get_if<ThresholdModelSpec>(&src)) {
    r.eps = marginal_error_rate(*t).value;
  } else {
    try {
      r.eps = error_rate_exact(model).rate;
    } catch (const ResourceLimitError&) {
      throw ValidationError("verify_bound: error rate is not enumerable; supply eps explicitly");
    }
  }
  if (in.lipschitz) {
    r.c = *in.lipschitz;
  } else {
    try {
      r.c = lipschitz_constant(model);
    } catch (const ResourceLimitError&) {
      throw ValidationError("verify_bound: no closed form and brute force is infeasible; supply the Lipschitz constant");
    }
  }
  r.m_n = in.m_n ? *in.m_n : mixing_bound_mn(mixing_coefficients(model.field));
  require(r.c >= 0.0, "verify_bound: Lipschitz constant must be >= 0");
  require(r.m_n >= 1.0, "verify_bound: M_n must be >= 1");
  return r;
}

/// Compares P(sum Y > n(eps + delta)) with the combined bound. trials == 0
/// reads the tail off the exact weight law instead of sampling. A zero
/// Lipschitz constant means psi is constant, so the field part vanishes.
inline TailReport verify_bound(const ErrorSource& src, double delta, const BoundInputs& inputs,
                               std::uint64_t trials, std::uint64_t seed, Workers workers = {},
                               std::string model_id = {}) {
  require(delta > 0.0, "verify_bound: delta must be > 0");
  const ResolvedBoundInputs r = resolve_bound_inputs(src, inputs);
  TailReport rep;
  rep.model_id = std::move(model_id);
  rep.n = source_sites(src);
  rep.eps = r.eps;
  rep.delta = delta;
  rep.c = r.c;
  rep.m_n = r.m_n;
  rep.threshold = static_cast<double>(rep.n) * (r.eps + delta);
  if (r.c > 0.0) {
    rep.kr_exponent_constant = kr_constant(r.c, r.m_n);
    rep.bound = combined_tail_bound(delta, rep.n, r.c, r.m_n);
  } else {
    rep.bound = hoeffding_conditional_bound(delta / 2.0, rep.n);
  }
  rep.empirical = trials == 0 ? exact_tail(src, rep.threshold)
                              : empirical_tail(src, rep.threshold, trials, seed, workers);
  rep.verdict = classify(rep.empirical.ci, rep.bound);
  rep.vacuous = rep.bound >= 1.0;
  return rep;
}

}  // namespace corrmem
