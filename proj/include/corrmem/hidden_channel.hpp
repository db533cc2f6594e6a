#pragma once

// Factorized error channels on top of a Markov field.
//
// Y_i is drawn independently for each site given the whole field X, with
// q_i(Y_i = 1 | X) coming from one of three families:
//   PerSite          q_i depends on X_i only (classical hidden MRF)
//   Window           q_i depends on X_{i-w} .. X_{i+w}; sites outside the
//                    chain read as symbol 0
//   GlobalThreshold  binary X; Y = X when sum(X) <= B, otherwise every Y_i = 1
// Error vectors and 2^n tables index site 0 as the most significant bit.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "corrmem/binomial.hpp"
#include "corrmem/errors.hpp"
#include "corrmem/field_model.hpp"
#include "corrmem/parallel.hpp"
#include "corrmem/rng.hpp"
#include "corrmem/stats.hpp"

namespace corrmem {

inline constexpr std::size_t kMaxWindowRadius = 3;

struct PerSiteChannel {
  /// error_prob[i][s] = q_i(Y_i = 1 | X_i = s)
  std::vector<std::vector<double>> error_prob;

  static PerSiteChannel uniform(std::size_t n, std::vector<double> table) {
    return {std::vector<std::vector<double>>(n, std::move(table))};
  }
};

struct WindowChannel {
  std::size_t radius = 0;
  /// error_prob[i][code], code = base-S digits of X_{i-w} .. X_{i+w}, leftmost most significant.
  std::vector<std::vector<double>> error_prob;
};

struct GlobalThresholdChannel {
  double threshold = 0.0;
};

using ConditionalChannelSpec = std::variant<PerSiteChannel, WindowChannel, GlobalThresholdChannel>;

using ErrorVector = std::vector<std::uint8_t>;

struct HiddenErrorModel {
  MarkovFieldSpec field;
  ConditionalChannelSpec channel;

  std::size_t sites() const { return field.n; }
  bool is_per_site() const { return std::holds_alternative<PerSiteChannel>(channel); }

  void validate() const;
};

namespace detail {

inline void check_probability_table(std::span<const double> t, const std::string& what) {
  for (std::size_t k = 0; k < t.size(); ++k)
    if (!(t[k] >= 0.0 && t[k] <= 1.0))
      throw ValidationError(what + ": entry " + std::to_string(k) + " is outside [0,1]");
}

inline std::size_t window_table_size(std::size_t alphabet, std::size_t radius) {
  return static_cast<std::size_t>(enumeration_size(alphabet, 2 * radius + 1));
}

}  // namespace detail

inline void HiddenErrorModel::validate() const {
  field.validate();
  const std::size_t n = field.n;
  std::visit(
      [&](const auto& ch) {
        using T = std::decay_t<decltype(ch)>;
        if constexpr (std::is_same_v<T, PerSiteChannel>) {
          require(ch.error_prob.size() == n, "channel: per-site table count " +
                                                 std::to_string(ch.error_prob.size()) +
                                                 " does not match field size " + std::to_string(n));
          for (std::size_t i = 0; i < n; ++i) {
            require(ch.error_prob[i].size() == field.alphabet,
                    "channel: per-site table " + std::to_string(i) + " must have " +
                        std::to_string(field.alphabet) + " entries");
            detail::check_probability_table(ch.error_prob[i], "channel: site " + std::to_string(i));
          }
        } else if constexpr (std::is_same_v<T, WindowChannel>) {
          require(ch.radius <= kMaxWindowRadius,
                  "channel: window radius exceeds " + std::to_string(kMaxWindowRadius));
          require(ch.error_prob.size() == n, "channel: window table count " +
                                                 std::to_string(ch.error_prob.size()) +
                                                 " does not match field size " + std::to_string(n));
          const std::size_t size = detail::window_table_size(field.alphabet, ch.radius);
          for (std::size_t i = 0; i < n; ++i) {
            require(ch.error_prob[i].size() == size,
                    "channel: window table " + std::to_string(i) + " must have " +
                        std::to_string(size) + " entries");
            detail::check_probability_table(ch.error_prob[i], "channel: site " + std::to_string(i));
          }
        } else {
          require(field.alphabet == 2, "channel: global threshold requires a binary field");
          require(!std::isnan(ch.threshold), "channel: threshold is NaN");
        }
      },
      channel);
}

/// q[i] = q_i(Y_i = 1 | x) for every site. Model must be valid.
inline void conditional_error_probs(const HiddenErrorModel& model, std::span<const Symbol> x,
                                    std::span<double> q) {
  const std::size_t n = model.field.n;
  std::visit(
      [&](const auto& ch) {
        using T = std::decay_t<decltype(ch)>;
        if constexpr (std::is_same_v<T, PerSiteChannel>) {
          for (std::size_t i = 0; i < n; ++i) q[i] = ch.error_prob[i][x[i]];
        } else if constexpr (std::is_same_v<T, WindowChannel>) {
          const std::size_t S = model.field.alphabet;
          const auto w = static_cast<std::ptrdiff_t>(ch.radius);
          for (std::size_t i = 0; i < n; ++i) {
            std::size_t code = 0;
            for (std::ptrdiff_t j = static_cast<std::ptrdiff_t>(i) - w;
                 j <= static_cast<std::ptrdiff_t>(i) + w; ++j) {
              const bool inside = j >= 0 && j < static_cast<std::ptrdiff_t>(n);
              code = code * S + (inside ? x[static_cast<std::size_t>(j)] : 0);
            }
            q[i] = ch.error_prob[i][code];
          }
        } else {
          double sum = 0.0;
          for (std::size_t i = 0; i < n; ++i) sum += x[i];
          const bool triggered = sum > ch.threshold;
          for (std::size_t i = 0; i < n; ++i) q[i] = triggered ? 1.0 : static_cast<double>(x[i]);
        }
      },
      model.channel);
}

/// psi(x) = sum_i q_i(1 | x) = E[sum Y | X = x].
inline double psi(const HiddenErrorModel& model, std::span<const Symbol> x) {
  model.validate();
  require(x.size() == model.field.n, "psi: realization length differs from field size");
  for (Symbol s : x) require(s < model.field.alphabet, "psi: symbol outside alphabet");
  std::vector<double> q(x.size());
  conditional_error_probs(model, x, q);
  double s = 0.0;
  for (double v : q) s += v;
  return s;
}

/// Reusable draw state for one model: field realization and q buffers.
class ErrorDrawer {
 public:
  explicit ErrorDrawer(const HiddenErrorModel& model)
      : model_(&model), x_(model.field.n), q_(model.field.n) {}

  template <class Rng>
  std::size_t draw(Rng& rng, std::span<std::uint8_t> y) {
    sample_field_into(model_->field, rng, x_);
    conditional_error_probs(*model_, x_, q_);
    std::size_t weight = 0;
    for (std::size_t i = 0; i < x_.size(); ++i) {
      y[i] = rng.bernoulli(q_[i]) ? 1 : 0;
      weight += y[i];
    }
    return weight;
  }

 private:
  const HiddenErrorModel* model_;
  FieldRealization x_;
  std::vector<double> q_;
};

inline ErrorVector sample_errors(const HiddenErrorModel& model, std::uint64_t seed) {
  model.validate();
  CounterRng rng(seed);
  ErrorDrawer drawer(model);
  ErrorVector y(model.field.n);
  drawer.draw(rng, y);
  return y;
}

inline std::uint64_t encode_errors(std::span<const std::uint8_t> y) {
  std::uint64_t idx = 0;
  for (auto b : y) idx = (idx << 1) | b;
  return idx;
}

/// Counts of each error pattern over `trials` draws; trial t uses stream
/// derive_seed(seed, "errors", t).
inline std::vector<std::uint64_t> sample_error_histogram(const HiddenErrorModel& model,
                                                         std::uint64_t trials, std::uint64_t seed,
                                                         Workers workers = {}) {
  model.validate();
  const auto states = enumeration_size(2, model.field.n);
  const std::size_t chunks = chunk_count(trials, workers);
  std::vector<std::vector<std::uint64_t>> partial(chunks, std::vector<std::uint64_t>(states, 0));
  for_each_chunk(trials, workers, [&](std::size_t begin, std::size_t end, std::size_t c) {
    ErrorDrawer drawer(model);
    ErrorVector y(model.field.n);
    for (std::size_t t = begin; t < end; ++t) {
      CounterRng rng(derive_seed(seed, "errors", t));
      drawer.draw(rng, y);
      ++partial[c][encode_errors(y)];
    }
  });
  std::vector<std::uint64_t> total(states, 0);
  for (const auto& p : partial)
    for (std::size_t k = 0; k < states; ++k) total[k] += p[k];
  return total;
}

/// Exact law of Y by summing over every field realization. Works for any
/// channel; cost grows as S^n times the number of reachable error patterns.
inline std::vector<double> exact_error_distribution_by_enumeration(const HiddenErrorModel& model) {
  model.validate();
  const std::size_t n = model.field.n;
  const auto y_states = enumeration_size(2, n);
  const std::vector<double> px = exact_field_distribution(model.field);
  std::vector<double> table(y_states, 0.0);
  FieldRealization x(n);
  std::vector<double> q(n);
  std::vector<std::pair<std::uint64_t, double>> cur, next;
  for (std::uint64_t xi = 0; xi < px.size(); ++xi) {
    if (px[xi] == 0.0) continue;
    decode_sequence(xi, model.field.alphabet, x);
    conditional_error_probs(model, x, q);
    cur.assign(1, {0, px[xi]});
    for (std::size_t i = 0; i < n; ++i) {
      next.clear();
      for (auto [idx, w] : cur) {
        if (q[i] < 1.0) next.emplace_back(idx << 1, w * (1.0 - q[i]));
        if (q[i] > 0.0) next.emplace_back((idx << 1) | 1, w * q[i]);
      }
      std::swap(cur, next);
    }
    for (auto [idx, w] : cur) table[idx] += w;
  }
  return table;
}

/// Exact law of Y over {0,1}^n. PerSite channels use the forward recursion
/// over (error prefix, current hidden symbol); other channels enumerate.
inline std::vector<double> exact_error_distribution(const HiddenErrorModel& model) {
  model.validate();
  if (!model.is_per_site()) return exact_error_distribution_by_enumeration(model);
  const auto& q = std::get<PerSiteChannel>(model.channel).error_prob;
  const std::size_t n = model.field.n, S = model.field.alphabet;
  enumeration_size(2, n);
  // alpha[prefix * S + s] = P(Y_0..i = prefix, X_i = s)
  std::vector<double> alpha(2 * S);
  for (std::size_t s = 0; s < S; ++s) {
    alpha[0 * S + s] = model.field.initial[s] * (1.0 - q[0][s]);
    alpha[1 * S + s] = model.field.initial[s] * q[0][s];
  }
  for (std::size_t i = 1; i < n; ++i) {
    const Kernel& k = model.field.kernels[i - 1];
    const std::size_t prefixes = alpha.size() / S;
    std::vector<double> next(prefixes * 2 * S, 0.0);
    for (std::size_t p = 0; p < prefixes; ++p)
      for (std::size_t s = 0; s < S; ++s) {
        const double a = alpha[p * S + s];
        if (a == 0.0) continue;
        for (std::size_t t = 0; t < S; ++t) {
          const double m = a * k(s, t);
          next[(2 * p) * S + t] += m * (1.0 - q[i][t]);
          next[(2 * p + 1) * S + t] += m * q[i][t];
        }
      }
    alpha = std::move(next);
  }
  std::vector<double> table(alpha.size() / S, 0.0);
  for (std::size_t p = 0; p < table.size(); ++p)
    for (std::size_t s = 0; s < S; ++s) table[p] += alpha[p * S + s];
  return table;
}

/// Poisson-binomial law of sum_i Bernoulli(q_i), accumulated into `out` with weight w.
inline void accumulate_poisson_binomial(std::span<const double> q, double w, std::vector<double>& scratch,
                                        std::span<double> out) {
  scratch.assign(q.size() + 1, 0.0);
  scratch[0] = 1.0;
  for (std::size_t i = 0; i < q.size(); ++i)
    for (std::size_t k = i + 2; k-- > 0;) {
      const double stay = scratch[k] * (1.0 - q[i]);
      scratch[k] = stay + (k > 0 ? scratch[k - 1] * q[i] : 0.0);
    }
  for (std::size_t k = 0; k < scratch.size(); ++k) out[k] += w * scratch[k];
}

/// Exact law of the error weight sum(Y), length n + 1. PerSite channels use a
/// forward recursion over (weight, hidden symbol) with no enumeration cap.
inline std::vector<double> exact_weight_distribution(const HiddenErrorModel& model) {
  model.validate();
  const std::size_t n = model.field.n, S = model.field.alphabet;
  std::vector<double> out(n + 1, 0.0);
  if (model.is_per_site()) {
    const auto& q = std::get<PerSiteChannel>(model.channel).error_prob;
    // w[k * S + s] = P(weight of sites 0..i = k, X_i = s)
    std::vector<double> w((n + 1) * S, 0.0);
    for (std::size_t s = 0; s < S; ++s) {
      w[0 * S + s] = model.field.initial[s] * (1.0 - q[0][s]);
      w[1 * S + s] = model.field.initial[s] * q[0][s];
    }
    std::vector<double> next(w.size());
    for (std::size_t i = 1; i < n; ++i) {
      const Kernel& k = model.field.kernels[i - 1];
      std::fill(next.begin(), next.end(), 0.0);
      for (std::size_t wt = 0; wt <= i; ++wt)
        for (std::size_t s = 0; s < S; ++s) {
          const double a = w[wt * S + s];
          if (a == 0.0) continue;
          for (std::size_t t = 0; t < S; ++t) {
            const double m = a * k(s, t);
            next[wt * S + t] += m * (1.0 - q[i][t]);
            next[(wt + 1) * S + t] += m * q[i][t];
          }
        }
      std::swap(w, next);
    }
    for (std::size_t wt = 0; wt <= n; ++wt)
      for (std::size_t s = 0; s < S; ++s) out[wt] += w[wt * S + s];
    return out;
  }
  const std::vector<double> px = exact_field_distribution(model.field);
  FieldRealization x(n);
  std::vector<double> q(n), scratch;
  for (std::uint64_t xi = 0; xi < px.size(); ++xi) {
    if (px[xi] == 0.0) continue;
    decode_sequence(xi, S, x);
    conditional_error_probs(model, x, q);
    accumulate_poisson_binomial(q, px[xi], scratch, out);
  }
  return out;
}

struct ErrorRateEstimate {
  double rate = 0.0;
  Interval ci;  // 95%; degenerate [rate, rate] on the exact path
  std::vector<double> per_site;
  bool exact = true;
  std::uint64_t trials = 0;
};

/// Exact (1/n) sum_i E[Y_i]. PerSite uses propagated marginals; other
/// channels enumerate the field.
inline ErrorRateEstimate error_rate_exact(const HiddenErrorModel& model) {
  model.validate();
  const std::size_t n = model.field.n;
  ErrorRateEstimate est;
  est.per_site.assign(n, 0.0);
  if (model.is_per_site()) {
    const auto& q = std::get<PerSiteChannel>(model.channel).error_prob;
    const auto marg = site_marginals(model.field);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t s = 0; s < model.field.alphabet; ++s) est.per_site[i] += marg[i][s] * q[i][s];
  } else {
    const std::vector<double> px = exact_field_distribution(model.field);
    FieldRealization x(n);
    std::vector<double> q(n);
    for (std::uint64_t xi = 0; xi < px.size(); ++xi) {
      if (px[xi] == 0.0) continue;
      decode_sequence(xi, model.field.alphabet, x);
      conditional_error_probs(model, x, q);
      for (std::size_t i = 0; i < n; ++i) est.per_site[i] += px[xi] * q[i];
    }
  }
  for (double v : est.per_site) est.rate += v;
  est.rate /= static_cast<double>(n);
  est.ci = {est.rate, est.rate};
  return est;
}

/// Monte Carlo error rate with a normal 95% interval over per-trial rates.
inline ErrorRateEstimate error_rate_mc(const HiddenErrorModel& model, std::uint64_t trials,
                                       std::uint64_t seed, Workers workers = {}) {
  model.validate();
  require(trials >= 2, "error_rate_mc: need at least two trials");
  const std::size_t n = model.field.n;
  const std::size_t chunks = chunk_count(trials, workers);
  struct Acc {
    std::vector<std::uint64_t> site;
    std::uint64_t sum = 0, sum_sq = 0;
  };
  std::vector<Acc> partial(chunks, Acc{std::vector<std::uint64_t>(n, 0)});
  for_each_chunk(trials, workers, [&](std::size_t begin, std::size_t end, std::size_t c) {
    ErrorDrawer drawer(model);
    ErrorVector y(n);
    for (std::size_t t = begin; t < end; ++t) {
      CounterRng rng(derive_seed(seed, "error-rate", t));
      const std::uint64_t w = drawer.draw(rng, y);
      for (std::size_t i = 0; i < n; ++i) partial[c].site[i] += y[i];
      partial[c].sum += w;
      partial[c].sum_sq += w * w;
    }
  });
  Acc total{std::vector<std::uint64_t>(n, 0)};
  for (const auto& p : partial) {
    for (std::size_t i = 0; i < n; ++i) total.site[i] += p.site[i];
    total.sum += p.sum;
    total.sum_sq += p.sum_sq;
  }
  const double T = static_cast<double>(trials), nd = static_cast<double>(n);
  ErrorRateEstimate est;
  est.exact = false;
  est.trials = trials;
  for (std::size_t i = 0; i < n; ++i) est.per_site.push_back(static_cast<double>(total.site[i]) / T);
  const double mean_w = static_cast<double>(total.sum) / T;
  const double var_w = std::max(0.0, (static_cast<double>(total.sum_sq) - T * mean_w * mean_w) / (T - 1.0));
  est.rate = mean_w / nd;
  const double half = 1.959963984540054 * std::sqrt(var_w / T) / nd;
  est.ci = {std::max(0.0, est.rate - half), std::min(1.0, est.rate + half)};
  return est;
}

/// Exact when the model is enumerable (or PerSite), Monte Carlo otherwise.
inline ErrorRateEstimate error_rate(const HiddenErrorModel& model, std::uint64_t fallback_trials = 100000,
                                    std::uint64_t seed = 0, Workers workers = {}) {
  try {
    return error_rate_exact(model);
  } catch (const ResourceLimitError&) {
    return error_rate_mc(model, fallback_trials, seed, workers);
  }
}

/// max |psi(x) - psi(x')| over x, x' differing in exactly one site, by
/// exhaustive enumeration of the field's state space. The difference is
/// summed site by site so unchanged terms cancel exactly.
inline double lipschitz_constant_brute_force(const HiddenErrorModel& model) {
  model.validate();
  const std::size_t n = model.field.n, S = model.field.alphabet;
  const auto states = enumeration_size(S, n);
  FieldRealization x(n);
  std::vector<double> q(n), q_other(n);
  double c = 0.0;
  for (std::uint64_t xi = 0; xi < states; ++xi) {
    decode_sequence(xi, S, x);
    conditional_error_probs(model, x, q);
    for (std::size_t i = 0; i < n; ++i) {
      const Symbol keep = x[i];
      for (Symbol s = keep + 1; s < S; ++s) {
        x[i] = s;
        conditional_error_probs(model, x, q_other);
        double diff = 0.0;
        for (std::size_t j = 0; j < n; ++j) diff += q[j] - q_other[j];
        c = std::max(c, std::abs(diff));
      }
      x[i] = keep;
    }
  }
  return c;
}

/// Hamming-Lipschitz constant of psi. Closed forms: PerSite is the largest
/// per-site oscillation max_s q_i(s) - min_s q_i(s); GlobalThreshold is
/// n - floor(B) for 0 <= B < n, 1 for B >= n, 0 for B < 0. Window channels
/// fall back to brute force.
inline double lipschitz_constant(const HiddenErrorModel& model) {
  model.validate();
  if (const auto* ch = std::get_if<PerSiteChannel>(&model.channel)) {
    double c = 0.0;
    for (const auto& t : ch->error_prob) {
      const auto [lo, hi] = std::minmax_element(t.begin(), t.end());
      c = std::max(c, *hi - *lo);
    }
    return c;
  }
  if (const auto* ch = std::get_if<GlobalThresholdChannel>(&model.channel)) {
    const double n = static_cast<double>(model.field.n);
    if (ch->threshold < 0.0) return 0.0;
    if (ch->threshold >= n) return 1.0;
    return n - std::floor(ch->threshold);
  }
  return lipschitz_constant_brute_force(model);
}

enum class CovarianceMode { exact, monte_carlo };

struct CovarianceMatrix {
  std::size_t n = 0;
  std::vector<double> cov;             // row-major n x n
  std::vector<double> standard_error;  // zeros on the exact path
  bool exact = true;
  std::uint64_t trials = 0;

  double at(std::size_t i, std::size_t j) const { return cov[i * n + j]; }
  double se(std::size_t i, std::size_t j) const { return standard_error[i * n + j]; }
};

/// Exact covariance of Y. PerSite channels use pairwise hidden-state
/// propagation (no enumeration cap); other channels enumerate the field.
inline CovarianceMatrix covariance_matrix_exact(const HiddenErrorModel& model) {
  model.validate();
  const std::size_t n = model.field.n, S = model.field.alphabet;
  std::vector<double> mean(n, 0.0), joint(n * n, 0.0);
  if (const auto* ch = std::get_if<PerSiteChannel>(&model.channel)) {
    const auto& q = ch->error_prob;
    const auto marg = site_marginals(model.field);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t s = 0; s < S; ++s) mean[i] += marg[i][s] * q[i][s];
      // v[t] = E[q_i(X_i) 1{X_j = t}], pushed forward one bond at a time.
      std::vector<double> v(S);
      for (std::size_t s = 0; s < S; ++s) v[s] = marg[i][s] * q[i][s];
      for (std::size_t j = i + 1; j < n; ++j) {
        std::vector<double> nv(S, 0.0);
        const Kernel& k = model.field.kernels[j - 1];
        for (std::size_t s = 0; s < S; ++s)
          for (std::size_t t = 0; t < S; ++t) nv[t] += v[s] * k(s, t);
        v = std::move(nv);
        double e = 0.0;
        for (std::size_t t = 0; t < S; ++t) e += v[t] * q[j][t];
        joint[i * n + j] = e;
      }
    }
  } else {
    const std::vector<double> px = exact_field_distribution(model.field);
    FieldRealization x(n);
    std::vector<double> q(n);
    for (std::uint64_t xi = 0; xi < px.size(); ++xi) {
      if (px[xi] == 0.0) continue;
      decode_sequence(xi, S, x);
      conditional_error_probs(model, x, q);
      for (std::size_t i = 0; i < n; ++i) {
        const double pi = px[xi] * q[i];
        mean[i] += pi;
        for (std::size_t j = i + 1; j < n; ++j) joint[i * n + j] += pi * q[j];
      }
    }
  }
  CovarianceMatrix m{n, std::vector<double>(n * n), std::vector<double>(n * n, 0.0), true, 0};
  for (std::size_t i = 0; i < n; ++i) {
    m.cov[i * n + i] = mean[i] * (1.0 - mean[i]);
    for (std::size_t j = i + 1; j < n; ++j)
      m.cov[i * n + j] = m.cov[j * n + i] = joint[i * n + j] - mean[i] * mean[j];
  }
  return m;
}

inline constexpr std::uint64_t kMinCovarianceTrials = 1000;

/// Monte Carlo covariance from pooled integer counts. Standard errors are the
/// plug-in asymptotic standard deviation of the sample covariance,
/// sqrt(Var[(Y_i - mu_i)(Y_j - mu_j)] / trials).
inline CovarianceMatrix covariance_matrix_mc(const HiddenErrorModel& model, std::uint64_t trials,
                                             std::uint64_t seed, Workers workers = {}) {
  model.validate();
  require(trials >= kMinCovarianceTrials, "covariance: Monte Carlo needs at least 1000 trials");
  const std::size_t n = model.field.n;
  const std::size_t chunks = chunk_count(trials, workers);
  std::vector<std::vector<std::uint64_t>> ones(chunks, std::vector<std::uint64_t>(n, 0)),
      pairs(chunks, std::vector<std::uint64_t>(n * n, 0));
  for_each_chunk(trials, workers, [&](std::size_t begin, std::size_t end, std::size_t c) {
    ErrorDrawer drawer(model);
    ErrorVector y(n);
    std::vector<std::size_t> hot;
    for (std::size_t t = begin; t < end; ++t) {
      CounterRng rng(derive_seed(seed, "covariance", t));
      drawer.draw(rng, y);
      hot.clear();
      for (std::size_t i = 0; i < n; ++i)
        if (y[i]) hot.push_back(i);
      for (std::size_t a = 0; a < hot.size(); ++a) {
        ++ones[c][hot[a]];
        for (std::size_t b = a + 1; b < hot.size(); ++b) ++pairs[c][hot[a] * n + hot[b]];
      }
    }
  });
  std::vector<std::uint64_t> n1(n, 0), n11(n * n, 0);
  for (std::size_t c = 0; c < chunks; ++c) {
    for (std::size_t i = 0; i < n; ++i) n1[i] += ones[c][i];
    for (std::size_t k = 0; k < n * n; ++k) n11[k] += pairs[c][k];
  }
  const double T = static_cast<double>(trials);
  CovarianceMatrix m{n, std::vector<double>(n * n), std::vector<double>(n * n), false, trials};
  for (std::size_t i = 0; i < n; ++i) {
    const double p = static_cast<double>(n1[i]) / T;
    const double var = p * (1.0 - p);
    m.cov[i * n + i] = var;
    const double fourth = p * std::pow(1.0 - p, 4) + (1.0 - p) * std::pow(p, 4);
    m.standard_error[i * n + i] = std::sqrt(std::max(0.0, fourth - var * var) / T);
    for (std::size_t j = i + 1; j < n; ++j) {
      const double pj = static_cast<double>(n1[j]) / T;
      const double p11 = static_cast<double>(n11[i * n + j]) / T;
      const double c = p11 - p * pj;
      const double cells[4] = {1.0 - p - pj + p11, pj - p11, p - p11, p11};  // (0,0) (0,1) (1,0) (1,1)
      double e4 = 0.0;
      for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b) e4 += cells[a * 2 + b] * (a - p) * (a - p) * (b - pj) * (b - pj);
      const double se = std::sqrt(std::max(0.0, e4 - c * c) / T);
      m.cov[i * n + j] = m.cov[j * n + i] = c;
      m.standard_error[i * n + j] = m.standard_error[j * n + i] = se;
    }
  }
  return m;
}

inline CovarianceMatrix covariance_matrix(const HiddenErrorModel& model, CovarianceMode mode,
                                          std::uint64_t trials = 0, std::uint64_t seed = 0,
                                          Workers workers = {}) {
  return mode == CovarianceMode::exact ? covariance_matrix_exact(model)
                                       : covariance_matrix_mc(model, trials, seed, workers);
}

}  // namespace corrmem
