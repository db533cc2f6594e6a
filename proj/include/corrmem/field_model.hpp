#pragma once

// Inhomogeneous 1D Markov random fields over a finite alphabet.
//
// A field on n sites has law p(x_1) * prod_{i=1}^{n-1} p_i(x_{i+1} | x_i). In
// code, sites are 0-based and bond i joins site i to site i + 1, so
// kernels[i] is the transition from site i to site i + 1.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "corrmem/errors.hpp"
#include "corrmem/rng.hpp"

namespace corrmem {

using Symbol = std::uint32_t;
using FieldRealization = std::vector<Symbol>;

inline constexpr double kProbabilityTolerance = 1e-12;
inline constexpr std::uint64_t kEnumerationLimit = std::uint64_t{1} << 20;

/// Row-stochastic square matrix, row-major.
class Kernel {
 public:
  Kernel() = default;
  Kernel(std::size_t states, std::vector<double> entries)
      : states_(states), entries_(std::move(entries)) {
    require(entries_.size() == states_ * states_, "kernel: entry count is not states^2");
  }

  static Kernel identity(std::size_t states) {
    std::vector<double> e(states * states, 0.0);
    for (std::size_t s = 0; s < states; ++s) e[s * states + s] = 1.0;
    return {states, std::move(e)};
  }

  static Kernel uniform(std::size_t states) {
    return {states, std::vector<double>(states * states, 1.0 / static_cast<double>(states))};
  }

  /// Every row equals `law`: the next symbol ignores the current one.
  static Kernel memoryless(std::span<const double> law) {
    std::vector<double> e;
    for (std::size_t r = 0; r < law.size(); ++r) e.insert(e.end(), law.begin(), law.end());
    return {law.size(), std::move(e)};
  }

  /// Binary kernel that flips the symbol with probability `flip`.
  static Kernel binary_symmetric(double flip) {
    return {2, {1.0 - flip, flip, flip, 1.0 - flip}};
  }

  std::size_t states() const { return states_; }
  double operator()(std::size_t from, std::size_t to) const {
    return entries_[from * states_ + to];
  }
  std::span<const double> row(std::size_t from) const {
    return {entries_.data() + from * states_, states_};
  }
  const std::vector<double>& entries() const { return entries_; }

 private:
  std::size_t states_ = 0;
  std::vector<double> entries_;
};

namespace detail {

inline void check_distribution(std::span<const double> p, const std::string& what) {
  double sum = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (!(p[k] >= 0.0 && p[k] <= 1.0))
      throw ValidationError(what + ": entry " + std::to_string(k) + " = " +
                            std::to_string(p[k]) + " is outside [0,1]");
    sum += p[k];
  }
  if (std::abs(sum - 1.0) > kProbabilityTolerance)
    throw ValidationError(what + " sums to " + std::to_string(sum) + ", not 1");
}

}  // namespace detail

struct MarkovFieldSpec {
  std::size_t n = 1;
  std::size_t alphabet = 2;
  std::vector<double> initial;
  std::vector<Kernel> kernels;

  /// Same kernel on every bond.
  static MarkovFieldSpec homogeneous(std::size_t n, std::vector<double> initial, const Kernel& k) {
    MarkovFieldSpec spec{n, initial.size(), std::move(initial), {}};
    spec.kernels.assign(n > 0 ? n - 1 : 0, k);
    return spec;
  }

  /// Independent sites, each with law `law`.
  static MarkovFieldSpec iid(std::size_t n, std::vector<double> law) {
    const Kernel k = Kernel::memoryless(law);
    return homogeneous(n, std::move(law), k);
  }

  static MarkovFieldSpec iid_bernoulli(std::size_t n, double p) { return iid(n, {1.0 - p, p}); }

  void validate() const {
    require(n >= 1, "field: site count must be >= 1");
    require(alphabet >= 1, "field: alphabet size must be >= 1");
    require(initial.size() == alphabet, "field: initial law has " +
                                            std::to_string(initial.size()) +
                                            " entries, alphabet size is " +
                                            std::to_string(alphabet));
    detail::check_distribution(initial, "field: initial law");
    require(kernels.size() == n - 1, "field: expected " + std::to_string(n - 1) +
                                         " kernels, got " + std::to_string(kernels.size()));
    for (std::size_t i = 0; i < kernels.size(); ++i) {
      require(kernels[i].states() == alphabet,
              "field: kernel " + std::to_string(i) + " is not " + std::to_string(alphabet) +
                  "x" + std::to_string(alphabet));
      for (std::size_t r = 0; r < alphabet; ++r)
        detail::check_distribution(kernels[i].row(r), "field: kernel " + std::to_string(i) +
                                                          " row " + std::to_string(r));
    }
  }
};

/// Inverse-CDF draw from a probability row.
template <class Rng>
Symbol draw_symbol(std::span<const double> law, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  Symbol last_positive = 0;
  for (std::size_t s = 0; s < law.size(); ++s) {
    if (law[s] <= 0.0) continue;
    acc += law[s];
    last_positive = static_cast<Symbol>(s);
    if (u < acc) return last_positive;
  }
  return last_positive;  // rounding left u above the cumulative sum
}

/// Fills `out` (length n) with one realization. Spec must be valid.
template <class Rng>
void sample_field_into(const MarkovFieldSpec& spec, Rng& rng, std::span<Symbol> out) {
  out[0] = draw_symbol(std::span<const double>(spec.initial), rng);
  for (std::size_t i = 0; i + 1 < spec.n; ++i) out[i + 1] = draw_symbol(spec.kernels[i].row(out[i]), rng);
}

inline FieldRealization sample_field(const MarkovFieldSpec& spec, std::uint64_t seed) {
  spec.validate();
  CounterRng rng(seed);
  FieldRealization x(spec.n);
  sample_field_into(spec, rng, x);
  return x;
}

/// states^sites, or ResourceLimitError when it exceeds `limit`.
inline std::uint64_t enumeration_size(std::size_t states, std::size_t sites,
                                      std::uint64_t limit = kEnumerationLimit) {
  std::uint64_t total = 1;
  for (std::size_t i = 0; i < sites; ++i) {
    if (states != 0 && total > limit / states)
      throw ResourceLimitError("enumeration of " + std::to_string(states) + "^" +
                               std::to_string(sites) + " states exceeds the cap of " +
                               std::to_string(limit));
    total *= states;
  }
  if (total > limit)
    throw ResourceLimitError("enumeration of " + std::to_string(total) +
                             " states exceeds the cap of " + std::to_string(limit));
  return total;
}

/// Sequence index: site 0 is the most significant base-`states` digit, so
/// index 0b011 with states=2, n=3 is the sequence (0,1,1).
inline void decode_sequence(std::uint64_t index, std::size_t states, std::span<Symbol> out) {
  for (std::size_t i = out.size(); i-- > 0;) {
    out[i] = static_cast<Symbol>(index % states);
    index /= states;
  }
}

inline std::uint64_t encode_sequence(std::span<const Symbol> x, std::size_t states) {
  std::uint64_t index = 0;
  for (Symbol s : x) index = index * states + s;
  return index;
}

/// Exact law over all alphabet^n sequences, indexed as in decode_sequence.
inline std::vector<double> exact_field_distribution(const MarkovFieldSpec& spec) {
  spec.validate();
  enumeration_size(spec.alphabet, spec.n);
  // Extend prefixes site by site; the prefix of length i+1 with index j*S+s
  // extends prefix j with symbol s.
  std::vector<double> table(spec.initial.begin(), spec.initial.end());
  for (std::size_t i = 0; i + 1 < spec.n; ++i) {
    const Kernel& k = spec.kernels[i];
    std::vector<double> next(table.size() * spec.alphabet);
    for (std::uint64_t j = 0; j < table.size(); ++j) {
      const auto last = static_cast<std::size_t>(j % spec.alphabet);
      for (std::size_t s = 0; s < spec.alphabet; ++s) next[j * spec.alphabet + s] = table[j] * k(last, s);
    }
    table = std::move(next);
  }
  return table;
}

/// Per-site marginal laws by forward propagation; no enumeration limit.
inline std::vector<std::vector<double>> site_marginals(const MarkovFieldSpec& spec) {
  spec.validate();
  std::vector<std::vector<double>> out;
  out.reserve(spec.n);
  out.push_back(spec.initial);
  for (std::size_t i = 0; i + 1 < spec.n; ++i) {
    std::vector<double> next(spec.alphabet, 0.0);
    for (std::size_t a = 0; a < spec.alphabet; ++a)
      for (std::size_t b = 0; b < spec.alphabet; ++b) next[b] += out.back()[a] * spec.kernels[i](a, b);
    out.push_back(std::move(next));
  }
  return out;
}

/// Dobrushin coefficient of one kernel: half the largest L1 distance between rows.
inline double kernel_contraction(const Kernel& k) {
  double worst = 0.0;
  for (std::size_t x = 0; x < k.states(); ++x)
    for (std::size_t y = x + 1; y < k.states(); ++y) {
      double l1 = 0.0;
      for (std::size_t a = 0; a < k.states(); ++a) l1 += std::abs(k(x, a) - k(y, a));
      worst = std::max(worst, 0.5 * l1);
    }
  return std::clamp(worst, 0.0, 1.0);
}

/// theta_i for every bond (length n-1).
inline std::vector<double> mixing_coefficients(const MarkovFieldSpec& spec) {
  spec.validate();
  std::vector<double> theta;
  theta.reserve(spec.kernels.size());
  for (const Kernel& k : spec.kernels) theta.push_back(kernel_contraction(k));
  return theta;
}

/// 1 + max_i sum_{k>=i} prod_{j=i}^{k} theta_j over bond indices, which is
/// the chain's row-sum mixing constant. Computed backwards with
/// s_i = theta_i * (1 + s_{i+1}).
inline double mixing_bound_mn(std::span<const double> theta) {
  for (std::size_t i = 0; i < theta.size(); ++i)
    require(theta[i] >= 0.0 && theta[i] <= 1.0,
            "mixing_bound_mn: theta[" + std::to_string(i) + "] outside [0,1]");
  double suffix = 0.0, best = 0.0;
  for (std::size_t i = theta.size(); i-- > 0;) {
    suffix = theta[i] * (1.0 + suffix);
    best = std::max(best, suffix);
  }
  return 1.0 + best;
}

struct MixingProfile {
  std::vector<double> theta;
  double m_n = 1.0;
};

inline MixingProfile mixing_profile(const MarkovFieldSpec& spec) {
  MixingProfile p;
  p.theta = mixing_coefficients(spec);
  p.m_n = mixing_bound_mn(p.theta);
  return p;
}

/// |E[X_k | X_site = 1] - E[X_k | X_site = 0]| for k = site+1 .. n-1 on a
/// binary field. Uses the exact conditional law obtained by pushing the two
/// point masses through the kernels, which by the Markov property equals the
/// enumerated conditional whenever P(X_site = a) > 0.
inline std::vector<double> correlation_decay_profile(const MarkovFieldSpec& spec, std::size_t site) {
  spec.validate();
  if (spec.alphabet != 2) throw ValidationError("correlation_decay_profile: unsupported alphabet (binary only)");
  require(site < spec.n, "correlation_decay_profile: site out of range");
  std::vector<double> from0{1.0, 0.0}, from1{0.0, 1.0}, out;
  for (std::size_t bond = site; bond + 1 < spec.n; ++bond) {
    const Kernel& k = spec.kernels[bond];
    std::vector<double> n0{from0[0] * k(0, 0) + from0[1] * k(1, 0), from0[0] * k(0, 1) + from0[1] * k(1, 1)};
    std::vector<double> n1{from1[0] * k(0, 0) + from1[1] * k(1, 0), from1[0] * k(0, 1) + from1[1] * k(1, 1)};
    from0 = std::move(n0);
    from1 = std::move(n1);
    out.push_back(std::abs(from1[1] - from0[1]));
  }
  return out;
}

}  // namespace corrmem
