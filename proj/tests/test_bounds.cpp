#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "corrmem/bounds.hpp"
#include "oracles.hpp"

using namespace corrmem;

namespace {

/// Binary chain with Dobrushin coefficient theta and a per-site channel.
HiddenErrorModel chain_model(std::size_t n, double theta, std::vector<double> table) {
  return {MarkovFieldSpec::homogeneous(n, {0.5, 0.5}, Kernel::binary_symmetric((1.0 - theta) / 2.0)),
          PerSiteChannel::uniform(n, std::move(table))};
}

std::vector<double> oracle_weights(const HiddenErrorModel& m) {
  return oracle::weight_law(oracle::error_law(m), m.field.n);
}

/// P(sum Y > t) from an oracle weight law.
double tail_of(const std::vector<double>& w, double t) {
  double s = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k)
    if (static_cast<double>(k) > t) s += w[k];
  return s;
}

double oracle_tail(const HiddenErrorModel& m, double t) { return tail_of(oracle_weights(m), t); }

double rate_of(const std::vector<double>& w) {
  double s = 0.0;
  for (std::size_t k = 0; k < w.size(); ++k) s += static_cast<double>(k) * w[k];
  return s / static_cast<double>(w.size() - 1);
}

const std::vector<double> kGrid{0.1, 0.2, 0.3, 0.4, 0.5};

}  // namespace

TEST(BoundFormulas, Examples) {
  EXPECT_EQ(hoeffding_conditional_bound(0.0, 17), 2.0);
  EXPECT_NEAR(hoeffding_conditional_bound(1.0, 1), 2.0 / std::exp(1.0), 1e-15);
  EXPECT_NEAR(kr_bound(1.0, 2, 1.0, 1.0), 2.0 / std::exp(1.0), 1e-15);
  EXPECT_EQ(kr_bound(0.0, 9, 3.0, 2.0), 2.0);
  EXPECT_NEAR(kr_constant(2.0, 3.0), 1.0 / 72.0, 1e-17);
  EXPECT_NEAR(combined_tail_bound(1.0, 4, 1.0, 1.0), 2.0 * std::exp(-1.0) + 2.0 * std::exp(-0.5), 1e-15);
  EXPECT_THROW(kr_bound(0.1, 5, 0.0, 1.0), ValidationError);
  EXPECT_THROW(kr_bound(0.1, 5, 1.0, 0.5), ValidationError);
  EXPECT_THROW(combined_tail_bound(0.0, 5, 1.0, 1.0), ValidationError);
  EXPECT_THROW(hoeffding_conditional_bound(-0.1, 5), ValidationError);
}

TEST(BoundFormulas, CombinedIsSumOfHalves) {
  for (double delta : kGrid)
    for (std::size_t n : {3u, 30u, 300u})
      for (double c : {0.5, 1.0, 4.0})
        for (double m : {1.0, 2.5}) {
          const double h = hoeffding_conditional_bound(delta / 2.0, n);
          const double k = kr_bound(delta / 2.0, n, c, m);
          const double all = combined_tail_bound(delta, n, c, m);
          EXPECT_EQ(all, h + k);
          EXPECT_GE(all, std::max(h, k));
        }
}

TEST(BoundFormulas, Monotone) {
  for (std::size_t n : {1u, 10u, 100u}) {
    double ph = 2.0, pk = 2.0, pc = 4.0;
    for (double x = 0.01; x < 2.0; x += 0.01) {
      const double h = hoeffding_conditional_bound(x, n), k = kr_bound(x, n, 1.5, 1.2),
                   c = combined_tail_bound(x, n, 1.5, 1.2);
      EXPECT_LT(h, ph);
      EXPECT_LT(k, pk);
      EXPECT_LT(c, pc);
      ph = h;
      pk = k;
      pc = c;
    }
  }
  EXPECT_NEAR(combined_tail_bound(1e-9, 10, 1.0, 1.0), 4.0, 1e-12);
  for (double x : {0.1, 0.5}) {
    double ph = 3.0, pk = 3.0;
    for (std::size_t n = 1; n < 200; ++n) {
      EXPECT_LT(hoeffding_conditional_bound(x, n), ph);
      EXPECT_LT(kr_bound(x, n, 2.0, 1.5), pk);
      ph = hoeffding_conditional_bound(x, n);
      pk = kr_bound(x, n, 2.0, 1.5);
    }
  }
}

TEST(Verdict, ExhaustiveAndExclusive) {
  const double bound = 0.3;
  const std::vector<double> points{0.0, 0.1, 0.29, 0.3, 0.31, 0.5, 1.0};
  for (double lo : points)
    for (double hi : points) {
      if (hi < lo) continue;
      const Verdict v = classify({lo, hi}, bound);
      const bool dom = hi <= bound, vio = lo > bound;
      EXPECT_FALSE(dom && vio);
      EXPECT_EQ(v == Verdict::dominated, dom);
      EXPECT_EQ(v == Verdict::violated, vio);
      EXPECT_EQ(v == Verdict::unresolved, !dom && !vio);
    }
  EXPECT_STREQ(to_string(Verdict::unresolved), "unresolved");
}

TEST(ConditionalTail, HoeffdingDominatesOnRandomModels) {
  std::mt19937_64 g(61);
  for (int rep = 0; rep < 60; ++rep) {
    const std::size_t n = 1 + rep % 10;
    const auto m = oracle::random_model(g, n, 2 + rep % 2, rep % 3);
    for (double beta : kGrid) {
      const double exact = exact_conditional_deviation_tail(m, beta);
      EXPECT_LE(exact, hoeffding_conditional_bound(beta, n)) << "rep " << rep << " beta " << beta;
    }
  }
}

TEST(ConditionalTail, MatchesDirectEnumeration) {
  // Worst case over x of P(|sum Y - psi(x)| >= beta n | x), enumerating y as well.
  std::mt19937_64 g(62);
  for (int rep = 0; rep < 12; ++rep) {
    const std::size_t n = 2 + rep % 5;
    const auto m = oracle::random_model(g, n, 2, rep % 2);
    for (double beta : kGrid) {
      double worst = 0.0;
      for (std::uint64_t xi = 0; xi < oracle::ipow(2, n); ++xi) {
        const auto x = oracle::digits(xi, 2, n);
        if (oracle::field_prob(m.field, x) == 0.0) continue;
        std::vector<double> q(n);
        for (std::size_t i = 0; i < n; ++i) q[i] = oracle::q_one(m, x, i);
        const double mean = oracle::psi(m, x);
        double tail = 0.0;
        for (std::uint64_t y = 0; y < oracle::ipow(2, n); ++y) {
          double p = 1.0, w = 0.0;
          for (std::size_t i = 0; i < n; ++i) {
            const double b = oracle::bit(y, n, i);
            p *= b > 0 ? q[i] : 1.0 - q[i];
            w += b;
          }
          if (std::abs(w - mean) >= beta * static_cast<double>(n) - 1e-9) tail += p;
        }
        worst = std::max(worst, tail);
      }
      EXPECT_NEAR(exact_conditional_deviation_tail(m, beta), worst, 1e-12);
    }
  }
}

TEST(FieldTail, MarkovBoundDominatesForHalfContractingChain) {
  // theta = 0.5 chain read through the identity channel: psi(x) = sum x.
  const auto m = chain_model(10, 0.5, {0.0, 1.0});
  const double c = lipschitz_constant(m);
  const double mn = mixing_bound_mn(mixing_coefficients(m.field));
  EXPECT_EQ(c, 1.0);
  for (double beta : kGrid) EXPECT_LE(exact_psi_deviation_tail(m, beta), kr_bound(beta, 10, c, mn)) << beta;
}

TEST(FieldTail, MatchesDirectEnumeration) {
  const auto m = chain_model(8, 0.25, {0.1, 0.6});
  double mean = 0.0;
  std::vector<double> px, val;
  for (std::uint64_t xi = 0; xi < 256; ++xi) {
    const auto x = oracle::digits(xi, 2, 8);
    px.push_back(oracle::field_prob(m.field, x));
    val.push_back(oracle::psi(m, x));
    mean += px.back() * val.back();
  }
  for (double beta : {0.05, 0.1, 0.2}) {
    double want = 0.0;
    for (std::size_t k = 0; k < px.size(); ++k)
      if (std::abs(val[k] - mean) >= beta * 8.0 - 1e-9) want += px[k];
    EXPECT_NEAR(exact_psi_deviation_tail(m, beta), want, 1e-12);
  }
}

TEST(CombinedTail, DominatesTwelveSiteChain) {
  const auto m = chain_model(12, 0.5, {0.05, 0.15});
  const auto w = oracle_weights(m);
  const double eps = rate_of(w);
  for (double delta : kGrid) {
    const TailReport r = verify_bound(m, delta, {}, 0, 0, {}, "chain");
    EXPECT_NEAR(r.eps, eps, 1e-12);
    EXPECT_NEAR(r.threshold, 12.0 * (eps + delta), 1e-12);
    EXPECT_NEAR(r.empirical.estimate, tail_of(w, r.threshold), 1e-12);
    EXPECT_LE(r.empirical.estimate, r.bound);
    EXPECT_EQ(r.verdict, Verdict::dominated);
    EXPECT_EQ(r.model_id, "chain");
    EXPECT_NEAR(r.kr_exponent_constant, kr_constant(r.c, r.m_n), 1e-15);
  }
}

TEST(CombinedTail, SampledVerdictOnTwelveSiteChain) {
  const auto m = chain_model(12, 0.5, {0.05, 0.15});
  const TailReport r = verify_bound(m, 0.2, {}, 20000, 9);
  EXPECT_FALSE(r.empirical.exact);
  EXPECT_EQ(r.empirical.trials, 20000u);
  EXPECT_EQ(r.verdict, Verdict::dominated);
}

TEST(CombinedTail, NeverViolatedOnRandomExactModels) {
  std::mt19937_64 g(63);
  for (int rep = 0; rep < 50; ++rep) {
    const std::size_t n = 2 + rep % 7;
    const auto m = oracle::random_model(g, n, 2 + rep % 2, rep % 3);
    const auto w = oracle_weights(m);
    for (double delta : kGrid) {
      const TailReport r = verify_bound(m, delta, {}, 0, 0);
      EXPECT_NE(r.verdict, Verdict::violated) << "rep " << rep << " delta " << delta;
      EXPECT_NEAR(r.empirical.estimate, tail_of(w, r.threshold), 1e-12);
    }
  }
}

TEST(CombinedTail, AdversarialBoundIsVacuous) {
  const auto spec = ThresholdModelSpec::with_threshold(12, 0.1, 4.0);
  BoundInputs in;
  in.lipschitz = 12.0 - std::floor(spec.b_n());
  for (double delta : {0.1, 0.2, 0.3}) {
    const TailReport r = verify_bound(spec, delta, in, 0, 0);
    EXPECT_TRUE(r.vacuous);
    EXPECT_GT(r.bound, 1.0);
    EXPECT_EQ(r.verdict, Verdict::dominated);
  }
  // The computed constant agrees with the plugged-in one.
  EXPECT_EQ(resolve_bound_inputs(spec, {}).c, 8.0);
}

TEST(CombinedTail, ZeroLipschitzDropsFieldPart) {
  // Constant channel: psi does not depend on x.
  const HiddenErrorModel m{MarkovFieldSpec::iid_bernoulli(6, 0.3), PerSiteChannel::uniform(6, {0.2, 0.2})};
  const TailReport r = verify_bound(m, 0.3, {}, 0, 0);
  EXPECT_EQ(r.c, 0.0);
  EXPECT_EQ(r.bound, hoeffding_conditional_bound(0.15, 6));
  EXPECT_EQ(r.kr_exponent_constant, 0.0);
}

TEST(EmpiricalTail, Trivial) {
  const HiddenErrorModel none{MarkovFieldSpec::iid_bernoulli(5, 0.5), PerSiteChannel::uniform(5, {0.0, 0.0})};
  const auto z = empirical_tail(none, 0.5, 2000, 1);
  EXPECT_EQ(z.estimate, 0.0);
  EXPECT_EQ(z.ci.lo, 0.0);
  EXPECT_GT(z.ci.hi, 0.0);

  const HiddenErrorModel all{MarkovFieldSpec::iid_bernoulli(5, 0.5), PerSiteChannel::uniform(5, {1.0, 1.0})};
  const auto o = empirical_tail(all, 4.5, 2000, 1);
  EXPECT_EQ(o.estimate, 1.0);
  EXPECT_EQ(o.ci.hi, 1.0);

  EXPECT_THROW(empirical_tail(all, 1.0, 999, 1), ValidationError);
}

TEST(EmpiricalTail, IntervalCoversExactValue) {
  const auto m = chain_model(8, 0.25, {0.1, 0.5});
  const double t = 3.0;
  const double exact = oracle_tail(m, t);
  int covered = 0;
  for (std::uint64_t run = 0; run < 100; ++run) {
    const auto e = empirical_tail(m, t, 2000, derive_seed(1234, "coverage", run));
    if (e.ci.lo <= exact && exact <= e.ci.hi) ++covered;
  }
  EXPECT_GE(covered, 95);
}

TEST(EmpiricalTail, IndependentOfWorkerCount) {
  const auto m = chain_model(9, 0.5, {0.1, 0.3});
  const auto one = empirical_tail(m, 2.0, 5000, 4, Workers{1});
  for (unsigned w : {2u, 3u, 8u}) EXPECT_EQ(empirical_tail(m, 2.0, 5000, 4, Workers{w}).hits, one.hits);
}

TEST(ResolveInputs, OverridesWinAndLimitsAreReported) {
  const auto m = chain_model(6, 0.5, {0.1, 0.3});
  BoundInputs in;
  in.eps = 0.42;
  in.lipschitz = 3.0;
  in.m_n = 7.0;
  const auto r = resolve_bound_inputs(m, in);
  EXPECT_EQ(r.eps, 0.42);
  EXPECT_EQ(r.c, 3.0);
  EXPECT_EQ(r.m_n, 7.0);
  in.m_n = 0.5;
  EXPECT_THROW(resolve_bound_inputs(m, in), ValidationError);

  // A window channel on 30 sites has no closed form and cannot be brute-forced.
  HiddenErrorModel big{MarkovFieldSpec::iid_bernoulli(30, 0.5), WindowChannel{1, {}}};
  std::get<WindowChannel>(big.channel).error_prob.assign(30, std::vector<double>(8, 0.1));
  BoundInputs with_eps;
  with_eps.eps = 0.1;
  EXPECT_THROW(resolve_bound_inputs(big, with_eps), ValidationError);
}
