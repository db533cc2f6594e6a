#include <cmath>
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "corrmem/code_memory.hpp"
#include "corrmem/stats.hpp"
#include "oracles.hpp"

using namespace corrmem;

namespace {

HiddenErrorModel constant_errors(std::size_t n, double q) {
  return {MarkovFieldSpec::iid_bernoulli(n, 0.5), PerSiteChannel::uniform(n, {q, q})};
}

/// Y_i i.i.d. Bernoulli(p) through a per-site channel on an i.i.d. field.
HiddenErrorModel iid_errors(std::size_t n, double p) {
  return {MarkovFieldSpec::iid_bernoulli(n, p), PerSiteChannel::uniform(n, {0.0, 1.0})};
}

}  // namespace

TEST(EpochStep, Examples) {
  const CodeModel c = CodeModel::from_distance(20, 1, 11);
  EXPECT_EQ(c.tau, 5u);
  EXPECT_EQ(epoch_step(0, c), EpochOutcome::corrected);
  EXPECT_EQ(epoch_step(20, c), EpochOutcome::failed);
  EXPECT_EQ(epoch_step(5, c), EpochOutcome::corrected);
  EXPECT_EQ(epoch_step(6, c), EpochOutcome::failed);
  EXPECT_THROW(epoch_step(21, c), ValidationError);
}

TEST(EpochStep, MonotoneInWeight) {
  for (std::size_t d = 1; d <= 12; ++d) {
    for (auto mode : {DecodingMode::half_distance, DecodingMode::paper_distance}) {
      const CodeModel c = CodeModel::from_distance(12, 1, d, mode);
      bool failed = false;
      for (std::size_t w = 0; w <= 12; ++w) {
        const bool f = epoch_step(w, c) == EpochOutcome::failed;
        EXPECT_TRUE(!failed || f) << "d " << d << " w " << w;
        failed = f;
      }
    }
  }
}

TEST(CodeModel, TauFromMode) {
  EXPECT_EQ(CodeModel::from_distance(30, 2, 11, DecodingMode::paper_distance).tau, 10u);
  EXPECT_EQ(CodeModel::from_distance(30, 2, 1).tau, 0u);
  EXPECT_EQ(CodeModel::with_tau(30, 2, 11, 7).tau, 7u);
  EXPECT_THROW(CodeModel::from_distance(10, 1, 11), ValidationError);
  EXPECT_THROW(CodeModel::from_distance(10, 10, 3), ValidationError);
  EXPECT_THROW(CodeModel::from_distance(10, 1, 0), ValidationError);
  EXPECT_THROW(CodeModel::with_tau(10, 1, 3, 11), ValidationError);
}

TEST(Retention, NoErrorsCensorsEveryTrial) {
  const auto est = simulate_retention(constant_errors(6, 0.0), CodeModel::from_distance(6, 1, 3), 50, 40, 1);
  EXPECT_EQ(est.censored_count, 40u);
  for (auto e : est.failure_epochs) EXPECT_EQ(e, 50u);
  EXPECT_TRUE(std::isnan(est.mean));
  EXPECT_EQ(est.restricted_mean(), 50.0);
}

TEST(Retention, CertainErrorsFailAtOnce) {
  const auto est = simulate_retention(constant_errors(6, 1.0), CodeModel::from_distance(6, 1, 6), 50, 40, 1);
  EXPECT_EQ(est.censored_count, 0u);
  for (auto e : est.failure_epochs) EXPECT_EQ(e, 1u);
  EXPECT_EQ(est.mean, 1.0);
}

TEST(Retention, OnlyTriggerFailuresAreGeometric) {
  // n = 4, eps = 1/2, B = 3: the all-ones event has probability 1/16 and
  // tau = 3 >= B, so nothing else fails.
  const ThresholdModelSpec spec = ThresholdModelSpec::with_threshold(4, 0.5, 3.0);
  const CodeModel code = CodeModel::from_distance(4, 1, 4, DecodingMode::paper_distance);
  ASSERT_GE(static_cast<double>(code.tau), spec.b_n());
  const auto est = simulate_retention(spec, code, 100000, 10000, 77);
  ASSERT_EQ(est.censored_count, 0u);
  const double ceiling = retention_upper_bound(spec);
  EXPECT_NEAR(est.mean, ceiling, 3.0 * est.standard_error);
  EXPECT_LE(est.mean, ceiling * (1.0 + 3.0 * est.standard_error / est.mean));
  EXPECT_LT(ks_statistic_geometric(est.failure_epochs, prob_A(spec)), ks_critical_value(10000, 0.01));
  for (auto e : est.failure_epochs) EXPECT_GE(e, 1u);
}

TEST(Retention, CeilingHoldsAcrossTriggerOnlySpecs) {
  std::uint64_t seed = 300;
  for (std::size_t n : {6u, 10u, 16u}) {
    for (double eps : {0.2, 0.4}) {
      const double b = std::floor(0.7 * static_cast<double>(n));
      const ThresholdModelSpec spec = ThresholdModelSpec::with_threshold(n, eps, b);
      const double p = prob_A(spec);
      if (p < 1e-3) continue;
      const CodeModel code = CodeModel::with_tau(n, 1, n, static_cast<std::size_t>(b));
      const auto est = simulate_retention(spec, code, 10000000, 4000, ++seed);
      ASSERT_EQ(est.censored_count, 0u);
      EXPECT_LE(est.mean, retention_upper_bound(spec) * (1.0 + 3.0 * est.standard_error / est.mean))
          << n << " " << eps;
    }
  }
}

TEST(Retention, IndependentOfWorkerCount) {
  const HiddenErrorModel m{MarkovFieldSpec::homogeneous(8, {0.5, 0.5}, Kernel::binary_symmetric(0.3)),
                           PerSiteChannel::uniform(8, {0.05, 0.4})};
  const CodeModel code = CodeModel::from_distance(8, 1, 5);
  const auto one = simulate_retention(m, code, 1000, 500, 5, Workers{1});
  for (unsigned w : {2u, 3u, 8u}) {
    const auto many = simulate_retention(m, code, 1000, 500, 5, Workers{w});
    EXPECT_EQ(many.failure_epochs, one.failure_epochs);
    EXPECT_EQ(many.mean, one.mean);
  }
}

TEST(Retention, RejectsMismatchedOrEmptyRuns) {
  EXPECT_THROW(simulate_retention(constant_errors(6, 0.1), CodeModel::from_distance(7, 1, 3), 5, 5, 1),
               ValidationError);
  EXPECT_THROW(simulate_retention(constant_errors(6, 0.1), CodeModel::from_distance(6, 1, 3), 5, 0, 1),
               ValidationError);
  EXPECT_THROW(simulate_retention(constant_errors(6, 0.1), CodeModel::from_distance(6, 1, 3), 0, 5, 1),
               ValidationError);
}

TEST(FailureProbability, Examples) {
  EXPECT_EQ(per_epoch_failure_prob_exact(constant_errors(5, 0.0), CodeModel::from_distance(5, 1, 3)).value, 0.0);

  const ThresholdModelSpec three = ThresholdModelSpec::with_threshold(3, 0.5, 1.0);
  EXPECT_NEAR(per_epoch_failure_prob_exact(three, CodeModel::with_tau(3, 1, 3, 2)).value, 0.5, 1e-15);

  const double want = oracle::binomial_sf(10, 0.1, 5.0);
  const auto code = CodeModel::with_tau(10, 1, 10, 5);
  EXPECT_NEAR(per_epoch_failure_prob_exact(iid_errors(10, 0.1), code).value, want, 1e-12 * want);
  EXPECT_NEAR(per_epoch_failure_prob_exact(constant_errors(10, 0.1), code).value, want, 1e-12 * want);
}

TEST(FailureProbability, ExactAgreesWithSampling) {
  std::mt19937_64 g(51);
  constexpr std::uint64_t kTrials = 20000;
  for (int rep = 0; rep < 30; ++rep) {
    const std::size_t n = 2 + rep % 9;
    const auto m = oracle::random_model(g, n, 2 + rep % 2, rep % 3);
    const auto code = CodeModel::with_tau(n, 1, n, g() % (n + 1));
    const auto exact = per_epoch_failure_prob(m, code, EstimateMode::exact);
    const auto mc = per_epoch_failure_prob(m, code, EstimateMode::monte_carlo, kTrials, 1000 + rep);
    EXPECT_TRUE(exact.exact);
    EXPECT_FALSE(mc.exact);
    const double sigma = std::sqrt(exact.value * (1.0 - exact.value) / kTrials);
    EXPECT_NEAR(mc.value, exact.value, 4.0 * sigma + 1e-12) << "rep " << rep;
    EXPECT_LE(mc.ci.lo, mc.value);
    EXPECT_GE(mc.ci.hi, mc.value);
  }
}

TEST(FailureProbability, ExactMatchesOracleWeightLaw) {
  std::mt19937_64 g(52);
  for (int rep = 0; rep < 30; ++rep) {
    const std::size_t n = 1 + rep % 8;
    const auto m = oracle::random_model(g, n, 2, rep % 3);
    const auto w = oracle::weight_law(oracle::error_law(m), n);
    for (std::size_t tau = 0; tau <= n; ++tau) {
      double want = 0.0;
      for (std::size_t k = tau + 1; k <= n; ++k) want += w[k];
      const std::size_t d = std::max<std::size_t>(1, std::min(n, tau));
      EXPECT_NEAR(per_epoch_failure_prob_exact(m, CodeModel::with_tau(n, 0, d, tau)).value, want, 1e-12);
    }
  }
}

TEST(FailureProbability, SamplingIndependentOfWorkerCount) {
  const auto m = constant_errors(9, 0.2);
  const auto code = CodeModel::from_distance(9, 1, 5);
  const auto one = per_epoch_failure_prob_mc(m, code, 5000, 3, Workers{1});
  for (unsigned w : {2u, 8u}) EXPECT_EQ(per_epoch_failure_prob_mc(m, code, 5000, 3, Workers{w}).hits, one.hits);
}

TEST(Lifetime, Examples) {
  const auto lb = lifetime_lower_bound(20, 0.3);
  EXPECT_NEAR(lb.epochs, std::exp(6.0) / 20.0, 1e-9);
  EXPECT_NEAR(lb.epochs, 20.17, 0.01);
  // T epochs each failing with probability <= exp(-b n) fail with probability <= 1/n.
  EXPECT_NEAR(lb.epochs * lb.per_epoch_failure_ceiling, 1.0 / 20.0, 1e-12);
  EXPECT_NEAR(lb.success_probability_floor, 1.0 - 1.0 / 20.0, 1e-15);
  EXPECT_FALSE(lb.degenerate);

  const auto zero = lifetime_lower_bound(20, 0.0);
  EXPECT_NEAR(zero.epochs, 1.0 / 20.0, 1e-15);
  EXPECT_TRUE(zero.degenerate);

  EXPECT_NEAR(lifetime_lower_bound(1, 0.4).epochs, std::exp(0.4), 1e-15);
  EXPECT_THROW(lifetime_lower_bound(10, 1.0), ValidationError);
}

TEST(Scaling, IidErrorsDecayExponentially) {
  ScalingConfig cfg;
  cfg.sizes = {32, 64, 96, 128};
  cfg.b = 0.3;
  const auto rep = scaling_experiment([](std::size_t n) -> ErrorSource { return iid_errors(n, 0.05); }, cfg);
  ASSERT_EQ(rep.rows.size(), 4u);
  for (std::size_t i = 0; i < 4; ++i) {
    const auto& r = rep.rows[i];
    EXPECT_EQ(r.d, static_cast<std::size_t>(std::ceil(0.3 * static_cast<double>(r.n))));
    EXPECT_EQ(r.tau, (r.d - 1) / 2);
    const double want = oracle::binomial_sf(static_cast<std::int64_t>(r.n), 0.05, static_cast<double>(r.tau));
    EXPECT_NEAR(r.p_fail, want, 1e-10 * want);
    if (i == 0) continue;
    EXPECT_LT(r.p_fail, rep.rows[i - 1].p_fail);
  }
  ASSERT_TRUE(rep.fit);
  EXPECT_LT(rep.fit->slope, 0.0);
  EXPECT_EQ(rep.status, ScalingStatus::exponential_consistent);
}

TEST(Scaling, NoErrorsIsInconclusive) {
  ScalingConfig cfg;
  cfg.sizes = {8, 16, 24, 32};
  const auto rep = scaling_experiment([](std::size_t n) -> ErrorSource { return constant_errors(n, 0.0); }, cfg);
  for (const auto& r : rep.rows) {
    EXPECT_EQ(r.p_fail, 0.0);
    EXPECT_FALSE(r.resolved);
  }
  EXPECT_FALSE(rep.fit);
  EXPECT_EQ(rep.status, ScalingStatus::inconclusive);
}

TEST(Scaling, PolynomialTriggerDecayIsNotFlaggedExponential) {
  // tau sits above B_n, so only the all-ones event fails and p_fail = P(A),
  // which falls off like a power of n under C_n = a sqrt(ln n).
  ScalingConfig cfg;
  for (std::size_t n = 64; n <= 65536; n *= 4) cfg.sizes.push_back(n);
  cfg.b = 0.9;
  cfg.mode = DecodingMode::paper_distance;
  auto family = [](std::size_t n) -> ErrorSource { return ThresholdModelSpec::parametric(n, 0.05, 0.5); };
  const auto rep = scaling_experiment(family, cfg);
  for (const auto& r : rep.rows) {
    const auto spec = std::get<ThresholdModelSpec>(family(r.n));
    ASSERT_GE(static_cast<double>(r.tau), spec.b_n());
    EXPECT_NEAR(r.p_fail, prob_A(spec), 1e-12 * prob_A(spec));
  }
  ASSERT_TRUE(rep.fit);
  EXPECT_NE(rep.status, ScalingStatus::exponential_consistent);
}

TEST(Scaling, SamplingPathIsReproducible) {
  ScalingConfig cfg;
  cfg.sizes = {8, 12, 16, 20};
  cfg.b = 0.3;
  cfg.trials = 4000;
  cfg.seed = 11;
  auto family = [](std::size_t n) -> ErrorSource { return iid_errors(n, 0.1); };
  const auto a = scaling_experiment(family, cfg);
  cfg.workers = Workers{4};
  const auto b = scaling_experiment(family, cfg);
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_EQ(a.rows[i].failures, b.rows[i].failures);
    EXPECT_EQ(a.rows[i].resolved, a.rows[i].failures >= cfg.min_failures);
  }
}

TEST(Scaling, RejectsShortGrid) {
  ScalingConfig cfg;
  cfg.sizes = {8, 16, 24};
  EXPECT_THROW(scaling_experiment([](std::size_t n) -> ErrorSource { return iid_errors(n, 0.1); }, cfg),
               ValidationError);
}
