#include <gtest/gtest.h>

#include <boost/math/distributions/binomial.hpp>

#include <cmath>
#include <random>

#include "dpsabs/attack.hpp"
#include "dpsabs/errors.hpp"
#include "dpsabs/sampling.hpp"

using namespace dpsabs;

namespace {

const ProtocolParams kDefault{10, 0.1};

double ref_h2(double x) {
  if (x <= 0.0 || x >= 1.0) return 0.0;
  return -x * std::log2(x) - (1.0 - x) * std::log2(1.0 - x);
}

// Class bounds written out again from their definitions.
double ref_IK(int N, int K, double t, double fp, double muA, double muK) {
  return (K * ref_h2((1.0 - fp * std::exp(-2.0 * (muA - muK))) / 2.0) +
          (N - K) * ref_h2((1.0 - std::exp(-2.0 * ((1.0 - t) * muA - muK))) / 2.0) - 1.0) /
         (N - 1.0);
}
double ref_Imid(int N, int k, double t, double fp, double muA) {
  return (k * ref_h2((1.0 - fp * std::exp(-2.0 * t * muA)) / 2.0) - 1.0) / (N - 1.0);
}
double ref_IN(int N, double fp, double muA, double muN) {
  return (N * ref_h2((1.0 - fp * std::exp(-2.0 * (muA - muN))) / 2.0) - 1.0) / (N - 1.0);
}

}  // namespace

TEST(FilterSuccessProb, Examples) {
  EXPECT_EQ(filter_success_prob(1.0, 1.0, 0.1).prob.value(), 1.0);
  EXPECT_NEAR(filter_success_prob(1.0, 0.0, 0.1).prob.value(), 1.0 - std::exp(-0.2), 1e-16);
  EXPECT_NEAR(filter_success_prob(1.0, 0.0, 0.1).prob.value(), 0.181269, 1e-6);
  const double e = std::exp(-0.2);
  EXPECT_NEAR(filter_success_prob(1.0, 0.5, 0.1).prob.value(), (1.0 - e) / (1.0 - 0.5 * e), 1e-15);
}

TEST(FilterSuccessProb, DegenerateZeroTapIsFlagged) {
  const FilterSuccess fs = filter_success_prob(0.0, 1.0, 0.1);
  EXPECT_EQ(fs.prob.value(), 1.0);
  EXPECT_TRUE(fs.degenerate);
  EXPECT_FALSE(filter_success_prob(0.5, 1.0, 0.1).degenerate);
}

TEST(FilterSuccessProb, IdentityAndUsdLimits) {
  for (double t : {0.25, 0.5, 1.0}) {
    EXPECT_EQ(filter_success_prob(t, 1.0, 0.1).prob.value(), 1.0);
    EXPECT_LT(std::abs(filter_success_prob(t, 1e-12, 0.1).prob.value() - (1.0 - std::exp(-2.0 * t * 0.1))),
              1e-9);
  }
}

TEST(FilterSuccessProb, DomainErrors) {
  EXPECT_THROW(filter_success_prob(1.5, 0.5, 0.1), DomainError);
  EXPECT_THROW(filter_success_prob(0.5, 1.5, 0.1), DomainError);
  EXPECT_THROW(filter_success_prob(0.5, 0.5, 0.0), DomainError);
}

TEST(FilterOutputIntensity, Examples) {
  EXPECT_DOUBLE_EQ(filter_output_intensity(1.0, 1.0, 0.1), 0.1);
  EXPECT_NEAR(filter_output_intensity(1.0, std::exp(-0.2), 0.1), 0.2, 1e-15);
  EXPECT_DOUBLE_EQ(filter_output_intensity(0.5, 1.0, 0.1), 0.05);
  EXPECT_TRUE(std::isinf(filter_output_intensity(0.5, 0.0, 0.1)));
  EXPECT_THROW(filter_output_intensity(0.5, 1.01, 0.1), DomainError);
}

TEST(ResolveSchedule, Examples) {
  {
    const ResolvedAttack r = resolve_schedule({0.0, 0.5, 3.25, 0.0}, kDefault);
    EXPECT_EQ(r.K, 3);
    EXPECT_NEAR(r.mu_K(), 0.075, 1e-16);
    for (int k = 0; k < 3; ++k) EXPECT_EQ(r.mu_bob[static_cast<std::size_t>(k)], 0.0);
  }
  {
    const ResolvedAttack r = resolve_schedule({0.3, 0.5, 0.0, 0.0}, kDefault);
    EXPECT_EQ(r.K, 0);
    for (double mu : r.mu_bob) EXPECT_NEAR(mu, 0.07, 1e-16);
  }
  {
    const ResolvedAttack r = resolve_schedule({1.0, 0.5, 2.0, 1.0}, kDefault);
    EXPECT_NEAR(r.mu_N(), std::log(10.0 / 9.0), 1e-15);
    EXPECT_NEAR(r.mu_N(), 0.105361, 1e-6);
  }
}

TEST(ResolveSchedule, FullThresholdKeepsOnlyAllSuccessTrains) {
  const ResolvedAttack r = resolve_schedule({0.5, 0.5, 10.0, 0.3}, kDefault);
  EXPECT_EQ(r.K, 9);
  EXPECT_EQ(r.mu_K(), 0.0);
  EXPECT_GT(r.mu_N(), 0.0);
}

TEST(ResolveSchedule, RejectsInvalidParams) {
  EXPECT_THROW(resolve_schedule({0.5, 0.5, 10.5, 0.3}, kDefault), DomainError);
  EXPECT_THROW(resolve_schedule({0.5, 0.5, 1.0, 1.3}, kDefault), DomainError);
  EXPECT_THROW(resolve_schedule({0.5, -0.1, 1.0, 0.3}, kDefault), DomainError);
  // muA above the optimal Bob intensity raises the lower bound on t.
  const ProtocolParams strong{10, 0.3};
  EXPECT_NEAR(AttackParams::t_lower_bound(strong), 1.0 - std::log(10.0 / 9.0) / 0.3, 1e-15);
  EXPECT_THROW(resolve_schedule({0.1, 0.5, 1.0, 0.3}, strong), DomainError);
  EXPECT_EQ(AttackParams::t_lower_bound(kDefault), 0.0);
}

TEST(ResolveSchedule, InvariantsOnRandomDraws) {
  std::mt19937_64 g(21);
  for (int i = 0; i < 2000; ++i) {
    const ProtocolParams p{3 + static_cast<int>(g() % 30), 0.01 + 0.5 * (g() % 1000) / 1000.0};
    const AttackParams a = random_attack(g, p);
    const ResolvedAttack r = resolve_schedule(a, p);
    const double nominal = (1.0 - a.t) * p.muA;
    const double cap = amplified_intensity_cap(a.fp, p);
    for (int k = 0; k < r.K; ++k) EXPECT_EQ(r.mu_bob[static_cast<std::size_t>(k)], 0.0);
    EXPECT_GE(r.mu_K(), 0.0);
    EXPECT_LE(r.mu_K(), nominal * (1.0 + 1e-15));
    for (int k = r.K + 1; k < p.N; ++k) EXPECT_EQ(r.mu_bob[static_cast<std::size_t>(k)], nominal);
    EXPECT_GE(r.mu_N(), nominal * (1.0 - 1e-15));
    EXPECT_LE(r.mu_N(), cap * (1.0 + 1e-15));

    double sum = 0.0;
    for (double q : r.pk) sum += q;
    EXPECT_NEAR(sum, 1.0, 1e-12);

    // Entropy arguments stay in [0, 1/2].
    EXPECT_LE(a.fp * std::exp(-2.0 * (p.muA - r.mu_N())), 1.0 + 1e-15);
    EXPECT_LE(a.fp * std::exp(-2.0 * (p.muA - r.mu_K())), 1.0 + 1e-15);

    const double ps = r.ps.value();
    for (int k = 0; k <= p.N; ++k) {
      const double mu = r.mu_bob[static_cast<std::size_t>(k)];
      const double binom =
          ps == 0.0 || ps == 1.0 ? r.pk[static_cast<std::size_t>(k)]
                                 : boost::math::pdf(boost::math::binomial_distribution<>(p.N, ps), k);
      const double z_direct = binom * (p.N - 1) * std::exp(-p.N * mu) * (std::exp(mu) - 1.0);
      EXPECT_NEAR(r.z[static_cast<std::size_t>(k)], z_direct, 1e-12);
      EXPECT_NEAR(r.z[static_cast<std::size_t>(k)],
                  r.pk[static_cast<std::size_t>(k)] * conclusive_prob(mu, p.N).value(), 1e-12);
    }
  }
}

TEST(SuccessCountDist, Examples) {
  const std::vector<double> all = success_count_dist(1.0, 10);
  EXPECT_EQ(all.back(), 1.0);
  const std::vector<double> coin = success_count_dist(0.5, 2);
  ASSERT_EQ(coin.size(), 3u);
  EXPECT_NEAR(coin[0], 0.25, 1e-15);
  EXPECT_NEAR(coin[1], 0.5, 1e-15);
  EXPECT_NEAR(coin[2], 0.25, 1e-15);
  const double ps = 0.306902;
  EXPECT_NEAR(success_count_dist(ps, 10).back(), std::pow(ps, 10), 1e-18);
}

TEST(SuccessCountDist, MatchesBinomialOracle) {
  std::mt19937_64 g(4);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 300; ++i) {
    const int N = 1 + static_cast<int>(g() % 64);
    const double ps = u(g);
    const std::vector<double> pk = success_count_dist(ps, N);
    const boost::math::binomial_distribution<> ref(N, ps);
    double sum = 0.0;
    for (int k = 0; k <= N; ++k) {
      EXPECT_NEAR(pk[static_cast<std::size_t>(k)], boost::math::pdf(ref, k), 1e-13);
      sum += pk[static_cast<std::size_t>(k)];
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
}

TEST(BobConclusiveUnderAttack, IdentityAttackMatchesCleanLink) {
  const ResolvedAttack r = resolve_schedule({0.0, 1.0, 0.0, 0.0}, kDefault);
  EXPECT_NEAR(bob_conclusive_under_attack(r, kDefault).value(), conclusive_prob(0.1, 10).value(),
              1e-15);
}

TEST(BobConclusiveUnderAttack, FullBlockingLeavesOnlyAllSuccessTerm) {
  const ResolvedAttack r = resolve_schedule({1.0, 0.2, 10.0, 0.7}, kDefault);
  EXPECT_NEAR(bob_conclusive_under_attack(r, kDefault).value(), r.z.back(), 1e-18);
}

TEST(BobConclusiveUnderAttack, BoundedByMaximum) {
  std::mt19937_64 g(8);
  const double top = conclusive_prob(optimal_bob_intensity(10), 10).value();
  for (int i = 0; i < 2000; ++i) {
    const ResolvedAttack r = resolve_schedule(random_attack(g, kDefault), kDefault);
    EXPECT_LE(bob_conclusive_under_attack(r, kDefault).value(), top + 1e-15);
  }
}

TEST(BobConclusiveUnderAttack, NonIncreasingAndContinuousInThreshold) {
  std::mt19937_64 g(13);
  for (int i = 0; i < 12; ++i) {
    AttackParams a = random_attack(g, kDefault);
    double prev = 2.0;
    for (int j = 0; j <= 10000; ++j) {
      a.p1 = 10.0 * j / 10000.0;
      const double c = bob_conclusive_under_attack(resolve_schedule(a, kDefault), kDefault).value();
      EXPECT_LE(c, prev + 1e-15);
      if (j > 0) {
        EXPECT_LT(prev - c, 1e-3);
      }
      prev = c;
    }
  }
}

TEST(EveInfoClassK, Examples) {
  // Integer p1: the tap term vanishes and the bound takes the mid-class form.
  const AttackParams a{0.4, 0.5, 3.0, 0.2};
  const ResolvedAttack r = resolve_schedule(a, kDefault);
  EXPECT_NEAR(eve_info_class_K(a, r, kDefault).value(),
              std::max(0.0, ref_Imid(10, 3, a.t, a.fp, 0.1)), 1e-15);

  const AttackParams b{0.4, 0.5, 0.0, 0.2};
  EXPECT_EQ(eve_info_class_K(b, resolve_schedule(b, kDefault), kDefault).value(), 0.0);

  const double arg = (1.0 - 0.5 * std::exp(-0.2)) / 2.0;
  EXPECT_NEAR(arg, 0.295317, 1e-6);
  EXPECT_NEAR(detail::class_K_bound(10, 9, 1.0, 0.5, 0.1, 0.0), ref_IK(10, 9, 1.0, 0.5, 0.1, 0.0),
              1e-15);
}

TEST(EveInfoClassK, MatchesReferenceOnRandomDraws) {
  std::mt19937_64 g(17);
  for (int i = 0; i < 2000; ++i) {
    const AttackParams a = random_attack(g, kDefault);
    const ResolvedAttack r = resolve_schedule(a, kDefault);
    const double ref = std::max(0.0, ref_IK(10, r.K, a.t, a.fp, 0.1, r.mu_K()));
    EXPECT_NEAR(eve_info_class_K(a, r, kDefault).value(), ref, 1e-14);
  }
}

TEST(EveInfoClassMid, Examples) {
  EXPECT_EQ(eve_info_class_mid(5, {0.0, 1.0, 0.0, 0.0}, kDefault).value(), 0.0);
  const double v = eve_info_class_mid(9, {1.0, 0.5, 0.0, 0.0}, kDefault).value();
  EXPECT_NEAR(v, ref_Imid(10, 9, 1.0, 0.5, 0.1), 1e-15);
  EXPECT_NEAR(v, 0.7644, 1e-4);
  EXPECT_THROW(eve_info_class_mid(0, {1.0, 0.5, 0.0, 0.0}, kDefault), DomainError);
  EXPECT_THROW(eve_info_class_mid(10, {1.0, 0.5, 0.0, 0.0}, kDefault), DomainError);
  EXPECT_THROW(eve_info_class_mid(3, {1.0, 0.5, 4.5, 0.0}, kDefault, 4), DomainError);
}

TEST(EveInfoClassMid, UsdGivesOneBitPerSuccess) {
  for (double t : {0.1, 0.5, 1.0}) {
    const AttackParams a{t, 0.0, 0.0, 0.0};
    for (int k = 1; k < 10; ++k) {
      EXPECT_EQ(eve_info_class_mid(k, a, kDefault).value(), (k - 1) / 9.0);
    }
    EXPECT_NEAR(filter_success_prob(t, 0.0, 0.1).prob.value(), 1.0 - std::exp(-2.0 * t * 0.1),
                1e-16);
  }
}

TEST(EveInfoClassN, Examples) {
  // mu_N at its cap muA - ln(fp)/2: identical states, clamped to zero.
  const AttackParams a{0.5, 0.995, 2.0, 1.0};
  const ResolvedAttack r = resolve_schedule(a, kDefault);
  EXPECT_NEAR(r.mu_N(), 0.1 - 0.5 * std::log(0.995), 1e-15);
  EXPECT_EQ(eve_info_class_N(a, r, kDefault).value(), 0.0);

  const AttackParams b{1.0, 0.5, 2.0, 0.0};
  const ResolvedAttack rb = resolve_schedule(b, kDefault);
  EXPECT_EQ(rb.mu_N(), 0.0);
  EXPECT_NEAR(eve_info_class_N(b, rb, kDefault).value(),
              std::max(0.0, ref_Imid(10, 10, 1.0, 0.5, 0.1)), 1e-15);

  EXPECT_NEAR((1.0 - 0.5 * std::exp(-0.1)) / 2.0, 0.2737906, 1e-7);
  EXPECT_NEAR(detail::class_N_bound(10, 0.5, 0.1, 0.05), ref_IN(10, 0.5, 0.1, 0.05), 1e-15);
}

TEST(EveInfoTotal, PassiveAttackYieldsNothing) {
  EXPECT_EQ(eve_info_total({0.0, 1.0, 0.0, 0.0}, kDefault).value(), 0.0);
}

TEST(EveInfoTotal, SingleClassGivesItsValue) {
  const AttackParams a{0.6, 1.0, 4.0, 0.5};  // fp = 1: every train succeeds
  const ResolvedAttack r = resolve_schedule(a, kDefault);
  EXPECT_NEAR(eve_info_total(a, r, kDefault).value(), eve_info_class_N(a, r, kDefault).value(),
              1e-15);
  // Only the tap term of the all-success class remains.
  EXPECT_NEAR(eve_info_class_N(a, r, kDefault).value(),
              std::max(0.0, ref_IN(10, 1.0, 0.1, r.mu_N())), 1e-15);
}

TEST(EveInfoTotal, WeightedMeanOfClasses) {
  std::mt19937_64 g(23);
  for (int i = 0; i < 2000; ++i) {
    const AttackParams a = random_attack(g, kDefault);
    const ResolvedAttack r = resolve_schedule(a, kDefault);
    double w = 0.0;
    double acc = 0.0;
    double lo = 1.0;
    double hi = 0.0;
    for (int k = r.K; k <= 10; ++k) {
      const double zk = r.z[static_cast<std::size_t>(k)];
      if (zk == 0.0) continue;
      const double v = eve_info_class(k, a, r, kDefault).value();
      w += zk;
      acc += zk * v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    if (w == 0.0) {
      EXPECT_THROW(eve_info_total(a, r, kDefault), NoConclusiveEventsError);
      continue;
    }
    const double total = eve_info_total(a, r, kDefault).value();
    EXPECT_NEAR(total, acc / w, 1e-14);
    EXPECT_GE(total, lo - 1e-15);
    EXPECT_LE(total, hi + 1e-15);
    EXPECT_GE(total, 0.0);
    EXPECT_LE(total, 1.0);
  }
}

TEST(EveInfoTotal, EverythingBlockedThrows) {
  EXPECT_THROW(eve_info_total({1.0, 0.5, 10.0, 0.0}, kDefault), NoConclusiveEventsError);
}
