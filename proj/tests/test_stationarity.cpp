#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "dpsabs/errors.hpp"
#include "dpsabs/sampling.hpp"
#include "dpsabs/stationarity.hpp"

using namespace dpsabs;

namespace {

const ProtocolParams kDefault{10, 0.1};

double log2_ratio(double x) { return std::log2((1.0 + x) / (1.0 - x)); }

// Total information as a function of (p1, p2) at fixed (t, fp).
double info_at(AttackParams a, double p1, double p2, const ProtocolParams& p) {
  a.p1 = p1;
  a.p2 = p2;
  return eve_info_total(a, p).value();
}

}  // namespace

TEST(Derivatives, MatchCentralDifferencesOnRandomInteriorPoints) {
  std::mt19937_64 g(101);
  for (const ProtocolParams& p : {kDefault, ProtocolParams{10, 0.3}, ProtocolParams{5, 0.05},
                                  ProtocolParams{20, 0.1}}) {
    int tested = 0;
    for (int i = 0; i < 1000; ++i) {
      const AttackParams a = random_interior_attack(g, p);
      const ResolvedAttack r = resolve_schedule(a, p);
      ASSERT_TRUE(intensities_interior(a, r, p));
      const auto err = derivative_fd_discrepancies(a, r, p, 1e-6);
      for (double e : err) EXPECT_LT(e, 1e-6);
      ++tested;
    }
    EXPECT_EQ(tested, 1000);
  }
}

TEST(Derivatives, ClosedFormsMatchTheirDefinitions) {
  std::mt19937_64 g(7);
  for (int i = 0; i < 500; ++i) {
    const AttackParams a = random_interior_attack(g, kDefault);
    const ResolvedAttack r = resolve_schedule(a, kDefault);
    const int N = 10;
    const int K = r.K;
    const double muA = 0.1;
    const double x = a.fp * std::exp(-2.0 * (muA - r.mu_K()));
    const double y = std::exp(-2.0 * ((1.0 - a.t) * muA - r.mu_K()));
    const double dIK = -K / (N - 1.0) * x * log2_ratio(x) - (N - K) / (N - 1.0) * y * log2_ratio(y);
    EXPECT_NEAR(dIK_dmuK(a, r, kDefault), dIK, 1e-12 * std::abs(dIK));

    const double ps = r.ps.value();
    const double binomK = std::exp(std::lgamma(N + 1.0) - std::lgamma(K + 1.0) -
                                   std::lgamma(N - K + 1.0)) *
                          std::pow(ps, K) * std::pow(1.0 - ps, N - K);
    const double dZK = binomK * (N - 1) * std::exp(-N * r.mu_K()) * (N - (N - 1) * std::exp(r.mu_K()));
    EXPECT_NEAR(dZK_dmuK(a, r, kDefault), dZK, 1e-12 * std::abs(dZK));

    const double z = a.fp * std::exp(-2.0 * (muA - r.mu_N()));
    EXPECT_NEAR(dIN_dmuN(a, r, kDefault), -N / (N - 1.0) * z * log2_ratio(z), 1e-14);
    const double dZN = std::pow(ps, N) * (N - 1) * std::exp(-N * r.mu_N()) * (N - (N - 1) * std::exp(r.mu_N()));
    EXPECT_NEAR(dZN_dmuN(a, r, kDefault), dZN, 1e-12 * std::abs(dZN) + 1e-300);
  }
}

TEST(Derivatives, UsdDropsSuccessOverlapTerms) {
  const AttackParams a{0.5, 0.0, 4.3, 0.4};
  const ResolvedAttack r = resolve_schedule(a, kDefault);
  const double y = std::exp(-2.0 * ((1.0 - a.t) * 0.1 - r.mu_K()));
  EXPECT_NEAR(dIK_dmuK(a, r, kDefault), -(10 - 4) / 9.0 * y * log2_ratio(y), 1e-14);
  EXPECT_EQ(dIN_dmuN(a, r, kDefault), 0.0);
}

TEST(Derivatives, ZeroThresholdKeepsOnlyTapTerm) {
  const AttackParams a{0.5, 0.4, 0.6, 0.4};
  const ResolvedAttack r = resolve_schedule(a, kDefault);
  ASSERT_EQ(r.K, 0);
  const double y = std::exp(-2.0 * ((1.0 - a.t) * 0.1 - r.mu_K()));
  EXPECT_NEAR(dIK_dmuK(a, r, kDefault), -10 / 9.0 * y * log2_ratio(y), 1e-14);
}

TEST(Derivatives, WeightSlopeChangesSignAtOptimalIntensity) {
  const double m = optimal_bob_intensity(10);
  ResolvedAttack r = resolve_schedule({0.5, 0.5, 3.5, 0.5}, kDefault);
  r.mu_bob[static_cast<std::size_t>(r.K)] = m * (1.0 - 1e-6);
  EXPECT_GT(dZK_dmuK({}, r, kDefault), 0.0);
  r.mu_bob[static_cast<std::size_t>(r.K)] = m * (1.0 + 1e-6);
  EXPECT_LT(dZK_dmuK({}, r, kDefault), 0.0);
  r.mu_bob.back() = m;
  EXPECT_NEAR(dZN_dmuN({}, r, kDefault), 0.0, 1e-14);
}

TEST(Derivatives, NoSuccessesNoWeightSlope) {
  const AttackParams a{0.0, 0.5, 3.5, 0.5};  // t = 0, fp < 1: filtering never succeeds
  const ResolvedAttack r = resolve_schedule(a, kDefault);
  ASSERT_EQ(r.ps.value(), 0.0);
  EXPECT_EQ(dZK_dmuK(a, r, kDefault), 0.0);
}

TEST(Derivatives, CertainSuccessWeightSlope) {
  const AttackParams a{0.5, 1.0, 3.5, 0.5};
  const ResolvedAttack r = resolve_schedule(a, kDefault);
  ASSERT_EQ(r.ps.value(), 1.0);
  const double mu = r.mu_N();
  EXPECT_NEAR(dZN_dmuN(a, r, kDefault), 9.0 * std::exp(-10.0 * mu) * (10.0 - 9.0 * std::exp(mu)), 1e-14);
}

TEST(Derivatives, NonPositiveInformationSlopeForAllSuccessClass) {
  std::mt19937_64 g(31);
  for (int i = 0; i < 2000; ++i) {
    const AttackParams a = random_attack(g, kDefault);
    const ResolvedAttack r = resolve_schedule(a, kDefault);
    if (a.fp * std::exp(-2.0 * (0.1 - r.mu_N())) >= 1.0) continue;
    EXPECT_LE(dIN_dmuN(a, r, kDefault), 0.0);
  }
}

TEST(Derivatives, SingularWhenEntropyArgumentVanishes) {
  // mu_K at the nominal intensity: the tap overlap is 1.
  const AttackParams a{0.5, 0.5, 3.0, 0.5};
  const ResolvedAttack r = resolve_schedule(a, kDefault);
  EXPECT_THROW(dIK_dmuK(a, r, kDefault), SingularInputError);
  // mu_N at muA - ln(fp)/2: the success overlap is 1.
  const AttackParams b{0.5, 1.0, 3.5, 1.0};
  EXPECT_THROW(dIN_dmuN(b, resolve_schedule(b, kDefault), kDefault), SingularInputError);
}

TEST(StationarityResidual, RequiresInteriorIntensities) {
  EXPECT_THROW(stationarity_residual({0.5, 0.5, 3.0, 0.5}, kDefault), DomainError);
  EXPECT_THROW(stationarity_residual({0.5, 0.5, 3.5, 0.0}, kDefault), DomainError);
  EXPECT_THROW(stationarity_residual({0.5, 0.5, 3.5, 1.0}, kDefault), DomainError);
}

TEST(StationarityResidual, DegenerateAtOptimalBobIntensity) {
  // USD caps mu_N at the optimal intensity; p2 just below 1 puts it there to
  // within rounding.
  const AttackParams a{0.5, 0.0, 3.5, 1.0 - 1e-11};
  const ResolvedAttack r = resolve_schedule(a, kDefault);
  ASSERT_TRUE(intensities_interior(a, r, kDefault));
  EXPECT_THROW(stationarity_residual(a, r, kDefault), DegeneratePointError);
}

TEST(StationarityResidual, NotIdenticallyZero) {
  std::mt19937_64 g(41);
  int nonzero = 0;
  for (int i = 0; i < 200; ++i) {
    const StationarityReport rep = stationarity_residual(random_interior_attack(g, kDefault), kDefault);
    EXPECT_TRUE(std::isfinite(rep.residual));
    EXPECT_DOUBLE_EQ(rep.residual, rep.lhs - rep.rhs);
    for (double e : rep.fd_discrepancies) EXPECT_GE(e, 0.0);
    if (std::abs(rep.residual) > 1e-6) ++nonzero;
  }
  EXPECT_GT(nonzero, 150);
}

// Along the detection-rate constraint the directional derivative of the total
// information equals dZK * dZN * residual / sum(Z): the residual vanishes
// exactly where the constrained gradient does.
TEST(StationarityResidual, ProportionalToConstrainedGradient) {
  std::mt19937_64 g(53);
  int tested = 0;
  for (int i = 0; i < 20000 && tested < 300; ++i) {
    const AttackParams a = random_interior_attack(g, kDefault);
    const ResolvedAttack r = resolve_schedule(a, kDefault);
    const double nominal = (1.0 - a.t) * 0.1;
    const double cap = amplified_intensity_cap(a.fp, kDefault);
    if (detail::class_K_bound(10, r.K, a.t, a.fp, 0.1, r.mu_K()) <= 1e-3) continue;
    if (detail::class_N_bound(10, a.fp, 0.1, r.mu_N()) <= 1e-3) continue;
    double W = 0.0;
    for (int k = r.K; k <= 10; ++k) W += r.z[static_cast<std::size_t>(k)];
    // Both classes must carry enough weight for the differences to resolve.
    if (r.z[static_cast<std::size_t>(r.K)] < 1e-3 * W || r.z.back() < 1e-3 * W) continue;
    ++tested;

    const double h = 1e-6;
    const double dI_dp1 =
        (info_at(a, a.p1 + h, a.p2, kDefault) - info_at(a, a.p1 - h, a.p2, kDefault)) / (2 * h);
    const double dI_dp2 =
        (info_at(a, a.p1, a.p2 + h, kDefault) - info_at(a, a.p1, a.p2 - h, kDefault)) / (2 * h);
    const double dI_dmuK = -dI_dp1 / nominal;
    const double dI_dmuN = dI_dp2 / (cap - nominal);

    const double dZK = dZK_dmuK(a, r, kDefault);
    const double dZN = dZN_dmuN(a, r, kDefault);
    const StationarityReport rep = stationarity_residual(a, r, kDefault);

    const double tangent = dI_dmuK * dZN - dI_dmuN * dZK;
    const double predicted = dZK * dZN * rep.residual / W;
    const double scale = std::abs(dI_dmuK * dZN) + std::abs(dI_dmuN * dZK);
    EXPECT_NEAR(tangent, predicted, 1e-4 * scale);
  }
  EXPECT_GT(tested, 100);
}
