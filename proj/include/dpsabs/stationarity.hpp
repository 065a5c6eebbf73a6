#pragma once

// Closed-form derivatives of the K- and N-class information bounds and
// weights with respect to their forwarded intensities, and the stationarity
// relation
//
//   I_K + Z_K * dI_K/dZ_K  ==  I_N + Z_N * dI_N/dZ_N
//
// that any interior maximizer of Eve's information satisfies under the
// detection-rate constraint (both sides equal I_total + lambda * P_conc).
// Logarithms are base 2, matching binary_entropy.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>

#include "dpsabs/attack.hpp"
#include "dpsabs/errors.hpp"
#include "dpsabs/protocol.hpp"

namespace dpsabs {

struct StationarityReport {
  double lhs = 0.0;       ///< K side
  double rhs = 0.0;       ///< N side
  double residual = 0.0;  ///< lhs - rhs
  /// Relative errors of dIK, dZK, dIN, dZN against central differences.
  std::array<double, 4> fd_discrepancies{};

  double scaled_residual() const { return std::abs(residual) / std::max(1.0, std::abs(lhs)); }
};

namespace detail {

// x * log2((1+x)/(1-x)); singular at x == 1.
inline double overlap_log_ratio(double x) {
  if (x == 0.0) return 0.0;
  if (x >= 1.0) throw SingularInputError("entropy argument is 0: log ratio diverges");
  return x * (std::log1p(x) - std::log1p(-x)) / std::log(2.0);
}

inline double rel_error(double analytic, double numeric) {
  const double scale = std::max(std::abs(analytic), std::abs(numeric));
  if (scale == 0.0) return 0.0;
  return std::abs(analytic - numeric) / scale;
}

// Central difference of f at x with step h.
inline double central_diff(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

}  // namespace detail

/// dI_K/dmu_K for the unclamped K-class bound.
inline double dIK_dmuK(const AttackParams& a, const ResolvedAttack& r, const ProtocolParams& p) {
  const double n1 = p.N - 1.0;
  const double muK = r.mu_K();
  const double success = detail::overlap_term(a.fp, p.muA - muK);
  const double tap = std::exp(-2.0 * ((1.0 - a.t) * p.muA - muK));
  double d = -(r.N - r.K) / n1 * detail::overlap_log_ratio(tap);
  if (r.K > 0) d -= r.K / n1 * detail::overlap_log_ratio(success);
  return d;
}

inline double dZK_dmuK(const AttackParams& /*a*/, const ResolvedAttack& r,
                       const ProtocolParams& p) {
  return r.pk[static_cast<std::size_t>(r.K)] * detail::conclusive_prob_slope(r.mu_K(), p.N);
}

inline double dIN_dmuN(const AttackParams& a, const ResolvedAttack& r, const ProtocolParams& p) {
  const double x = detail::overlap_term(a.fp, p.muA - r.mu_N());
  return -p.N / (p.N - 1.0) * detail::overlap_log_ratio(x);
}

inline double dZN_dmuN(const AttackParams& /*a*/, const ResolvedAttack& r,
                       const ProtocolParams& p) {
  return r.pk.back() * detail::conclusive_prob_slope(r.mu_N(), p.N);
}

/// True when mu_K and mu_N both lie strictly inside their admissible ranges.
inline bool intensities_interior(const AttackParams& a, const ResolvedAttack& r,
                                 const ProtocolParams& p) {
  const double nominal = (1.0 - a.t) * p.muA;
  const double cap = amplified_intensity_cap(a.fp, p);
  return r.mu_K() > 0.0 && r.mu_K() < nominal && r.mu_N() > nominal && r.mu_N() < cap;
}

/// Central differences of the K- and N-class bounds and weights in their
/// intensities (dIK, dZK, dIN, dZN), step at most `step` and kept inside the
/// admissible intervals.
inline std::array<double, 4> derivative_fd_values(const AttackParams& a, const ResolvedAttack& r,
                                                  const ProtocolParams& p, double step = 1e-6) {
  const double nominal = (1.0 - a.t) * p.muA;
  const double cap = amplified_intensity_cap(a.fp, p);
  const double muK = r.mu_K();
  const double muN = r.mu_N();
  const double hK = std::min(step, 0.5 * std::min(muK, nominal - muK));
  const double hN = std::min(step, 0.5 * std::min(muN - nominal, cap - muN));
  const double pK = r.pk[static_cast<std::size_t>(r.K)];
  const double pN = r.pk.back();

  const auto IK = [&](double mu) {
    return detail::class_K_bound(p.N, r.K, a.t, a.fp, p.muA, mu);
  };
  const auto ZK = [&](double mu) { return pK * detail::conclusive_prob_raw(mu, p.N); };
  const auto IN = [&](double mu) { return detail::class_N_bound(p.N, a.fp, p.muA, mu); };
  const auto ZN = [&](double mu) { return pN * detail::conclusive_prob_raw(mu, p.N); };

  return {detail::central_diff(IK, muK, hK), detail::central_diff(ZK, muK, hK),
          detail::central_diff(IN, muN, hN), detail::central_diff(ZN, muN, hN)};
}

/// Closed forms (dIK, dZK, dIN, dZN).
inline std::array<double, 4> derivative_closed_forms(const AttackParams& a,
                                                     const ResolvedAttack& r,
                                                     const ProtocolParams& p) {
  return {dIK_dmuK(a, r, p), dZK_dmuK(a, r, p), dIN_dmuN(a, r, p), dZN_dmuN(a, r, p)};
}

/// Relative errors of the closed forms against central differences.
inline std::array<double, 4> derivative_fd_discrepancies(const AttackParams& a,
                                                         const ResolvedAttack& r,
                                                         const ProtocolParams& p,
                                                         double step = 1e-6) {
  const std::array<double, 4> exact = derivative_closed_forms(a, r, p);
  const std::array<double, 4> numeric = derivative_fd_values(a, r, p, step);
  std::array<double, 4> out{};
  for (std::size_t i = 0; i < 4; ++i) out[i] = detail::rel_error(exact[i], numeric[i]);
  return out;
}

inline StationarityReport stationarity_residual(const AttackParams& a, const ResolvedAttack& r,
                                                const ProtocolParams& p) {
  if (!intensities_interior(a, r, p)) {
    throw DomainError("stationarity_residual: mu_K and mu_N must be strictly interior");
  }
  const double dZK = dZK_dmuK(a, r, p);
  const double dZN = dZN_dmuN(a, r, p);
  // The Z-derivatives vanish only through the factor N - (N-1) e^{mu}.
  const auto shape = [&](double mu) {
    return std::abs(p.N - (p.N - 1.0) * std::exp(mu)) / p.N;
  };
  if (dZK == 0.0 || dZN == 0.0 || shape(r.mu_K()) < 1e-12 || shape(r.mu_N()) < 1e-12) {
    throw DegeneratePointError("stationarity_residual: Z-derivative vanishes");
  }

  StationarityReport rep;
  const double IK = detail::class_K_bound(p.N, r.K, a.t, a.fp, p.muA, r.mu_K());
  const double IN = detail::class_N_bound(p.N, a.fp, p.muA, r.mu_N());
  const double ZK = r.z[static_cast<std::size_t>(r.K)];
  const double ZN = r.z.back();
  rep.lhs = IK + ZK * dIK_dmuK(a, r, p) / dZK;
  rep.rhs = IN + ZN * dIN_dmuN(a, r, p) / dZN;
  rep.residual = rep.lhs - rep.rhs;
  rep.fd_discrepancies = derivative_fd_discrepancies(a, r, p);
  return rep;
}

inline StationarityReport stationarity_residual(const AttackParams& a, const ProtocolParams& p) {
  return stationarity_residual(a, resolve_schedule(a, p), p);
}

}  // namespace dpsabs
