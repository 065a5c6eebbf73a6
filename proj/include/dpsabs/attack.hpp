#pragma once

// Tap-and-filter attack on DPS trains.
//
// Eve taps a fraction t of every pulse, soft-filters each tapped state with
// filtering parameter fp and counts the successes k in the train. Trains with
// k < K are blocked; the K-success class is forwarded at reduced intensity,
// classes K < k < N at the untouched (1-t) muA, and the all-success class at
// a possibly amplified intensity. (p1, p2) parametrize the threshold and the
// two adjustable intensities.
//
// fp == 0 is the unambiguous-state-discrimination limit. Every formula is
// evaluated in that limit analytically (the overlap factor fp*e^{...}
// vanishes and the filtered intensity is never materialized).

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "dpsabs/core_math.hpp"
#include "dpsabs/errors.hpp"
#include "dpsabs/protocol.hpp"

namespace dpsabs {

struct AttackParams {
  double t = 0.0;   ///< beam-splitter tap fraction
  double fp = 1.0;  ///< filtering parameter; 0 flags the USD limit
  double p1 = 0.0;  ///< threshold / K-class intensity control, [0, N]
  double p2 = 0.0;  ///< all-success amplification control, [0, 1]

  bool usd() const noexcept { return fp == 0.0; }

  /// max{0, 1 - mu~B / muA}: Eve never forwards more than the optimal intensity.
  static double t_lower_bound(const ProtocolParams& p) {
    return std::max(0.0, 1.0 - optimal_bob_intensity(p.N) / p.muA);
  }

  void validate(const ProtocolParams& p) const {
    if (!(t >= t_lower_bound(p) - 1e-12 && t <= 1.0)) {
      throw DomainError("attack: t=" + std::to_string(t) + " outside its admissible interval");
    }
    if (!(fp >= 0.0 && fp <= 1.0)) throw DomainError("attack: fp outside [0,1]");
    if (!(p1 >= 0.0 && p1 <= static_cast<double>(p.N))) {
      throw DomainError("attack: p1 outside [0,N]");
    }
    if (!(p2 >= 0.0 && p2 <= 1.0)) throw DomainError("attack: p2 outside [0,1]");
  }
};

struct FilterSuccess {
  Probability prob;
  bool degenerate = false;  ///< t*muA == 0 and fp == 1: 0/0, defined as 1
};

/// Soft-filter success probability (1 - e^{-2 t muA}) / (1 - fp e^{-2 t muA}).
inline FilterSuccess filter_success_prob(double t, double fp, double muA) {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("filter_success_prob: t outside [0,1]");
  if (!(fp >= 0.0 && fp <= 1.0)) throw DomainError("filter_success_prob: fp outside [0,1]");
  if (!(muA > 0.0)) throw DomainError("filter_success_prob: muA must be > 0");
  if (fp == 1.0) return {Probability(1.0), t * muA == 0.0};
  const double x = 2.0 * t * muA;
  const double num = -std::expm1(-x);
  const double den = 1.0 - fp * std::exp(-x);
  return {Probability::clamped(num / den), false};
}

/// |beta|^2 = t muA - ln(fp)/2 after successful filtering; +inf for fp == 0.
inline double filter_output_intensity(double t, double fp, double muA) {
  if (!(fp >= 0.0 && fp <= 1.0)) {
    throw DomainError("filter_output_intensity: fp outside [0,1]");
  }
  if (fp == 0.0) return std::numeric_limits<double>::infinity();
  return t * muA - 0.5 * std::log(fp);
}

namespace detail {

// ln C(N, k) for N <= 64, built once from log-gamma.
inline const std::vector<double>& log_binomial_row(int N) {
  static const std::vector<std::vector<double>> table = [] {
    std::vector<std::vector<double>> rows(65);
    for (int n = 0; n <= 64; ++n) {
      rows[static_cast<std::size_t>(n)].resize(static_cast<std::size_t>(n) + 1);
      for (int k = 0; k <= n; ++k) {
        rows[static_cast<std::size_t>(n)][static_cast<std::size_t>(k)] =
            std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
      }
    }
    return rows;
  }();
  return table[static_cast<std::size_t>(N)];
}

}  // namespace detail

/// Binomial(N, ps) mass function, log-gamma coefficients.
inline std::vector<double> success_count_dist(double ps, int N) {
  if (!(ps >= 0.0 && ps <= 1.0)) throw DomainError("success_count_dist: ps outside [0,1]");
  if (N < 1 || N > 64) throw DomainError("success_count_dist: N must lie in [1, 64]");
  std::vector<double> pk(static_cast<std::size_t>(N) + 1, 0.0);
  if (ps == 0.0) {
    pk.front() = 1.0;
    return pk;
  }
  if (ps == 1.0) {
    pk.back() = 1.0;
    return pk;
  }
  const double lp = std::log(ps);
  const double lq = std::log1p(-ps);
  const std::vector<double>& lc = detail::log_binomial_row(N);
  for (int k = 0; k <= N; ++k) {
    pk[static_cast<std::size_t>(k)] = std::exp(lc[static_cast<std::size_t>(k)] + k * lp + (N - k) * lq);
  }
  return pk;
}

/// Everything derived from (AttackParams, ProtocolParams). Immutable value.
struct ResolvedAttack {
  int N = 0;
  int K = 0;                    ///< trains with fewer successes are blocked
  std::vector<double> mu_bob;   ///< intensity forwarded per success count, size N+1
  Probability ps;               ///< per-position filter success probability
  bool ps_degenerate = false;
  std::vector<double> pk;       ///< success-count distribution, size N+1
  std::vector<double> z;        ///< pk[k] * conclusive_prob(mu_bob[k], N)

  double mu_K() const { return mu_bob[static_cast<std::size_t>(K)]; }
  double mu_N() const { return mu_bob.back(); }
};

/// Cap on the all-success intensity: min{muA - ln(fp)/2, mu~B}.
inline double amplified_intensity_cap(double fp, const ProtocolParams& p) {
  const double mu_opt = optimal_bob_intensity(p.N);
  if (fp == 0.0) return mu_opt;
  return std::min(p.muA - 0.5 * std::log(fp), mu_opt);
}

inline ResolvedAttack resolve_schedule(const AttackParams& a, const ProtocolParams& p) {
  p.validate();
  a.validate(p);
  const int N = p.N;
  const double nominal = (1.0 - a.t) * p.muA;

  ResolvedAttack r;
  r.N = N;
  r.K = std::min(static_cast<int>(std::floor(a.p1)), N - 1);
  r.mu_bob.assign(static_cast<std::size_t>(N) + 1, 0.0);
  for (int k = r.K + 1; k < N; ++k) r.mu_bob[static_cast<std::size_t>(k)] = nominal;
  r.mu_bob[static_cast<std::size_t>(r.K)] = (r.K + 1 - a.p1) * nominal;
  const double cap = amplified_intensity_cap(a.fp, p);
  r.mu_bob.back() = nominal + a.p2 * (cap - nominal);

  const FilterSuccess fs = filter_success_prob(a.t, a.fp, p.muA);
  r.ps = fs.prob;
  r.ps_degenerate = fs.degenerate;
  r.pk = success_count_dist(r.ps, N);
  r.z.resize(r.pk.size());
  for (std::size_t k = 0; k < r.pk.size(); ++k) {
    r.z[k] = r.pk[k] * detail::conclusive_prob_raw(r.mu_bob[k], N);
  }
  return r;
}

/// Bob's overall conclusive probability: sum_{k>=K} Z_k.
inline Probability bob_conclusive_under_attack(const ResolvedAttack& r,
                                               const ProtocolParams& /*p*/) {
  double total = 0.0;
  for (std::size_t k = static_cast<std::size_t>(r.K); k < r.z.size(); ++k) total += r.z[k];
  return Probability::clamped(total);
}

namespace detail {

inline double overlap_term(double fp, double mu_gap) {
  if (fp == 0.0) return 0.0;
  return fp * std::exp(-2.0 * mu_gap);
}

// Unclamped lower bounds per success class. The derivative module
// differentiates exactly these expressions.
inline double class_K_bound(int N, int K, double t, double fp, double muA, double muK) {
  const double success_overlap = overlap_term(fp, muA - muK);
  const double tap_overlap = std::exp(-2.0 * ((1.0 - t) * muA - muK));
  return (K * h2(0.5 * (1.0 - success_overlap)) +
          (N - K) * h2(0.5 * (1.0 - std::min(tap_overlap, 1.0))) - 1.0) /
         (N - 1.0);
}

inline double class_mid_bound(int N, int k, double t, double fp, double muA) {
  return (k * h2(0.5 * (1.0 - overlap_term(fp, t * muA))) - 1.0) / (N - 1.0);
}

inline double class_N_bound(int N, double fp, double muA, double muN) {
  const double overlap = std::min(overlap_term(fp, muA - muN), 1.0);
  return (N * h2(0.5 * (1.0 - overlap)) - 1.0) / (N - 1.0);
}

}  // namespace detail

inline InformationBits eve_info_class_K(const AttackParams& a, const ResolvedAttack& r,
                                        const ProtocolParams& p) {
  const double raw = detail::class_K_bound(p.N, r.K, a.t, a.fp, p.muA, r.mu_K());
  return InformationBits(std::max(0.0, raw));
}

inline InformationBits eve_info_class_mid(int k, const AttackParams& a, const ProtocolParams& p,
                                          int K) {
  if (k < K + 1 || k > p.N - 1) {
    throw DomainError("eve_info_class_mid: k=" + std::to_string(k) + " outside [K+1, N-1]");
  }
  return InformationBits(std::max(0.0, detail::class_mid_bound(p.N, k, a.t, a.fp, p.muA)));
}

/// Overload without a threshold: any 1 <= k <= N-1.
inline InformationBits eve_info_class_mid(int k, const AttackParams& a, const ProtocolParams& p) {
  return eve_info_class_mid(k, a, p, 0);
}

inline InformationBits eve_info_class_N(const AttackParams& a, const ResolvedAttack& r,
                                        const ProtocolParams& p) {
  return InformationBits(std::max(0.0, detail::class_N_bound(p.N, a.fp, p.muA, r.mu_N())));
}

/// Clamped information of success class k (0 for blocked classes).
inline InformationBits eve_info_class(int k, const AttackParams& a, const ResolvedAttack& r,
                                      const ProtocolParams& p) {
  if (k < r.K) return InformationBits(0.0);
  if (k == r.K) return eve_info_class_K(a, r, p);
  if (k == p.N) return eve_info_class_N(a, r, p);
  return eve_info_class_mid(k, a, p, r.K);
}

/// Z-weighted mean of the class informations.
inline InformationBits eve_info_total(const AttackParams& a, const ResolvedAttack& r,
                                      const ProtocolParams& p) {
  double weight = 0.0;
  double acc = 0.0;
  for (int k = r.K; k <= p.N; ++k) {
    const double zk = r.z[static_cast<std::size_t>(k)];
    if (zk == 0.0) continue;
    weight += zk;
    acc += zk * eve_info_class(k, a, r, p).value();
  }
  if (!(weight > 0.0)) {
    throw NoConclusiveEventsError("eve_info_total: Bob never obtains a conclusive outcome");
  }
  return InformationBits(std::clamp(acc / weight, 0.0, 1.0));
}

inline InformationBits eve_info_total(const AttackParams& a, const ProtocolParams& p) {
  return eve_info_total(a, resolve_schedule(a, p), p);
}

}  // namespace dpsabs
