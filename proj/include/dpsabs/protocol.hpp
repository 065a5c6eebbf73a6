#pragma once

// Legitimate DPS link: fiber attenuation and Bob's probability of a
// conclusive outcome (exactly one click in the N-1 central slots, none on
// the four edge modes) for a clean train of per-pulse intensity mu.

#include <algorithm>
#include <cmath>
#include <string>

#include "dpsabs/core_math.hpp"
#include "dpsabs/errors.hpp"

namespace dpsabs {

struct ProtocolParams {
  int N = 10;         ///< pulses per train
  double muA = 0.1;   ///< Alice's mean photon number per pulse

  void validate() const {
    if (N < 3) throw DomainError("block length N must be >= 3");
    if (N > 64) throw DomainError("block length N must be <= 64");
    if (!(muA > 0.0) || !std::isfinite(muA)) throw DomainError("mu_A must be > 0");
  }
};

struct ChannelParams {
  double delta = 0.2;   ///< attenuation, dB/km
  double length = 0.0;  ///< km

  void validate() const {
    if (!(delta > 0.0)) throw DomainError("attenuation delta must be > 0");
    if (!(length >= 0.0)) throw DomainError("channel length must be >= 0");
  }
};

inline double expected_bob_intensity(const ProtocolParams& p, const ChannelParams& c) {
  p.validate();
  c.validate();
  return p.muA * std::pow(10.0, -c.delta * c.length / 10.0);
}

namespace detail {

// (N-1) e^{-(N-1) mu} (1 - e^{-mu}), no validation.
inline double conclusive_prob_raw(double mu, int N) noexcept {
  if (mu <= 0.0) return 0.0;
  const double n1 = static_cast<double>(N - 1);
  const double exponent = n1 * mu;
  const double tail = -std::expm1(-mu);
  if (exponent > 30.0) {
    return std::exp(std::log(n1) - exponent + std::log(tail));
  }
  return n1 * std::exp(-exponent) * tail;
}

// d/dmu of conclusive_prob_raw: (N-1) e^{-N mu} (N - (N-1) e^{mu}).
inline double conclusive_prob_slope(double mu, int N) noexcept {
  const double n = static_cast<double>(N);
  return (n - 1.0) * std::exp(-n * mu) * (n - (n - 1.0) * std::exp(mu));
}

}  // namespace detail

inline Probability conclusive_prob(double mu, int N) {
  if (!(mu >= 0.0)) throw DomainError("conclusive_prob: negative intensity");
  if (N < 3) throw DomainError("conclusive_prob: N must be >= 3");
  return Probability::clamped(detail::conclusive_prob_raw(mu, N));
}

/// Maximizer of conclusive_prob(., N): ln(N / (N-1)).
inline double optimal_bob_intensity(int N) {
  if (N < 3) throw DomainError("optimal_bob_intensity: N must be >= 3");
  return std::log1p(1.0 / static_cast<double>(N - 1));
}

/// Intensity on the increasing branch [0, optimal_bob_intensity(N)] whose
/// conclusive probability equals `target`.
inline double conclusive_prob_inverse(double target, int N) {
  if (N < 3) throw DomainError("conclusive_prob_inverse: N must be >= 3");
  if (!(target >= 0.0 && target <= 1.0)) {
    throw DomainError("conclusive_prob_inverse: target out of [0,1]");
  }
  const double mu_max = optimal_bob_intensity(N);
  const double p_max = detail::conclusive_prob_raw(mu_max, N);
  if (target > p_max) {
    throw InfeasibleError("conclusive_prob_inverse: target " + std::to_string(target) +
                          " exceeds maximum " + std::to_string(p_max));
  }
  if (target == 0.0) return 0.0;
  if (target == p_max) return mu_max;

  // Safeguarded Newton on an increasing, concave-near-the-top function.
  double lo = 0.0;
  double hi = mu_max;
  double mu = std::min(target / static_cast<double>(N - 1), 0.5 * mu_max);
  for (int i = 0; i < 200; ++i) {
    const double f = detail::conclusive_prob_raw(mu, N) - target;
    if (f == 0.0) return mu;
    if (f < 0.0) {
      lo = mu;
    } else {
      hi = mu;
    }
    const double slope = detail::conclusive_prob_slope(mu, N);
    double next = slope > 0.0 ? mu - f / slope : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    if (std::abs(next - mu) <= 1e-15 * std::max(mu, 1e-300) || hi - lo <= 1e-300) {
      return next;
    }
    mu = next;
  }
  return mu;
}

}  // namespace dpsabs
