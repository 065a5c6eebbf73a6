#pragma once

// Random attack parameters for validation runs and property checks.

#include <algorithm>
#include <cmath>
#include <random>

#include "dpsabs/attack.hpp"
#include "dpsabs/protocol.hpp"

namespace dpsabs {

/// Any admissible attack: t uniform over its interval, fp log-uniform in
/// [1e-6, 1] with the USD flag one draw in ten, p1 uniform in [0, N), p2
/// uniform in [0, 1].
template <typename Gen>
AttackParams random_attack(Gen& g, const ProtocolParams& p) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  AttackParams a;
  const double t_lo = AttackParams::t_lower_bound(p);
  a.t = t_lo + u(g) * (1.0 - t_lo);
  a.fp = u(g) < 0.1 ? 0.0 : std::pow(10.0, -6.0 * u(g));
  a.p1 = u(g) * p.N;
  a.p2 = u(g);
  return a;
}

/// Attack whose K- and N-class intensities sit well inside their ranges:
/// t at most 0.9, fp log-uniform in [0.05, 0.9], fractional part of p1 and p2 in
/// [0.1, 0.9].
template <typename Gen>
AttackParams random_interior_attack(Gen& g, const ProtocolParams& p) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  AttackParams a;
  const double t_lo = AttackParams::t_lower_bound(p);
  const double t_hi = 0.9;
  a.t = t_lo + (0.05 + 0.9 * u(g)) * (std::max(t_hi, t_lo + 1e-3) - t_lo);
  a.fp = 0.05 * std::pow(18.0, u(g));
  const int K = std::uniform_int_distribution<int>(0, p.N - 1)(g);
  a.p1 = K + 0.1 + 0.8 * u(g);
  a.p2 = 0.1 + 0.8 * u(g);
  return a;
}

}  // namespace dpsabs
