#pragma once

// Scalar information-theoretic primitives: binary entropy, its inverse on
// [0, 1/2], coherent-state overlaps and the Holevo value of a symmetric
// binary coherent ensemble. All information is measured in bits.

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "dpsabs/errors.hpp"

namespace dpsabs {

/// A real number in [0, 1].
class Probability {
 public:
  constexpr Probability() noexcept = default;

  explicit Probability(double v) : value_(v) {
    if (!(v >= 0.0 && v <= 1.0)) {
      throw DomainError("probability out of [0,1]: " + std::to_string(v));
    }
  }

  /// Accepts values that overshoot [0,1] by floating-point rounding only.
  static Probability clamped(double v, double slack = 1e-12) {
    if (v < 0.0 && v >= -slack) v = 0.0;
    if (v > 1.0 && v <= 1.0 + slack) v = 1.0;
    return Probability(v);
  }

  constexpr double value() const noexcept { return value_; }
  constexpr operator double() const noexcept { return value_; }

 private:
  double value_ = 0.0;
};

/// Information in bits per key position.
class InformationBits {
 public:
  constexpr InformationBits() noexcept = default;

  explicit InformationBits(double v) : value_(v) {
    if (!std::isfinite(v)) throw DomainError("information value is not finite");
  }

  constexpr double value() const noexcept { return value_; }
  constexpr operator double() const noexcept { return value_; }

 private:
  double value_ = 0.0;
};

namespace detail {

// x*log2(x) with the 0*log(0) = 0 limit made explicit.
inline double xlog2x(double x) noexcept {
  if (x <= 0.0) return 0.0;
  return x * std::log2(x);
}

// Unchecked h2; callers guarantee x in [0,1].
inline double h2(double x) noexcept {
  if (x <= 0.0 || x >= 1.0) return 0.0;
  // log1p keeps the (1-x) term accurate near either end.
  const double lo = std::min(x, 1.0 - x);
  return -xlog2x(lo) - (1.0 - lo) * std::log1p(-lo) / std::numbers::ln2;
}

}  // namespace detail

inline InformationBits binary_entropy(double x) {
  if (!(x >= 0.0 && x <= 1.0)) {
    throw DomainError("binary_entropy: argument out of [0,1]: " + std::to_string(x));
  }
  return InformationBits(detail::h2(x));
}

/// Unique x in [0, 1/2] with h2(x) = h. Bisection; h2 is strictly increasing
/// on that interval.
inline Probability binary_entropy_inv(double h) {
  if (!(h >= 0.0 && h <= 1.0)) {
    throw DomainError("binary_entropy_inv: argument out of [0,1]: " + std::to_string(h));
  }
  if (h == 0.0) return Probability(0.0);
  if (h == 1.0) return Probability(0.5);

  constexpr int kMaxIter = 200;
  constexpr double kTol = 1e-12;
  double lo = 0.0;
  double hi = 0.5;
  for (int i = 0; i < kMaxIter && hi - lo > kTol * 1e-3; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (detail::h2(mid) < h) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return Probability(0.5 * (lo + hi));
}

/// <gamma|-gamma> = exp(-2 mu) for a coherent amplitude of intensity mu.
inline double coherent_overlap(double mu) {
  if (!(mu >= 0.0)) throw DomainError("coherent_overlap: negative intensity");
  return std::exp(-2.0 * mu);
}

/// Holevo value of {|beta>, |-beta>} with equal priors, given their overlap.
inline InformationBits holevo_binary(double overlap) {
  if (!(overlap >= 0.0 && overlap <= 1.0)) {
    throw DomainError("holevo_binary: overlap out of [0,1]");
  }
  return InformationBits(detail::h2(0.5 * (1.0 - overlap)));
}

}  // namespace dpsabs
