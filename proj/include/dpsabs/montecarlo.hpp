#pragma once

// Click-level Monte-Carlo of DPS trains, clean and under the tap-and-filter
// attack. Threshold detectors: a mode of intensity nu clicks with probability
// 1 - e^{-nu}, independently of every other mode. Eve's measurement is not
// simulated; conclusive trials are credited with the analytic class value of
// the realized success count.
//
// Streams: trials are cut into chunks of kChunkTrains. Chunk c draws from an
// mt19937_64 seeded with splitmix64(seed + (c + 1) * 0x9E3779B97F4A7C15).
// Chunk tallies are merged in chunk order, so results do not depend on the
// number of worker threads.

#include <boost/math/special_functions/gamma.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <tuple>
#include <utility>
#include <vector>

#include "dpsabs/attack.hpp"
#include "dpsabs/core_math.hpp"
#include "dpsabs/errors.hpp"
#include "dpsabs/parallel.hpp"
#include "dpsabs/protocol.hpp"

namespace dpsabs {

using Rng = std::mt19937_64;

inline constexpr std::int64_t kChunkTrains = 1 << 16;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Generator for stream `index` of `seed`.
inline Rng stream_rng(std::uint64_t seed, std::uint64_t index) {
  return Rng(splitmix64(seed + (index + 1) * 0x9E3779B97F4A7C15ull));
}

/// Bob's record for one train.
struct TrainOutcome {
  std::uint64_t clicks_d0 = 0;  ///< bit j: detector 0 clicked in central slot j
  std::uint64_t clicks_d1 = 0;
  int edge_clicks = 0;
  bool conclusive = false;
  std::optional<int> slot;
  std::optional<int> bit;
};

struct SimConfig {
  std::int64_t trials = 1000000;
  std::uint64_t seed = 1;
  ProtocolParams protocol{};
  ChannelParams channel{};
  AttackParams attack{};
  bool attack_enabled = false;
  bool edge_modes = true;  ///< false drops the four edge modes

  void validate() const {
    if (trials < 1) throw DomainError("trials must be >= 1");
    protocol.validate();
    channel.validate();
    if (attack_enabled) attack.validate(protocol);
  }
};

namespace detail {

inline bool clicks(double nu, Rng& rng) {
  if (nu <= 0.0) return false;
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < -std::expm1(-nu);
}

}  // namespace detail

/// Phases of the N pulses of a train, bit i = phase of pulse i (0 or pi).
inline std::uint64_t draw_phases(int N, Rng& rng) {
  const std::uint64_t all = rng();
  return N >= 64 ? all : all & ((std::uint64_t{1} << N) - 1);
}

/// Bit encoded in central slot j of a train with phases `s`.
inline int slot_bit(std::uint64_t s, int j) {
  return static_cast<int>(((s >> j) ^ (s >> (j + 1))) & 1u);
}

/// Bob's interferometer output for a clean train of per-pulse intensity mu:
/// slot j sends mu to detector s_j xor s_{j+1}; the edges carry mu/4 each.
inline TrainOutcome simulate_clean_train(double mu, std::uint64_t s, int N, Rng& rng,
                                         bool edge_modes = true) {
  if (!(mu >= 0.0)) throw DomainError("simulate_clean_train: negative intensity");
  TrainOutcome out;
  for (int j = 0; j < N - 1; ++j) {
    if (!detail::clicks(mu, rng)) continue;
    if (slot_bit(s, j) == 0) {
      out.clicks_d0 |= std::uint64_t{1} << j;
    } else {
      out.clicks_d1 |= std::uint64_t{1} << j;
    }
  }
  if (edge_modes) {
    for (int e = 0; e < 4; ++e) out.edge_clicks += detail::clicks(0.25 * mu, rng) ? 1 : 0;
  }
  const int central = std::popcount(out.clicks_d0) + std::popcount(out.clicks_d1);
  out.conclusive = central == 1 && out.edge_clicks == 0;
  if (out.conclusive) {
    const bool d1 = out.clicks_d1 != 0;
    out.slot = std::countr_zero(d1 ? out.clicks_d1 : out.clicks_d0);
    out.bit = d1 ? 1 : 0;
  }
  return out;
}

/// Eve filters every tapped pulse; k successes below the threshold block the
/// train, otherwise Bob receives a clean train at mu_bob[k].
inline std::pair<int, TrainOutcome> simulate_attacked_train(const AttackParams& /*a*/,
                                                            const ResolvedAttack& r,
                                                            const ProtocolParams& p,
                                                            std::uint64_t s, Rng& rng,
                                                            bool edge_modes = true) {
  std::bernoulli_distribution success(r.ps.value());
  int k = 0;
  for (int i = 0; i < p.N; ++i) k += success(rng) ? 1 : 0;
  if (k < r.K) return {k, TrainOutcome{}};
  return {k, simulate_clean_train(r.mu_bob[static_cast<std::size_t>(k)], s, p.N, rng, edge_modes)};
}

/// Tallies of a simulation run.
struct SimSummary {
  std::int64_t trials = 0;
  std::int64_t conclusive = 0;
  std::int64_t bit_mismatches = 0;  ///< conclusive trials whose bit differs from s_j xor s_{j+1}
  std::vector<std::int64_t> k_hist;           ///< attacked runs only, size N+1
  std::vector<std::int64_t> conclusive_hist;  ///< conclusive trials per class k
  double info_sum = 0.0;                      ///< class information summed over conclusive trials
  double info_sq_sum = 0.0;

  double conclusive_rate() const {
    return trials > 0 ? static_cast<double>(conclusive) / static_cast<double>(trials) : 0.0;
  }

  void merge(const SimSummary& o) {
    trials += o.trials;
    conclusive += o.conclusive;
    bit_mismatches += o.bit_mismatches;
    if (k_hist.size() < o.k_hist.size()) k_hist.resize(o.k_hist.size(), 0);
    for (std::size_t i = 0; i < o.k_hist.size(); ++i) k_hist[i] += o.k_hist[i];
    if (conclusive_hist.size() < o.conclusive_hist.size()) {
      conclusive_hist.resize(o.conclusive_hist.size(), 0);
    }
    for (std::size_t i = 0; i < o.conclusive_hist.size(); ++i) {
      conclusive_hist[i] += o.conclusive_hist[i];
    }
    info_sum += o.info_sum;
    info_sq_sum += o.info_sq_sum;
  }
};

/// Runs c.trials trains (clean at the channel's expected intensity, or
/// attacked) on up to `jobs` threads.
inline SimSummary run_simulation(const SimConfig& c, unsigned jobs = 1) {
  c.validate();
  const ProtocolParams& p = c.protocol;
  std::optional<ResolvedAttack> r;
  std::vector<double> class_info;
  double mu_clean = 0.0;
  if (c.attack_enabled) {
    r = resolve_schedule(c.attack, p);
    class_info.resize(static_cast<std::size_t>(p.N) + 1);
    for (int k = r->K; k <= p.N; ++k) {
      class_info[static_cast<std::size_t>(k)] = eve_info_class(k, c.attack, *r, p).value();
    }
  } else {
    mu_clean = expected_bob_intensity(p, c.channel);
  }

  const auto chunks = static_cast<std::size_t>((c.trials + kChunkTrains - 1) / kChunkTrains);
  std::vector<SimSummary> parts(chunks);
  parallel_for(chunks, jobs, [&](std::size_t ci) {
    Rng rng = stream_rng(c.seed, ci);
    SimSummary& part = parts[ci];
    if (r) {
      part.k_hist.assign(static_cast<std::size_t>(p.N) + 1, 0);
      part.conclusive_hist.assign(static_cast<std::size_t>(p.N) + 1, 0);
    }
    const std::int64_t begin = static_cast<std::int64_t>(ci) * kChunkTrains;
    const std::int64_t end = std::min(c.trials, begin + kChunkTrains);
    for (std::int64_t i = begin; i < end; ++i) {
      const std::uint64_t s = draw_phases(p.N, rng);
      TrainOutcome out;
      int k = -1;
      if (r) {
        std::tie(k, out) = simulate_attacked_train(c.attack, *r, p, s, rng, c.edge_modes);
        ++part.k_hist[static_cast<std::size_t>(k)];
      } else {
        out = simulate_clean_train(mu_clean, s, p.N, rng, c.edge_modes);
      }
      ++part.trials;
      if (!out.conclusive) continue;
      ++part.conclusive;
      if (*out.bit != slot_bit(s, *out.slot)) ++part.bit_mismatches;
      if (r) ++part.conclusive_hist[static_cast<std::size_t>(k)];
    }
  });

  SimSummary total;
  for (const SimSummary& part : parts) total.merge(part);
  for (std::size_t k = 0; k < total.conclusive_hist.size(); ++k) {
    const double n = static_cast<double>(total.conclusive_hist[k]);
    total.info_sum += n * class_info[k];
    total.info_sq_sum += n * class_info[k] * class_info[k];
  }
  return total;
}

struct EveInfoEstimate {
  InformationBits mean;
  double std_err = 0.0;
  std::int64_t conclusive = 0;
};

/// Mean class information over conclusive trials of an attacked run.
inline EveInfoEstimate estimate_eve_info(const SimSummary& s) {
  if (s.conclusive == 0) {
    throw NoConclusiveEventsError("estimate_eve_info: no conclusive trials");
  }
  const double n = static_cast<double>(s.conclusive);
  const double mean = s.info_sum / n;
  const double var = std::max(0.0, s.info_sq_sum / n - mean * mean);
  EveInfoEstimate e;
  e.mean = InformationBits(std::clamp(mean, 0.0, 1.0));
  e.std_err = n > 1.0 ? std::sqrt(var / (n - 1.0)) : 0.0;
  e.conclusive = s.conclusive;
  return e;
}

inline EveInfoEstimate estimate_eve_info(const SimConfig& c, unsigned jobs = 1) {
  if (!c.attack_enabled) throw DomainError("estimate_eve_info: attack must be enabled");
  return estimate_eve_info(run_simulation(c, jobs));
}

struct ChiSquare {
  double statistic = 0.0;
  int dof = 0;
  double p_value = 1.0;
};

/// Pearson test of observed counts against probabilities; adjacent bins are
/// pooled until each expects at least 5 counts.
inline ChiSquare chi_square_test(const std::vector<std::int64_t>& observed,
                                 const std::vector<double>& probs) {
  if (observed.size() != probs.size()) throw DomainError("chi_square_test: size mismatch");
  double n = 0.0;
  for (auto o : observed) n += static_cast<double>(o);
  if (!(n > 0.0)) throw DomainError("chi_square_test: no observations");

  std::vector<std::pair<double, double>> bins;  // (observed, expected)
  double obs = 0.0;
  double exp = 0.0;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    obs += static_cast<double>(observed[i]);
    exp += probs[i] * n;
    if (exp >= 5.0) {
      bins.emplace_back(obs, exp);
      obs = exp = 0.0;
    }
  }
  if (exp > 0.0 || obs > 0.0) {
    if (bins.empty()) {
      bins.emplace_back(obs, exp);
    } else {
      bins.back().first += obs;
      bins.back().second += exp;
    }
  }

  ChiSquare out;
  out.dof = static_cast<int>(bins.size()) - 1;
  for (const auto& [o, e] : bins) {
    if (e > 0.0) {
      out.statistic += (o - e) * (o - e) / e;
    } else if (o > 0.0) {
      out.statistic = std::numeric_limits<double>::infinity();
    }
  }
  if (out.dof < 1) {
    out.p_value = std::isfinite(out.statistic) ? 1.0 : 0.0;
  } else if (!std::isfinite(out.statistic)) {
    out.p_value = 0.0;
  } else {
    out.p_value = boost::math::gamma_q(0.5 * out.dof, 0.5 * out.statistic);
  }
  return out;
}

}  // namespace dpsabs
