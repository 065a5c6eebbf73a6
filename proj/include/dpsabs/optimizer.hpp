#pragma once

// Per-length maximization of Eve's information under the detection-rate
// equality constraint.
//
// The feasible set is searched face by face:
//
//   free p1     p1 solves the constraint (Bob's conclusive probability is
//               continuous and non-increasing in p1); search over
//               (t, log10 fp, p2).
//   pinned K    p1 fixed to the integer K in [0, N] (K-class untouched);
//               fp solves the constraint, search over (t, p2). On this face
//               the objective has a ridge that the free-p1 search cannot
//               follow.
//
// Each face is also searched with fp pinned to the USD limit (for pinned K,
// p2 then solves the constraint and only t is free). A face search is a
// coarse grid, Nelder-Mead descent in unit-box coordinates from the best grid
// point of every threshold class, a root solve of the stationarity residual
// along p2 where both adjustable intensities are interior, and a final snap
// onto least-invasive bounds that costs no information.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dpsabs/attack.hpp"
#include "dpsabs/core_math.hpp"
#include "dpsabs/errors.hpp"
#include "dpsabs/parallel.hpp"
#include "dpsabs/protocol.hpp"
#include "dpsabs/stationarity.hpp"

namespace dpsabs {

struct SweepConfig {
  ProtocolParams protocol{};
  double delta = 0.2;  ///< dB/km
  std::vector<double> lengths;
  int grid_t = 33;
  int grid_fp = 33;  ///< log-spaced points in [fp_min, 1]; the USD face is added
  int grid_p2 = 33;
  double fp_min = 1e-6;
  double refine_tol = 1e-8;
  int max_refine_evals = 4000;
  double qber = 0.0;  ///< QBER assumed in the key rate
  // Alice-intensity scan for the key-rate optimum.
  double muA_min = 1e-3;
  double muA_max = 1.0;
  int grid_muA = 25;

  void validate() const {
    protocol.validate();
    if (!(delta > 0.0)) throw DomainError("delta must be > 0");
    if (lengths.empty()) throw DomainError("length list is empty");
    for (std::size_t i = 0; i < lengths.size(); ++i) {
      if (!(lengths[i] >= 0.0) || !std::isfinite(lengths[i])) {
        throw DomainError("lengths must be finite and >= 0");
      }
      if (i > 0 && !(lengths[i] > lengths[i - 1])) {
        throw DomainError("lengths must be strictly increasing");
      }
    }
    if (grid_t < 2 || grid_fp < 2 || grid_p2 < 2) throw DomainError("grid sizes must be >= 2");
    if (!(fp_min > 0.0 && fp_min < 1.0)) throw DomainError("fp_min must lie in (0,1)");
    if (!(refine_tol > 0.0)) throw DomainError("refine_tol must be > 0");
    if (max_refine_evals < 1) throw DomainError("max_refine_evals must be >= 1");
    if (!(qber >= 0.0 && qber <= 0.5)) throw DomainError("Q must lie in [0, 0.5]");
    if (!(muA_min > 0.0 && muA_max > muA_min)) throw DomainError("invalid mu_A scan range");
    if (grid_muA < 3) throw DomainError("grid_mu_A must be >= 3");
  }
};

/// Parameter bounds active at an optimum.
enum BoundFlag : std::uint32_t {
  kTLow = 1u << 0,
  kTHigh = 1u << 1,
  kFpUsd = 1u << 2,
  kFpOne = 1u << 3,
  kFpMinGrid = 1u << 4,   ///< fp at the lower end of the searched log range
  kMuKZero = 1u << 5,     ///< K-class fully diverted
  kMuKNominal = 1u << 6,  ///< K-class untouched (integer p1)
  kMuNNominal = 1u << 7,  ///< p2 = 0
  kMuNCap = 1u << 8,      ///< p2 = 1
  kIKClamped = 1u << 9,   ///< K-class bound negative, clamped to 0
  kINClamped = 1u << 10,
};

inline std::string bound_flags_to_string(std::uint32_t flags) {
  static constexpr std::array<std::pair<std::uint32_t, const char*>, 11> kNames{{
      {kTLow, "t_low"},
      {kTHigh, "t_high"},
      {kFpUsd, "fp_usd"},
      {kFpOne, "fp_one"},
      {kFpMinGrid, "fp_min"},
      {kMuKZero, "muK_zero"},
      {kMuKNominal, "muK_nominal"},
      {kMuNNominal, "muN_nominal"},
      {kMuNCap, "muN_cap"},
      {kIKClamped, "IK_clamped"},
      {kINClamped, "IN_clamped"},
  }};
  std::string out;
  for (const auto& [bit, name] : kNames) {
    if (flags & bit) {
      if (!out.empty()) out += '|';
      out += name;
    }
  }
  return out.empty() ? "none" : out;
}

/// Flags under which the stationarity relation does not apply.
inline constexpr std::uint32_t kIntensityBoundMask =
    kMuKZero | kMuKNominal | kMuNNominal | kMuNCap | kIKClamped | kINClamped;

struct AttackOptimum {
  double length_km = 0.0;
  Probability target_pconc;
  AttackParams params;
  ResolvedAttack resolved;
  InformationBits I_AE;
  Probability Q_crit;
  double key_rate = 0.0;  ///< bits per train
  std::uint32_t bounds = 0;
  std::optional<StationarityReport> stationarity;  ///< set iff no intensity bound is active
  InformationBits usd_I_AE;  ///< best attack with fp pinned to the USD limit
};

// ---------------------------------------------------------------------------
// Scalar post-processing.

inline Probability critical_error(double I_AE) {
  if (!(I_AE >= 0.0 && I_AE <= 1.0)) throw DomainError("critical_error: I_AE outside [0,1]");
  return binary_entropy_inv(1.0 - I_AE);
}

/// p_conc * (1 - h2(Q) - I_AE), floored at 0.
inline double key_rate(double pconc, double I_AE, double Q) {
  if (!(Q >= 0.0 && Q <= 0.5)) throw DomainError("key_rate: Q outside [0, 0.5]");
  if (!(pconc >= 0.0 && pconc <= 1.0)) throw DomainError("key_rate: pconc outside [0,1]");
  return std::max(0.0, pconc * (1.0 - binary_entropy(Q).value() - I_AE));
}

// ---------------------------------------------------------------------------
// Constraint elimination.

namespace detail {

inline double constraint_tol(double target) { return 1e-13 * target; }

// Bob's conclusive probability with p1 pinned to the integer K in [0, N].
inline double conclusive_pinned(const std::vector<double>& pk, int K, double nominal, double muN,
                                int N) {
  double passed = 0.0;
  for (int k = K; k < N; ++k) passed += pk[static_cast<std::size_t>(k)];
  return passed * conclusive_prob_raw(nominal, N) + pk.back() * conclusive_prob_raw(muN, N);
}

}  // namespace detail

/// p1 in [0, N] making Bob's conclusive probability equal `target`, or
/// nullopt when no p1 can (too few clicks even without blocking, or too many
/// even when only all-success trains pass). Flat stretches resolve to the
/// least blocking p1.
inline std::optional<double> solve_constraint_p1(double t, double fp, double p2, double target,
                                                 const ProtocolParams& p) {
  const int N = p.N;
  const double nominal = (1.0 - t) * p.muA;
  const double ps = filter_success_prob(t, fp, p.muA).prob;
  const std::vector<double> pk = success_count_dist(ps, N);
  const double cap = amplified_intensity_cap(fp, p);
  const double muN = nominal + p2 * (cap - nominal);
  const double cN = pk.back() * detail::conclusive_prob_raw(muN, N);
  const double pn = detail::conclusive_prob_raw(nominal, N);

  // conc[j] = Bob's conclusive probability at integer p1 = j.
  std::vector<double> conc(static_cast<std::size_t>(N) + 1);
  conc.back() = cN;
  double tail = 0.0;
  for (int j = N - 1; j >= 0; --j) {
    tail += pk[static_cast<std::size_t>(j)];
    conc[static_cast<std::size_t>(j)] = tail * pn + cN;
  }

  const double tol = detail::constraint_tol(target);
  if (std::abs(conc.front() - target) <= tol) return 0.0;
  if (conc.front() < target) return std::nullopt;
  if (std::abs(conc.back() - target) <= tol) return static_cast<double>(N);
  if (conc.back() > target) return std::nullopt;

  int j = 0;
  while (j + 1 < N && conc[static_cast<std::size_t>(j) + 1] > target) ++j;
  // conc[j] > target >= conc[j+1]; only the j-class intensity moves on [j, j+1].
  const double pj = pk[static_cast<std::size_t>(j)];
  const double need = std::clamp((target - conc[static_cast<std::size_t>(j) + 1]) / pj, 0.0, pn);
  const double muK = std::min(conclusive_prob_inverse(need, N), nominal);
  return std::clamp(j + 1.0 - muK / nominal, 0.0, static_cast<double>(N));
}

/// p2 in [0, 1] matching `target` with p1 pinned to the integer K. The
/// conclusive probability rises with p2 since mu_N never passes its maximizer.
inline std::optional<double> solve_constraint_p2(double t, double fp, int K, double target,
                                                 const ProtocolParams& p) {
  const int N = p.N;
  if (K < 0 || K > N) throw DomainError("solve_constraint_p2: K outside [0, N]");
  const double nominal = (1.0 - t) * p.muA;
  const std::vector<double> pk = success_count_dist(filter_success_prob(t, fp, p.muA).prob, N);
  const double cap = amplified_intensity_cap(fp, p);
  const double lo = detail::conclusive_pinned(pk, K, nominal, nominal, N);
  const double hi = detail::conclusive_pinned(pk, K, nominal, cap, N);

  const double tol = detail::constraint_tol(target);
  if (std::abs(lo - target) <= tol) return 0.0;
  if (lo > target) return std::nullopt;
  if (std::abs(hi - target) <= tol) return 1.0;
  if (hi < target) return std::nullopt;
  const double base = lo - pk.back() * detail::conclusive_prob_raw(nominal, N);
  const double muN = std::clamp(conclusive_prob_inverse((target - base) / pk.back(), N), nominal, cap);
  return std::clamp((muN - nominal) / (cap - nominal), 0.0, 1.0);
}

/// fp in [fp_min, 1] matching `target` with p1 pinned to the integer K and
/// p2 given. Bisection in log fp; fp raises the filter success rate and with
/// it the share of forwarded trains.
inline std::optional<double> solve_constraint_fp(double t, double p2, int K, double target,
                                                 const ProtocolParams& p, double fp_min) {
  const int N = p.N;
  if (K < 0 || K > N) throw DomainError("solve_constraint_fp: K outside [0, N]");
  const double nominal = (1.0 - t) * p.muA;
  const auto conc_at = [&](double log_fp) {
    const double fp = log_fp >= 0.0 ? 1.0 : std::pow(10.0, log_fp);
    const std::vector<double> pk = success_count_dist(filter_success_prob(t, fp, p.muA).prob, N);
    const double cap = amplified_intensity_cap(fp, p);
    return detail::conclusive_pinned(pk, K, nominal, nominal + p2 * (cap - nominal), N);
  };

  double lo = std::log10(fp_min);
  double hi = 0.0;
  const double c_lo = conc_at(lo);
  const double c_hi = conc_at(hi);
  const double tol = detail::constraint_tol(target);
  if (std::abs(c_lo - target) <= tol) return fp_min;
  if (std::abs(c_hi - target) <= tol) return 1.0;
  if ((c_lo > target) == (c_hi > target)) return std::nullopt;
  const bool rising = c_hi > c_lo;
  for (int i = 0; i < 200 && hi - lo > 1e-15; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double c = conc_at(mid);
    if ((c < target) == rising) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double best = std::abs(conc_at(lo) - target) <= std::abs(conc_at(hi) - target) ? lo : hi;
  if (std::abs(conc_at(best) - target) > 1e-11 * std::max(target, 1e-300) + 1e-16) {
    return std::nullopt;
  }
  return std::pow(10.0, best);
}

namespace detail {

struct Candidate {
  AttackParams params;
  double info = -std::numeric_limits<double>::infinity();
  bool feasible() const { return std::isfinite(info); }
};

inline Candidate scored(const AttackParams& a, const ProtocolParams& p) {
  Candidate c;
  c.params = a;
  try {
    c.info = eve_info_total(a, p).value();
  } catch (const NoConclusiveEventsError&) {
    c.info = -std::numeric_limits<double>::infinity();
  }
  return c;
}

inline Candidate evaluate(double t, double fp, double p2, double target,
                          const ProtocolParams& p) {
  const auto p1 = solve_constraint_p1(t, fp, p2, target, p);
  if (!p1) return {};
  return scored(AttackParams{t, fp, *p1, p2}, p);
}

// Strictly better, or equal with the less invasive attack (smaller t, then
// larger fp).
inline bool better(const Candidate& a, const Candidate& b) {
  if (!a.feasible()) return false;
  if (!b.feasible()) return true;
  if (a.info != b.info) return a.info > b.info;
  if (a.params.t != b.params.t) return a.params.t < b.params.t;
  return a.params.fp > b.params.fp;
}

// One face of the feasible set in unit-box coordinates. u[0] -> t, then
// log10 fp (free-p1 faces without the USD pin), then p2 (all but the pinned
// USD face, where p2 solves the constraint).
struct SearchSpace {
  ProtocolParams protocol;
  double target = 0.0;
  double t_lo = 0.0;
  double fp_min = 1e-6;
  bool usd = false;
  int pinned_K = -1;  ///< >= 0: p1 fixed to this integer

  bool free_p1() const { return pinned_K < 0; }
  bool fp_coordinate() const { return free_p1() && !usd; }
  bool p2_coordinate() const { return free_p1() || !usd; }
  std::size_t dims() const {
    return 1u + (fp_coordinate() ? 1u : 0u) + (p2_coordinate() ? 1u : 0u);
  }

  AttackParams decode(const std::vector<double>& u) const {
    const auto unit = [](double x) { return std::clamp(x, 0.0, 1.0); };
    AttackParams a;
    a.t = t_lo + unit(u[0]) * (1.0 - t_lo);
    std::size_t i = 1;
    a.fp = usd ? 0.0 : 1.0;
    if (fp_coordinate()) {
      const double uf = unit(u[i++]);
      a.fp = uf >= 1.0 ? 1.0 : std::pow(10.0, std::log10(fp_min) * (1.0 - uf));
    }
    if (p2_coordinate()) a.p2 = unit(u[i]);
    return a;
  }

  std::vector<double> encode(const AttackParams& a) const {
    std::vector<double> u{t_lo < 1.0 ? (a.t - t_lo) / (1.0 - t_lo) : 0.0};
    if (fp_coordinate()) u.push_back(1.0 - std::log10(a.fp) / std::log10(fp_min));
    if (p2_coordinate()) u.push_back(a.p2);
    return u;
  }

  /// Completes `a` on this face (solving the constraint) and scores it.
  Candidate at(const AttackParams& a) const {
    if (free_p1()) return evaluate(a.t, a.fp, a.p2, target, protocol);
    const double K = static_cast<double>(pinned_K);
    if (usd) {
      const auto p2 = solve_constraint_p2(a.t, 0.0, pinned_K, target, protocol);
      if (!p2) return {};
      return scored(AttackParams{a.t, 0.0, K, *p2}, protocol);
    }
    const auto fp = solve_constraint_fp(a.t, a.p2, pinned_K, target, protocol, fp_min);
    if (!fp) return {};
    return scored(AttackParams{a.t, *fp, K, a.p2}, protocol);
  }

  Candidate operator()(const std::vector<double>& u) const { return at(decode(u)); }
};

// Nelder-Mead maximization of candidate.info over the unit box; trial points
// are projected onto the box. Restarts with a smaller simplex until a restart
// stops improving.
inline Candidate nelder_mead(const SearchSpace& space, const Candidate& start, double tol,
                             int max_evals) {
  const std::size_t d = space.dims();
  const auto score = [](const Candidate& c) { return c.feasible() ? -c.info : 1e300; };

  struct Vertex {
    std::vector<double> u;
    Candidate c;
  };
  int evals = 0;
  const auto eval_at = [&](std::vector<double> u) {
    for (auto& x : u) x = std::clamp(x, 0.0, 1.0);
    ++evals;
    Candidate c = space(u);
    return Vertex{std::move(u), std::move(c)};
  };

  Candidate best = start;
  double step = 1.0 / 16.0;
  for (int restart = 0; restart < 6 && evals < max_evals; ++restart) {
    std::vector<Vertex> simplex;
    const std::vector<double> origin = space.encode(best.params);
    simplex.push_back(Vertex{origin, best});
    for (std::size_t i = 0; i < d; ++i) {
      std::vector<double> u = origin;
      u[i] += (u[i] + step <= 1.0) ? step : -step;
      simplex.push_back(eval_at(u));
    }

    const auto order = [&] {
      std::stable_sort(simplex.begin(), simplex.end(), [&](const Vertex& a, const Vertex& b) {
        return score(a.c) < score(b.c);
      });
    };
    order();
    while (evals < max_evals) {
      double diameter = 0.0;
      for (std::size_t v = 1; v <= d; ++v) {
        for (std::size_t i = 0; i < d; ++i) {
          diameter = std::max(diameter, std::abs(simplex[v].u[i] - simplex[0].u[i]));
        }
      }
      if (diameter < tol) break;

      std::vector<double> centroid(d, 0.0);
      for (std::size_t v = 0; v < d; ++v) {
        for (std::size_t i = 0; i < d; ++i) centroid[i] += simplex[v].u[i] / static_cast<double>(d);
      }
      const auto along = [&](double coef) {
        std::vector<double> u(d);
        for (std::size_t i = 0; i < d; ++i) {
          u[i] = centroid[i] + coef * (simplex[d].u[i] - centroid[i]);
        }
        return u;
      };

      Vertex refl = eval_at(along(-1.0));
      if (score(refl.c) < score(simplex[0].c)) {
        Vertex expanded = eval_at(along(-2.0));
        simplex[d] = score(expanded.c) < score(refl.c) ? std::move(expanded) : std::move(refl);
      } else if (score(refl.c) < score(simplex[d - 1].c)) {
        simplex[d] = std::move(refl);
      } else {
        const bool outside = score(refl.c) < score(simplex[d].c);
        Vertex con = eval_at(along(outside ? -0.5 : 0.5));
        const double bound = outside ? score(refl.c) : score(simplex[d].c);
        if (score(con.c) <= bound) {
          simplex[d] = std::move(con);
        } else {
          for (std::size_t v = 1; v <= d; ++v) {
            std::vector<double> u(d);
            for (std::size_t i = 0; i < d; ++i) {
              u[i] = simplex[0].u[i] + 0.5 * (simplex[v].u[i] - simplex[0].u[i]);
            }
            simplex[v] = eval_at(u);
          }
        }
      }
      order();
    }

    const Candidate& found = simplex.front().c;
    const bool improved = better(found, best) && found.info > best.info + 1e-14;
    if (better(found, best)) best = found;
    if (!improved && restart > 0) break;
    step = std::max(step * 0.25, 16.0 * tol);
  }
  return best;
}

// Stationarity residual along p2 at fixed (t, fp), with p1 re-solved.
// nullopt when the point leaves the interior or changes its threshold class.
inline std::optional<double> residual_along_p2(const AttackParams& base, double p2, int K,
                                               double target, const ProtocolParams& p) {
  const auto p1 = solve_constraint_p1(base.t, base.fp, p2, target, p);
  if (!p1) return std::nullopt;
  const AttackParams a{base.t, base.fp, *p1, p2};
  const ResolvedAttack r = resolve_schedule(a, p);
  if (r.K != K || !intensities_interior(a, r, p)) return std::nullopt;
  try {
    const double dZK = dZK_dmuK(a, r, p);
    const double dZN = dZN_dmuN(a, r, p);
    if (dZK == 0.0 || dZN == 0.0) return std::nullopt;
    const double IK = class_K_bound(p.N, r.K, a.t, a.fp, p.muA, r.mu_K());
    const double IN = class_N_bound(p.N, a.fp, p.muA, r.mu_N());
    if (IK < 0.0 || IN < 0.0) return std::nullopt;
    return IK + r.z[static_cast<std::size_t>(r.K)] * dIK_dmuK(a, r, p) / dZK -
           (IN + r.z.back() * dIN_dmuN(a, r, p) / dZN);
  } catch (const DomainError&) {
    return std::nullopt;
  }
}

// Moves p2 onto the zero of the stationarity residual when a sign change is
// found nearby; keeps the move only if it does not lower the information.
inline Candidate polish_along_p2(const Candidate& c, double target, const ProtocolParams& p) {
  const ResolvedAttack r = resolve_schedule(c.params, p);
  const double p2 = c.params.p2;
  const auto g0 = residual_along_p2(c.params, p2, r.K, target, p);
  if (!g0 || *g0 == 0.0) return c;

  std::optional<double> lo, hi;
  for (double step = 1e-9; step <= 0.05 && !(lo && hi); step *= 4.0) {
    for (double sgn : {-1.0, 1.0}) {
      const double q = p2 + sgn * step;
      if (q <= 0.0 || q >= 1.0) continue;
      const auto g = residual_along_p2(c.params, q, r.K, target, p);
      if (g && (*g > 0.0) != (*g0 > 0.0)) {
        lo = std::min(p2, q);
        hi = std::max(p2, q);
        break;
      }
    }
  }
  if (!lo || !hi) return c;

  double a = *lo;
  double b = *hi;
  auto ga = residual_along_p2(c.params, a, r.K, target, p);
  for (int i = 0; i < 200 && b - a > 1e-16; ++i) {
    const double m = 0.5 * (a + b);
    const auto gm = residual_along_p2(c.params, m, r.K, target, p);
    if (!gm || !ga) return c;
    if ((*gm > 0.0) == (*ga > 0.0)) {
      a = m;
      ga = gm;
    } else {
      b = m;
    }
  }
  const Candidate polished = evaluate(c.params.t, c.params.fp, 0.5 * (a + b), target, p);
  if (polished.feasible() && polished.info >= c.info - 1e-12) return polished;
  return c;
}

// Pushes parameters onto their least-invasive bounds (t -> lower bound,
// fp -> 1, p2 -> 0, else 1) whenever that costs no information.
inline Candidate snap_to_bounds(Candidate c, const SearchSpace& space) {
  constexpr double kSlack = 1e-12;
  const auto attempt = [&](AttackParams a) {
    const Candidate s = space.at(a);
    if (s.feasible() && s.info >= c.info - kSlack) c = s;
  };
  if (c.params.t != space.t_lo) {
    AttackParams a = c.params;
    a.t = space.t_lo;
    attempt(a);
  }
  if (space.fp_coordinate() && c.params.fp != 1.0) {
    AttackParams a = c.params;
    a.fp = 1.0;
    attempt(a);
  }
  if (space.p2_coordinate() && c.params.p2 != 0.0) {
    AttackParams a = c.params;
    a.p2 = 0.0;
    attempt(a);
    if (c.params.p2 != 0.0 && c.params.p2 != 1.0) {
      a.p2 = 1.0;
      attempt(a);
    }
  }
  return c;
}

// Grid scan, then refinement from the best grid point of every threshold
// class K (the free-p1 objective has one basin per K).
inline Candidate search_face(const SearchSpace& space, const SweepConfig& cfg) {
  const int N = space.protocol.N;
  std::vector<Candidate> per_class(static_cast<std::size_t>(N));
  // The pinned USD face is one-dimensional and its feasible t-range narrow.
  const int nt = space.dims() == 1 ? 16 * cfg.grid_t : cfg.grid_t;
  const int nf = space.fp_coordinate() ? cfg.grid_fp : 1;
  const int np = space.p2_coordinate() ? cfg.grid_p2 : 1;
  std::vector<double> u(space.dims());
  for (int i = 0; i < nt; ++i) {
    u[0] = static_cast<double>(i) / (nt - 1);
    for (int j = nf - 1; j >= 0; --j) {  // largest fp first
      if (space.fp_coordinate()) u[1] = static_cast<double>(j) / (nf - 1);
      for (int k = 0; k < np; ++k) {
        if (space.p2_coordinate()) u.back() = static_cast<double>(k) / (np - 1);
        const Candidate c = space(u);
        if (!c.feasible()) continue;
        const int K = std::min(static_cast<int>(std::floor(c.params.p1)), N - 1);
        Candidate& slot = per_class[static_cast<std::size_t>(K)];
        if (!slot.feasible() || c.info > slot.info) slot = c;
      }
    }
  }

  Candidate best;
  for (const Candidate& start : per_class) {
    if (!start.feasible()) continue;
    Candidate refined = nelder_mead(space, start, cfg.refine_tol, cfg.max_refine_evals);
    if (space.free_p1()) refined = polish_along_p2(refined, space.target, space.protocol);
    if (better(start, refined)) refined = start;
    refined = snap_to_bounds(refined, space);
    if (better(refined, best)) best = refined;
  }
  return best;
}

inline std::uint32_t active_bounds(const AttackParams& a, const ResolvedAttack& r,
                                   const ProtocolParams& p, double fp_min) {
  constexpr double kRel = 1e-6;
  std::uint32_t f = 0;
  const double t_lo = AttackParams::t_lower_bound(p);
  if (a.t <= t_lo + kRel * (1.0 - t_lo)) f |= kTLow;
  if (a.t >= 1.0 - kRel * (1.0 - t_lo)) f |= kTHigh;
  if (a.usd()) {
    f |= kFpUsd;
  } else {
    if (a.fp >= 1.0 - kRel) f |= kFpOne;
    if (std::log10(a.fp) <= std::log10(fp_min) * (1.0 - kRel)) f |= kFpMinGrid;
  }
  const double nominal = (1.0 - a.t) * p.muA;
  if (r.mu_K() <= kRel * nominal) f |= kMuKZero;
  if (r.mu_K() >= (1.0 - kRel) * nominal) f |= kMuKNominal;
  if (a.p2 <= kRel) f |= kMuNNominal;
  if (a.p2 >= 1.0 - kRel) f |= kMuNCap;
  if (class_K_bound(p.N, r.K, a.t, a.fp, p.muA, r.mu_K()) <= 0.0) f |= kIKClamped;
  if (class_N_bound(p.N, a.fp, p.muA, r.mu_N()) <= 0.0) f |= kINClamped;
  return f;
}

inline double target_conclusive(const ProtocolParams& p, double delta, double length) {
  return conclusive_prob(expected_bob_intensity(p, ChannelParams{delta, length}), p.N);
}

inline SearchSpace make_space(const SweepConfig& cfg, const ProtocolParams& p, double target,
                              bool usd, int pinned_K = -1) {
  SearchSpace s;
  s.protocol = p;
  s.target = target;
  s.t_lo = AttackParams::t_lower_bound(p);
  s.fp_min = cfg.fp_min;
  s.usd = usd;
  s.pinned_K = pinned_K;
  return s;
}

// Best point over the free-p1 face and every pinned-K face, with fp either
// searched or pinned to the USD limit.
inline Candidate search_faces(const SweepConfig& cfg, const ProtocolParams& p, double target,
                              bool usd) {
  Candidate best = search_face(make_space(cfg, p, target, usd), cfg);
  for (int K = 0; K <= p.N; ++K) {
    const Candidate c = search_face(make_space(cfg, p, target, usd, K), cfg);
    if (better(c, best) && (!best.feasible() || c.info > best.info)) best = c;
  }
  return best;
}

inline AttackOptimum make_optimum(const Candidate& c, const Candidate& usd, double length,
                                  double target, const SweepConfig& cfg,
                                  const ProtocolParams& p) {
  AttackOptimum o;
  o.length_km = length;
  o.target_pconc = Probability(target);
  o.params = c.params;
  o.resolved = resolve_schedule(c.params, p);
  o.I_AE = InformationBits(c.info);
  o.Q_crit = critical_error(c.info);
  o.key_rate = key_rate(target, c.info, cfg.qber);
  o.usd_I_AE = InformationBits(usd.feasible() ? usd.info : 0.0);
  o.bounds = active_bounds(c.params, o.resolved, p, cfg.fp_min);
  if ((o.bounds & kIntensityBoundMask) == 0) {
    try {
      o.stationarity = stationarity_residual(c.params, o.resolved, p);
    } catch (const DegeneratePointError&) {
      o.stationarity.reset();
    }
  }
  return o;
}

}  // namespace detail

/// USD-attack baseline: the same search with fp pinned to the USD limit.
inline InformationBits usd_baseline_for_length(const SweepConfig& cfg, double length,
                                               const ProtocolParams& p) {
  p.validate();
  const double target = detail::target_conclusive(p, cfg.delta, length);
  const detail::Candidate c = detail::search_faces(cfg, p, target, true);
  if (!c.feasible()) {
    throw InfeasibleError("no USD attack matches length " + std::to_string(length) + " km");
  }
  return InformationBits(c.info);
}

inline InformationBits usd_baseline_for_length(const SweepConfig& cfg, double length) {
  return usd_baseline_for_length(cfg, length, cfg.protocol);
}

inline AttackOptimum optimize_for_length(const SweepConfig& cfg, double length,
                                         const ProtocolParams& p) {
  p.validate();
  const double target = detail::target_conclusive(p, cfg.delta, length);
  const detail::Candidate soft = detail::search_faces(cfg, p, target, false);
  const detail::Candidate usd = detail::search_faces(cfg, p, target, true);
  const detail::Candidate& best = usd.feasible() && (!soft.feasible() || usd.info > soft.info)
                                      ? usd
                                      : soft;
  if (!best.feasible()) {
    throw InfeasibleError("no attack parameters match length " + std::to_string(length) + " km");
  }
  return detail::make_optimum(best, usd, length, target, cfg, p);
}

inline AttackOptimum optimize_for_length(const SweepConfig& cfg, double length) {
  return optimize_for_length(cfg, length, cfg.protocol);
}

/// One sweep row: either an optimum or the reason the length is infeasible.
struct SweepRow {
  double length_km = 0.0;
  std::optional<AttackOptimum> optimum;
  std::string error;
};

/// Optimizes every configured length; rows come back ordered by length
/// whatever the number of jobs.
inline std::vector<SweepRow> run_length_sweep(const SweepConfig& cfg, unsigned jobs) {
  cfg.validate();
  std::vector<SweepRow> rows(cfg.lengths.size());
  parallel_for(rows.size(), jobs, [&](std::size_t i) {
    rows[i].length_km = cfg.lengths[i];
    try {
      rows[i].optimum = optimize_for_length(cfg, cfg.lengths[i]);
    } catch (const InfeasibleError& e) {
      rows[i].error = e.what();
    }
  });
  return rows;
}

struct AliceIntensityOptimum {
  double length_km = 0.0;
  double muA = 0.0;
  double key_rate = 0.0;
  Probability Q_crit;
  std::vector<std::pair<double, double>> scan;  ///< (muA, rate) on the log grid
};

/// Alice intensity maximizing the key rate when Eve re-optimizes against
/// every candidate. Log-spaced scan, then golden-section search in log muA
/// between the neighbours of the grid argmax.
inline AliceIntensityOptimum optimal_alice_intensity(const SweepConfig& cfg, double length,
                                                     double Q) {
  struct Eval {
    double muA;
    double rate;
    double qcrit;
  };
  const auto rate_at = [&](double muA) {
    ProtocolParams p = cfg.protocol;
    p.muA = muA;
    try {
      const AttackOptimum o = optimize_for_length(cfg, length, p);
      return Eval{muA, key_rate(o.target_pconc, o.I_AE, Q), o.Q_crit};
    } catch (const InfeasibleError&) {
      return Eval{muA, -1.0, 0.0};
    }
  };

  const double lmin = std::log(cfg.muA_min);
  const double lmax = std::log(cfg.muA_max);
  const int n = cfg.grid_muA;
  std::vector<Eval> grid;
  grid.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    grid.push_back(rate_at(std::exp(lmin + (lmax - lmin) * i / (n - 1))));
  }

  std::size_t arg = 0;
  for (std::size_t i = 1; i < grid.size(); ++i) {
    if (grid[i].rate > grid[arg].rate) arg = i;
  }
  if (!(grid[arg].rate > 0.0)) {
    throw InfeasibleError("no Alice intensity yields a positive key rate at " +
                          std::to_string(length) + " km");
  }

  Eval best = grid[arg];
  double a = std::log(grid[arg == 0 ? 0 : arg - 1].muA);
  double b = std::log(grid[std::min(arg + 1, grid.size() - 1)].muA);
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double x1 = b - inv_phi * (b - a);
  double x2 = a + inv_phi * (b - a);
  Eval f1 = rate_at(std::exp(x1));
  Eval f2 = rate_at(std::exp(x2));
  while (b - a > 1e-3) {
    if (f1.rate >= f2.rate) {
      b = x2;
      x2 = x1;
      f2 = f1;
      x1 = b - inv_phi * (b - a);
      f1 = rate_at(std::exp(x1));
    } else {
      a = x1;
      x1 = x2;
      f1 = f2;
      x2 = a + inv_phi * (b - a);
      f2 = rate_at(std::exp(x2));
    }
  }
  for (const Eval& e : {f1, f2}) {
    if (e.rate > best.rate) best = e;
  }

  AliceIntensityOptimum out;
  out.length_km = length;
  out.muA = best.muA;
  out.key_rate = best.rate;
  out.Q_crit = Probability(best.qcrit);
  for (const Eval& e : grid) out.scan.emplace_back(e.muA, e.rate);
  return out;
}

}  // namespace dpsabs
