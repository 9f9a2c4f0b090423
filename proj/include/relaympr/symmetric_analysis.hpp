#pragma once

// Closed forms for n statistically identical users, plus the two scalar
// optimizations built on them (best per-user access probability q*, best
// user count N*).

#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <vector>

#include "relaympr/channel_model.hpp"
#include "relaympr/common.hpp"
#include "relaympr/queue_types.hpp"

namespace relaympr {

struct SymmetricScenario {
  SymmetricLinkParams params;
  unsigned n = 1;
  double q = 0.0;
  double q0 = 1.0;
  FormulaVariant variant = FormulaVariant::corrected;

  void validate() const {
    params.validate();
    if (n < 1) throw DomainError("user count must be >= 1");
    detail::require_probability(q, "q");
    detail::require_probability(q0, "q0");
  }
};

namespace detail {

inline double p_relay(const SymmetricScenario& s, unsigned i) {
  return symmetric_success(s.params, LinkKind::user_to_relay, i, false, s.variant);
}
inline double p_dest(const SymmetricScenario& s, unsigned i, bool relay_on) {
  return symmetric_success(s.params, LinkKind::user_to_dest, i, relay_on, s.variant);
}
inline double p_relay_dest(const SymmetricScenario& s, unsigned i) {
  return symmetric_success(s.params, LinkKind::relay_to_dest, i, true, s.variant);
}

// Relay -> destination success averaged over the number of active users.
inline double relay_delivery(const SymmetricScenario& s) {
  double sum = 0.0;
  for (unsigned k = 0; k <= s.n; ++k) sum += binomial_pmf(s.n, k, s.q) * p_relay_dest(s, k);
  return sum;
}

// Probability that a given one of i active users is stored by the relay:
// missed by the destination, decoded by the silent relay.
inline double store_probability(const SymmetricScenario& s, unsigned i) {
  return p_relay(s, i) * (1.0 - p_dest(s, i, false));
}

// Per-user delivery averaged over the other n-1 users, with the relay busy
// (transmitting) or silent.
inline double delivery_relay_busy(const SymmetricScenario& s) {
  double sum = 0.0;
  for (unsigned k = 0; k + 1 <= s.n; ++k) sum += binomial_pmf(s.n - 1, k, s.q) * s.q * p_dest(s, k + 1, true);
  return sum;
}
inline double delivery_relay_silent(const SymmetricScenario& s) {
  double sum = 0.0;
  for (unsigned k = 0; k + 1 <= s.n; ++k) {
    const double d = p_dest(s, k + 1, false);
    sum += binomial_pmf(s.n - 1, k, s.q) * s.q * (d + (1.0 - d) * p_relay(s, k + 1));
  }
  return sum;
}

}  // namespace detail

/// mu = sum_k C(n,k) q0 q^k (1-q)^(n-k) P_{0d,k}.
inline double service_rate(const SymmetricScenario& s) {
  s.validate();
  return s.q0 * detail::relay_delivery(s);
}

/// p_k^0 = sum_{i>=k} C(n,i) q^i (1-q)^(n-i) C(i,k) x_i^k (1-x_i)^(i-k),
/// x_i = P_{0,i} (1 - P_{d,i,0}), for k = 1..n.
inline ArrivalProbabilities arrival_probabilities(const SymmetricScenario& s) {
  s.validate();
  std::vector<double> batch(s.n, 0.0);
  for (unsigned i = 1; i <= s.n; ++i) {
    const double active = detail::binomial_pmf(s.n, i, s.q);
    if (active == 0.0) continue;
    const double x = detail::store_probability(s, i);
    for (unsigned k = 1; k <= i; ++k) batch[k - 1] += active * detail::binomial_pmf(i, k, x);
  }
  return ArrivalProbabilities(std::move(batch), s.q0);
}

inline double q0min(const SymmetricScenario& s) {
  const double lambda0 = arrival_probabilities(s).lambda0();
  const double denom = lambda0 + detail::relay_delivery(s);
  return denom > 0.0 ? lambda0 / denom : 0.0;
}

/// Mean queue length:
///   [(l1 - mu) sum i(i+3) p_i^0 + l0 (2 mu - sum i(i+3) p_i^1)] / [2 (mu - l1 + l0)(l1 - mu)].
inline QueueCharacterization characterize_queue(const SymmetricScenario& s) {
  const auto arrivals = arrival_probabilities(s);
  const double mu = service_rate(s);
  const double lambda0 = arrivals.lambda0();
  const double lambda1 = arrivals.lambda1();
  auto c = detail::characterize_rates(lambda0, lambda1, mu, q0min(s));
  if (c.stable && lambda0 > 0.0) {
    double w_empty = 0.0, w_busy = 0.0;
    for (std::size_t i = 1; i <= arrivals.max_batch(); ++i) {
      const double w = static_cast<double>(i * (i + 3));
      w_empty += w * arrivals.given_empty(i);
      w_busy += w * arrivals.given_nonempty(i);
    }
    const double num = (lambda1 - mu) * w_empty + lambda0 * (2.0 * mu - w_busy);
    c.mean_queue = num / (2.0 * (mu - lambda1 + lambda0) * (lambda1 - mu));
  }
  return c;
}

/// Per-user throughput without a relay: sum_k C(n-1,k) q^(k+1) (1-q)^(n-1-k) P_{d,k+1}.
inline double no_relay_throughput_per_user(const SymmetricScenario& s) {
  s.validate();
  double sum = 0.0;
  for (unsigned k = 0; k + 1 <= s.n; ++k) {
    sum += detail::binomial_pmf(s.n - 1, k, s.q) * s.q * detail::p_dest(s, k + 1, false);
  }
  return sum;
}

/// Per-user and aggregate throughput in the stable regime. The relay is busy
/// (transmitting) with probability q0 P(Q>0).
inline ThroughputReport throughput(const SymmetricScenario& s) {
  const auto c = characterize_queue(s);
  if (!c.stable) {
    throw UnstableQueueError("relay queue is unstable (q0 = " + std::to_string(s.q0) +
                                 " <= q0min = " + std::to_string(c.q0min) + "); throughput is undefined",
                             c.q0min);
  }
  const double busy = s.q0 * (1.0 - *c.prob_empty);
  const double per_user = busy * detail::delivery_relay_busy(s) + (1.0 - busy) * detail::delivery_relay_silent(s);
  return ThroughputReport::from(std::vector<double>(s.n, per_user),
                                std::vector<double>(s.n, no_relay_throughput_per_user(s)));
}

/// Per-user throughput as an explicit function of q, with P(Q>0) expanded
/// through the coefficients
///   A_{i,k} = k C(n,i) C(i,k) P_{0,i}^k (1-P_{d,i,0})^k [1 - P_{0,i}(1-P_{d,i,0})]^(i-k)
///   B_k     = C(n,k) P_{0d,k}
/// and x = q / (1-q). Valid for 0 < q < 1 in the stable regime.
inline double throughput_per_user_expanded(const SymmetricLinkParams& params, unsigned n, double q,
                                           FormulaVariant variant = FormulaVariant::corrected) {
  if (!(q > 0.0 && q < 1.0)) throw DomainError("q must lie in (0, 1)");
  const SymmetricScenario s{params, n, q, 1.0, variant};
  s.validate();
  const double x = q / (1.0 - q);

  double sum_a = 0.0;
  for (unsigned k = 1; k <= n; ++k) {
    for (unsigned i = k; i <= n; ++i) {
      const double stored = detail::store_probability(s, i);
      const double a_ik = k * detail::binomial(n, i) * detail::binomial(i, k) * std::pow(stored, k) *
                          std::pow(1.0 - stored, i - k);
      sum_a += a_ik * std::pow(x, i);
    }
  }
  double sum_b = 0.0;
  for (unsigned k = 0; k <= n; ++k) sum_b += detail::binomial(n, k) * detail::p_relay_dest(s, k) * std::pow(x, k);

  double busy_sum = 0.0, silent_sum = 0.0;
  for (unsigned k = 0; k + 1 <= n; ++k) {
    const double c = detail::binomial(n - 1, k) * std::pow(x, k + 1);
    const double d0 = detail::p_dest(s, k + 1, false);
    busy_sum += c * detail::p_dest(s, k + 1, true);
    silent_sum += c * (d0 + (1.0 - d0) * detail::p_relay(s, k + 1));
  }
  const double frac = sum_a / (sum_b + sum_a);
  const double scale = std::pow(1.0 - q, n);
  return scale * frac * busy_sum + scale * (1.0 - frac) * silent_sum;
}

struct ThroughputPoint {
  double q = 0.0;
  double per_user = 0.0;
  bool stable = true;
};

struct ThroughputCurve {
  std::vector<ThroughputPoint> points;
  std::optional<double> q_star;  // nullopt when no grid point is stable
  double per_user_at_q_star = 0.0;
};

namespace detail {

inline bool stable_at(const SymmetricLinkParams& params, unsigned n, double q, double q0, FormulaVariant variant) {
  return characterize_queue(SymmetricScenario{params, n, q, q0, variant}).stable;
}

}  // namespace detail

/// Evaluates mu(q) on `grid` (each point in (0,1)) with stability judged at
/// `q0`, then refines the best stable grid point by golden-section search on
/// its neighbouring interval.
inline ThroughputCurve throughput_vs_q(const SymmetricLinkParams& params, unsigned n, std::span<const double> grid,
                                       double q0 = 1.0, FormulaVariant variant = FormulaVariant::corrected) {
  ThroughputCurve curve;
  curve.points.reserve(grid.size());
  std::optional<std::size_t> best;
  for (std::size_t idx = 0; idx < grid.size(); ++idx) {
    ThroughputPoint pt;
    pt.q = grid[idx];
    pt.per_user = throughput_per_user_expanded(params, n, pt.q, variant);
    pt.stable = detail::stable_at(params, n, pt.q, q0, variant);
    if (pt.stable && (!best || pt.per_user > curve.points[*best].per_user)) best = idx;
    curve.points.push_back(pt);
  }
  if (!best) return curve;

  auto objective = [&](double q) {
    if (!detail::stable_at(params, n, q, q0, variant)) return -std::numeric_limits<double>::infinity();
    return throughput_per_user_expanded(params, n, q, variant);
  };
  double lo = *best > 0 ? grid[*best - 1] : grid[*best];
  double hi = *best + 1 < grid.size() ? grid[*best + 1] : grid[*best];
  double q_best = grid[*best];
  double f_best = curve.points[*best].per_user;
  if (hi > lo) {
    const double ratio = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = hi - ratio * (hi - lo);
    double d = lo + ratio * (hi - lo);
    double fc = objective(c), fd = objective(d);
    for (int iter = 0; iter < 200 && hi - lo > 1e-12; ++iter) {
      if (fc > fd) {
        hi = d;
        d = c;
        fd = fc;
        c = hi - ratio * (hi - lo);
        fc = objective(c);
      } else {
        lo = c;
        c = d;
        fc = fd;
        d = lo + ratio * (hi - lo);
        fd = objective(d);
      }
    }
    const double q_mid = 0.5 * (lo + hi);
    const double f_mid = objective(q_mid);
    if (f_mid > f_best) {
      q_best = q_mid;
      f_best = f_mid;
    }
  }
  curve.q_star = q_best;
  curve.per_user_at_q_star = f_best;
  return curve;
}

/// Dense grid q = k / (points + 1), k = 1..points.
inline std::vector<double> uniform_q_grid(std::size_t points = 999) {
  std::vector<double> g(points);
  for (std::size_t k = 0; k < points; ++k) g[k] = static_cast<double>(k + 1) / static_cast<double>(points + 1);
  return g;
}

struct UserCountPoint {
  unsigned n = 0;
  bool stable = false;
  double aggregate = 0.0;
  double no_relay_aggregate = 0.0;
};

struct UserCountOptimum {
  unsigned n_star = 0;
  double aggregate = 0.0;
  std::vector<UserCountPoint> sweep;
};

/// Sweeps n = 1..n_max and returns the user count with the largest aggregate
/// throughput among stable points; ties go to the smaller n.
inline UserCountOptimum optimal_user_count(const SymmetricLinkParams& params, double q, double q0, unsigned n_max,
                                           FormulaVariant variant = FormulaVariant::corrected) {
  if (n_max < 1) throw DomainError("n_max must be >= 1");
  UserCountOptimum opt;
  double best = -1.0;
  for (unsigned n = 1; n <= n_max; ++n) {
    const SymmetricScenario s{params, n, q, q0, variant};
    UserCountPoint pt;
    pt.n = n;
    pt.stable = characterize_queue(s).stable;
    pt.no_relay_aggregate = n * no_relay_throughput_per_user(s);
    if (pt.stable) {
      pt.aggregate = throughput(s).aggregate;
      if (pt.aggregate > best) {
        best = pt.aggregate;
        opt.n_star = n;
        opt.aggregate = pt.aggregate;
      }
    }
    opt.sweep.push_back(pt);
  }
  if (opt.n_star == 0) {
    throw UnstableQueueError("relay queue is unstable for every n in 1.." + std::to_string(n_max) +
                                 " at q0 = " + std::to_string(q0),
                             q0min(SymmetricScenario{params, 1, q, q0, variant}));
  }
  return opt;
}

}  // namespace relaympr
