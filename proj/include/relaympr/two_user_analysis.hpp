#pragma once

// Relay queue and throughput for two users with arbitrary (non-symmetric)
// link gains and access probabilities.

#include <vector>

#include "relaympr/channel_model.hpp"
#include "relaympr/common.hpp"
#include "relaympr/queue_types.hpp"

namespace relaympr {

struct TwoUserScenario {
  NetworkGeometry geometry;
  double q0 = 1.0;
  double q1 = 0.0;
  double q2 = 0.0;
  FormulaVariant variant = FormulaVariant::corrected;

  void validate() const {
    if (geometry.user_count() != 2) throw DomainError("two-user scenario needs exactly two users");
    geometry.validate();
    detail::require_probability(q0, "q0");
    detail::require_probability(q1, "q1");
    detail::require_probability(q2, "q2");
  }
};

namespace detail {

// Every conditional success probability the two-user formulas use.
// Notation: to_<receiver>_<tagged>_<active set>.
struct TwoUserLinks {
  double dest_r_r, dest_r_r1, dest_r_r2, dest_r_r12;  // relay -> dest
  double dest_1_1, dest_1_12, dest_2_2, dest_2_12;    // user -> dest, relay silent
  double dest_1_r1, dest_1_r12, dest_2_r2, dest_2_r12;
  double relay_1_1, relay_1_12, relay_2_2, relay_2_12;

  explicit TwoUserLinks(const NetworkGeometry& g) {
    const auto r = NodeId::relay();
    const auto d = NodeId::destination();
    const auto u1 = NodeId::user(1);
    const auto u2 = NodeId::user(2);
    dest_r_r = success_probability(g, r, d, {r});
    dest_r_r1 = success_probability(g, r, d, {r, u1});
    dest_r_r2 = success_probability(g, r, d, {r, u2});
    dest_r_r12 = success_probability(g, r, d, {r, u1, u2});
    dest_1_1 = success_probability(g, u1, d, {u1});
    dest_1_12 = success_probability(g, u1, d, {u1, u2});
    dest_2_2 = success_probability(g, u2, d, {u2});
    dest_2_12 = success_probability(g, u2, d, {u1, u2});
    dest_1_r1 = success_probability(g, u1, d, {r, u1});
    dest_1_r12 = success_probability(g, u1, d, {r, u1, u2});
    dest_2_r2 = success_probability(g, u2, d, {r, u2});
    dest_2_r12 = success_probability(g, u2, d, {r, u1, u2});
    relay_1_1 = success_probability(g, u1, r, {u1});
    relay_1_12 = success_probability(g, u1, r, {u1, u2});
    relay_2_2 = success_probability(g, u2, r, {u2});
    relay_2_12 = success_probability(g, u2, r, {u1, u2});
  }
};

// Relay -> destination success averaged over user activity; mu = q0 * this.
inline double relay_delivery(const TwoUserScenario& s, const TwoUserLinks& l) {
  const double q1 = s.q1, q2 = s.q2;
  return (1 - q1) * (1 - q2) * l.dest_r_r + q1 * (1 - q2) * l.dest_r_r1 + q2 * (1 - q1) * l.dest_r_r2 +
         q1 * q2 * l.dest_r_r12;
}

}  // namespace detail

/// mu = q0 [(1-q1)(1-q2) P_{0/0} + q1(1-q2) P_{0/0,1} + q2(1-q1) P_{0/0,2} + q1 q2 P_{0/0,1,2}].
inline double service_rate(const TwoUserScenario& s) {
  s.validate();
  const detail::TwoUserLinks l(s.geometry);
  return s.q0 * detail::relay_delivery(s, l);
}

/// p_1^0 and p_2^0: a user's packet joins the relay queue when the
/// destination misses it and the (silent) relay decodes it.
inline ArrivalProbabilities arrival_probabilities(const TwoUserScenario& s) {
  s.validate();
  const detail::TwoUserLinks l(s.geometry);
  const double q1 = s.q1, q2 = s.q2;
  const double p1 =
      q1 * (1 - q2) * (1 - l.dest_1_1) * l.relay_1_1 + q2 * (1 - q1) * (1 - l.dest_2_2) * l.relay_2_2 +
      q1 * q2 * (1 - l.dest_1_12) * l.relay_1_12 * (l.dest_2_12 + (1 - l.dest_2_12) * (1 - l.relay_2_12)) +
      q1 * q2 * (1 - l.dest_2_12) * l.relay_2_12 * (l.dest_1_12 + (1 - l.dest_1_12) * (1 - l.relay_1_12));
  const double p2 = q1 * q2 * (1 - l.dest_1_12) * (1 - l.dest_2_12) * l.relay_1_12 * l.relay_2_12;
  return ArrivalProbabilities({p1, p2}, s.q0);
}

/// Smallest q0 for which lambda_1 < mu.
inline double q0min(const TwoUserScenario& s) {
  s.validate();
  const detail::TwoUserLinks l(s.geometry);
  const double lambda0 = arrival_probabilities(s).lambda0();
  const double denom = lambda0 + detail::relay_delivery(s, l);
  return denom > 0.0 ? lambda0 / denom : 0.0;
}

/// Rates, P(Q=0), long-run arrival rate, stability threshold and mean queue
/// length. The mean queue length weights the busy-slot arrivals with p^1;
/// FormulaVariant::as_printed uses p^0 in that term instead.
inline QueueCharacterization characterize_queue(const TwoUserScenario& s) {
  const auto arrivals = arrival_probabilities(s);
  const double mu = service_rate(s);
  const double lambda0 = arrivals.lambda0();
  const double lambda1 = arrivals.lambda1();
  auto c = detail::characterize_rates(lambda0, lambda1, mu, q0min(s));
  if (c.stable && lambda0 > 0.0) {
    const double busy_weight = s.variant == FormulaVariant::as_printed
                                   ? 2 * arrivals.given_empty(1) + 5 * arrivals.given_empty(2)
                                   : 2 * arrivals.given_nonempty(1) + 5 * arrivals.given_nonempty(2);
    const double num = (lambda1 - mu) * (2 * arrivals.given_empty(1) + 5 * arrivals.given_empty(2)) +
                       lambda0 * (mu - busy_weight);
    c.mean_queue = num / ((mu - lambda1 + lambda0) * (lambda1 - mu));
  }
  return c;
}

/// Per-user throughput without a relay.
inline std::vector<double> no_relay_throughput(const TwoUserScenario& s) {
  s.validate();
  const detail::TwoUserLinks l(s.geometry);
  return {s.q1 * (1 - s.q2) * l.dest_1_1 + s.q1 * s.q2 * l.dest_1_12,
          s.q2 * (1 - s.q1) * l.dest_2_2 + s.q1 * s.q2 * l.dest_2_12};
}

/// mu_1, mu_2 with the relay, in the stable regime. Every packet the relay
/// stores is eventually delivered, so relay arrivals count as throughput.
inline ThroughputReport throughput(const TwoUserScenario& s) {
  const auto c = characterize_queue(s);
  if (!c.stable) {
    throw UnstableQueueError("relay queue is unstable (q0 = " + std::to_string(s.q0) +
                                 " <= q0min = " + std::to_string(c.q0min) + "); throughput is undefined",
                             c.q0min);
  }
  const detail::TwoUserLinks l(s.geometry);
  const double busy = s.q0 * (1.0 - *c.prob_empty);
  const double q1 = s.q1, q2 = s.q2;
  const double mu1 =
      busy * q1 * ((1 - q2) * l.dest_1_r1 + q2 * l.dest_1_r12) +
      (1 - busy) * q1 *
          ((1 - q2) * (l.dest_1_1 + (1 - l.dest_1_1) * l.relay_1_1) +
           q2 * (l.dest_1_12 + (1 - l.dest_1_12) * l.relay_1_12));
  const double mu2 =
      busy * q2 * ((1 - q1) * l.dest_2_r2 + q1 * l.dest_2_r12) +
      (1 - busy) * q2 *
          ((1 - q1) * (l.dest_2_2 + (1 - l.dest_2_2) * l.relay_2_2) +
           q1 * (l.dest_2_12 + (1 - l.dest_2_12) * l.relay_2_12));
  return ThroughputReport::from({mu1, mu2}, no_relay_throughput(s));
}

}  // namespace relaympr
