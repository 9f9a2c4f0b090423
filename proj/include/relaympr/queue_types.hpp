#pragma once

// Value types shared by the two-user and symmetric analyses.

#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "relaympr/common.hpp"

namespace relaympr {

/// Batch-arrival law at the relay queue. p_k^0 is the probability that k
/// packets arrive in a slot in which the queue is empty (relay silent); in a
/// nonempty slot the relay listens only with probability 1 - q0, so
/// p_k^1 = (1 - q0) p_k^0.
class ArrivalProbabilities {
 public:
  ArrivalProbabilities() = default;

  /// `batch[k-1]` holds p_k^0 for k = 1..m.
  ArrivalProbabilities(std::vector<double> batch, double relay_q) : batch_(std::move(batch)), q0_(relay_q) {
    detail::require_probability(relay_q, "q0");
    double total = 0.0;
    for (std::size_t k = 0; k < batch_.size(); ++k) {
      double& p = batch_[k];
      if (p < 0.0 && p > -1e-15) p = 0.0;
      if (p > 1.0 && p < 1.0 + 1e-15) p = 1.0;
      if (!(p >= 0.0 && p <= 1.0)) {
        throw DomainError("p_" + std::to_string(k + 1) + "^0 = " + std::to_string(p) + " is not a probability");
      }
      total += p;
    }
    if (total > 1.0 + 1e-12) throw DomainError("arrival probabilities sum to " + std::to_string(total) + " > 1");
  }

  std::size_t max_batch() const noexcept { return batch_.size(); }
  double relay_q() const noexcept { return q0_; }

  double given_empty(std::size_t k) const noexcept {
    if (k == 0) return none_given_empty();
    return k <= batch_.size() ? batch_[k - 1] : 0.0;
  }

  /// p_k^1, k >= 1.
  double given_nonempty(std::size_t k) const noexcept {
    return k == 0 ? 0.0 : (1.0 - q0_) * given_empty(k);
  }

  double none_given_empty() const noexcept {
    const double s = std::accumulate(batch_.begin(), batch_.end(), 0.0);
    return s < 1.0 ? 1.0 - s : 0.0;
  }

  /// lambda_0 = sum k p_k^0.
  double lambda0() const noexcept {
    double s = 0.0;
    for (std::size_t k = 1; k <= batch_.size(); ++k) s += static_cast<double>(k) * batch_[k - 1];
    return s;
  }

  /// lambda_1 = (1 - q0) lambda_0.
  double lambda1() const noexcept { return (1.0 - q0_) * lambda0(); }

  const std::vector<double>& batch() const noexcept { return batch_; }

 private:
  std::vector<double> batch_;
  double q0_ = 0.0;
};

struct QueueCharacterization {
  double lambda0 = 0.0;
  double lambda1 = 0.0;
  MaybeDivergent lambda;  // long-run arrival rate into the relay queue
  double mu = 0.0;        // service rate
  MaybeDivergent prob_empty;
  MaybeDivergent mean_queue;
  double q0min = 0.0;
  bool stable = false;
};

struct ThroughputReport {
  std::vector<double> per_user;
  std::vector<double> no_relay_per_user;
  double aggregate = 0.0;
  double no_relay_aggregate = 0.0;
  double relay_gain = 0.0;  // aggregate / no_relay_aggregate

  static ThroughputReport from(std::vector<double> with_relay, std::vector<double> without_relay) {
    ThroughputReport r;
    r.per_user = std::move(with_relay);
    r.no_relay_per_user = std::move(without_relay);
    r.aggregate = std::accumulate(r.per_user.begin(), r.per_user.end(), 0.0);
    r.no_relay_aggregate = std::accumulate(r.no_relay_per_user.begin(), r.no_relay_per_user.end(), 0.0);
    r.relay_gain = r.no_relay_aggregate > 0.0 ? r.aggregate / r.no_relay_aggregate : 0.0;
    return r;
  }
};

namespace detail {

/// Fills the rate-level part of a characterization. The queue is stable iff
/// lambda_1 < mu, except that a queue with no arrivals at all is trivially
/// empty forever.
inline QueueCharacterization characterize_rates(double lambda0, double lambda1, double mu, double q0min) {
  QueueCharacterization c;
  c.lambda0 = lambda0;
  c.lambda1 = lambda1;
  c.mu = mu;
  c.q0min = q0min;
  if (lambda0 == 0.0) {
    c.stable = true;
    c.prob_empty = 1.0;
    c.mean_queue = 0.0;
    c.lambda = 0.0;
    return c;
  }
  c.stable = lambda1 < mu;
  if (c.stable) {
    const double denom = mu - lambda1 + lambda0;
    c.prob_empty = (mu - lambda1) / denom;
    c.lambda = mu * lambda0 / denom;
  }
  return c;
}

}  // namespace detail
}  // namespace relaympr
