#pragma once

// Slot-level Monte Carlo of the relay-assisted random-access network:
// saturated users, a half-duplex relay with an infinite FIFO queue, SINR
// capture with per-slot Rayleigh (exponential power) fading at both
// receivers, and instantaneous error-free ACKs.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <limits>
#include <span>
#include <stdexcept>
#include <thread>
#include <vector>

#include "relaympr/channel_model.hpp"
#include "relaympr/common.hpp"
#include "relaympr/two_user_analysis.hpp"

namespace relaympr {

/// Counter-based uniform source: the draw for (seed, replication, slot,
/// stream) is a pure function of those four numbers, so replications give the
/// same bits whatever thread or order they run in.
class CounterRng {
 public:
  CounterRng(std::uint64_t seed, std::uint64_t replication) noexcept
      : key_(mix(mix(seed ^ 0x243F6A8885A308D3ULL) ^ (replication * 0x9E3779B97F4A7C15ULL + 0x13198A2E03707344ULL))) {}

  class SlotStream {
   public:
    explicit SlotStream(std::uint64_t key) noexcept : key_(key) {}
    /// Uniform on [0, 1) with 53 random bits.
    double uniform(std::uint64_t stream) const noexcept {
      const std::uint64_t bits = mix(key_ + (stream + 1) * 0x9E3779B97F4A7C15ULL);
      return static_cast<double>(bits >> 11) * 0x1.0p-53;
    }

   private:
    std::uint64_t key_;
  };

  SlotStream slot(std::uint64_t t) const noexcept { return SlotStream(mix(key_ ^ mix(t + 0xA4093822299F31D0ULL))); }

  static constexpr std::uint64_t mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::uint64_t key_;
};

namespace detail {

/// Marks decoded[i] when received[i] / (noise + sum of the others) >= gamma.
inline void capture(std::span<const double> received, double noise, double gamma, std::span<char> decoded) {
  double total = noise;
  for (double p : received) total += p;
  for (std::size_t i = 0; i < received.size(); ++i) {
    decoded[i] = received[i] >= gamma * (total - received[i]);
  }
}

inline double exponential(double mean, double u) noexcept { return -mean * std::log1p(-u); }

}  // namespace detail

/// One stochastic realization of the capture model: draws an exponential
/// fading power for every transmitter->receiver link and returns the
/// transmitters whose SINR clears the receiver's threshold. `uniform` yields
/// doubles in [0, 1).
template <class Uniform>
std::vector<NodeId> success_draw(const NetworkGeometry& geometry, std::span<const NodeId> transmitters,
                                 NodeId receiver, Uniform&& uniform) {
  if (std::find(transmitters.begin(), transmitters.end(), receiver) != transmitters.end()) {
    throw ContractViolation(receiver.name() + " cannot receive while transmitting");
  }
  if (transmitters.empty()) return {};
  std::vector<double> received(transmitters.size());
  for (std::size_t i = 0; i < transmitters.size(); ++i) {
    received[i] = detail::exponential(mean_received_power(geometry, transmitters[i], receiver), uniform());
  }
  std::vector<char> decoded(transmitters.size());
  detail::capture(received, geometry.noise(receiver), geometry.threshold(receiver), decoded);
  std::vector<NodeId> out;
  for (std::size_t i = 0; i < transmitters.size(); ++i) {
    if (decoded[i]) out.push_back(transmitters[i]);
  }
  return out;
}

/// Physical network plus access probabilities (q_i per user, q0 for the relay).
struct SimScenario {
  NetworkGeometry geometry;
  double q0 = 1.0;
  std::vector<double> user_q;

  static SimScenario from(const TwoUserScenario& s) { return SimScenario{s.geometry, s.q0, {s.q1, s.q2}}; }
  static SimScenario symmetric(const NetworkGeometry& g, double q, double q0) {
    return SimScenario{g, q0, std::vector<double>(g.user_count(), q)};
  }
};

struct SimConfig {
  SimScenario scenario;
  std::uint64_t slots = 1'000'000;
  std::uint64_t warmup = 100'000;
  std::uint64_t seed = 1;
  unsigned replications = 1;
  unsigned threads = 0;  // 0: hardware concurrency

  /// Warmup defaults to 10% of the run.
  static std::uint64_t default_warmup(std::uint64_t slots) noexcept { return slots / 10; }

  void validate() const {
    scenario.geometry.validate();
    if (scenario.user_q.size() != scenario.geometry.user_count()) {
      throw DomainError("one access probability per user is required");
    }
    if (scenario.geometry.user_count() > 63) throw DomainError("the simulator supports at most 63 users");
    detail::require_probability(scenario.q0, "q0");
    for (double q : scenario.user_q) detail::require_probability(q, "q");
    if (!(slots > warmup)) throw DomainError("slots must exceed warmup");
    if (replications < 1) throw DomainError("replications must be >= 1");
  }
};

/// Per-slot trace record. Bit 0 of each bitmap is the relay, bit i user i.
/// relay_decoded is zero whenever the relay transmits. queue_length is the
/// relay queue at the start of the slot.
struct SlotRecord {
  std::uint64_t slot = 0;
  std::uint64_t active = 0;
  std::uint64_t dest_decoded = 0;
  std::uint64_t relay_decoded = 0;
  std::uint64_t queue_length = 0;
};

using TraceSink = std::function<void(const SlotRecord&)>;

/// Raw post-warmup counters of one replication.
struct ReplicationCounters {
  std::uint64_t slots = 0;
  std::uint64_t empty_slots = 0;
  std::uint64_t busy_slots = 0;
  std::uint64_t arrivals_when_empty = 0;
  std::uint64_t arrivals_when_busy = 0;
  std::uint64_t relay_attempts = 0;
  std::uint64_t departures = 0;
  std::uint64_t queue_length_sum = 0;
  std::uint64_t final_queue_length = 0;
  std::vector<std::uint64_t> attempts;  // per user, index 0 = user 1
  std::vector<std::uint64_t> direct;
  std::vector<std::uint64_t> enqueued;
  std::vector<std::uint64_t> dropped;
  std::vector<std::uint64_t> relayed;  // relay departures carrying this user's packets

  bool operator==(const ReplicationCounters&) const = default;
};

struct Estimate {
  double mean = 0.0;
  double std_error = 0.0;  // across replications; NaN with a single replication
};

struct SimulationStats {
  Estimate lambda0;
  Estimate lambda1;
  Estimate lambda;
  Estimate mu;  // departures per nonempty slot
  Estimate prob_empty;
  Estimate mean_queue;
  std::vector<Estimate> per_user;
  Estimate per_user_mean;  // aggregate / n
  Estimate aggregate;
  std::vector<ReplicationCounters> replications;
};

namespace detail {

class SlotEngine {
 public:
  explicit SlotEngine(const SimConfig& config)
      : config_(config), users_(config.scenario.geometry.user_count()) {
    const auto& g = config.scenario.geometry;
    const auto relay = NodeId::relay();
    const auto dest = NodeId::destination();
    to_dest_.resize(users_ + 1);
    to_relay_.resize(users_ + 1);
    to_dest_[0] = mean_received_power(g, relay, dest);
    for (std::size_t k = 1; k <= users_; ++k) {
      to_dest_[k] = mean_received_power(g, NodeId::user(k), dest);
      to_relay_[k] = mean_received_power(g, NodeId::user(k), relay);
    }
    noise_dest_ = g.noise(dest);
    gamma_dest_ = g.threshold(dest);
    noise_relay_ = g.noise(relay);
    gamma_relay_ = g.threshold(relay);
  }

  ReplicationCounters run(unsigned replication, const TraceSink& trace) const {
    const CounterRng rng(config_.seed, replication);
    const auto& q = config_.scenario.user_q;
    const double q0 = config_.scenario.q0;
    const std::size_t n = users_;

    ReplicationCounters c;
    for (auto* v : {&c.attempts, &c.direct, &c.enqueued, &c.dropped, &c.relayed}) v->assign(n, 0);

    std::deque<std::uint32_t> queue;
    std::vector<std::uint32_t> tx_nodes;  // 0 = relay, k = user k
    std::vector<double> received;
    std::vector<char> dest_ok, relay_ok;
    tx_nodes.reserve(n + 1);
    received.reserve(n + 1);

    for (std::uint64_t t = 0; t < config_.slots; ++t) {
      const auto s = rng.slot(t);
      const bool measuring = t >= config_.warmup;
      const std::size_t backlog = queue.size();

      tx_nodes.clear();
      const bool relay_tx = backlog > 0 && s.uniform(0) < q0;
      if (relay_tx) tx_nodes.push_back(0);
      for (std::uint32_t k = 1; k <= n; ++k) {
        if (s.uniform(k) < q[k - 1]) tx_nodes.push_back(k);
      }
      const std::size_t first_user = relay_tx ? 1 : 0;

      received.resize(tx_nodes.size());
      for (std::size_t i = 0; i < tx_nodes.size(); ++i) {
        received[i] = exponential(to_dest_[tx_nodes[i]], s.uniform(n + 1 + tx_nodes[i]));
      }
      dest_ok.assign(tx_nodes.size(), 0);
      capture(received, noise_dest_, gamma_dest_, dest_ok);

      relay_ok.assign(tx_nodes.size(), 0);
      if (!relay_tx && !tx_nodes.empty()) {
        for (std::size_t i = 0; i < tx_nodes.size(); ++i) {
          received[i] = exponential(to_relay_[tx_nodes[i]], s.uniform(2 * (n + 1) + tx_nodes[i]));
        }
        capture(received, noise_relay_, gamma_relay_, relay_ok);
      }

      SlotRecord rec;
      rec.slot = t;
      rec.queue_length = backlog;
      std::uint64_t stored = 0;
      for (std::size_t i = first_user; i < tx_nodes.size(); ++i) {
        const std::uint32_t k = tx_nodes[i];
        const std::size_t u = k - 1;
        rec.active |= std::uint64_t{1} << k;
        if (measuring) ++c.attempts[u];
        if (dest_ok[i]) {
          rec.dest_decoded |= std::uint64_t{1} << k;
          if (measuring) ++c.direct[u];
        } else if (relay_ok[i]) {
          queue.push_back(k);
          ++stored;
          if (measuring) ++c.enqueued[u];
        } else if (measuring) {
          ++c.dropped[u];
        }
        if (relay_ok[i]) rec.relay_decoded |= std::uint64_t{1} << k;
      }
      bool departed = false;
      if (relay_tx) {
        rec.active |= 1;
        if (dest_ok[0]) {
          rec.dest_decoded |= 1;
          const std::uint32_t origin = queue.front();
          queue.pop_front();
          departed = true;
          if (measuring) ++c.relayed[origin - 1];
        }
      }

      if (measuring) {
        ++c.slots;
        c.queue_length_sum += backlog;
        if (backlog == 0) {
          ++c.empty_slots;
          c.arrivals_when_empty += stored;
        } else {
          ++c.busy_slots;
          c.arrivals_when_busy += stored;
          if (relay_tx) ++c.relay_attempts;
          if (departed) ++c.departures;
        }
      }
      if (trace) trace(rec);
    }
    c.final_queue_length = queue.size();
    return c;
  }

 private:
  const SimConfig& config_;
  std::size_t users_;
  std::vector<double> to_dest_;   // index 0 = relay
  std::vector<double> to_relay_;  // index 0 unused
  double noise_dest_ = 0.0, gamma_dest_ = 0.0, noise_relay_ = 0.0, gamma_relay_ = 0.0;
};

inline double ratio(std::uint64_t num, std::uint64_t den) noexcept {
  return den > 0 ? static_cast<double>(num) / static_cast<double>(den) : std::numeric_limits<double>::quiet_NaN();
}

template <class F>
Estimate summarize(const std::vector<ReplicationCounters>& reps, F&& value) {
  double sum = 0.0;
  std::size_t count = 0;
  std::vector<double> xs;
  xs.reserve(reps.size());
  for (const auto& r : reps) {
    const double x = value(r);
    if (!std::isfinite(x)) continue;
    xs.push_back(x);
    sum += x;
    ++count;
  }
  Estimate e;
  if (count == 0) {
    e.mean = e.std_error = std::numeric_limits<double>::quiet_NaN();
    return e;
  }
  e.mean = sum / static_cast<double>(count);
  if (count < 2) {
    e.std_error = std::numeric_limits<double>::quiet_NaN();
    return e;
  }
  double ss = 0.0;
  for (double x : xs) ss += (x - e.mean) * (x - e.mean);
  e.std_error = std::sqrt(ss / static_cast<double>(count - 1) / static_cast<double>(count));
  return e;
}

}  // namespace detail

/// Runs all replications (in parallel when threads allow) and merges their
/// counters in replication order. `trace`, if set, receives every slot of
/// replication 0, warmup included.
inline SimulationStats run(const SimConfig& config, const TraceSink& trace = {}) {
  config.validate();
  const detail::SlotEngine engine(config);
  std::vector<ReplicationCounters> reps(config.replications);

  unsigned workers = config.threads ? config.threads : std::max(1u, std::thread::hardware_concurrency());
  workers = std::min(workers, config.replications);
  if (workers <= 1) {
    for (unsigned r = 0; r < config.replications; ++r) reps[r] = engine.run(r, r == 0 ? trace : TraceSink{});
  } else {
    std::atomic<unsigned> next{0};
    std::vector<std::exception_ptr> errors(workers);
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          for (unsigned r = next++; r < config.replications; r = next++) {
            reps[r] = engine.run(r, r == 0 ? trace : TraceSink{});
          }
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
      if (e) std::rethrow_exception(e);
    }
  }

  using detail::ratio;
  const std::size_t n = config.scenario.user_q.size();
  SimulationStats st;
  st.prob_empty = detail::summarize(reps, [](const auto& r) { return ratio(r.empty_slots, r.slots); });
  st.lambda0 = detail::summarize(reps, [](const auto& r) { return ratio(r.arrivals_when_empty, r.empty_slots); });
  st.lambda1 = detail::summarize(reps, [](const auto& r) { return ratio(r.arrivals_when_busy, r.busy_slots); });
  st.lambda = detail::summarize(
      reps, [](const auto& r) { return ratio(r.arrivals_when_empty + r.arrivals_when_busy, r.slots); });
  st.mu = detail::summarize(reps, [](const auto& r) { return ratio(r.departures, r.busy_slots); });
  st.mean_queue = detail::summarize(reps, [](const auto& r) { return ratio(r.queue_length_sum, r.slots); });
  auto delivered = [](const ReplicationCounters& r) {
    std::uint64_t d = 0;
    for (std::size_t u = 0; u < r.direct.size(); ++u) d += r.direct[u] + r.relayed[u];
    return d;
  };
  st.aggregate = detail::summarize(reps, [&](const auto& r) { return ratio(delivered(r), r.slots); });
  st.per_user_mean =
      detail::summarize(reps, [&](const auto& r) { return ratio(delivered(r), r.slots) / static_cast<double>(n); });
  for (std::size_t u = 0; u < n; ++u) {
    st.per_user.push_back(
        detail::summarize(reps, [u](const auto& r) { return ratio(r.direct[u] + r.relayed[u], r.slots); }));
  }
  st.replications = std::move(reps);
  return st;
}

}  // namespace relaympr
