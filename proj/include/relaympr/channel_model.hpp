#pragma once

// SINR capture under Rayleigh fading: per-slot link success probabilities for
// an arbitrary set of simultaneous transmitters, and the closed forms used
// when every user sees the same channel.

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "relaympr/common.hpp"

namespace relaympr {

/// Node label: 0 is the relay, 1..n are users, and a distinguished marker
/// denotes the destination (which never transmits).
class NodeId {
 public:
  static constexpr NodeId relay() noexcept { return NodeId(0); }
  static constexpr NodeId destination() noexcept { return NodeId(kDestination); }
  static NodeId user(std::size_t k) {
    if (k == 0 || k == kDestination) throw ContractViolation("user index must be >= 1");
    return NodeId(k);
  }

  constexpr std::size_t index() const noexcept { return index_; }
  constexpr bool is_relay() const noexcept { return index_ == 0; }
  constexpr bool is_destination() const noexcept { return index_ == kDestination; }
  constexpr bool is_user() const noexcept { return !is_relay() && !is_destination(); }

  constexpr auto operator<=>(const NodeId&) const = default;

  std::string name() const {
    if (is_relay()) return "relay";
    if (is_destination()) return "dest";
    return "user" + std::to_string(index_);
  }

 private:
  static constexpr std::size_t kDestination = std::numeric_limits<std::size_t>::max();
  constexpr explicit NodeId(std::size_t index) noexcept : index_(index) {}
  std::size_t index_;
};

/// Everything the capture model consumes: per-link distance and fading mean,
/// per-node transmit power, per-receiver noise and SINR threshold, and a
/// global path-loss exponent. Node slots: relay 0, users 1..n, destination n+1.
class NetworkGeometry {
 public:
  struct Link {
    double distance_m;
    double fading_mean;
  };

  NetworkGeometry(std::size_t users, double path_loss_exponent)
      : users_(users),
        alpha_(path_loss_exponent),
        tx_power_(users + 2, 0.0),
        noise_(users + 2, 0.0),
        threshold_(users + 2, 0.0),
        links_((users + 2) * (users + 2)) {
    if (!(path_loss_exponent >= 0.0) || !std::isfinite(path_loss_exponent)) {
      throw DomainError("path-loss exponent must be a finite non-negative number");
    }
  }

  std::size_t user_count() const noexcept { return users_; }
  double path_loss_exponent() const noexcept { return alpha_; }

  NetworkGeometry& set_tx_power(NodeId node, double watts) {
    if (node.is_destination()) throw DomainError("the destination never transmits");
    if (!(watts > 0.0)) throw DomainError("transmit power of " + node.name() + " must be positive");
    tx_power_[slot(node)] = watts;
    return *this;
  }

  NetworkGeometry& set_receiver(NodeId node, double noise_watts, double threshold) {
    if (!(noise_watts > 0.0)) throw DomainError("noise power at " + node.name() + " must be positive");
    if (!(threshold >= 0.0)) throw DomainError("SINR threshold at " + node.name() + " must be >= 0");
    noise_[slot(node)] = noise_watts;
    threshold_[slot(node)] = threshold;
    return *this;
  }

  NetworkGeometry& set_link(NodeId from, NodeId to, double distance_m, double fading_mean = 1.0) {
    if (from == to) throw DomainError("a link needs two distinct nodes");
    if (from.is_destination()) throw DomainError("the destination never transmits");
    if (!(distance_m > 0.0)) {
      throw DomainError("distance " + from.name() + "->" + to.name() + " must be positive");
    }
    if (!(fading_mean > 0.0)) {
      throw DomainError("fading mean " + from.name() + "->" + to.name() + " must be positive");
    }
    links_[slot(from) * (users_ + 2) + slot(to)] = Link{distance_m, fading_mean};
    return *this;
  }

  bool has_link(NodeId from, NodeId to) const {
    if (!in_range(from) || !in_range(to)) return false;
    return links_[slot(from) * (users_ + 2) + slot(to)].has_value();
  }

  const Link& link(NodeId from, NodeId to) const {
    if (!has_link(from, to)) throw DomainError("unknown link " + from.name() + "->" + to.name());
    return *links_[slot(from) * (users_ + 2) + slot(to)];
  }

  double tx_power(NodeId node) const {
    const double p = tx_power_.at(slot(node));
    if (!(p > 0.0)) throw DomainError("no transmit power configured for " + node.name());
    return p;
  }

  double noise(NodeId receiver) const {
    const double eta = noise_.at(slot(receiver));
    if (!(eta > 0.0)) throw DomainError("no receiver configured at " + receiver.name());
    return eta;
  }

  double threshold(NodeId receiver) const {
    noise(receiver);
    return threshold_[slot(receiver)];
  }

  /// Checks that the relay network is complete (every user reaches relay and
  /// destination, relay reaches destination, both receivers configured).
  /// Throws DomainError on a missing piece; returns non-fatal warnings.
  std::vector<std::string> validate() const {
    const auto relay = NodeId::relay();
    const auto dest = NodeId::destination();
    tx_power(relay);
    noise(relay);
    noise(dest);
    link(relay, dest);
    for (std::size_t k = 1; k <= users_; ++k) {
      const auto u = NodeId::user(k);
      tx_power(u);
      link(u, relay);
      link(u, dest);
    }
    std::vector<std::string> warnings;
    if (alpha_ < 2.0 || alpha_ > 4.0) {
      warnings.push_back("path-loss exponent " + std::to_string(alpha_) +
                         " is outside the typical range [2, 4]");
    }
    return warnings;
  }

 private:
  bool in_range(NodeId node) const noexcept { return node.is_destination() || node.index() <= users_; }

  std::size_t slot(NodeId node) const {
    if (node.is_destination()) return users_ + 1;
    if (node.index() > users_) throw DomainError("unknown node " + node.name());
    return node.index();
  }

  std::size_t users_;
  double alpha_;
  std::vector<double> tx_power_;
  std::vector<double> noise_;
  std::vector<double> threshold_;
  std::vector<std::optional<Link>> links_;
};

/// Star layout in which every user sits at the same distances; all powers in
/// watts, distances in meters.
struct StarLayout {
  double r_user_dest = 130.0;
  double r_user_relay = 60.0;
  double r_relay_dest = 80.0;
  double ptx_user = 1e-3;
  double ptx_relay = 10e-3;
  double noise = 1e-11;
  double gamma_relay = 0.5;
  double gamma_dest = 0.5;
  double alpha = 4.0;
  double fading_mean = 1.0;
};

/// Numerical-results layout: r_d = 130 m, r_0 = 60 m, r_0d = 80 m,
/// alpha = 4, eta = 1e-11 W, P_tx = 1 mW (users) and 10 mW (relay).
inline StarLayout baseline_layout(double gamma) {
  StarLayout layout;
  layout.gamma_relay = gamma;
  layout.gamma_dest = gamma;
  return layout;
}

inline NetworkGeometry make_star_geometry(std::size_t users, const StarLayout& layout) {
  NetworkGeometry g(users, layout.alpha);
  const auto relay = NodeId::relay();
  const auto dest = NodeId::destination();
  g.set_tx_power(relay, layout.ptx_relay);
  g.set_receiver(relay, layout.noise, layout.gamma_relay);
  g.set_receiver(dest, layout.noise, layout.gamma_dest);
  g.set_link(relay, dest, layout.r_relay_dest, layout.fading_mean);
  for (std::size_t k = 1; k <= users; ++k) {
    const auto u = NodeId::user(k);
    g.set_tx_power(u, layout.ptx_user);
    g.set_link(u, relay, layout.r_user_relay, layout.fading_mean);
    g.set_link(u, dest, layout.r_user_dest, layout.fading_mean);
  }
  return g;
}

/// g(i,j) = P_tx(i) * r(i,j)^(-alpha), in watts.
inline double received_power_factor(const NetworkGeometry& geometry, NodeId from, NodeId to) {
  const auto& l = geometry.link(from, to);
  return geometry.tx_power(from) * std::pow(l.distance_m, -geometry.path_loss_exponent());
}

/// Mean received power v(i,j) * g(i,j).
inline double mean_received_power(const NetworkGeometry& geometry, NodeId from, NodeId to) {
  return geometry.link(from, to).fading_mean * received_power_factor(geometry, from, to);
}

/// Probability that `receiver` decodes `transmitter` when every node in
/// `transmitters` is active in the slot. Evaluated in log space and clamped.
inline double success_probability(const NetworkGeometry& geometry, NodeId transmitter, NodeId receiver,
                                  std::span<const NodeId> transmitters) {
  if (std::find(transmitters.begin(), transmitters.end(), transmitter) == transmitters.end()) {
    throw ContractViolation(transmitter.name() + " is not in the transmitter set");
  }
  if (std::find(transmitters.begin(), transmitters.end(), receiver) != transmitters.end()) {
    throw ContractViolation(receiver.name() + " cannot receive while transmitting");
  }
  const double gamma = geometry.threshold(receiver);
  if (gamma == 0.0) return 1.0;
  const double signal = mean_received_power(geometry, transmitter, receiver);
  double log_p = -gamma * geometry.noise(receiver) / signal;
  for (const NodeId k : transmitters) {
    if (k == transmitter) continue;
    log_p -= std::log1p(gamma * mean_received_power(geometry, k, receiver) / signal);
  }
  return detail::clamp_probability(std::exp(log_p));
}

inline double success_probability(const NetworkGeometry& geometry, NodeId transmitter, NodeId receiver,
                                  std::initializer_list<NodeId> transmitters) {
  return success_probability(geometry, transmitter, receiver,
                             std::span<const NodeId>(transmitters.begin(), transmitters.size()));
}

/// Base success probabilities of a symmetric network.
struct SymmetricLinkParams {
  double p_relay = 1.0;       // user -> relay, user alone
  double p_dest = 1.0;        // user -> destination, user alone
  double p_relay_dest = 1.0;  // relay -> destination, relay alone
  double gamma_relay = 0.0;
  double gamma_dest = 0.0;
  double beta = 1.0;  // v_0d g_0d / (v_d g_d)

  /// Throws DomainError on out-of-range values; warns when beta <= 1 (the
  /// relay link should beat the direct one).
  std::vector<std::string> validate() const {
    detail::require_probability(p_relay, "P_0");
    detail::require_probability(p_dest, "P_d");
    detail::require_probability(p_relay_dest, "P_0d");
    if (!(gamma_relay >= 0.0) || !(gamma_dest >= 0.0)) throw DomainError("thresholds must be >= 0");
    if (!(beta > 0.0)) throw DomainError("beta must be positive");
    std::vector<std::string> warnings;
    if (beta <= 1.0) {
      warnings.push_back("beta = " + std::to_string(beta) +
                         " <= 1: the relay-destination link is not stronger than the direct link");
    }
    return warnings;
  }
};

/// Extracts the symmetric parameters from a geometry in which all users share
/// the same link gains (relative tolerance 1e-12).
inline SymmetricLinkParams symmetric_link_params(const NetworkGeometry& geometry) {
  geometry.validate();
  if (geometry.user_count() == 0) throw DomainError("symmetric parameters need at least one user");
  const auto relay = NodeId::relay();
  const auto dest = NodeId::destination();
  const auto first = NodeId::user(1);
  const double to_relay = mean_received_power(geometry, first, relay);
  const double to_dest = mean_received_power(geometry, first, dest);
  auto same = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(std::abs(a), std::abs(b)); };
  for (std::size_t k = 2; k <= geometry.user_count(); ++k) {
    const auto u = NodeId::user(k);
    if (!same(mean_received_power(geometry, u, relay), to_relay)) {
      throw DomainError("geometry is not symmetric: link " + u.name() + "->relay differs from user1->relay");
    }
    if (!same(mean_received_power(geometry, u, dest), to_dest)) {
      throw DomainError("geometry is not symmetric: link " + u.name() + "->dest differs from user1->dest");
    }
  }
  SymmetricLinkParams p;
  p.p_relay = success_probability(geometry, first, relay, {first});
  p.p_dest = success_probability(geometry, first, dest, {first});
  p.p_relay_dest = success_probability(geometry, relay, dest, {relay});
  p.gamma_relay = geometry.threshold(relay);
  p.gamma_dest = geometry.threshold(dest);
  p.beta = mean_received_power(geometry, relay, dest) / to_dest;
  return p;
}

enum class LinkKind { user_to_relay, user_to_dest, relay_to_dest };

/// Closed-form success probability in the symmetric network.
///   user_to_relay:  P_{0,i}   = P_0 (1+gamma_0)^-(i-1)
///   user_to_dest:   P_{d,i,j} = P_d (1+gamma_d)^-(i-1) (1+beta*gamma_d)^-j
///   relay_to_dest:  P_{0d,i}  = P_0d (1+gamma_d/beta)^-i
/// `users` counts transmitting users (including the tagged one on user links).
/// FormulaVariant::as_printed swaps gamma_d for gamma_0 in the relay
/// interference factor of P_{d,i,j}.
inline double symmetric_success(const SymmetricLinkParams& p, LinkKind kind, unsigned users, bool relay_active,
                                FormulaVariant variant = FormulaVariant::corrected) {
  switch (kind) {
    case LinkKind::user_to_relay:
      if (users == 0) throw ContractViolation("P_{0,i} needs at least one transmitting user");
      return p.p_relay * std::pow(1.0 + p.gamma_relay, -static_cast<double>(users - 1));
    case LinkKind::user_to_dest: {
      if (users == 0) throw ContractViolation("P_{d,i,j} needs at least one transmitting user");
      double v = p.p_dest * std::pow(1.0 + p.gamma_dest, -static_cast<double>(users - 1));
      if (relay_active) {
        const double gamma = variant == FormulaVariant::as_printed ? p.gamma_relay : p.gamma_dest;
        v /= 1.0 + p.beta * gamma;
      }
      return v;
    }
    case LinkKind::relay_to_dest:
      return p.p_relay_dest * std::pow(1.0 + p.gamma_dest / p.beta, -static_cast<double>(users));
  }
  return 0.0;
}

}  // namespace relaympr
