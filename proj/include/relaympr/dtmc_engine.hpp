#pragma once

// Queue-length Markov chain of the relay. One packet leaves per slot at most
// and packets arrive in batches, so the transition matrix is lower Hessenberg
// (column-stochastic form). Two independent routes to the stationary law:
// the z-transform closed form, and a truncated numerical solve.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "relaympr/common.hpp"
#include "relaympr/queue_types.hpp"

namespace relaympr {

/// The two distinct columns of the transition matrix.
///   empty_row[k]    = P(0 -> k)          (a_k, k = 0..m)
///   interior_row[k] = P(i -> i - 1 + k)  (b_k, i >= 1)
class HessenbergChain {
 public:
  HessenbergChain(std::vector<double> empty_row, std::vector<double> interior_row)
      : a_(std::move(empty_row)), b_(std::move(interior_row)) {
    if (a_.empty()) throw DomainError("empty-state row has no entries");
    if (b_.size() < 2) b_.resize(2, 0.0);
    check_row(a_, "a");
    check_row(b_, "b");
  }

  const std::vector<double>& empty_row() const noexcept { return a_; }
  const std::vector<double>& interior_row() const noexcept { return b_; }
  double service_rate() const noexcept { return b_[0]; }

  /// Largest upward jump from any state.
  std::size_t max_batch() const noexcept { return std::max(a_.size() - 1, b_.size() - 2); }

  /// Mean number of packets entering from the empty state: -A'(1).
  double arrivals_when_empty() const noexcept { return weighted_sum(a_, 0); }

  /// Mean upward drift from interior states, excluding the departure: lambda_1.
  double arrivals_when_busy() const noexcept { return weighted_sum(b_, 1); }

  /// P(i -> j) for the infinite chain.
  double transition(std::size_t from, std::size_t to) const noexcept {
    if (from == 0) return to < a_.size() ? a_[to] : 0.0;
    if (to + 1 < from) return 0.0;
    const std::size_t k = to + 1 - from;
    return k < b_.size() ? b_[k] : 0.0;
  }

  /// Positive recurrence (or no arrivals at all).
  bool stable() const noexcept {
    return arrivals_when_empty() == 0.0 || arrivals_when_busy() < service_rate();
  }

 private:
  static double weighted_sum(const std::vector<double>& row, std::size_t shift) noexcept {
    double s = 0.0;
    for (std::size_t k = shift + 1; k < row.size(); ++k) s += static_cast<double>(k - shift) * row[k];
    return s;
  }

  static void check_row(std::vector<double>& row, const char* name) {
    double total = 0.0;
    for (std::size_t k = 0; k < row.size(); ++k) {
      if (row[k] < 0.0 && row[k] > -1e-14) row[k] = 0.0;
      if (!(row[k] >= 0.0)) {
        throw ModelInconsistency(std::string(name) + "_" + std::to_string(k) + " = " + std::to_string(row[k]) +
                                 " is negative");
      }
      total += row[k];
    }
    if (std::abs(total - 1.0) > 1e-12) {
      throw ModelInconsistency(std::string("row ") + name + " sums to " + std::to_string(total));
    }
  }

  std::vector<double> a_;
  std::vector<double> b_;
};

/// a_0 = 1 - sum p_i^0, a_i = p_i^0; b_0 = mu, b_1 = 1 - mu - sum p_i^1,
/// b_{i+1} = p_i^1.
inline HessenbergChain build_chain(const ArrivalProbabilities& arrivals, double mu) {
  detail::require_probability(mu, "mu");
  const std::size_t m = arrivals.max_batch();
  std::vector<double> a(m + 1), b(m + 2);
  double busy_total = 0.0;
  for (std::size_t k = 1; k <= m; ++k) {
    a[k] = arrivals.given_empty(k);
    b[k + 1] = arrivals.given_nonempty(k);
    busy_total += b[k + 1];
  }
  a[0] = arrivals.none_given_empty();
  b[0] = mu;
  b[1] = 1.0 - mu - busy_total;
  if (b[1] < -1e-12) {
    throw ModelInconsistency("mu + sum p_i^1 = " + std::to_string(mu + busy_total) + " exceeds 1");
  }
  b[1] = std::max(b[1], 0.0);
  return HessenbergChain(std::move(a), std::move(b));
}

struct SteadyState {
  enum class Method { closed_form, truncated_numeric };

  double s0 = 1.0;
  double mean = 0.0;
  double tail_mass = 0.0;
  Method method = Method::closed_form;
  std::vector<double> distribution;  // truncated_numeric only
};

namespace detail {

// Value and first two derivatives at z = 1 of f(z) = sum_j c_j z^{-j}.
struct LaurentAtOne {
  double d1 = 0.0;
  double d2 = 0.0;
};

inline LaurentAtOne derivatives_at_one(const std::vector<double>& c) {
  LaurentAtOne r;
  for (std::size_t j = 0; j < c.size(); ++j) {
    const double jj = static_cast<double>(j);
    r.d1 -= jj * c[j];
    r.d2 += jj * (jj + 1.0) * c[j];
  }
  return r;
}

}  // namespace detail

/// s0 = (1 + B'(1)) / (1 + B'(1) - A'(1)) with A(z) = sum a_i z^-i and
/// B(z) = sum b_i z^-i. Meaningful only for stable chains.
inline double empty_probability_formula(const HessenbergChain& chain) {
  const double a1 = -chain.arrivals_when_empty();
  const double b1 = detail::derivatives_at_one(chain.interior_row()).d1;
  return (1.0 + b1) / (1.0 + b1 - a1);
}

/// Closed-form s0 and mean queue length. The mean is -S'(1) with
/// S'(1) = s0 K''(1) / L''(1), where S = s0 N / D, N(z) = z^-1 A(z) - B(z),
/// D(z) = z^-1 - B(z), K = N'D - ND', L = D^2. Both K and L vanish to second
/// order at z = 1, so K''(1) = N''D' - N'D'' and L''(1) = 2 D'^2 are taken
/// from exact polynomial derivatives. Returns nullopt when unstable.
inline std::optional<SteadyState> steady_state_closed_form(const HessenbergChain& chain) {
  if (chain.arrivals_when_empty() == 0.0) return SteadyState{};
  if (!chain.stable()) return std::nullopt;

  const auto& a = chain.empty_row();
  const auto& b = chain.interior_row();
  const std::size_t len = std::max(a.size() + 1, b.size());
  std::vector<double> n(len, 0.0), d(len, 0.0);
  for (std::size_t j = 0; j < len; ++j) {
    const double bj = j < b.size() ? b[j] : 0.0;
    const double a_prev = (j >= 1 && j - 1 < a.size()) ? a[j - 1] : 0.0;
    n[j] = a_prev - bj;
    d[j] = (j == 1 ? 1.0 : 0.0) - bj;
  }
  const auto nd = detail::derivatives_at_one(n);
  const auto dd = detail::derivatives_at_one(d);
  const double k2 = nd.d2 * dd.d1 - nd.d1 * dd.d2;
  const double l2 = 2.0 * dd.d1 * dd.d1;

  SteadyState s;
  s.s0 = empty_probability_formula(chain);
  s.mean = -s.s0 * k2 / l2;
  s.method = SteadyState::Method::closed_form;
  return s;
}

/// Signals that the truncation level was too small for the requested tail bound.
class TruncationTooSmall : public std::runtime_error {
 public:
  TruncationTooSmall(double tail_mass, std::size_t q_max)
      : std::runtime_error("tail mass " + std::to_string(tail_mass) + " at q_max = " + std::to_string(q_max) +
                           " exceeds the bound; retry with a larger truncation"),
        tail_mass_(tail_mass),
        q_max_(q_max) {}
  double tail_mass() const noexcept { return tail_mass_; }
  std::size_t suggested_q_max() const noexcept { return 2 * q_max_; }

 private:
  double tail_mass_;
  std::size_t q_max_;
};

inline constexpr double kDefaultTailBound = 1e-10;

/// Stationary law of the chain restricted to 0..q_max, where every jump past
/// q_max lands on q_max. Solves (P - I) pi = 0 with the last balance equation
/// replaced by sum pi = 1. tail_mass is the mass of the boundary state.
inline SteadyState steady_state_truncated(const HessenbergChain& chain, std::size_t q_max,
                                          double tail_bound = kDefaultTailBound) {
  if (q_max < 1) throw DomainError("q_max must be >= 1");
  const auto n = static_cast<Eigen::Index>(q_max + 1);
  const auto& a = chain.empty_row();
  const auto& b = chain.interior_row();

  std::vector<Eigen::Triplet<double>> entries;
  entries.reserve(static_cast<std::size_t>(n) * (b.size() + 1) + static_cast<std::size_t>(n));
  auto add = [&](Eigen::Index to, Eigen::Index from, double p) {
    if (to != n - 1 && p != 0.0) entries.emplace_back(to, from, p);
  };
  for (std::size_t k = 0; k < a.size(); ++k) add(std::min<Eigen::Index>(k, n - 1), 0, a[k]);
  for (Eigen::Index i = 1; i < n; ++i) {
    for (std::size_t k = 0; k < b.size(); ++k) {
      add(std::min<Eigen::Index>(i - 1 + static_cast<Eigen::Index>(k), n - 1), i, b[k]);
    }
  }
  for (Eigen::Index i = 0; i + 1 < n; ++i) entries.emplace_back(i, i, -1.0);
  for (Eigen::Index i = 0; i < n; ++i) entries.emplace_back(n - 1, i, 1.0);

  Eigen::SparseMatrix<double> m(n, n);
  m.setFromTriplets(entries.begin(), entries.end());
  Eigen::SparseLU<Eigen::SparseMatrix<double>, Eigen::COLAMDOrdering<int>> lu;
  lu.compute(m);
  if (lu.info() != Eigen::Success) throw ModelInconsistency("truncated chain is singular");
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
  rhs(n - 1) = 1.0;
  const Eigen::VectorXd pi = lu.solve(rhs);
  if (lu.info() != Eigen::Success) throw ModelInconsistency("truncated solve failed");

  SteadyState s;
  s.method = SteadyState::Method::truncated_numeric;
  s.distribution.resize(static_cast<std::size_t>(n));
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double p = std::max(pi(i), 0.0);
    s.distribution[static_cast<std::size_t>(i)] = p;
    total += p;
  }
  double mean = 0.0;
  for (std::size_t i = 0; i < s.distribution.size(); ++i) {
    s.distribution[i] /= total;
    mean += static_cast<double>(i) * s.distribution[i];
  }
  s.s0 = s.distribution.front();
  s.mean = mean;
  s.tail_mass = s.distribution.back();
  if (!(s.tail_mass < tail_bound)) throw TruncationTooSmall(s.tail_mass, q_max);
  return s;
}

/// Doubles the truncation level, starting from a load-based guess, until the
/// tail bound is met or `q_max_limit` is exceeded.
inline SteadyState steady_state_adaptive(const HessenbergChain& chain, double tail_bound = kDefaultTailBound,
                                         std::size_t q_max_limit = std::size_t{1} << 21) {
  std::size_t q_max = 64;
  if (chain.service_rate() > 0.0) {
    const double rho = chain.arrivals_when_busy() / chain.service_rate();
    if (rho < 1.0) q_max = std::max<std::size_t>(q_max, static_cast<std::size_t>(10.0 / (1.0 - rho)));
  }
  q_max = std::max(q_max, 4 * chain.max_batch());
  for (;;) {
    try {
      return steady_state_truncated(chain, q_max, tail_bound);
    } catch (const TruncationTooSmall& e) {
      if (e.suggested_q_max() > q_max_limit) throw;
      q_max = e.suggested_q_max();
    }
  }
}

}  // namespace relaympr
