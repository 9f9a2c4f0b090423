#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>

namespace relaympr {

/// Raised when an input lies outside the model's domain (unknown link,
/// non-positive distance, asymmetric geometry handed to a symmetric routine).
class DomainError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised when a caller breaks a precondition (transmitter not in the active
/// set, zero transmitting users on a user link).
class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Raised when a quantity is requested that only exists in the stable regime.
class UnstableQueueError : public std::runtime_error {
 public:
  UnstableQueueError(const std::string& what, double q0min)
      : std::runtime_error(what), q0min_(q0min) {}
  double q0min() const noexcept { return q0min_; }

 private:
  double q0min_;
};

/// Raised when chain rows do not form a stochastic matrix.
class ModelInconsistency : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Selects between the corrected formulas (default) and the as-printed
/// variants: the (1 + beta*gamma_relay) relay-interference factor and the
/// p^0 weighting in the two-user mean queue length.
enum class FormulaVariant { corrected, as_printed };

/// A quantity that is either finite or diverges (unstable relay queue).
/// std::nullopt is the divergence marker.
using MaybeDivergent = std::optional<double>;

namespace detail {

inline double clamp_probability(double p) noexcept {
  if (!(p > 0.0)) return 0.0;
  return p < 1.0 ? p : 1.0;
}

/// C(n, k). Exact product for n <= 30, log-gamma above to avoid overflow.
inline double binomial(unsigned n, unsigned k) noexcept {
  if (k > n) return 0.0;
  if (k == 0 || k == n) return 1.0;
  if (n <= 30) {
    if (k > n - k) k = n - k;
    double c = 1.0;
    for (unsigned i = 1; i <= k; ++i) c = c * static_cast<double>(n - k + i) / static_cast<double>(i);
    return std::round(c);
  }
  return std::exp(std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0));
}

/// C(n, k) q^k (1-q)^(n-k), with the q in {0, 1} corners handled exactly.
inline double binomial_pmf(unsigned n, unsigned k, double q) noexcept {
  if (k > n) return 0.0;
  if (q <= 0.0) return k == 0 ? 1.0 : 0.0;
  if (q >= 1.0) return k == n ? 1.0 : 0.0;
  if (n <= 30) return binomial(n, k) * std::pow(q, k) * std::pow(1.0 - q, n - k);
  const double log_term = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0) +
                          k * std::log(q) + (n - k) * std::log1p(-q);
  return std::exp(log_term);
}

inline void require_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw DomainError(std::string(name) + " must lie in [0, 1], got " + std::to_string(p));
  }
}

}  // namespace detail
}  // namespace relaympr
