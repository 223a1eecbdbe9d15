#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "ducb/error.hpp"
#include "ducb/rng.hpp"

namespace ducb {

/// Sorted optimality gaps Delta_(1) = 0 <= Delta_(2) <= ... <= Delta_(N) <= 1.
using GapProfile = Eigen::VectorXd;

/// Throws InputError unless `gaps` is a valid profile with Delta_(k) > 0 for k >= 2.
template <typename Derived>
void validate_gaps(const Eigen::MatrixBase<Derived>& gaps) {
  if (gaps.size() < 1) throw InputError("gap profile is empty");
  if (gaps(0) != 0) throw InputError("gap profile must start with Delta_(1) = 0");
  for (Eigen::Index k = 1; k < gaps.size(); ++k) {
    if (!(gaps(k) > 0)) throw InputError("gap profile: Delta_(k) must be positive for k >= 2");
    if (gaps(k) < gaps(k - 1)) throw InputError("gap profile is not sorted ascending");
    if (gaps(k) > 1) throw InputError("gap profile: gaps must be <= 1");
  }
}

/// lambda(mu) = 1 + sum_{k=2}^{N-1} (1 - Delta_(k)^2 / Delta_(k+1)^2).
template <typename Derived>
typename Derived::Scalar lambda_mu(const Eigen::MatrixBase<Derived>& gaps) {
  using Scalar = typename Derived::Scalar;
  validate_gaps(gaps);
  Scalar total(1);
  for (Eigen::Index k = 1; k + 1 < gaps.size(); ++k) {
    const Scalar r = gaps(k) / gaps(k + 1);
    total += Scalar(1) - r * r;
  }
  return total;
}

/// sum_{k=2}^{N-1} (1/Delta_(k)) (1 - Delta_(k)^2 / Delta_(k+1)^2) + 1/Delta_(N).
template <typename Derived>
typename Derived::Scalar instance_term_ducb(const Eigen::MatrixBase<Derived>& gaps) {
  using Scalar = typename Derived::Scalar;
  validate_gaps(gaps);
  if (gaps.size() < 2) throw InputError("instance term needs at least two experts");
  Scalar total(0);
  for (Eigen::Index k = 1; k + 1 < gaps.size(); ++k) {
    const Scalar r = gaps(k) / gaps(k + 1);
    total += (Scalar(1) - r * r) / gaps(k);
  }
  return total + Scalar(1) / gaps(gaps.size() - 1);
}

/// sum_{k=2}^{N} 1/Delta_(k).
template <typename Derived>
typename Derived::Scalar instance_term_ucb1(const Eigen::MatrixBase<Derived>& gaps) {
  validate_gaps(gaps);
  if (gaps.size() < 2) throw InputError("instance term needs at least two experts");
  return gaps.tail(gaps.size() - 1).cwiseInverse().sum();
}

/// gamma(x) = x^2 / ln^2(6/x).
template <typename Scalar>
Scalar gamma_fn(Scalar x) {
  const Scalar l = std::log(Scalar(6) / x);
  return x * x / (l * l);
}

enum class BoundKind { Clipped, MedianOfMeans };  // Thm. r1 / Thm. r2 forms

struct BoundReport {
  BoundKind kind = BoundKind::MedianOfMeans;
  double value = 0.0;
  double leading = 0.0;    // term in Delta_(N)
  double sum_terms = 0.0;  // k = 2 .. N-1
  double gap_sum = 0.0;    // (pi^2 / 3) sum_i Delta_(i)
  double divergence = 0.0; // M or sigma
  double horizon = 0.0;
  double constant = 1.0;   // universal constant, shape only
};

/// Evaluates the regret bound for the clipped (M) or median-of-means (sigma)
/// estimator with the universal constant set to 1.
template <typename Derived>
BoundReport theorem_bound(const Eigen::MatrixBase<Derived>& gaps, double horizon, double divergence,
                          BoundKind kind) {
  validate_gaps(gaps);
  if (gaps.size() < 2) throw InputError("theorem bound needs Delta_(2) > 0");
  if (!(horizon >= 2.0)) throw InputError("theorem bound needs T >= 2");
  if (!(divergence >= 1.0) || !std::isfinite(divergence))
    throw InputError("theorem bound needs a finite divergence >= 1");

  BoundReport r;
  r.kind = kind;
  r.divergence = divergence;
  r.horizon = horizon;
  const double log_t = std::log(horizon);
  const double d2 = divergence * divergence;
  const Eigen::Index n = gaps.size();

  // Per-gap scale: M^2 ln^2(6/x) ln T / x  or  sigma^2 ln T / x.
  auto scale = [&](double x) {
    if (kind == BoundKind::Clipped) {
      const double l = std::log(6.0 / x);
      return d2 * l * l * log_t / x;
    }
    return d2 * log_t / x;
  };
  auto shrink = [&](double a, double b) {
    if (kind == BoundKind::Clipped) return 1.0 - gamma_fn(a) / gamma_fn(b);
    return 1.0 - (a * a) / (b * b);
  };

  r.leading = scale(gaps(n - 1));
  for (Eigen::Index k = 1; k + 1 < n; ++k) r.sum_terms += scale(gaps(k)) * shrink(gaps(k), gaps(k + 1));
  r.gap_sum = std::numbers::pi * std::numbers::pi / 3.0 * gaps.sum();
  r.value = r.leading + r.sum_terms + r.gap_sum;
  return r;
}

/// N-free alternative: M^2 ln^2(1/Delta_(2)) ln T / Delta_(2)^2 or sigma^2 ln T / Delta_(2)^2.
template <typename Derived>
double corollary_delta_bound(const Eigen::MatrixBase<Derived>& gaps, double horizon,
                             double divergence, BoundKind kind) {
  validate_gaps(gaps);
  if (gaps.size() < 2) throw InputError("corollary bound needs Delta_(2) > 0");
  if (!(horizon >= 2.0)) throw InputError("corollary bound needs T >= 2");
  const double g = gaps(1);
  const double base = divergence * divergence * std::log(horizon) / (g * g);
  if (kind == BoundKind::Clipped) {
    const double l = std::log(1.0 / g);
    return base * l * l;
  }
  return base;
}

/// lambda(mu) M^2 ln^2(6/Delta_(2)) ln T / Delta_(2) or lambda(mu) sigma^2 ln T / Delta_(2).
template <typename Derived>
double corollary_simple_bound(const Eigen::MatrixBase<Derived>& gaps, double horizon,
                              double divergence, BoundKind kind) {
  const double lam = lambda_mu(gaps);
  if (gaps.size() < 2) throw InputError("corollary bound needs Delta_(2) > 0");
  const double g = gaps(1);
  double base = lam * divergence * divergence * std::log(horizon) / g;
  if (kind == BoundKind::Clipped) {
    const double l = std::log(6.0 / g);
    base *= l * l;
  }
  return base;
}

/// Delta_(1) = 0, Delta_(2) = delta2, Delta_(3..N) sorted uniforms on [delta2, 1].
inline GapProfile sample_gap_profile(std::size_t n, double delta2, Rng& rng) {
  if (n < 2) throw InputError("gap profile needs N >= 2");
  if (!(delta2 > 0.0 && delta2 <= 1.0)) throw InputError("delta2 must lie in (0, 1]");
  GapProfile g(static_cast<Eigen::Index>(n));
  g(0) = 0.0;
  g(1) = delta2;
  for (Eigen::Index k = 2; k < g.size(); ++k) g(k) = rng.uniform(delta2, 1.0);
  std::sort(g.data() + 2, g.data() + g.size());
  return g;
}

struct LambdaCheck {
  double mean = 0.0;
  double ceiling = 0.0;  // 1 + 2 ln N
};

inline LambdaCheck lambda_expectation_check(std::size_t n, double delta2, std::size_t replications,
                                            std::uint64_t seed) {
  if (replications == 0) throw InputError("lambda check needs at least one replication");
  Rng rng(seed, Stream::Instance);
  double total = 0.0;
  for (std::size_t r = 0; r < replications; ++r) total += lambda_mu(sample_gap_profile(n, delta2, rng));
  return {total / static_cast<double>(replications), 1.0 + 2.0 * std::log(static_cast<double>(n))};
}

/// L(t) = (1/t) sum_{s<=t} (1 - y_s).
inline std::vector<double> progressive_validation_loss(std::span<const double> rewards) {
  std::vector<double> out(rewards.size());
  double loss = 0.0;
  for (std::size_t t = 0; t < rewards.size(); ++t) {
    loss += 1.0 - rewards[t];
    out[t] = loss / static_cast<double>(t + 1);
  }
  return out;
}

struct InstanceTermPoint {
  std::size_t n = 0;
  double ducb = 0.0;  // mean over profiles
  double ucb1 = 0.0;
  double ratio = 0.0; // mean of per-profile ratios
};

/// Averages both instance terms over `profiles` uniform-gap profiles for each N.
inline std::vector<InstanceTermPoint> instance_term_sweep(std::span<const std::size_t> sizes,
                                                          double delta2, std::size_t profiles,
                                                          std::uint64_t seed) {
  if (profiles == 0) throw InputError("instance term sweep needs at least one profile");
  std::vector<InstanceTermPoint> out;
  for (std::size_t n : sizes) {
    Rng rng(derive_seed(seed, n), Stream::Instance);
    InstanceTermPoint p;
    p.n = n;
    for (std::size_t i = 0; i < profiles; ++i) {
      const GapProfile g = sample_gap_profile(n, delta2, rng);
      const double a = instance_term_ducb(g);
      const double b = instance_term_ucb1(g);
      p.ducb += a;
      p.ucb1 += b;
      p.ratio += a / b;
    }
    const auto m = static_cast<double>(profiles);
    p.ducb /= m;
    p.ucb1 /= m;
    p.ratio /= m;
    out.push_back(p);
  }
  return out;
}

}  // namespace ducb
