#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "ducb/env.hpp"
#include "ducb/error.hpp"
#include "ducb/experts.hpp"

namespace ducb {

inline constexpr double kUnbounded = std::numeric_limits<double>::infinity();

/// Above this exponent f1 is treated as overflowing and the pair as unbounded.
inline constexpr double kMaxLogExponent = 700.0;

/// f1(x) = x exp(x - 1) - 1, the generator of the log-divergence M_ij.
struct LogDivergenceGenerator {
  double operator()(double x) const {
    if (x == 0.0) return -1.0;
    const double e = std::log(x) + x - 1.0;
    if (e > kMaxLogExponent) return kUnbounded;
    return std::exp(e) - 1.0;
  }
};

/// f2(x) = x^2 - 1, the chi-square generator.
struct ChiSquareGenerator {
  double operator()(double x) const { return x * x - 1.0; }
};

/// sum_v q(v) f(p(v) / q(v)) for one context. Terms with p = q = 0 vanish;
/// q = 0 < p makes the divergence unbounded (+inf).
template <typename F, typename DerivedP, typename DerivedQ>
typename DerivedP::Scalar pointwise_f_divergence(const Eigen::MatrixBase<DerivedP>& p,
                                                 const Eigen::MatrixBase<DerivedQ>& q, F f) {
  using Scalar = typename DerivedP::Scalar;
  Scalar total(0);
  for (Eigen::Index v = 0; v < p.size(); ++v) {
    const Scalar pv = p(v);
    const Scalar qv = q(v);
    if (qv <= Scalar(0)) {
      if (pv > Scalar(0)) return Scalar(kUnbounded);
      continue;
    }
    const Scalar fx = f(pv / qv);
    if (!std::isfinite(fx)) return Scalar(kUnbounded);
    total += qv * fx;
  }
  return total;
}

/// Conditional f-divergence E_{x ~ w}[ sum_v pi_j(v|x) f(pi_i(v|x) / pi_j(v|x)) ]
/// for C x K conditional tables. Returns +inf when unbounded. Small negative
/// rounding residue is clamped to zero.
template <typename F, typename DerivedP, typename DerivedQ, typename DerivedW>
double conditional_f_divergence(const Eigen::MatrixBase<DerivedP>& p_i,
                                const Eigen::MatrixBase<DerivedQ>& p_j,
                                const Eigen::MatrixBase<DerivedW>& context_weights, F f) {
  if (p_i.rows() != p_j.rows() || p_i.cols() != p_j.cols() || p_i.rows() != context_weights.size())
    throw InputError("conditional_f_divergence: shape mismatch");
  double total = 0.0;
  for (Eigen::Index x = 0; x < p_i.rows(); ++x) {
    const double w = context_weights(x);
    if (w <= 0.0) continue;
    const double d = pointwise_f_divergence(p_i.row(x), p_j.row(x), f);
    if (!std::isfinite(d)) return kUnbounded;
    total += w * d;
  }
  return total < 0.0 ? 0.0 : total;
}

/// M = 1 + ln(1 + D_f1), or +inf if D_f1 is unbounded.
inline double m_from_divergence(double d_f1) {
  return std::isfinite(d_f1) ? 1.0 + std::log1p(std::max(d_f1, 0.0)) : kUnbounded;
}

/// sigma = sqrt(1 + D_f2), or +inf if D_f2 is unbounded.
inline double sigma_from_divergence(double d_f2) {
  return std::isfinite(d_f2) ? std::sqrt(1.0 + std::max(d_f2, 0.0)) : kUnbounded;
}

template <typename DerivedP, typename DerivedQ, typename DerivedW>
double m_divergence(const Eigen::MatrixBase<DerivedP>& p_i, const Eigen::MatrixBase<DerivedQ>& p_j,
                    const Eigen::MatrixBase<DerivedW>& context_weights) {
  return m_from_divergence(conditional_f_divergence(p_i, p_j, context_weights, LogDivergenceGenerator{}));
}

template <typename DerivedP, typename DerivedQ, typename DerivedW>
double sigma_divergence(const Eigen::MatrixBase<DerivedP>& p_i,
                        const Eigen::MatrixBase<DerivedQ>& p_j,
                        const Eigen::MatrixBase<DerivedW>& context_weights) {
  return sigma_from_divergence(conditional_f_divergence(p_i, p_j, context_weights, ChiSquareGenerator{}));
}

/// Pairwise M_ij and sigma_ij. Diagonals are exactly 1; unbounded pairs hold +inf.
struct DivergenceMatrix {
  Eigen::MatrixXd m;
  Eigen::MatrixXd sigma;

  std::size_t size() const { return static_cast<std::size_t>(m.rows()); }
  Eigen::MatrixXd sigma_squared() const { return sigma.array().square().matrix(); }

  static DivergenceMatrix identity(std::size_t n) {
    const auto k = static_cast<Eigen::Index>(n);
    return {Eigen::MatrixXd::Ones(k, k), Eigen::MatrixXd::Ones(k, k)};
  }
};

/// Exact divergences between experts over a finite context distribution.
DivergenceMatrix exact_divergences(std::span<const Expert> experts,
                                   const Eigen::VectorXd& context_probs);

/// Streaming median-of-means estimate of the divergence matrices from observed
/// contexts. Context number c (in arrival order) lands in group c mod num_groups;
/// each pair's estimate is the median of its group means. Experts and contexts
/// can be added in any interleaving.
class DivergenceAccumulator {
 public:
  explicit DivergenceAccumulator(std::size_t num_groups = 5);

  void add_expert(Expert expert);
  void add_context(const Context& context);

  std::size_t num_experts() const { return experts_.size(); }
  std::size_t num_contexts() const { return contexts_.size(); }

  /// Current estimate. Groups are clamped to the number of contexts seen; with
  /// no contexts every entry is 1.
  DivergenceMatrix estimate() const;

 private:
  struct PairSums {
    std::vector<double> f1;  // per-group sums of D_f1
    std::vector<double> f2;
  };

  void accumulate(std::size_t i, std::size_t j, std::size_t context_index);
  PairSums& pair(std::size_t i, std::size_t j) { return pairs_[i][j]; }

  std::size_t num_groups_;
  std::vector<Expert> experts_;
  std::vector<Context> contexts_;
  std::vector<std::vector<double>> probs_;  // per expert: row-major contexts x K
  std::vector<std::vector<PairSums>> pairs_;
};

/// One-shot form of DivergenceAccumulator.
DivergenceMatrix empirical_divergences(std::span<const Expert> experts,
                                       std::span<const Context> observed_contexts,
                                       std::size_t num_groups = 5);

}  // namespace ducb
