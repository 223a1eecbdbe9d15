#pragma once

// Brute-force reference implementations written against plain std::vector,
// independent of the library's estimator and divergence code paths.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <random>
#include <vector>

namespace oracle {

using Table = std::vector<std::vector<double>>;  // [context][arm]

struct Row {
  std::size_t expert;  // behavior expert j
  std::size_t context;
  std::size_t arm;
  double reward;
  double behavior_prob;
};

inline double ratio(const Table& target, const Row& r) {
  return target[r.context][r.arm] / r.behavior_prob;
}

inline std::vector<std::size_t> counts(const std::vector<Row>& log, std::size_t n) {
  std::vector<std::size_t> c(n, 0);
  for (const Row& r : log) ++c[r.expert];
  return c;
}

/// (1/Z) sum_s (1/M_kj) y rho 1{rho <= 2 ln(2/eps) M_kj}, Z = sum_j n_j / M_kj.
inline double clipped(const std::vector<Row>& log, const Table& target, const std::vector<double>& m_row,
                      double eps) {
  const auto n = counts(log, m_row.size());
  double z = 0.0;
  for (std::size_t j = 0; j < n.size(); ++j) z += static_cast<double>(n[j]) / m_row[j];
  double total = 0.0;
  for (const Row& r : log) {
    const double rho = ratio(target, r);
    if (rho <= 2.0 * std::log(2.0 / eps) * m_row[r.expert]) total += r.reward * rho / m_row[r.expert];
  }
  return total / z;
}

/// beta with beta / ln(2/beta) = target, by plain bisection.
inline double beta(double target) {
  if (target == 0.0) return 0.0;
  double lo = 0.0, hi = 2.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (mid / std::log(2.0 / mid) < target ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

struct Index {
  double estimate;
  double radius;
};

inline Index clipped_index(const std::vector<Row>& log, const Table& target,
                           const std::vector<double>& m_row, double c1) {
  const double t = static_cast<double>(log.size());
  const auto n = counts(log, m_row.size());
  double z = 0.0;
  for (std::size_t j = 0; j < n.size(); ++j) z += static_cast<double>(n[j]) / m_row[j];
  const double b = beta(std::sqrt(c1 * t * std::log(t)) / z);
  return {clipped(log, target, m_row, b), 1.5 * b};
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Round-robin groups per behavior expert; returns per-group lists of rows.
inline std::vector<std::vector<Row>> groups(const std::vector<Row>& log, std::size_t l, std::size_t n) {
  std::vector<std::vector<Row>> g(l);
  std::vector<std::size_t> seen(n, 0);
  for (const Row& r : log) g[seen[r.expert]++ % l].push_back(r);
  return g;
}

inline std::size_t group_count(double t, double c2) {
  const double l = std::floor(c2 * 2.0 * std::log(t));
  return static_cast<std::size_t>(std::max(1.0, std::min(l, t)));
}

/// Median-of-means estimate and radius, all terms written out.
inline Index mom_index(const std::vector<Row>& log, const Table& target,
                       const std::vector<double>& sigma_row, double c2, double c3) {
  const double t = static_cast<double>(log.size());
  const std::size_t l = group_count(t, c2);
  std::vector<double> means;
  double w_min = std::numeric_limits<double>::infinity();
  for (const auto& g : groups(log, l, sigma_row.size())) {
    if (g.empty()) continue;
    double w = 0.0, s = 0.0;
    for (const Row& r : g) {
      w += 1.0 / sigma_row[r.expert];
      s += r.reward * ratio(target, r) / sigma_row[r.expert];
    }
    means.push_back(s / w);
    w_min = std::min(w_min, w / static_cast<double>(g.size()));
  }
  return {median(means), (1.0 / w_min) * std::sqrt(c3 * 2.0 * std::log(t) / t)};
}

/// sum_x w(x) sum_v q f(p/q) with the 0/0 -> 0 and q = 0 < p -> inf rules.
template <typename F>
double f_divergence(const Table& p, const Table& q, const std::vector<double>& w, F f) {
  double total = 0.0;
  for (std::size_t x = 0; x < p.size(); ++x) {
    for (std::size_t v = 0; v < p[x].size(); ++v) {
      if (q[x][v] == 0.0) {
        if (p[x][v] > 0.0) return std::numeric_limits<double>::infinity();
        continue;
      }
      total += w[x] * q[x][v] * f(p[x][v] / q[x][v]);
    }
  }
  return total;
}

inline double f1(double x) { return x * std::exp(x - 1.0) - 1.0; }
inline double f2(double x) { return x * x - 1.0; }

inline double m_value(const Table& p, const Table& q, const std::vector<double>& w) {
  return 1.0 + std::log(1.0 + f_divergence(p, q, w, f1));
}
inline double sigma_value(const Table& p, const Table& q, const std::vector<double>& w) {
  return std::sqrt(1.0 + f_divergence(p, q, w, f2));
}

/// sum_x p(x) sum_v pi(v|x) mean(x, v).
inline double expert_mean(const std::vector<double>& px, const Table& means, const Table& pi) {
  double total = 0.0;
  for (std::size_t x = 0; x < px.size(); ++x)
    for (std::size_t v = 0; v < pi[x].size(); ++v) total += px[x] * pi[x][v] * means[x][v];
  return total;
}

// ---------------------------------------------------------------------------
// Hand-rolled generators for property tests
// ---------------------------------------------------------------------------

class Gen {
 public:
  explicit Gen(std::uint64_t seed) : eng_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(eng_);
  }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(eng_); }

  /// Probability vector with every entry >= floor.
  std::vector<double> simplex(std::size_t k, double floor = 0.02) {
    std::vector<double> v(k);
    double s = 0.0;
    for (double& x : v) s += (x = -std::log(uniform(1e-12, 1.0)));
    for (double& x : v) x = floor + (1.0 - floor * static_cast<double>(k)) * x / s;
    // Put rounding residue on the largest entry.
    double t = 0.0;
    for (double x : v) t += x;
    *std::max_element(v.begin(), v.end()) += 1.0 - t;
    return v;
  }

  Table table(std::size_t c, std::size_t k, double floor = 0.02) {
    Table t(c);
    for (auto& row : t) row = simplex(k, floor);
    return t;
  }

  std::size_t draw(const std::vector<double>& p) {
    const double u = uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
      acc += p[i];
      if (u < acc) return i;
    }
    return p.size() - 1;
  }

  std::mt19937_64& engine() { return eng_; }

 private:
  std::mt19937_64 eng_;
};

}  // namespace oracle
