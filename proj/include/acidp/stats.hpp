#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <mutex>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace acidp {

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// log C(n, k) table for one n, cached because pmf rows are rebuilt often
// with large n (batch sizes up to 500).
inline const std::vector<double>& log_choose_row(int n) {
  static std::mutex mu;
  static std::map<int, std::vector<double>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  std::vector<double> row(static_cast<std::size_t>(n) + 1);
  const double lg_n = std::lgamma(n + 1.0);
  for (int k = 0; k <= n; ++k) {
    row[k] = lg_n - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
  }
  return cache.emplace(n, std::move(row)).first->second;
}

inline double log_binomial_pmf(int d, int n, double p) {
  if (d < 0 || d > n) return -std::numeric_limits<double>::infinity();
  if (p <= 0.0) return d == 0 ? 0.0 : -std::numeric_limits<double>::infinity();
  if (p >= 1.0) return d == n ? 0.0 : -std::numeric_limits<double>::infinity();
  return log_choose_row(n)[d] + d * std::log(p) + (n - d) * std::log1p(-p);
}

inline double binomial_pmf(int d, int n, double p) { return std::exp(log_binomial_pmf(d, n, p)); }

// Full pmf over d = 0..n. Cells that underflow come out as exact zeros;
// callers that need strictly positive rows smooth afterwards.
inline std::vector<double> binomial_pmf_row(int n, double p) {
  std::vector<double> row(static_cast<std::size_t>(n) + 1, 0.0);
  if (p <= 0.0) {
    row[0] = 1.0;
    return row;
  }
  if (p >= 1.0) {
    row[n] = 1.0;
    return row;
  }
  const auto& lc = log_choose_row(n);
  const double lp = std::log(p), lq = std::log1p(-p);
  for (int d = 0; d <= n; ++d) {
    row[d] = std::exp(lc[d] + d * lp + (n - d) * lq);
  }
  return row;
}

// Inverse-CDF binomial draw from a single uniform. One engine call per
// draw regardless of p, which keeps environment streams aligned across
// policies under common random numbers.
inline int binomial_inverse_draw(int n, double p, std::mt19937_64& rng) {
  const double u = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  if (p <= 0.0) return 0;
  if (p >= 1.0) return n;
  const auto row = binomial_pmf_row(n, p);
  double acc = 0.0;
  for (int d = 0; d <= n; ++d) {
    acc += row[d];
    if (u <= acc) return d;
  }
  return n;
}

// Isotonic regression (pool adjacent violators), non-increasing fit.
inline std::vector<double> isotonic_nonincreasing(std::span<const double> y) {
  struct Block {
    double sum;
    int count;
  };
  std::vector<Block> blocks;
  blocks.reserve(y.size());
  for (double v : y) {
    blocks.push_back({v, 1});
    // merge while the fit would have to increase
    while (blocks.size() >= 2) {
      auto& a = blocks[blocks.size() - 2];
      auto& b = blocks.back();
      if (a.sum / a.count >= b.sum / b.count) break;
      a.sum += b.sum;
      a.count += b.count;
      blocks.pop_back();
    }
  }
  std::vector<double> out;
  out.reserve(y.size());
  for (const auto& b : blocks) {
    out.insert(out.end(), b.count, b.sum / b.count);
  }
  return out;
}

inline double mean_of(std::span<const double> xs) {
  if (xs.empty()) throw std::invalid_argument("mean of empty range");
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

// Sample standard deviation (ddof = 1); zero for fewer than two points.
inline double sample_stddev(std::span<const double> xs) {
  if (xs.size() < 2) return 0.0;
  const double m = mean_of(xs);
  double s = 0.0;
  for (double x : xs) s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(xs.size() - 1));
}

}  // namespace acidp
