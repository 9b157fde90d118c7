#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "acidp/core.hpp"
#include "acidp/universes.hpp"

#include <nlohmann/json.hpp>

namespace acidp {

// Per-arm expected regret and expected information gain about the optimal
// price, plus the pieces tests want to inspect.
struct IRVectors {
  std::vector<double> delta;         // profit units
  std::vector<double> gain;          // nats
  std::vector<double> optimal_prob;  // p(a*)
  double r_star = 0.0;               // expected per-universe optimal profit
};

struct Partition {
  std::vector<int> best_arm;            // per universe
  std::vector<std::vector<int>> cells;  // per arm: universes whose optimum it is
};

// Each universe's profit-maximizing arm under its own likelihood table;
// ties go to the lower price.
inline Partition optimal_partition(const MultiUniverse& mu, const PriceGrid& grid) {
  Partition part;
  part.best_arm.resize(static_cast<std::size_t>(mu.size()));
  part.cells.assign(static_cast<std::size_t>(grid.arms()), {});
  for (int i = 0; i < mu.size(); ++i) {
    const auto& u = mu.universes[static_cast<std::size_t>(i)];
    int best = 0;
    double best_profit = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < grid.arms(); ++k) {
      const double profit = grid.price(k) * u.expected_demand[static_cast<std::size_t>(k)];
      if (profit > best_profit) {
        best_profit = profit;
        best = k;
      }
    }
    part.best_arm[static_cast<std::size_t>(i)] = best;
    part.cells[static_cast<std::size_t>(best)].push_back(i);
  }
  return part;
}

// FiniteIR: expected regret Delta and information gain g per arm.
//   p(a*)       = sum of beliefs in the a*-cell
//   p_a(d)      = mixture demand distribution at arm a
//   p_a(a*, d)  = joint over (optimal arm, demand at a); summing it over
//                 (a*, d) gives 1, so g is exactly the mutual information
//   R*          = sum_theta p(theta) max_a profit_theta(a)
//   Delta_a     = R* - mixture profit at a  (hence Delta >= 0)
inline IRVectors finite_ir(const MultiUniverse& mu, const PriceGrid& grid) {
  const int k_arms = grid.arms();
  const int n = mu.max_demand();
  const int l = mu.size();
  const auto part = optimal_partition(mu, grid);

  IRVectors ir;
  ir.delta.assign(static_cast<std::size_t>(k_arms), 0.0);
  ir.gain.assign(static_cast<std::size_t>(k_arms), 0.0);
  ir.optimal_prob.assign(static_cast<std::size_t>(k_arms), 0.0);

  for (int i = 0; i < l; ++i) {
    const int best = part.best_arm[static_cast<std::size_t>(i)];
    ir.optimal_prob[static_cast<std::size_t>(best)] += mu.belief[static_cast<std::size_t>(i)];
    ir.r_star += mu.belief[static_cast<std::size_t>(i)] * grid.price(best) *
                 mu.universes[static_cast<std::size_t>(i)]
                     .expected_demand[static_cast<std::size_t>(best)];
  }

  std::vector<double> marginal(static_cast<std::size_t>(n) + 1);
  std::vector<double> joint;  // (cells x demand) for the current arm
  for (int a = 0; a < k_arms; ++a) {
    // mixture profit and demand marginal at this arm
    double mix_profit = 0.0;
    std::fill(marginal.begin(), marginal.end(), 0.0);
    for (int i = 0; i < l; ++i) {
      const double p = mu.belief[static_cast<std::size_t>(i)];
      const auto row = mu.universes[static_cast<std::size_t>(i)].row(a);
      mix_profit +=
          p * grid.price(a) * mu.universes[static_cast<std::size_t>(i)]
                                  .expected_demand[static_cast<std::size_t>(a)];
      for (int d = 0; d <= n; ++d) marginal[static_cast<std::size_t>(d)] += p * row[d];
    }
    ir.delta[static_cast<std::size_t>(a)] = ir.r_star - mix_profit;

    // mutual information between the optimal-arm identity and the demand
    double gain = 0.0;
    for (int cell = 0; cell < k_arms; ++cell) {
      const auto& members = part.cells[static_cast<std::size_t>(cell)];
      if (members.empty()) continue;
      const double p_cell = ir.optimal_prob[static_cast<std::size_t>(cell)];
      joint.assign(static_cast<std::size_t>(n) + 1, 0.0);
      for (int i : members) {
        const double p = mu.belief[static_cast<std::size_t>(i)];
        const auto row = mu.universes[static_cast<std::size_t>(i)].row(a);
        for (int d = 0; d <= n; ++d) joint[static_cast<std::size_t>(d)] += p * row[d];
      }
      for (int d = 0; d <= n; ++d) {
        const double j = joint[static_cast<std::size_t>(d)];
        if (j <= 0.0) continue;  // 0 log 0 = 0
        gain += j * std::log(j / (p_cell * marginal[static_cast<std::size_t>(d)]));
      }
    }
    ir.gain[static_cast<std::size_t>(a)] = gain;
  }
  return ir;
}

// ACIDP-theta information structure: I(theta; d) at each arm, an upper bound
// on I(a*; d) because a* is a function of theta.
inline std::vector<double> info_gain_theta(const MultiUniverse& mu, const PriceGrid& grid) {
  const int k_arms = grid.arms();
  const int n = mu.max_demand();
  std::vector<double> gain(static_cast<std::size_t>(k_arms), 0.0);
  std::vector<double> marginal(static_cast<std::size_t>(n) + 1);
  for (int a = 0; a < k_arms; ++a) {
    std::fill(marginal.begin(), marginal.end(), 0.0);
    for (int i = 0; i < mu.size(); ++i) {
      const double p = mu.belief[static_cast<std::size_t>(i)];
      const auto row = mu.universes[static_cast<std::size_t>(i)].row(a);
      for (int d = 0; d <= n; ++d) marginal[static_cast<std::size_t>(d)] += p * row[d];
    }
    double g = 0.0;
    for (int i = 0; i < mu.size(); ++i) {
      const double p = mu.belief[static_cast<std::size_t>(i)];
      if (p <= 0.0) continue;
      const auto row = mu.universes[static_cast<std::size_t>(i)].row(a);
      for (int d = 0; d <= n; ++d) {
        const double j = p * row[d];
        if (j <= 0.0) continue;
        g += j * std::log(row[d] / marginal[static_cast<std::size_t>(d)]);
      }
    }
    gain[static_cast<std::size_t>(a)] = g;
  }
  return gain;
}

struct SelectionTolerances {
  double gain_tol = 1e-12;
  double delta_tol = 1e-9;
};

struct Selection {
  int arm = 0;
  double score = 0.0;
  bool fallback = false;  // every arm scored +inf; fell back to argmin Delta
};

// argmin Delta^2 / g. Arms with no information are free if they also carry
// no regret and forbidden otherwise; ties go to the lower price.
inline Selection select_deterministic(const IRVectors& ir, SelectionTolerances tol = {}) {
  const auto k_arms = ir.delta.size();
  const double inf = std::numeric_limits<double>::infinity();
  Selection sel;
  double best = inf;
  int best_arm = -1;
  for (std::size_t k = 0; k < k_arms; ++k) {
    const double d = std::max(ir.delta[k], 0.0);
    const double g = std::max(ir.gain[k], 0.0);
    double score;
    if (g <= tol.gain_tol) {
      score = (d <= tol.delta_tol) ? 0.0 : inf;
    } else {
      score = d * d / g;
    }
    if (score < best) {
      best = score;
      best_arm = static_cast<int>(k);
    }
  }
  if (best_arm < 0 || best == inf) {
    sel.fallback = true;
    sel.arm = static_cast<int>(std::min_element(ir.delta.begin(), ir.delta.end()) -
                               ir.delta.begin());
    sel.score = inf;
    return sel;
  }
  sel.arm = best_arm;
  sel.score = best;
  return sel;
}

// Action distribution minimizing (pi . Delta)^2 / (pi . g); the optimum is
// supported on at most two arms, so all pairs are searched with the interior
// stationary point of the one-dimensional problem in closed form.
struct MixedSelection {
  int arm_a = 0;
  int arm_b = 0;
  double weight_a = 1.0;
  double ratio = 0.0;
  bool fallback = false;
};

inline MixedSelection optimize_randomized(const IRVectors& ir, SelectionTolerances tol = {}) {
  const int k_arms = static_cast<int>(ir.delta.size());
  const double inf = std::numeric_limits<double>::infinity();
  auto ratio_of = [&](double d, double g) {
    if (g <= tol.gain_tol) return (d <= tol.delta_tol) ? 0.0 : inf;
    return d * d / g;
  };

  MixedSelection best;
  best.ratio = inf;
  auto consider = [&](int i, int j, double w) {
    w = std::clamp(w, 0.0, 1.0);
    const double d = w * std::max(ir.delta[static_cast<std::size_t>(i)], 0.0) +
                     (1.0 - w) * std::max(ir.delta[static_cast<std::size_t>(j)], 0.0);
    const double g = w * std::max(ir.gain[static_cast<std::size_t>(i)], 0.0) +
                     (1.0 - w) * std::max(ir.gain[static_cast<std::size_t>(j)], 0.0);
    const double r = ratio_of(d, g);
    if (r < best.ratio) best = {i, j, w, r, false};
  };

  for (int i = 0; i < k_arms; ++i) {
    consider(i, i, 1.0);
    const double di = std::max(ir.delta[static_cast<std::size_t>(i)], 0.0);
    const double gi = std::max(ir.gain[static_cast<std::size_t>(i)], 0.0);
    for (int j = i + 1; j < k_arms; ++j) {
      const double dj = std::max(ir.delta[static_cast<std::size_t>(j)], 0.0);
      const double gj = std::max(ir.gain[static_cast<std::size_t>(j)], 0.0);
      // zero of the mixed regret
      if (di != dj) consider(i, j, dj / (dj - di));
      // stationary point of (w di + (1-w) dj)^2 / (w gi + (1-w) gj)
      const double denom = (di - dj) * (gi - gj);
      if (std::abs(denom) > 0.0) {
        consider(i, j, (dj * (gi - gj) - 2.0 * (di - dj) * gj) / denom);
      }
      consider(i, j, 0.0);
      consider(i, j, 1.0);
    }
  }
  if (best.ratio == inf) {
    const auto det = select_deterministic(ir, tol);
    return {det.arm, det.arm, 1.0, inf, true};
  }
  return best;
}

inline int select_randomized(const IRVectors& ir, std::mt19937_64& rng,
                             SelectionTolerances tol = {}) {
  const auto mix = optimize_randomized(ir, tol);
  if (mix.arm_a == mix.arm_b || mix.weight_a >= 1.0) return mix.arm_a;
  return std::bernoulli_distribution(mix.weight_a)(rng) ? mix.arm_a : mix.arm_b;
}

inline nlohmann::json to_json(const IRVectors& ir) {
  return nlohmann::json{{"delta", ir.delta},
                        {"gain", ir.gain},
                        {"optimal_prob", ir.optimal_prob},
                        {"r_star", ir.r_star}};
}

}  // namespace acidp
