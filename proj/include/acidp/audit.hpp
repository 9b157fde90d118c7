#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "acidp/core.hpp"
#include "acidp/stats.hpp"
#include "acidp/universes.hpp"

namespace acidp {

struct AuditConfig {
  double alpha1 = 0.05;        // sequence-test significance
  double alpha2 = 0.01;        // red-card significance (Bonferroni over samples)
  int window = 300;            // w, rolling window length
  int n_recent = 5;            // recent block size in the sequence test
  int auditor_count = 5;       // arms sampled per audit pass
  double epsilon_init = 0.1;
  double r_decay = 0.1;
  // Boundary time variable: intrinsic sample count by default; the literal
  // wall-clock t shrinks the radius while the window stays bounded and
  // floods long runs with alarms.
  bool paper_literal_time = false;
  // epsilon-auditor arms only after the belief has converged.
  double convergence_belief = 0.9;
  int convergence_rounds = 10;
};

// ---------------------------------------------------------------------------
// Sequence test (yellow card)
// ---------------------------------------------------------------------------

struct SequenceStat {
  double x = 0.0;  // scaled deviation of the older block from the recent mean
  int m = 0;       // total samples at the tested arm within the window
};

// X = sum over the older m-n demands of (d_i - dbar) / (N/2), where dbar is
// the mean of the most recent n demands. The N/2 scaling is the binomial
// range adjustment. Returns nothing when the window has too little history.
inline std::optional<SequenceStat> sequence_statistic(std::span<const int> demands, int n_recent,
                                                      int max_demand) {
  const int m = static_cast<int>(demands.size());
  if (m <= n_recent) return std::nullopt;
  double recent = 0.0;
  for (int i = m - n_recent; i < m; ++i) recent += demands[static_cast<std::size_t>(i)];
  recent /= static_cast<double>(n_recent);
  double x = 0.0;
  const double scale = max_demand / 2.0;
  for (int i = 0; i < m - n_recent; ++i) {
    x += (demands[static_cast<std::size_t>(i)] - recent) / scale;
  }
  return SequenceStat{x, m};
}

struct Bounds {
  double lb = 0.0;
  double ub = 0.0;
  double center = 0.0;
  double radius = 0.0;
};

// Time-uniform boundary around X/(m-n):
//   radius = 1.7 * sqrt((ln ln(2 tau) + 0.72 ln(10.4 / alpha1)) / tau)
// with tau the boundary time variable (see AuditConfig::paper_literal_time).
inline std::optional<Bounds> confidence_bounds(double x, int m, int n_recent, int t,
                                               double alpha1, bool literal_t = false) {
  if (m <= n_recent) return std::nullopt;
  const int tau = literal_t ? t : (m - n_recent);
  if (tau < 2) return std::nullopt;
  const double center = x / static_cast<double>(m - n_recent);
  const double radius =
      1.7 * std::sqrt((std::log(std::log(2.0 * tau)) + 0.72 * std::log(10.4 / alpha1)) /
                      static_cast<double>(tau));
  return Bounds{center - radius, center + radius, center, radius};
}

// ---------------------------------------------------------------------------
// epsilon-auditor schedule
// ---------------------------------------------------------------------------

// Evenly spaced arms across the grid, endpoints included (quartiles for the
// default count of 5). 0-based indices, deduplicated, ascending.
inline std::vector<int> auditor_schedule(int arms, int count) {
  if (count < 1) throw ConfigError("auditor_schedule: count must be >= 1");
  std::vector<int> out;
  if (count == 1) return {0};
  for (int j = 0; j < count; ++j) {
    const int k = static_cast<int>(static_cast<double>(j) * (arms - 1) /
                                   static_cast<double>(count - 1));
    if (out.empty() || out.back() != k) out.push_back(k);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Exact binomial test (red card)
// ---------------------------------------------------------------------------

// Two-sided exact test with minimum-likelihood ordering: the p-value sums the
// Binomial(N, p0) pmf over every outcome no more likely than the observed one.
inline double binomial_pvalue(int d, int max_demand, double p0) {
  if (d < 0 || d > max_demand) throw std::invalid_argument("binomial_pvalue: d out of range");
  if (p0 < 0.0 || p0 > 1.0) throw std::invalid_argument("binomial_pvalue: p0 out of [0,1]");
  const auto pmf = binomial_pmf_row(max_demand, p0);
  const double observed = pmf[static_cast<std::size_t>(d)];
  const double cutoff = observed * (1.0 + 1e-12);
  double p = 0.0;
  for (double cell : pmf) {
    if (cell <= cutoff) p += cell;
  }
  return std::min(p, 1.0);
}

// Red iff any audited arm rejects at the Bonferroni-corrected level
// alpha2 / #samples against the multiverse's predictive demand fraction.
inline Alert red_card_check(std::span<const std::pair<int, int>> samples,
                            const MultiUniverse& mu, double alpha2,
                            double* min_pvalue = nullptr) {
  if (samples.empty()) return Alert::none;
  const double level = alpha2 / static_cast<double>(samples.size());
  const int n = mu.max_demand();
  double min_p = 1.0;
  for (const auto& [arm, demand] : samples) {
    const double p0 = mu.predictive_mean_count(arm) / static_cast<double>(n);
    min_p = std::min(min_p, binomial_pvalue(demand, n, std::clamp(p0, 0.0, 1.0)));
  }
  if (min_pvalue != nullptr) *min_pvalue = min_p;
  return min_p < level ? Alert::red : Alert::none;
}

// ---------------------------------------------------------------------------
// Rolling-window audit state
// ---------------------------------------------------------------------------

struct AuditEvent {
  int t = 0;
  int arm = 0;  // 0-based
  double x = 0.0;
  double lb = 0.0;
  double ub = 0.0;
  Alert alert = Alert::none;
  double pvalue = -1.0;  // < 0 when no red-card test ran this round
};

class AuditState {
 public:
  AuditState(AuditConfig cfg, int max_demand) : cfg_(cfg), max_demand_(max_demand) {
    epsilon_ = cfg_.epsilon_init;
  }

  const AuditConfig& config() const { return cfg_; }

  void push(const Observation& obs) {
    window_.push_back(obs);
    while (static_cast<int>(window_.size()) > cfg_.window) window_.pop_front();
  }

  std::vector<int> demands_at(int arm) const {
    std::vector<int> out;
    for (const auto& o : window_) {
      if (o.arm == arm) out.push_back(o.demand);
    }
    return out;
  }

  std::span<const Observation> window() const {
    win_copy_.assign(window_.begin(), window_.end());
    return win_copy_;
  }

  // Runs the sequence test for the observation's arm against the window
  // (which should already contain the observation).
  Alert yellow_card_check(const Observation& obs, AuditEvent* event = nullptr) const {
    const auto demands = demands_at(obs.arm);
    const auto stat = sequence_statistic(demands, cfg_.n_recent, max_demand_);
    if (!stat) return Alert::none;
    const auto bounds = confidence_bounds(stat->x, stat->m, cfg_.n_recent, obs.t, cfg_.alpha1,
                                          cfg_.paper_literal_time);
    if (!bounds) return Alert::none;
    const Alert alert = (bounds->lb > 0.0 || bounds->ub < 0.0) ? Alert::yellow : Alert::none;
    if (event != nullptr) {
      *event = {obs.t, obs.arm, stat->x, bounds->lb, bounds->ub, alert, -1.0};
    }
    return alert;
  }

  double epsilon() const { return epsilon_; }
  void reset_epsilon() { epsilon_ = cfg_.epsilon_init; }
  void decay_epsilon() { epsilon_ *= cfg_.r_decay; }
  void set_epsilon(double epsilon) { epsilon_ = epsilon; }

  void track_convergence(double max_belief) {
    if (max_belief > cfg_.convergence_belief) {
      ++converged_streak_;
    } else {
      converged_streak_ = 0;
    }
    if (converged_streak_ >= cfg_.convergence_rounds) auditor_active_ = true;
  }
  bool auditor_active() const { return auditor_active_; }
  void force_auditor_active(bool on) { auditor_active_ = on; }

  // Clears only the rolling window; the alert that consumed it is handled,
  // so the next test epoch starts from fresh data.
  void reset_window() { window_.clear(); }

  void reset() {
    window_.clear();
    epsilon_ = cfg_.epsilon_init;
    converged_streak_ = 0;
    auditor_active_ = false;
  }

 private:
  AuditConfig cfg_;
  int max_demand_;
  std::deque<Observation> window_;
  double epsilon_ = 0.1;
  int converged_streak_ = 0;
  bool auditor_active_ = false;
  mutable std::vector<Observation> win_copy_;
};

// ---------------------------------------------------------------------------
// Window-variant universe update
// ---------------------------------------------------------------------------

// Refits one universe from the rolling window: start from the mixture
// likelihood, overwrite windowed arms with their empirical demand, repair
// monotonicity toward the direction the latest observation points, and
// rebuild every row as Binomial(N, D_w(a)).
inline Universe window_variant_update(const MultiUniverse& mu,
                                      std::span<const Observation> window,
                                      const PriceGrid& grid, int max_demand,
                                      const Observation& latest, double eps = 1e-6) {
  const int k_arms = grid.arms();
  std::vector<double> dw = mu.predictive_demand_fraction();
  std::vector<double> sum(static_cast<std::size_t>(k_arms), 0.0);
  std::vector<int> count(static_cast<std::size_t>(k_arms), 0);
  for (const auto& o : window) {
    sum[static_cast<std::size_t>(o.arm)] += o.demand;
    ++count[static_cast<std::size_t>(o.arm)];
  }
  for (int k = 0; k < k_arms; ++k) {
    if (count[static_cast<std::size_t>(k)] > 0) {
      dw[static_cast<std::size_t>(k)] = sum[static_cast<std::size_t>(k)] /
                                        (static_cast<double>(count[static_cast<std::size_t>(k)]) *
                                         max_demand);
    }
  }

  // Monotone repair, propagated away from the direction of the surprise:
  // an upward surprise raises lower-price demand to max(self, higher-price
  // neighbour) sweeping downward; a downward one lowers higher-price demand.
  const bool upward = latest.demand > mu.predictive_mean_count(latest.arm);
  if (upward) {
    for (int k = k_arms - 2; k >= 0; --k) {
      dw[static_cast<std::size_t>(k)] =
          std::max(dw[static_cast<std::size_t>(k)], dw[static_cast<std::size_t>(k) + 1]);
    }
  } else {
    for (int k = 1; k < k_arms; ++k) {
      dw[static_cast<std::size_t>(k)] =
          std::min(dw[static_cast<std::size_t>(k)], dw[static_cast<std::size_t>(k) - 1]);
    }
  }

  Universe u;
  u.tag = UniverseTag::window;
  u.arms = k_arms;
  u.max_demand = max_demand;
  u.q.assign(static_cast<std::size_t>(k_arms) * (max_demand + 1), 0.0);
  for (int k = 0; k < k_arms; ++k) {
    const auto row = binomial_pmf_row(max_demand, std::clamp(dw[static_cast<std::size_t>(k)], 0.0, 1.0));
    std::copy(row.begin(), row.end(), u.row(k).begin());
  }
  u.smooth(eps);
  return u;
}

}  // namespace acidp
