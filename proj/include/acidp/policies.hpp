#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "acidp/audit.hpp"
#include "acidp/core.hpp"
#include "acidp/ids.hpp"
#include "acidp/rng.hpp"
#include "acidp/universes.hpp"

namespace acidp {

// ---------------------------------------------------------------------------
// Per-arm running statistics (UCB family, epsilon-greedy)
// ---------------------------------------------------------------------------

struct ArmStats {
  std::vector<int> pulls;
  std::vector<double> sum;
  std::vector<double> sum_sq;

  explicit ArmStats(int arms = 0)
      : pulls(static_cast<std::size_t>(arms), 0),
        sum(static_cast<std::size_t>(arms), 0.0),
        sum_sq(static_cast<std::size_t>(arms), 0.0) {}

  void observe(int k, double reward) {
    pulls[static_cast<std::size_t>(k)] += 1;
    sum[static_cast<std::size_t>(k)] += reward;
    sum_sq[static_cast<std::size_t>(k)] += reward * reward;
  }

  double mean(int k) const { return sum[static_cast<std::size_t>(k)] / pulls[static_cast<std::size_t>(k)]; }
  double mean_sq(int k) const {
    return sum_sq[static_cast<std::size_t>(k)] / pulls[static_cast<std::size_t>(k)];
  }

  int first_unvisited() const {
    for (std::size_t k = 0; k < pulls.size(); ++k) {
      if (pulls[k] == 0) return static_cast<int>(k);
    }
    return -1;
  }
};

// ---------------------------------------------------------------------------
// Baselines
// ---------------------------------------------------------------------------

class EpsilonGreedyPolicy : public Policy {
 public:
  EpsilonGreedyPolicy(PriceGrid grid, double epsilon, std::uint64_t seed)
      : grid_(std::move(grid)),
        epsilon_(epsilon),
        stats_(grid_.arms()),
        rng_(make_stream(seed, "eg")) {}

  int choose(int) override {
    if (std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < epsilon_) {
      return std::uniform_int_distribution<int>(0, grid_.arms() - 1)(rng_);
    }
    if (const int k = stats_.first_unvisited(); k >= 0) return k;
    int best = 0;
    for (int k = 1; k < grid_.arms(); ++k) {
      if (stats_.mean(k) > stats_.mean(best)) best = k;
    }
    return best;
  }

  void observe(const Observation& obs) override {
    stats_.observe(obs.arm, realized_profit(grid_.price(obs.arm), obs.demand));
  }

  std::string name() const override { return "eg"; }

 private:
  PriceGrid grid_;
  double epsilon_;
  ArmStats stats_;
  std::mt19937_64 rng_;
};

class UcbPolicy : public Policy {
 public:
  UcbPolicy(PriceGrid grid, double c) : grid_(std::move(grid)), c_(c), stats_(grid_.arms()) {}

  int choose(int t) override {
    if (const int k = stats_.first_unvisited(); k >= 0) return k;
    int best = 0;
    double best_index = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < grid_.arms(); ++k) {
      const double index =
          stats_.mean(k) + c_ * std::sqrt(std::log(static_cast<double>(t)) /
                                          stats_.pulls[static_cast<std::size_t>(k)]);
      if (index > best_index) {
        best_index = index;
        best = k;
      }
    }
    return best;
  }

  void observe(const Observation& obs) override {
    stats_.observe(obs.arm, realized_profit(grid_.price(obs.arm), obs.demand));
  }

  std::string name() const override { return "ucb"; }

 private:
  PriceGrid grid_;
  double c_;
  ArmStats stats_;
};

// Variance-aware UCB: the exploration coefficient becomes min(1/4, V_k) with
// V_k = mean square - squared mean + sqrt(2 ln t / n_k).
class UcbTunedPolicy : public Policy {
 public:
  explicit UcbTunedPolicy(PriceGrid grid) : grid_(std::move(grid)), stats_(grid_.arms()) {}

  int choose(int t) override {
    if (const int k = stats_.first_unvisited(); k >= 0) return k;
    int best = 0;
    double best_index = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < grid_.arms(); ++k) {
      const double n_k = stats_.pulls[static_cast<std::size_t>(k)];
      const double log_t = std::log(static_cast<double>(t));
      const double v = stats_.mean_sq(k) - stats_.mean(k) * stats_.mean(k) +
                       std::sqrt(2.0 * log_t / n_k);
      const double index = stats_.mean(k) + std::min(0.25, v) * std::sqrt(log_t / n_k);
      if (index > best_index) {
        best_index = index;
        best = k;
      }
    }
    return best;
  }

  void observe(const Observation& obs) override {
    stats_.observe(obs.arm, realized_profit(grid_.price(obs.arm), obs.demand));
  }

  std::string name() const override { return "ucb-tuned"; }

 private:
  PriceGrid grid_;
  ArmStats stats_;
};

// UCB with a price-scaled bonus plus a partial-identification filter:
// Hoeffding bounds on the demand fraction, tightened across arms by demand
// monotonicity, permanently eliminate arms whose profit upper bound falls
// below the best profit lower bound.
class UcbpiPolicy : public Policy {
 public:
  explicit UcbpiPolicy(PriceGrid grid)
      : grid_(std::move(grid)),
        stats_(grid_.arms()),
        demand_sum_(static_cast<std::size_t>(grid_.arms()), 0.0),
        eliminated_(static_cast<std::size_t>(grid_.arms()), false) {}

  int choose(int t) override {
    update_elimination(t);
    int pick = -1;
    for (int k = 0; k < grid_.arms(); ++k) {
      if (!eliminated_[static_cast<std::size_t>(k)] &&
          stats_.pulls[static_cast<std::size_t>(k)] == 0) {
        pick = k;
        break;
      }
    }
    if (pick >= 0) return pick;
    double best_index = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < grid_.arms(); ++k) {
      if (eliminated_[static_cast<std::size_t>(k)]) continue;
      const double index =
          stats_.mean(k) + grid_.price(k) * std::sqrt(std::log(static_cast<double>(t)) /
                                                      stats_.pulls[static_cast<std::size_t>(k)]);
      if (index > best_index) {
        best_index = index;
        pick = k;
      }
    }
    return pick >= 0 ? pick : 0;
  }

  void observe(const Observation& obs) override {
    stats_.observe(obs.arm, realized_profit(grid_.price(obs.arm), obs.demand));
    demand_sum_[static_cast<std::size_t>(obs.arm)] += obs.demand;
  }

  std::string name() const override { return "ucbpi"; }

  bool eliminated(int k) const { return eliminated_[static_cast<std::size_t>(k)]; }

 private:
  void update_elimination(int t) {
    const int k_arms = grid_.arms();
    const int n = grid_.batch_size;
    std::vector<double> lb(static_cast<std::size_t>(k_arms), 0.0);
    std::vector<double> ub(static_cast<std::size_t>(k_arms), 1.0);
    const double log_term = std::log(2.0 * static_cast<double>(t) * t);
    for (int k = 0; k < k_arms; ++k) {
      const int pulls = stats_.pulls[static_cast<std::size_t>(k)];
      if (pulls == 0) continue;
      const double trials = static_cast<double>(pulls) * n;
      const double frac = demand_sum_[static_cast<std::size_t>(k)] / trials;
      const double radius = std::sqrt(log_term / (2.0 * trials));
      lb[static_cast<std::size_t>(k)] = std::max(0.0, frac - radius);
      ub[static_cast<std::size_t>(k)] = std::min(1.0, frac + radius);
    }
    // demand is non-increasing in price: cheaper arms bound dearer ones
    for (int k = 1; k < k_arms; ++k) {
      ub[static_cast<std::size_t>(k)] =
          std::min(ub[static_cast<std::size_t>(k)], ub[static_cast<std::size_t>(k) - 1]);
    }
    for (int k = k_arms - 2; k >= 0; --k) {
      lb[static_cast<std::size_t>(k)] =
          std::max(lb[static_cast<std::size_t>(k)], lb[static_cast<std::size_t>(k) + 1]);
    }
    double best_lb = 0.0;
    for (int k = 0; k < k_arms; ++k) {
      best_lb = std::max(best_lb, grid_.price(k) * n * lb[static_cast<std::size_t>(k)]);
    }
    for (int k = 0; k < k_arms; ++k) {
      if (grid_.price(k) * n * ub[static_cast<std::size_t>(k)] < best_lb) {
        eliminated_[static_cast<std::size_t>(k)] = true;
      }
    }
  }

  PriceGrid grid_;
  ArmStats stats_;
  std::vector<double> demand_sum_;
  std::vector<bool> eliminated_;
};

// Beta-Bernoulli Thompson sampling over the demand fraction, profit-scaled
// at selection time.
class ThompsonSamplingPolicy : public Policy {
 public:
  ThompsonSamplingPolicy(PriceGrid grid, std::uint64_t seed)
      : grid_(std::move(grid)),
        alpha_(static_cast<std::size_t>(grid_.arms()), 1.0),
        beta_(static_cast<std::size_t>(grid_.arms()), 1.0),
        rng_(make_stream(seed, "ts")) {}

  int choose(int) override {
    int best = 0;
    double best_value = -1.0;
    for (int k = 0; k < grid_.arms(); ++k) {
      const double theta = beta_draw(alpha_[static_cast<std::size_t>(k)],
                                     beta_[static_cast<std::size_t>(k)]);
      const double value = grid_.price(k) * theta;
      if (value > best_value) {
        best_value = value;
        best = k;
      }
    }
    return best;
  }

  void observe(const Observation& obs) override {
    alpha_[static_cast<std::size_t>(obs.arm)] += obs.demand;
    beta_[static_cast<std::size_t>(obs.arm)] += grid_.batch_size - obs.demand;
  }

  std::string name() const override { return "ts"; }

 private:
  double beta_draw(double a, double b) {
    std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
    const double x = ga(rng_);
    const double y = gb(rng_);
    return x / (x + y);
  }

  PriceGrid grid_;
  std::vector<double> alpha_;
  std::vector<double> beta_;
  std::mt19937_64 rng_;
};

// ---------------------------------------------------------------------------
// ACIDP
// ---------------------------------------------------------------------------

enum class AcidpVariant { standard, theta, window, no_audit };

// Policy-level generator defaults; the module-level GeneratorOptions keep
// the exact analytic mode for direct use.
inline GeneratorOptions policy_generator_defaults() {
  GeneratorOptions opt;
  opt.exact = false;
  opt.n_mc = 500;
  return opt;
}

struct AcidpConfig {
  int perceived = 2;  // L^P
  int init_reps = 1;  // n
  AcidpVariant variant = AcidpVariant::standard;
  // The mixed information-ratio minimizer keeps sampling informative
  // near-ties that the deterministic argmin starves.
  bool randomized_selector = true;
  // Policy default: Monte Carlo likelihoods over 17 shifts. The sampling
  // jitter diversifies the counterfactual shapes, which is what lets the
  // belief race refine the optimum instead of locking onto one registration.
  GeneratorOptions gen = policy_generator_defaults();
  AuditConfig audit;
  double eps_q = 1e-6;
  // Uniform-mixture mass; keeps sidelined universes revivable. Smaller
  // floors starve the revival of near-tied hypotheses.
  double belief_floor = 1e-2;
  // Bound on the universe count; lowest-belief counterfactuals are evicted
  // first, vintage next, perceived and window universes never.
  int max_universes = 64;
  // Counterfactuals whose demand curve already exists get their twin's
  // belief boosted instead of a duplicate entry (recycling).
  double dedup_tol = 1e-4;
  // Clear the sequence-test window once a yellow card has been consumed, so
  // one drift episode raises one alarm. The standby auditor keeps drawing
  // after the alarm, so reactivity does not depend on alarm bursts.
  bool reset_window_on_yellow = true;
  // Minimum rounds between generator injections, so an alarm burst recruits
  // one batch of counterfactuals instead of one batch per burst round.
  int generator_cooldown = 20;
  // Weight for yellow-card entrants: the current mean belief keeps a
  // converged leader in charge until a better-fitting candidate earns its
  // way up; the max belief makes entrants instantly competitive.
  bool yellow_weight_mean = false;
  bool paper_literal_weights = false;
  std::string vintage_path;
};

class AcidpPolicy : public Policy {
 public:
  AcidpPolicy(PriceGrid grid, AcidpConfig cfg, std::uint64_t seed)
      : grid_(std::move(grid)), cfg_(std::move(cfg)), audit_(cfg_.audit, grid_.batch_size),
        rng_(make_stream(seed, "acidp")) {
    if (cfg_.perceived < 1 || cfg_.init_reps < 1) {
      throw ConfigError("acidp: L_P and n must be >= 1");
    }
    if (cfg_.gen.shifts.empty()) cfg_.gen.shifts = default_shift_grid(grid_, 13, 0.1);
    // keep the sampling jitter finer than the demand resolution a batch gives
    cfg_.gen.n_mc = std::max(cfg_.gen.n_mc, 32 * grid_.batch_size);
    cfg_.gen.eps = cfg_.eps_q;
    init_total_ = cfg_.perceived * cfg_.init_reps * grid_.arms();
    init_samples_.assign(static_cast<std::size_t>(cfg_.perceived),
                         std::vector<std::vector<int>>(static_cast<std::size_t>(grid_.arms())));
    if (!cfg_.vintage_path.empty()) {
      auto [universes, beliefs] = load_vintage(cfg_.vintage_path);
      for (const auto& u : universes) {
        if (u.arms != grid_.arms() || u.max_demand != grid_.batch_size) {
          throw ConfigError("vintage universes do not match the grid");
        }
      }
      vintage_ = std::move(universes);
      vintage_beliefs_ = std::move(beliefs);
    }
  }

  // Starts directly from a prebuilt multiverse (vintage-only operation and
  // module tests); skips the Initiator phase.
  AcidpPolicy(PriceGrid grid, AcidpConfig cfg, MultiUniverse mu, std::uint64_t seed)
      : AcidpPolicy(std::move(grid), std::move(cfg), seed) {
    mu_ = std::move(mu);
    mu_.belief_floor = cfg_.belief_floor;
    mu_.normalize();
    phase_ = Phase::running;
  }

  int choose(int t) override {
    switch (phase_) {
      case Phase::init: {
        return (init_count_ % (cfg_.init_reps * grid_.arms())) % grid_.arms();
      }
      case Phase::red_sweep:
        return red_pos_;
      case Phase::running:
        break;
    }
    if (pending_ == Alert::red) {
      pending_ = Alert::none;
      phase_ = Phase::red_sweep;
      red_pos_ = 0;
      red_samples_.assign(static_cast<std::size_t>(grid_.arms()), {});
      return red_pos_;
    }
    if (!audit_queue_.empty()) return audit_queue_.front();

    IRVectors ir = finite_ir(mu_, grid_);
    if (cfg_.variant == AcidpVariant::theta) ir.gain = info_gain_theta(mu_, grid_);
    int arm = cfg_.randomized_selector ? select_randomized(ir, rng_)
                                       : select_deterministic(ir).arm;
    if (ir_sink_) ir_sink_(t, ir, arm);

    // The synthesizer keeps providing candidate environments on a steady
    // cadence while the audit machinery is in place; a yellow card only
    // makes the next batch due immediately.
    const bool epoch_due =
        last_injection_ < 0 || t - last_injection_ >= cfg_.generator_cooldown;
    if (audit_enabled() && epoch_due) {
      absorb_counterfactuals(fresh_counterfactuals());
      last_injection_ = t;
    }

    if (pending_ == Alert::yellow) {
      pending_ = Alert::none;
      if (!audit_enabled() && epoch_due) {
        absorb_counterfactuals(fresh_counterfactuals());
        last_injection_ = t;
      }
      if (cfg_.reset_window_on_yellow) audit_.reset_window();
    }

    // Standby auditor: once beliefs have converged it fires with probability
    // epsilon each round. Epsilon resets on every yellow card and decays on
    // clean audits, so inspection follows alarms and then dies back down.
    if (audit_enabled() && audit_.auditor_active() &&
        std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < audit_.epsilon()) {
      const auto arms = auditor_schedule(grid_.arms(), cfg_.audit.auditor_count);
      audit_queue_.assign(arms.begin(), arms.end());
      audit_samples_.clear();
      // audit the model that is in charge now, not whatever the audit
      // rounds themselves turn the belief into
      audited_predictive_ = mu_.predictive_demand_fraction();
      arm = audit_queue_.front();
    }
    return arm;
  }

  void observe(const Observation& obs) override {
    last_alert_ = Alert::none;
    audit_.push(obs);
    switch (phase_) {
      case Phase::init: {
        const int within = init_count_ % (cfg_.init_reps * grid_.arms());
        const int universe = init_count_ / (cfg_.init_reps * grid_.arms());
        init_samples_[static_cast<std::size_t>(universe)][static_cast<std::size_t>(
            within % grid_.arms())].push_back(obs.demand);
        ++init_count_;
        if (init_count_ == init_total_) build_initial_multiverse();
        return;
      }
      case Phase::red_sweep: {
        red_samples_[static_cast<std::size_t>(obs.arm)].push_back(obs.demand);
        mu_.bayes_update(obs.arm, obs.demand);
        ++red_pos_;
        if (red_pos_ == grid_.arms()) finish_red_rebuild();
        return;
      }
      case Phase::running:
        break;
    }

    if (!audit_queue_.empty() && obs.arm == audit_queue_.front()) {
      audit_queue_.pop_front();
      audit_samples_.emplace_back(obs.arm, obs.demand);
      if (audit_queue_.empty()) {
        double min_p = 1.0;
        for (const auto& [arm, demand] : audit_samples_) {
          const double p0 =
              std::clamp(audited_predictive_[static_cast<std::size_t>(arm)], 0.0, 1.0);
          min_p = std::min(min_p, binomial_pvalue(demand, grid_.batch_size, p0));
        }
        const Alert verdict =
            min_p < cfg_.audit.alpha2 / static_cast<double>(audit_samples_.size())
                ? Alert::red
                : Alert::none;
        events_.push_back({obs.t, obs.arm, 0.0, 0.0, 0.0, verdict, min_p});
        if (verdict == Alert::red) {
          pending_ = Alert::red;
          last_alert_ = Alert::red;
        } else {
          audit_.decay_epsilon();
        }
        audit_samples_.clear();
      }
    }

    if (audit_enabled()) {
      AuditEvent event;
      const Alert yellow = audit_.yellow_card_check(obs, &event);
      if (event.t != 0) events_.push_back(event);
      if (yellow == Alert::yellow && pending_ != Alert::red) {
        pending_ = Alert::yellow;
        if (last_alert_ == Alert::none) last_alert_ = Alert::yellow;
        audit_.reset_epsilon();
      }
    }

    if (cfg_.variant == AcidpVariant::window && obs.t > cfg_.audit.window) {
      Universe refit = window_variant_update(mu_, audit_.window(), grid_, grid_.batch_size,
                                             obs, cfg_.eps_q);
      if (window_id_ < 0) {
        const double share = 1.0 / static_cast<double>(mu_.size() + 1);
        mu_.add(std::move(refit), share);
        window_id_ = mu_.universes.back().id;
        mu_.normalize();
      } else {
        for (auto& u : mu_.universes) {
          if (u.id == window_id_) {
            refit.id = u.id;
            refit.tag = UniverseTag::window;
            u = std::move(refit);
            break;
          }
        }
      }
    }

    mu_.bayes_update(obs.arm, obs.demand);
    // Convergence is measured on the decision: near-duplicate universes split
    // p(theta) while agreeing on the optimal arm.
    audit_.track_convergence(top_cell_probability());
  }

  std::string name() const override {
    switch (cfg_.variant) {
      case AcidpVariant::theta: return "acidp-theta";
      case AcidpVariant::window: return "acidp-window";
      case AcidpVariant::no_audit: return "acidp-noaudit";
      default: return "acidp";
    }
  }

  Alert last_alert() const override { return last_alert_; }

  const MultiUniverse& multiverse() const { return mu_; }
  const AuditState& audit_state() const { return audit_; }
  bool initializing() const { return phase_ != Phase::running; }
  const std::vector<AuditEvent>& audit_events() const { return events_; }

  // Test hooks: force an alert state / arm the auditor without waiting for
  // organic convergence.
  void inject_alert(Alert a) { pending_ = a; }
  void force_auditor(bool on, double epsilon = -1.0) {
    audit_.force_auditor_active(on);
    if (epsilon >= 0.0) audit_.set_epsilon(epsilon);
  }

  void set_ir_sink(std::function<void(int, const IRVectors&, int)> sink) {
    ir_sink_ = std::move(sink);
  }

 private:
  enum class Phase { init, running, red_sweep };

  bool audit_enabled() const {
    return cfg_.variant == AcidpVariant::standard || cfg_.variant == AcidpVariant::theta;
  }

  void build_initial_multiverse() {
    mu_ = MultiUniverse{};
    mu_.belief_floor = cfg_.belief_floor;
    for (auto& samples : init_samples_) {
      mu_.add(empirical_likelihood(samples, grid_.batch_size, cfg_.eps_q,
                                   UniverseTag::perceived),
              2.0);  // perceived universes start at twice the vintage prior
    }
    if (!vintage_.empty()) {
      double total = 0.0;
      for (double b : vintage_beliefs_) total += b;
      for (std::size_t i = 0; i < vintage_.size(); ++i) {
        const double rel = total > 0.0
                               ? vintage_beliefs_[i] * static_cast<double>(vintage_.size()) / total
                               : 1.0;
        mu_.add(vintage_[i], rel);
      }
    }
    mu_.normalize();
    init_samples_.clear();
    phase_ = Phase::running;
  }

  void finish_red_rebuild() {
    std::vector<Universe> fresh;
    fresh.push_back(empirical_likelihood(red_samples_, grid_.batch_size, cfg_.eps_q,
                                         UniverseTag::perceived));
    inject_universes(mu_, std::move(fresh), InjectMode::red, cfg_.paper_literal_weights);
    // counterfactual expansion around the rebuilt model, so refinement does
    // not wait for the next alarm
    absorb_counterfactuals(fresh_counterfactuals());
    enforce_cap();
    audit_.reset();
    audit_queue_.clear();
    audit_samples_.clear();
    pending_ = Alert::none;
    red_samples_.clear();
    last_injection_ = -1;
    phase_ = Phase::running;
  }

  void absorb_counterfactuals(std::vector<Universe> fresh) {
    recent_batches_.push_back(mu_.next_id);
    while (recent_batches_.size() > 3) recent_batches_.pop_front();
    protected_from_id_ = recent_batches_.front();
    std::vector<Universe> novel;
    bool boosted = false;
    for (auto& cand : fresh) {
      const int twin = find_twin(cand);
      if (twin >= 0) {
        if (!cfg_.yellow_weight_mean) {
          auto& b = mu_.belief[static_cast<std::size_t>(twin)];
          b = std::max(b, std::max(mu_.max_belief(), 1e-12));
          boosted = true;
        }
      } else {
        novel.push_back(std::move(cand));
      }
    }
    if (!novel.empty()) {
      if (cfg_.yellow_weight_mean && !cfg_.paper_literal_weights) {
        const double weight = 1.0 / static_cast<double>(std::max(1, mu_.size()));
        for (auto& u : novel) mu_.add(std::move(u), weight);
        mu_.normalize();
      } else {
        inject_universes(mu_, std::move(novel), InjectMode::yellow, cfg_.paper_literal_weights);
      }
    } else if (boosted) {
      mu_.normalize();
    }
    enforce_cap();
  }

  // Generator base curve: the posterior predictive, re-anchored at every arm
  // the rolling window has data for. Pure-predictive re-registration walks
  // away from the truth at unobserved arms; the window pins it down.
  std::vector<double> anchored_base() const {
    std::vector<double> base = mu_.predictive_demand_fraction();
    std::vector<double> sum(base.size(), 0.0);
    std::vector<int> count(base.size(), 0);
    for (const auto& o : audit_.window()) {
      sum[static_cast<std::size_t>(o.arm)] += o.demand;
      count[static_cast<std::size_t>(o.arm)] += 1;
    }
    const double n = grid_.batch_size;
    for (std::size_t k = 0; k < base.size(); ++k) {
      if (count[k] == 0) continue;
      const double empirical = sum[k] / (count[k] * n);
      base[k] = (count[k] * empirical + 3.0 * base[k]) / (count[k] + 3.0);
    }
    return base;
  }

  std::vector<Universe> fresh_counterfactuals() {
    const auto base = anchored_base();
    return generator(mu_, cfg_.gen, grid_, &rng_, &base);
  }

  double top_cell_probability() const {
    const auto part = optimal_partition(mu_, grid_);
    double best = 0.0;
    for (const auto& cell : part.cells) {
      double mass = 0.0;
      for (int i : cell) mass += mu_.belief[static_cast<std::size_t>(i)];
      best = std::max(best, mass);
    }
    return best;
  }

  int find_twin(const Universe& cand) const {
    const double n = static_cast<double>(grid_.batch_size);
    for (int i = 0; i < mu_.size(); ++i) {
      const auto& u = mu_.universes[static_cast<std::size_t>(i)];
      double worst = 0.0;
      for (int k = 0; k < grid_.arms(); ++k) {
        worst = std::max(worst, std::abs(u.expected_demand[static_cast<std::size_t>(k)] -
                                         cand.expected_demand[static_cast<std::size_t>(k)]) /
                                    n);
        if (worst >= cfg_.dedup_tol) break;
      }
      if (worst < cfg_.dedup_tol) return i;
    }
    return -1;
  }

  // Evicts lowest-belief counterfactuals first, vintage next; perceived and
  // window universes stay. Recent entrants are spared until they have had a
  // chance to prove themselves against neighbour-arm evidence.
  void enforce_cap() {
    while (mu_.size() > cfg_.max_universes) {
      int victim = -1;
      for (int pass = 0; pass < 3 && victim < 0; ++pass) {
        double lowest = std::numeric_limits<double>::infinity();
        for (int i = 0; i < mu_.size(); ++i) {
          const auto& u = mu_.universes[static_cast<std::size_t>(i)];
          const UniverseTag target =
              pass == 2 ? UniverseTag::vintage : UniverseTag::counterfactual;
          if (u.tag != target) continue;
          if (pass == 0 && u.id >= protected_from_id_) continue;  // young entrants
          if (mu_.belief[static_cast<std::size_t>(i)] < lowest) {
            lowest = mu_.belief[static_cast<std::size_t>(i)];
            victim = i;
          }
        }
      }
      if (victim < 0) return;  // nothing evictable
      mu_.universes.erase(mu_.universes.begin() + victim);
      mu_.belief.erase(mu_.belief.begin() + victim);
      mu_.normalize();
    }
  }

  PriceGrid grid_;
  AcidpConfig cfg_;
  AuditState audit_;
  std::mt19937_64 rng_;
  MultiUniverse mu_;

  Phase phase_ = Phase::init;
  int init_count_ = 0;
  int init_total_ = 0;
  std::vector<std::vector<std::vector<int>>> init_samples_;
  std::vector<Universe> vintage_;
  std::vector<double> vintage_beliefs_;

  Alert pending_ = Alert::none;
  Alert last_alert_ = Alert::none;
  std::deque<int> audit_queue_;
  std::vector<std::pair<int, int>> audit_samples_;
  int red_pos_ = 0;
  std::vector<std::vector<int>> red_samples_;
  int window_id_ = -1;
  int last_injection_ = -1;
  int protected_from_id_ = 0;
  std::deque<int> recent_batches_;
  std::vector<double> audited_predictive_;
  std::vector<AuditEvent> events_;
  std::function<void(int, const IRVectors&, int)> ir_sink_;
};

// ---------------------------------------------------------------------------
// Policy registry
// ---------------------------------------------------------------------------

struct PolicySpec {
  std::string label;  // unique per experiment entry; defaults to the key
  std::string key;    // registry name
  std::map<std::string, double> num;
  std::map<std::string, std::string> str;

  double get(const std::string& name, double fallback) const {
    auto it = num.find(name);
    return it == num.end() ? fallback : it->second;
  }
  std::string get_str(const std::string& name, const std::string& fallback) const {
    auto it = str.find(name);
    return it == str.end() ? fallback : it->second;
  }

  std::string hyper_label() const {
    if (key.rfind("acidp", 0) == 0) {
      return "L=" + std::to_string(static_cast<int>(get("l", 2))) +
             ", n=" + std::to_string(static_cast<int>(get("n", 1)));
    }
    if (key == "eg") {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "eps=%g", get("epsilon", 0.1));
      return buf;
    }
    if (key == "ucb") {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "c=%g", get("c", 1.0));
      return buf;
    }
    return "";
  }
};

inline AcidpConfig acidp_config_from_spec(const PolicySpec& spec, const PriceGrid& grid) {
  AcidpConfig cfg;
  cfg.perceived = static_cast<int>(spec.get("l", 2));
  cfg.init_reps = static_cast<int>(spec.get("n", 1));
  cfg.randomized_selector = spec.get("randomized", 1) != 0;
  cfg.eps_q = spec.get("eps_q", 1e-6);
  cfg.belief_floor = spec.get("belief_floor", 1e-2);
  cfg.max_universes = static_cast<int>(spec.get("max_universes", 64));
  cfg.generator_cooldown = static_cast<int>(spec.get("generator_cooldown", 20));
  cfg.paper_literal_weights = spec.get("paper_literal_weights", 0) != 0;
  cfg.vintage_path = spec.get_str("vintage", "");

  cfg.gen.shifts = default_shift_grid(grid, static_cast<int>(spec.get("shift_count", 13)),
                                      spec.get("shift_span", 0.1));
  cfg.gen.noise_std = spec.get("generator_noise", -1.0);
  cfg.gen.paper_literal_noise = spec.get("paper_literal_noise", 0) != 0;
  cfg.gen.exact = spec.get("generator_mc", 1) == 0;
  cfg.gen.n_mc = static_cast<int>(spec.get("n_mc", 500));

  cfg.audit.alpha1 = spec.get("alpha1", 0.05);
  cfg.audit.alpha2 = spec.get("alpha2", 0.01);
  cfg.audit.window = static_cast<int>(spec.get("window", 300));
  cfg.audit.n_recent = static_cast<int>(spec.get("n_recent", 5));
  cfg.audit.auditor_count = static_cast<int>(spec.get("auditor_count", 5));
  cfg.audit.epsilon_init = spec.get("epsilon", 0.1);
  cfg.audit.r_decay = spec.get("r_decay", 0.1);
  cfg.audit.paper_literal_time = spec.get("paper_literal_time", 0) != 0;
  return cfg;
}

inline std::unique_ptr<Policy> make_policy(const PolicySpec& spec, const PriceGrid& grid,
                                           std::uint64_t seed) {
  const std::string& key = spec.key;
  if (key == "eg") {
    return std::make_unique<EpsilonGreedyPolicy>(grid, spec.get("epsilon", 0.1), seed);
  }
  if (key == "ucb") return std::make_unique<UcbPolicy>(grid, spec.get("c", 1.0));
  if (key == "ucb-tuned") return std::make_unique<UcbTunedPolicy>(grid);
  if (key == "ucbpi") return std::make_unique<UcbpiPolicy>(grid);
  if (key == "ts") return std::make_unique<ThompsonSamplingPolicy>(grid, seed);
  if (key.rfind("acidp", 0) == 0) {
    AcidpConfig cfg = acidp_config_from_spec(spec, grid);
    if (key == "acidp") {
      cfg.variant = AcidpVariant::standard;
    } else if (key == "acidp-theta") {
      cfg.variant = AcidpVariant::theta;
    } else if (key == "acidp-window") {
      cfg.variant = AcidpVariant::window;
    } else if (key == "acidp-noaudit") {
      cfg.variant = AcidpVariant::no_audit;
    } else {
      throw ConfigError("unknown policy key: " + key);
    }
    return std::make_unique<AcidpPolicy>(grid, std::move(cfg), seed);
  }
  throw ConfigError("unknown policy key: " + key);
}

}  // namespace acidp
