#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "acidp/core.hpp"
#include "acidp/rng.hpp"
#include "acidp/stats.hpp"

namespace acidp {

// ---------------------------------------------------------------------------
// Environment contract
// ---------------------------------------------------------------------------

// A true market simulator. true_demand is the per-customer purchase
// probability at a price; sample_batch draws one round of demand. Instances
// are single-owner mutable; parallel trials construct independent instances.
class Environment {
 public:
  virtual ~Environment() = default;
  virtual int batch_size() const = 0;
  virtual double true_demand(int t, double price) const = 0;
  virtual int sample_batch(int t, double price) = 0;

  // (best arm, expected profit) = argmax_k price_k * N * D_t(price_k),
  // ties broken toward the lower index.
  virtual std::pair<int, double> oracle(int t, const PriceGrid& grid) const {
    int best = 0;
    double best_profit = -1.0;
    for (int k = 0; k < grid.arms(); ++k) {
      const double p = grid.price(k) * batch_size() * true_demand(t, grid.price(k));
      if (p > best_profit) {
        best_profit = p;
        best = k;
      }
    }
    return {best, best_profit};
  }
};

// ---------------------------------------------------------------------------
// Segment-population environments (synthetic cases 1..6)
// ---------------------------------------------------------------------------

enum class ShiftKind {
  stationary,
  rapid_growth,      // +delta for t >= t_shift
  rapid_decline,     // +delta for t < t_shift, baseline after
  seasonal,          // amplitude * sin(2 * pi * cycles * t / T)
  volatile_brownian, // B_t with increments xi / sqrt(T)
  upside_down,       // segment means redrawn at t_shift
};

struct ShiftRegime {
  ShiftKind kind = ShiftKind::stationary;
  double delta = 0.0;
  int t_shift = 0;
  double amplitude = 0.0;
  double cycles = 0.0;       // full sine periods over the horizon
  double brownian_scale = 1.0;
  double beta_a2 = 0.0, beta_b2 = 0.0;  // redraw distribution (upside_down)
};

struct SegmentPopulationConfig {
  int segments = 1000;
  double within_noise = 0.1;        // e_i scale
  bool noise_is_variance = false;   // default reads 0.1 as a standard deviation
  bool binomial_shortcut = false;   // batch-level sampling from the analytic curve
  double beta_a = 3.0, beta_b = 6.0;
  // Price range hint for the dense demand table used by continuous regimes.
  double table_lo = 0.01, table_hi = 1.0;

  double noise_std() const {
    return noise_is_variance ? std::sqrt(within_noise) : within_noise;
  }
};

namespace detail {

inline double beta_draw(double a, double b, std::mt19937_64& rng) {
  std::gamma_distribution<double> ga(a, 1.0), gb(b, 1.0);
  const double x = ga(rng);
  const double y = gb(rng);
  return x / (x + y);
}

}  // namespace detail

// Population of equal-sized customer segments with per-customer Normal noise.
// Demand against price a at round t is the exact mixture tail
//   D_t(a) = mean_s Phi((v_s + offset_t - a) / sigma)
// evaluated analytically; continuous-offset regimes go through a dense
// monotone interpolation table over the grid range for speed.
class SegmentPopulationEnv : public Environment {
 public:
  // Immutable once built; shareable across policy instances of one trial.
  struct Core {
    SegmentPopulationConfig cfg;
    ShiftRegime regime;
    int horizon = 2000;
    std::vector<double> means0;  // baseline segment valuations
    std::vector<double> means1;  // post-redraw valuations (upside_down only)
    std::vector<double> brownian;  // offset path, index by t (volatile only)
    // dense demand table per phase on x = price - offset
    bool has_table = false;
    double table_x0 = 0.0, table_dx = 1e-3;
    std::vector<double> table[2];

    double offset_at(int t) const {
      switch (regime.kind) {
        case ShiftKind::rapid_growth: return t >= regime.t_shift ? regime.delta : 0.0;
        case ShiftKind::rapid_decline: return t < regime.t_shift ? regime.delta : 0.0;
        case ShiftKind::seasonal:
          return regime.amplitude *
                 std::sin(2.0 * M_PI * regime.cycles * t / static_cast<double>(horizon));
        case ShiftKind::volatile_brownian:
          return brownian[std::min<std::size_t>(t, brownian.size() - 1)];
        default: return 0.0;
      }
    }

    int phase_at(int t) const {
      return (regime.kind == ShiftKind::upside_down && t >= regime.t_shift) ? 1 : 0;
    }

    const std::vector<double>& means(int phase) const { return phase == 1 ? means1 : means0; }

    double exact_demand(int phase, double x) const {
      const double sigma = cfg.noise_std();
      const auto& v = means(phase);
      double acc = 0.0;
      if (sigma <= 0.0) {
        for (double m : v) acc += (m >= x) ? 1.0 : 0.0;
      } else {
        for (double m : v) acc += normal_cdf((m - x) / sigma);
      }
      return acc / static_cast<double>(v.size());
    }

    double demand(int phase, double x) const {
      if (has_table) {
        const auto& tab = table[phase];
        const double pos = (x - table_x0) / table_dx;
        if (pos >= 0.0 && pos <= static_cast<double>(tab.size() - 1)) {
          const auto i = static_cast<std::size_t>(pos);
          if (i + 1 < tab.size()) {
            const double frac = pos - static_cast<double>(i);
            return tab[i] + frac * (tab[i + 1] - tab[i]);
          }
          return tab.back();
        }
      }
      return exact_demand(phase, x);
    }
  };

  SegmentPopulationEnv(std::shared_ptr<const Core> core, std::uint64_t seed)
      : core_(std::move(core)), rng_(make_stream(seed, "env-customers")) {}

  int batch_size() const override { return batch_size_; }
  void set_batch_size(int n) { batch_size_ = n; }

  double offset_at(int t) const { return core_->offset_at(t); }

  double true_demand(int t, double price) const override {
    return core_->demand(core_->phase_at(t), price - core_->offset_at(t));
  }

  int sample_batch(int t, double price) override {
    const int n = batch_size_;
    if (core_->cfg.binomial_shortcut) {
      return binomial_inverse_draw(n, true_demand(t, price), rng_);
    }
    const auto& means = core_->means(core_->phase_at(t));
    const double offset = core_->offset_at(t);
    const double sigma = core_->cfg.noise_std();
    int d = 0;
    for (int i = 0; i < n; ++i) {
      const auto s = static_cast<std::size_t>(rng_() % means.size());
      const double e = sigma > 0.0 ? normal_(rng_) * sigma : 0.0;
      d += (means[s] + offset + e >= price) ? 1 : 0;
    }
    return d;
  }

  std::pair<int, double> oracle(int t, const PriceGrid& grid) const override {
    const int phase = core_->phase_at(t);
    const double offset = core_->offset_at(t);
    const std::uint64_t key =
        (static_cast<std::uint64_t>(phase) << 62) ^
        std::bit_cast<std::uint64_t>(offset);
    {
      std::lock_guard<std::mutex> lock(memo_mu_);
      auto it = oracle_memo_.find(key);
      if (it != oracle_memo_.end()) return it->second;
    }
    int best = 0;
    double best_profit = -1.0;
    for (int k = 0; k < grid.arms(); ++k) {
      const double p =
          grid.price(k) * batch_size_ * core_->demand(phase, grid.price(k) - offset);
      if (p > best_profit) {
        best_profit = p;
        best = k;
      }
    }
    std::lock_guard<std::mutex> lock(memo_mu_);
    oracle_memo_.emplace(key, std::pair<int, double>{best, best_profit});
    return {best, best_profit};
  }

  const Core& core() const { return *core_; }

 private:
  std::shared_ptr<const Core> core_;
  int batch_size_ = 10;
  std::mt19937_64 rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  mutable std::mutex memo_mu_;
  mutable std::map<std::uint64_t, std::pair<int, double>> oracle_memo_;
};

inline std::shared_ptr<const SegmentPopulationEnv::Core> build_case_core(
    int case_id, std::uint64_t seed, int horizon, const SegmentPopulationConfig& cfg) {
  if (case_id < 1 || case_id > 6) throw ConfigError("case id must be in 1..6");
  auto core = std::make_shared<SegmentPopulationEnv::Core>();
  core->cfg = cfg;
  core->horizon = horizon;

  auto pop_rng = make_stream(seed, "env-population");
  core->means0.resize(static_cast<std::size_t>(cfg.segments));
  for (auto& v : core->means0) v = detail::beta_draw(cfg.beta_a, cfg.beta_b, pop_rng);

  switch (case_id) {
    case 1:
      core->regime = {ShiftKind::stationary};
      break;
    case 2:
      core->regime = {ShiftKind::rapid_growth, 0.3, 1001};
      break;
    case 3:
      core->regime = {ShiftKind::rapid_decline, 0.3, 1001};
      break;
    case 4:
      core->regime.kind = ShiftKind::seasonal;
      core->regime.amplitude = 0.3;
      core->regime.cycles = 2.0;  // sin(4 pi t / T)
      break;
    case 5: {
      core->regime.kind = ShiftKind::volatile_brownian;
      auto path_rng = make_stream(seed, "env-brownian");
      std::normal_distribution<double> xi(0.0, 1.0);
      core->brownian.resize(static_cast<std::size_t>(horizon) + 1, 0.0);
      const double scale = 1.0 / std::sqrt(static_cast<double>(horizon));
      for (std::size_t t = 1; t < core->brownian.size(); ++t) {
        core->brownian[t] = core->brownian[t - 1] + xi(path_rng) * scale;
      }
      break;
    }
    case 6: {
      core->regime.kind = ShiftKind::upside_down;
      core->regime.t_shift = 1000;
      core->regime.beta_a2 = 0.9;
      core->regime.beta_b2 = 0.5;
      auto redraw_rng = make_stream(seed, "env-population-shift");
      core->means1.resize(static_cast<std::size_t>(cfg.segments));
      for (auto& v : core->means1) {
        v = detail::beta_draw(core->regime.beta_a2, core->regime.beta_b2, redraw_rng);
      }
      break;
    }
  }

  // Continuous-offset regimes get a dense monotone table over the grid range.
  if (core->regime.kind == ShiftKind::seasonal ||
      core->regime.kind == ShiftKind::volatile_brownian) {
    double off_lo = 0.0, off_hi = 0.0;
    if (core->regime.kind == ShiftKind::seasonal) {
      off_lo = -core->regime.amplitude;
      off_hi = core->regime.amplitude;
    } else {
      off_lo = *std::min_element(core->brownian.begin(), core->brownian.end());
      off_hi = *std::max_element(core->brownian.begin(), core->brownian.end());
    }
    const double x_lo = cfg.table_lo - off_hi - 1e-9;
    const double x_hi = cfg.table_hi - off_lo + 1e-9;
    core->table_x0 = x_lo;
    core->table_dx = 1e-3;
    const auto npts = static_cast<std::size_t>((x_hi - x_lo) / core->table_dx) + 2;
    core->table[0].resize(npts);
    for (std::size_t i = 0; i < npts; ++i) {
      core->table[0][i] = core->exact_demand(0, x_lo + core->table_dx * i);
    }
    core->has_table = true;
  }
  return core;
}

// Shared cache so every policy of a trial reuses one immutable core.
inline std::shared_ptr<const SegmentPopulationEnv::Core> case_core_cached(
    int case_id, std::uint64_t seed, int horizon, const SegmentPopulationConfig& cfg) {
  struct Key {
    int case_id;
    std::uint64_t seed;
    int horizon;
    int segments;
    double noise;
    bool noise_var;
    auto operator<=>(const Key&) const = default;
  };
  static std::mutex mu;
  static std::map<Key, std::weak_ptr<const SegmentPopulationEnv::Core>> cache;
  const Key key{case_id, seed, horizon, cfg.segments, cfg.within_noise, cfg.noise_is_variance};
  std::lock_guard<std::mutex> lock(mu);
  if (auto it = cache.find(key); it != cache.end()) {
    if (auto core = it->second.lock()) return core;
  }
  auto core = build_case_core(case_id, seed, horizon, cfg);
  cache[key] = core;
  return core;
}

inline std::unique_ptr<SegmentPopulationEnv> build_case_environment(
    int case_id, std::uint64_t seed, int horizon = 2000,
    const SegmentPopulationConfig& cfg = {}, int batch_size = 10) {
  auto env = std::make_unique<SegmentPopulationEnv>(
      case_core_cached(case_id, seed, horizon, cfg), seed);
  env->set_batch_size(batch_size);
  return env;
}

// ---------------------------------------------------------------------------
// Demand-table environment (real-data scenario)
// ---------------------------------------------------------------------------

struct DemandTable {
  std::vector<double> prices;
  std::vector<std::string> products;          // column names, e.g. a, b, c
  std::vector<std::vector<double>> demand;    // per product, aligned with prices

  int price_index(double price) const {
    for (std::size_t i = 0; i < prices.size(); ++i) {
      if (std::abs(prices[i] - price) <= 1e-9 * std::max(1.0, std::abs(price))) {
        return static_cast<int>(i);
      }
    }
    throw std::runtime_error("price not present in demand table");
  }

  int product_index(const std::string& name) const {
    for (std::size_t i = 0; i < products.size(); ++i) {
      if (products[i] == name) return static_cast<int>(i);
    }
    throw ConfigError("unknown product in schedule: " + name);
  }
};

inline DemandTable load_demand_table(std::istream& is) {
  DemandTable table;
  std::string line;
  if (!std::getline(is, line)) throw ConfigError("demand table: empty file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  {
    std::stringstream header(line);
    std::string col;
    if (!std::getline(header, col, ',') || col != "price") {
      throw ConfigError("demand table: first column must be 'price'");
    }
    while (std::getline(header, col, ',')) {
      constexpr std::string_view prefix = "product_";
      if (col.rfind(prefix, 0) != 0) {
        throw ConfigError("demand table: product columns must be named product_<x>");
      }
      table.products.push_back(col.substr(prefix.size()));
    }
  }
  if (table.products.empty()) throw ConfigError("demand table: no product columns");
  table.demand.resize(table.products.size());
  int row_no = 1;
  while (std::getline(is, line)) {
    ++row_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    if (!std::getline(row, cell, ',')) continue;
    table.prices.push_back(std::stod(cell));
    for (std::size_t p = 0; p < table.products.size(); ++p) {
      if (!std::getline(row, cell, ',')) {
        throw ConfigError("demand table: short row at line " + std::to_string(row_no));
      }
      const double d = std::stod(cell);
      if (d < 0.0 || d > 1.0) {
        throw ConfigError("demand table: probability out of [0,1] at line " +
                          std::to_string(row_no));
      }
      table.demand[p].push_back(d);
    }
  }
  for (std::size_t i = 1; i < table.prices.size(); ++i) {
    if (table.prices[i] <= table.prices[i - 1]) {
      throw ConfigError("demand table: prices must be strictly increasing");
    }
  }
  for (std::size_t p = 0; p < table.products.size(); ++p) {
    for (std::size_t i = 1; i < table.demand[p].size(); ++i) {
      if (table.demand[p][i] > table.demand[p][i - 1] + 1e-12) {
        throw ConfigError("demand table: demand must be non-increasing in price (product_" +
                          table.products[p] + ")");
      }
    }
  }
  return table;
}

inline DemandTable load_demand_table(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("demand table not found: " + path);
  return load_demand_table(is);
}

// Which product is live in which round range: spans of (t_end inclusive,
// product index), in increasing t_end order.
struct ProductSchedule {
  std::vector<std::pair<int, int>> spans;

  int product_at(int t) const {
    for (const auto& [t_end, product] : spans) {
      if (t <= t_end) return product;
    }
    return spans.empty() ? 0 : spans.back().second;
  }
};

// Parses "b:2000,c:4000,a:6000" against the table's product names.
inline ProductSchedule parse_schedule(const std::string& text, const DemandTable& table) {
  ProductSchedule sched;
  std::stringstream ss(text);
  std::string item;
  int prev_end = 0;
  while (std::getline(ss, item, ',')) {
    const auto colon = item.find(':');
    if (colon == std::string::npos) throw ConfigError("bad schedule entry: " + item);
    const std::string name = item.substr(0, colon);
    const int t_end = std::stoi(item.substr(colon + 1));
    if (t_end <= prev_end) throw ConfigError("schedule spans must increase");
    sched.spans.emplace_back(t_end, table.product_index(name));
    prev_end = t_end;
  }
  if (sched.spans.empty()) throw ConfigError("empty product schedule");
  return sched;
}

class DemandTableEnv : public Environment {
 public:
  DemandTableEnv(DemandTable table, ProductSchedule schedule, int batch_size,
                 std::uint64_t seed)
      : table_(std::move(table)),
        schedule_(std::move(schedule)),
        batch_size_(batch_size),
        rng_(make_stream(seed, "env-table")) {}

  int batch_size() const override { return batch_size_; }

  double true_demand(int t, double price) const override {
    return table_.demand[schedule_.product_at(t)][table_.price_index(price)];
  }

  int sample_batch(int t, double price) override {
    return binomial_inverse_draw(batch_size_, true_demand(t, price), rng_);
  }

  std::pair<int, double> oracle(int t, const PriceGrid& grid) const override {
    const int product = schedule_.product_at(t);
    auto it = oracle_memo_.find(product);
    if (it != oracle_memo_.end()) return it->second;
    int best = 0;
    double best_profit = -1.0;
    for (int k = 0; k < grid.arms(); ++k) {
      const double d = table_.demand[product][table_.price_index(grid.price(k))];
      const double p = grid.price(k) * batch_size_ * d;
      if (p > best_profit) {
        best_profit = p;
        best = k;
      }
    }
    return oracle_memo_.emplace(product, std::pair<int, double>{best, best_profit}).first->second;
  }

  const DemandTable& table() const { return table_; }
  const ProductSchedule& schedule() const { return schedule_; }

 private:
  DemandTable table_;
  ProductSchedule schedule_;
  int batch_size_;
  std::mt19937_64 rng_;
  mutable std::map<int, std::pair<int, double>> oracle_memo_;
};

}  // namespace acidp
