#pragma once

#include <cmath>
#include <cstdio>
#include <istream>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace acidp {

// Raised for bad user input (CLI args, config files, malformed data files).
// The CLI maps it to exit code 1; everything else is a runtime failure.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// ---------------------------------------------------------------------------
// Price grid
// ---------------------------------------------------------------------------

// The finite action set: K strictly increasing positive prices, each pricing
// round serving a batch of `batch_size` customers.
struct PriceGrid {
  std::vector<double> prices;
  int batch_size = 1;

  int arms() const { return static_cast<int>(prices.size()); }
  double price(int k) const { return prices.at(static_cast<std::size_t>(k)); }
  double min_price() const { return prices.front(); }
  double max_price() const { return prices.back(); }

  // Spacing to the neighbour, used for valuation-support endpoints.
  double spacing_below() const {
    return arms() >= 2 ? prices[1] - prices[0] : prices[0];
  }
  double spacing_above() const {
    return arms() >= 2 ? prices[arms() - 1] - prices[arms() - 2] : prices[0];
  }

  void validate() const {
    if (arms() < 2) throw ConfigError("price grid needs at least 2 prices");
    if (batch_size < 1) throw ConfigError("batch size must be >= 1");
    if (prices.front() <= 0.0) throw ConfigError("prices must be positive");
    for (int k = 1; k < arms(); ++k) {
      if (prices[k] <= prices[k - 1]) {
        throw ConfigError("prices must be strictly increasing");
      }
    }
  }
};

inline PriceGrid make_price_grid(double low, double high, int arms, int batch) {
  if (!(low > 0.0) || !(low < high)) {
    throw ConfigError("price grid bounds must satisfy 0 < low < high");
  }
  if (arms < 2) throw ConfigError("price grid needs K >= 2");
  if (batch < 1) throw ConfigError("batch size must be >= 1");
  PriceGrid grid;
  grid.prices.resize(static_cast<std::size_t>(arms));
  const double step = (high - low) / static_cast<double>(arms - 1);
  for (int k = 0; k < arms; ++k) grid.prices[k] = low + step * k;
  grid.prices.back() = high;  // exact endpoint
  grid.batch_size = batch;
  grid.validate();
  return grid;
}

// ---------------------------------------------------------------------------
// Observations and histories
// ---------------------------------------------------------------------------

// One pricing round: arm is 0-based in memory, 1-based in every file format.
struct Observation {
  int t = 0;
  int arm = 0;
  int demand = 0;

  friend bool operator==(const Observation&, const Observation&) = default;
};

// Append-only log of observations with rounds increasing by exactly one.
class History {
 public:
  void append(const Observation& obs) {
    const int expected = obs_.empty() ? 1 : obs_.back().t + 1;
    if (obs.t != expected) {
      throw std::runtime_error("history rounds must increase by 1");
    }
    obs_.push_back(obs);
  }

  std::size_t size() const { return obs_.size(); }
  bool empty() const { return obs_.empty(); }
  const Observation& operator[](std::size_t i) const { return obs_[i]; }
  auto begin() const { return obs_.begin(); }
  auto end() const { return obs_.end(); }

  void serialize(std::ostream& os) const {
    os << "t,arm,demand\n";
    for (const auto& o : obs_) {
      os << o.t << ',' << (o.arm + 1) << ',' << o.demand << '\n';
    }
  }

  static History deserialize(std::istream& is) {
    History h;
    std::string line;
    if (!std::getline(is, line) || line != "t,arm,demand") {
      throw std::runtime_error("history: bad header");
    }
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      Observation o;
      if (std::sscanf(line.c_str(), "%d,%d,%d", &o.t, &o.arm, &o.demand) != 3) {
        throw std::runtime_error("history: bad row: " + line);
      }
      o.arm -= 1;
      h.append(o);
    }
    return h;
  }

  friend bool operator==(const History& a, const History& b) { return a.obs_ == b.obs_; }

 private:
  std::vector<Observation> obs_;
};

// ---------------------------------------------------------------------------
// Profit and regret accounting
// ---------------------------------------------------------------------------

inline double realized_profit(double price, int demand) { return price * demand; }

// Single-round regret increment. May be negative on a lucky draw; the
// per-round oracle profit is an expectation, the realized profit is not.
inline double regret_step(double oracle_profit, double realized) {
  return oracle_profit - realized;
}

// ---------------------------------------------------------------------------
// Trial traces
// ---------------------------------------------------------------------------

enum class Alert { none, yellow, red };

inline const char* to_string(Alert a) {
  switch (a) {
    case Alert::yellow: return "yellow";
    case Alert::red: return "red";
    default: return "none";
  }
}

inline Alert alert_from_string(std::string_view s) {
  if (s == "none") return Alert::none;
  if (s == "yellow") return Alert::yellow;
  if (s == "red") return Alert::red;
  throw std::runtime_error("unknown alert value: " + std::string(s));
}

struct TraceRow {
  int t = 0;
  int arm = 0;  // 0-based in memory, 1-based in CSV
  double price = 0.0;
  int demand = 0;
  double profit = 0.0;
  double oracle_profit = 0.0;
  double cum_regret = 0.0;
  Alert alert = Alert::none;

  friend bool operator==(const TraceRow&, const TraceRow&) = default;
};

inline constexpr const char* kTraceHeader =
    "t,arm,price,demand,profit,oracle_profit,cum_regret,alert";

struct TrialTrace {
  std::vector<TraceRow> rows;

  double final_regret() const { return rows.empty() ? 0.0 : rows.back().cum_regret; }

  void write_csv(std::ostream& os) const {
    os << kTraceHeader << '\n';
    char buf[160];
    for (const auto& r : rows) {
      std::snprintf(buf, sizeof(buf), "%d,%d,%.17g,%d,%.17g,%.17g,%.17g,%s", r.t, r.arm + 1,
                    r.price, r.demand, r.profit, r.oracle_profit, r.cum_regret,
                    to_string(r.alert));
      os << buf << '\n';
    }
  }

  static TrialTrace read_csv(std::istream& is) {
    TrialTrace trace;
    std::string line;
    if (!std::getline(is, line) || line != kTraceHeader) {
      throw std::runtime_error("trace: bad header");
    }
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      TraceRow r;
      char alert[16] = {0};
      if (std::sscanf(line.c_str(), "%d,%d,%lg,%d,%lg,%lg,%lg,%15s", &r.t, &r.arm, &r.price,
                      &r.demand, &r.profit, &r.oracle_profit, &r.cum_regret, alert) != 8) {
        throw std::runtime_error("trace: bad row: " + line);
      }
      r.arm -= 1;
      r.alert = alert_from_string(alert);
      trace.rows.push_back(r);
    }
    return trace;
  }

  friend bool operator==(const TrialTrace&, const TrialTrace&) = default;
};

// ---------------------------------------------------------------------------
// Policy contract
// ---------------------------------------------------------------------------

// choose() must be a pure function of internal state plus the policy's own
// random stream; observe() mutates only internal state. One instance per
// trial, never shared.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual int choose(int t) = 0;
  virtual void observe(const Observation& obs) = 0;
  virtual std::string name() const = 0;
  // Alert raised while processing the most recent observation.
  virtual Alert last_alert() const { return Alert::none; }
};

}  // namespace acidp
