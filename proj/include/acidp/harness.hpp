#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <variant>
#include <vector>

#include "acidp/core.hpp"
#include "acidp/environments.hpp"
#include "acidp/policies.hpp"
#include "acidp/rng.hpp"
#include "acidp/stats.hpp"

namespace acidp {

// ---------------------------------------------------------------------------
// Config file parsing (TOML subset: [sections], key = value, # comments)
// ---------------------------------------------------------------------------

struct TomlValue {
  std::variant<bool, double, std::string, std::vector<double>> data;

  bool as_bool() const { return std::get<bool>(data); }
  double as_number() const { return std::get<double>(data); }
  const std::string& as_string() const { return std::get<std::string>(data); }
  const std::vector<double>& as_list() const { return std::get<std::vector<double>>(data); }
  bool is_number() const { return std::holds_alternative<double>(data); }
  bool is_string() const { return std::holds_alternative<std::string>(data); }
  bool is_bool() const { return std::holds_alternative<bool>(data); }
};

class TomlFile {
 public:
  static TomlFile parse(std::istream& is, const std::string& origin = "<config>") {
    TomlFile file;
    std::string section;
    std::string line;
    int line_no = 0;
    while (std::getline(is, line)) {
      ++line_no;
      strip_comment(line);
      trim(line);
      if (line.empty()) continue;
      if (line.front() == '[') {
        if (line.back() != ']') fail(origin, line_no, "unterminated section header");
        section = line.substr(1, line.size() - 2);
        trim(section);
        file.sections_[section];
        continue;
      }
      const auto eq = line.find('=');
      if (eq == std::string::npos) fail(origin, line_no, "expected key = value");
      std::string key = line.substr(0, eq);
      std::string value = line.substr(eq + 1);
      trim(key);
      trim(value);
      if (key.empty() || value.empty()) fail(origin, line_no, "empty key or value");
      file.sections_[section][key] = parse_value(value, origin, line_no);
    }
    return file;
  }

  static TomlFile parse_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("config not found: " + path);
    return parse(is, path);
  }

  bool has_section(const std::string& name) const { return sections_.count(name) > 0; }

  std::vector<std::string> sections_with_prefix(const std::string& prefix) const {
    std::vector<std::string> out;
    for (const auto& [name, _] : sections_) {
      if (name.rfind(prefix, 0) == 0) out.push_back(name);
    }
    return out;
  }

  const std::map<std::string, TomlValue>* section(const std::string& name) const {
    auto it = sections_.find(name);
    return it == sections_.end() ? nullptr : &it->second;
  }

  double number(const std::string& section, const std::string& key, double fallback) const {
    const auto* value = find(section, key);
    if (value == nullptr) return fallback;
    if (!value->is_number()) throw ConfigError("config: " + section + "." + key + " must be a number");
    return value->as_number();
  }

  std::string text(const std::string& section, const std::string& key,
                   const std::string& fallback) const {
    const auto* value = find(section, key);
    if (value == nullptr) return fallback;
    if (!value->is_string()) throw ConfigError("config: " + section + "." + key + " must be a string");
    return value->as_string();
  }

  bool boolean(const std::string& section, const std::string& key, bool fallback) const {
    const auto* value = find(section, key);
    if (value == nullptr) return fallback;
    if (!value->is_bool()) throw ConfigError("config: " + section + "." + key + " must be a bool");
    return value->as_bool();
  }

 private:
  const TomlValue* find(const std::string& section, const std::string& key) const {
    auto sec = sections_.find(section);
    if (sec == sections_.end()) return nullptr;
    auto it = sec->second.find(key);
    return it == sec->second.end() ? nullptr : &it->second;
  }

  static void strip_comment(std::string& line) {
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') quoted = !quoted;
      if (line[i] == '#' && !quoted) {
        line.erase(i);
        return;
      }
    }
  }

  static void trim(std::string& s) {
    const auto begin = s.find_first_not_of(" \t\r");
    const auto end = s.find_last_not_of(" \t\r");
    s = begin == std::string::npos ? std::string() : s.substr(begin, end - begin + 1);
  }

  [[noreturn]] static void fail(const std::string& origin, int line_no, const std::string& what) {
    throw ConfigError(origin + ":" + std::to_string(line_no) + ": " + what);
  }

  static TomlValue parse_value(const std::string& raw, const std::string& origin, int line_no) {
    if (raw == "true") return {true};
    if (raw == "false") return {false};
    if (raw.front() == '"') {
      if (raw.size() < 2 || raw.back() != '"') fail(origin, line_no, "unterminated string");
      return {raw.substr(1, raw.size() - 2)};
    }
    if (raw.front() == '[') {
      if (raw.back() != ']') fail(origin, line_no, "unterminated list");
      std::vector<double> values;
      std::stringstream ss(raw.substr(1, raw.size() - 2));
      std::string item;
      while (std::getline(ss, item, ',')) {
        trim(item);
        if (item.empty()) continue;
        try {
          values.push_back(std::stod(item));
        } catch (const std::exception&) {
          fail(origin, line_no, "bad list element: " + item);
        }
      }
      return {values};
    }
    try {
      std::size_t used = 0;
      const double v = std::stod(raw, &used);
      if (used == raw.size()) return {v};
    } catch (const std::exception&) {
    }
    return {raw};  // bare string
  }

  std::map<std::string, std::map<std::string, TomlValue>> sections_;
};

// ---------------------------------------------------------------------------
// Experiment configuration
// ---------------------------------------------------------------------------

struct EnvironmentSpec {
  // "case1".."case6" or "table"
  std::string kind = "case1";
  std::string table_path;
  std::string schedule;  // e.g. "b:2000,c:4000,a:6000"
  SegmentPopulationConfig population;

  int case_id() const {
    if (kind.size() == 5 && kind.rfind("case", 0) == 0) {
      const int id = kind[4] - '0';
      if (id >= 1 && id <= 6) return id;
    }
    return 0;  // table
  }
};

struct GridSpec {
  double low = 0.01;
  double high = 1.0;
  int arms = 20;
  int batch = 10;

  PriceGrid build() const { return make_price_grid(low, high, arms, batch); }
};

struct ExperimentConfig {
  EnvironmentSpec env;
  GridSpec grid;
  int horizon = 2000;
  int trials = 10;
  std::uint64_t base_seed = 1;
  std::string out_dir = "out";
  bool common_random_numbers = true;
  int jobs = 0;  // 0 -> hardware concurrency
  bool verbose_audit = false;
  bool write_traces = true;
  std::vector<PolicySpec> policies;

  void validate() const {
    if (trials < 1) throw ConfigError("trials must be >= 1");
    if (horizon < 1) throw ConfigError("horizon must be >= 1");
    if (policies.empty()) throw ConfigError("no policies configured");
    grid.build();
    if (env.case_id() == 0 && env.kind != "table") {
      throw ConfigError("unknown environment: " + env.kind);
    }
    if (env.kind == "table" && env.table_path.empty()) {
      throw ConfigError("table environment needs a demand-table path");
    }
  }
};

inline ExperimentConfig experiment_from_toml(const TomlFile& toml) {
  ExperimentConfig cfg;
  cfg.env.kind = toml.text("experiment", "environment", "case1");
  cfg.horizon = static_cast<int>(toml.number("experiment", "horizon", 2000));
  cfg.trials = static_cast<int>(toml.number("experiment", "trials", 10));
  cfg.base_seed = static_cast<std::uint64_t>(toml.number("experiment", "seed", 1));
  cfg.out_dir = toml.text("experiment", "out", "out");
  cfg.common_random_numbers = toml.boolean("experiment", "crn", true);
  cfg.jobs = static_cast<int>(toml.number("experiment", "jobs", 0));
  cfg.verbose_audit = toml.boolean("experiment", "verbose_audit", false);

  cfg.grid.low = toml.number("grid", "low", 0.01);
  cfg.grid.high = toml.number("grid", "high", 1.0);
  cfg.grid.arms = static_cast<int>(toml.number("grid", "arms", 20));
  cfg.grid.batch = static_cast<int>(toml.number("grid", "batch", 10));

  cfg.env.table_path = toml.text("table", "path", "");
  cfg.env.schedule = toml.text("table", "schedule", "");
  cfg.env.population.segments = static_cast<int>(toml.number("population", "segments", 1000));
  cfg.env.population.within_noise = toml.number("population", "noise", 0.1);
  cfg.env.population.noise_is_variance = toml.boolean("population", "noise_is_variance", false);
  cfg.env.population.binomial_shortcut = toml.boolean("population", "binomial_shortcut", false);
  cfg.env.population.table_lo = cfg.grid.low;
  cfg.env.population.table_hi = cfg.grid.high;

  for (const auto& name : toml.sections_with_prefix("policy.")) {
    PolicySpec spec;
    spec.label = name.substr(std::string("policy.").size());
    spec.key = spec.label;
    const auto* section = toml.section(name);
    for (const auto& [key, value] : *section) {
      if (key == "key") {
        spec.key = value.as_string();
      } else if (value.is_number()) {
        spec.num[key] = value.as_number();
      } else if (value.is_bool()) {
        spec.num[key] = value.as_bool() ? 1.0 : 0.0;
      } else if (value.is_string()) {
        spec.str[key] = value.as_string();
      }
    }
    cfg.policies.push_back(std::move(spec));
  }
  cfg.validate();
  return cfg;
}

inline ExperimentConfig experiment_from_file(const std::string& path) {
  return experiment_from_toml(TomlFile::parse_file(path));
}

// ---------------------------------------------------------------------------
// Environment construction
// ---------------------------------------------------------------------------

inline std::unique_ptr<Environment> make_environment(const EnvironmentSpec& spec,
                                                     const GridSpec& grid, int horizon,
                                                     std::uint64_t seed) {
  if (const int case_id = spec.case_id(); case_id > 0) {
    SegmentPopulationConfig population = spec.population;
    population.table_lo = grid.low;
    population.table_hi = grid.high;
    return build_case_environment(case_id, seed, horizon, population, grid.batch);
  }
  auto table = load_demand_table(spec.table_path);
  auto schedule = spec.schedule.empty()
                      ? parse_schedule("b:2000,c:4000,a:6000", table)
                      : parse_schedule(spec.schedule, table);
  return std::make_unique<DemandTableEnv>(std::move(table), std::move(schedule), grid.batch, seed);
}

// ---------------------------------------------------------------------------
// Trials
// ---------------------------------------------------------------------------

inline TrialTrace run_trial(Policy& policy, Environment& env, const PriceGrid& grid, int horizon) {
  TrialTrace trace;
  trace.rows.reserve(static_cast<std::size_t>(horizon));
  double cum_regret = 0.0;
  for (int t = 1; t <= horizon; ++t) {
    const int arm = policy.choose(t);
    const double price = grid.price(arm);
    const auto [oracle_arm, oracle_profit] = env.oracle(t, grid);
    (void)oracle_arm;
    const int demand = env.sample_batch(t, price);
    const double profit = realized_profit(price, demand);
    cum_regret += regret_step(oracle_profit, profit);
    policy.observe({t, arm, demand});
    trace.rows.push_back(
        {t, arm, price, demand, profit, oracle_profit, cum_regret, policy.last_alert()});
  }
  return trace;
}

// ---------------------------------------------------------------------------
// Experiments
// ---------------------------------------------------------------------------

struct SummaryRow {
  std::string policy;
  std::string hyperparameters;
  double mean_regret = 0.0;
  double standard_error = 0.0;  // sample standard deviation over trials
  double max_regret = 0.0;
  double min_regret = 0.0;
};

inline constexpr const char* kSummaryHeader =
    "policy,hyperparameters,mean_regret,standard_error,max,min";

inline void write_summary_csv(const std::vector<SummaryRow>& rows, std::ostream& os) {
  os << kSummaryHeader << '\n';
  char buf[256];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%s,\"%s\",%.17g,%.17g,%.17g,%.17g", r.policy.c_str(),
                  r.hyperparameters.c_str(), r.mean_regret, r.standard_error, r.max_regret,
                  r.min_regret);
    os << buf << '\n';
  }
}

inline SummaryRow summarize(const std::string& policy, const std::string& hyper,
                            std::span<const double> final_regrets) {
  SummaryRow row;
  row.policy = policy;
  row.hyperparameters = hyper;
  row.mean_regret = mean_of(final_regrets);
  row.standard_error = sample_stddev(final_regrets);
  row.max_regret = *std::max_element(final_regrets.begin(), final_regrets.end());
  row.min_regret = *std::min_element(final_regrets.begin(), final_regrets.end());
  return row;
}

// Minimal bounded worker pool; tasks are independent trials.
inline void run_parallel(int jobs, const std::vector<std::function<void()>>& tasks) {
  if (jobs <= 0) jobs = static_cast<int>(std::thread::hardware_concurrency());
  jobs = std::max(1, std::min<int>(jobs, static_cast<int>(tasks.size())));
  if (jobs == 1) {
    for (const auto& task : tasks) task();
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> workers;
  std::exception_ptr error;
  std::mutex error_mu;
  workers.reserve(static_cast<std::size_t>(jobs));
  for (int w = 0; w < jobs; ++w) {
    workers.emplace_back([&] {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= tasks.size()) return;
        try {
          tasks[i]();
        } catch (...) {
          std::lock_guard<std::mutex> lock(error_mu);
          if (!error) error = std::current_exception();
        }
      }
    });
  }
  for (auto& w : workers) w.join();
  if (error) std::rethrow_exception(error);
}

struct ExperimentResult {
  std::vector<SummaryRow> summary;
  // per policy label: final cumulative regret per trial
  std::map<std::string, std::vector<double>> final_regrets;
  // per policy label: traces (kept only when config.write_traces is false)
  std::map<std::string, std::vector<TrialTrace>> traces;
};

// Runs the (policy x trial) grid. Trial i of every policy sees the same
// customer stream when common random numbers are on; policy streams are
// derived from (seed, label, trial) so changing one policy never perturbs
// another.
inline ExperimentResult run_experiment(const ExperimentConfig& config) {
  config.validate();
  const PriceGrid grid = config.grid.build();

  namespace fs = std::filesystem;
  if (config.write_traces) {
    std::error_code ec;
    fs::create_directories(config.out_dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory: " + config.out_dir);
    std::ofstream probe(fs::path(config.out_dir) / ".write_probe");
    if (!probe) throw std::runtime_error("output directory not writable: " + config.out_dir);
    probe.close();
    fs::remove(fs::path(config.out_dir) / ".write_probe", ec);
  }

  ExperimentResult result;
  for (const auto& spec : config.policies) {
    result.final_regrets[spec.label].resize(static_cast<std::size_t>(config.trials));
    if (!config.write_traces) {
      result.traces[spec.label].resize(static_cast<std::size_t>(config.trials));
    }
  }

  std::vector<std::function<void()>> tasks;
  for (const auto& spec : config.policies) {
    double* regret_slots = result.final_regrets[spec.label].data();
    TrialTrace* trace_slots =
        config.write_traces ? nullptr : result.traces[spec.label].data();
    for (int trial = 0; trial < config.trials; ++trial) {
      tasks.push_back([&config, &grid, &spec, trial, regret_slots, trace_slots] {
        const std::uint64_t trial_seed = config.base_seed + static_cast<std::uint64_t>(trial);
        const std::uint64_t env_seed =
            config.common_random_numbers ? mix_label(trial_seed, "env")
                                         : mix_label(mix_label(trial_seed, spec.label), "env");
        auto env = make_environment(config.env, config.grid, config.horizon, env_seed);
        auto policy = make_policy(spec, grid, mix_label(trial_seed, spec.label));
        AcidpPolicy* acidp = dynamic_cast<AcidpPolicy*>(policy.get());

        TrialTrace trace = run_trial(*policy, *env, grid, config.horizon);
        regret_slots[trial] = trace.final_regret();

        if (config.write_traces) {
          const auto path = std::filesystem::path(config.out_dir) /
                            ("trace_" + spec.label + "_" + std::to_string(trial) + ".csv");
          std::ofstream os(path);
          if (!os) throw std::runtime_error("cannot write " + path.string());
          trace.write_csv(os);
          if (config.verbose_audit && acidp != nullptr) {
            const auto log_path = std::filesystem::path(config.out_dir) /
                                  ("audit_" + spec.label + "_" + std::to_string(trial) + ".log");
            std::ofstream log(log_path);
            for (const auto& e : acidp->audit_events()) {
              log << "t=" << e.t << " arm=" << (e.arm + 1) << " X=" << e.x << " LB=" << e.lb
                  << " UB=" << e.ub << " alert=" << to_string(e.alert);
              if (e.pvalue >= 0.0) log << " pvalue=" << e.pvalue;
              log << '\n';
            }
          }
        } else {
          trace_slots[trial] = std::move(trace);
        }
      });
    }
  }
  run_parallel(config.jobs, tasks);

  for (const auto& spec : config.policies) {
    result.summary.push_back(
        summarize(spec.key, spec.hyper_label(), result.final_regrets[spec.label]));
  }
  if (config.write_traces) {
    std::ofstream os(std::filesystem::path(config.out_dir) / "summary.csv");
    write_summary_csv(result.summary, os);
  }
  return result;
}

}  // namespace acidp
