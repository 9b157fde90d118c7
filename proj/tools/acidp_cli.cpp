// Command-line front end for the ACIDP pricing engine.
//
//   acidp run <config.toml>       full experiment grid from a config file
//   acidp case <1..6>             one canned synthetic market-shift scenario
//   acidp criteo --table <csv>    demand-table scenario (T=6000, K=50, N=500)
//   acidp validate                quick self-checks of the numeric kernels
//
// Exit codes: 0 success, 1 configuration error, 2 runtime failure.

#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "acidp/acidp.hpp"

namespace {

using namespace acidp;

struct CommonFlags {
  int trials = -1;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int horizon = -1;
  std::string out;
  int jobs = 0;
  bool verbose_audit = false;
  bool paper_literal_time = false;
  bool paper_literal_noise = false;
  bool paper_literal_weights = false;
  bool no_crn = false;
  std::string dump_ir;
};

void add_common_flags(CLI::App* cmd, CommonFlags* flags) {
  cmd->add_option("--trials", flags->trials, "number of independent trials");
  cmd->add_option("--seed", flags->seed, "base seed; trial i uses seed+i")
      ->each([flags](const std::string&) { flags->seed_set = true; });
  cmd->add_option("--horizon", flags->horizon, "rounds per trial");
  cmd->add_option("--out", flags->out, "output directory");
  cmd->add_option("--jobs", flags->jobs, "worker threads (0 = all cores)");
  cmd->add_flag("--verbose-audit", flags->verbose_audit, "write per-round audit logs");
  cmd->add_flag("--paper-literal-time", flags->paper_literal_time,
                "sequence-test boundary uses wall-clock t");
  cmd->add_flag("--paper-literal-noise", flags->paper_literal_noise,
                "generator noise scale = largest price midpoint");
  cmd->add_flag("--paper-literal-weights", flags->paper_literal_weights,
                "universe injection weights exactly as written");
  cmd->add_flag("--no-crn", flags->no_crn, "disable common random numbers across policies");
}

void apply_common_flags(const CommonFlags& flags, ExperimentConfig* config) {
  if (flags.trials > 0) config->trials = flags.trials;
  if (flags.seed_set) config->base_seed = flags.seed;
  if (flags.horizon > 0) config->horizon = flags.horizon;
  if (!flags.out.empty()) config->out_dir = flags.out;
  if (flags.jobs > 0) config->jobs = flags.jobs;
  if (flags.verbose_audit) config->verbose_audit = true;
  if (flags.no_crn) config->common_random_numbers = false;
  for (auto& spec : config->policies) {
    if (flags.paper_literal_time) spec.num["paper_literal_time"] = 1;
    if (flags.paper_literal_noise) spec.num["paper_literal_noise"] = 1;
    if (flags.paper_literal_weights) spec.num["paper_literal_weights"] = 1;
  }
}

PolicySpec canned_policy(const std::string& key, const std::string& variant) {
  PolicySpec spec;
  spec.key = key;
  if (!variant.empty()) {
    if (variant != "standard" && key == "acidp") {
      spec.key = "acidp-" + variant;
    }
  }
  spec.label = spec.key;
  return spec;
}

void print_summary(const std::vector<SummaryRow>& summary) {
  std::printf("%-14s %-14s %12s %12s %12s %12s\n", "policy", "hyperparams", "mean_regret",
              "std_error", "max", "min");
  for (const auto& row : summary) {
    std::printf("%-14s %-14s %12.2f %12.2f %12.2f %12.2f\n", row.policy.c_str(),
                row.hyperparameters.c_str(), row.mean_regret, row.standard_error, row.max_regret,
                row.min_regret);
  }
}

// Re-runs one trial with an IR sink attached and dumps per-round JSON lines.
void dump_ir_trace(const ExperimentConfig& config, const std::string& path) {
  const PolicySpec* acidp_spec = nullptr;
  for (const auto& spec : config.policies) {
    if (spec.key.rfind("acidp", 0) == 0) acidp_spec = &spec;
  }
  if (acidp_spec == nullptr) {
    std::cerr << "--dump-ir: no acidp policy in this run\n";
    return;
  }
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write " + path);
  const PriceGrid grid = config.grid.build();
  auto env = make_environment(config.env, config.grid, config.horizon,
                              mix_label(config.base_seed, "env"));
  auto policy = make_policy(*acidp_spec, grid, mix_label(config.base_seed, acidp_spec->label));
  auto* acidp = dynamic_cast<AcidpPolicy*>(policy.get());
  acidp->set_ir_sink([&os](int t, const IRVectors& ir, int arm) {
    nlohmann::json j = to_json(ir);
    j["t"] = t;
    j["arm"] = arm + 1;
    os << j.dump() << '\n';
  });
  run_trial(*policy, *env, grid, config.horizon);
}

int cmd_run(const std::string& config_path, const CommonFlags& flags) {
  ExperimentConfig config = experiment_from_file(config_path);
  apply_common_flags(flags, &config);
  const auto result = run_experiment(config);
  print_summary(result.summary);
  std::printf("traces written to %s\n", config.out_dir.c_str());
  return 0;
}

int cmd_case(int case_id, const std::string& policy_key, const std::string& variant,
             const CommonFlags& flags) {
  ExperimentConfig config;
  config.env.kind = "case" + std::to_string(case_id);
  config.grid = GridSpec{0.01, 1.0, 20, 10};
  config.horizon = 2000;
  config.trials = 10;
  config.base_seed = 1;
  config.out_dir = "out";
  config.policies.push_back(canned_policy(policy_key, variant));
  apply_common_flags(flags, &config);
  const auto result = run_experiment(config);
  print_summary(result.summary);
  if (!flags.dump_ir.empty()) dump_ir_trace(config, flags.dump_ir);
  std::printf("traces written to %s\n", config.out_dir.c_str());
  return 0;
}

int cmd_criteo(const std::string& table, const std::string& policy_key,
               const std::string& variant, const std::string& schedule,
               const CommonFlags& flags) {
  ExperimentConfig config;
  config.env.kind = "table";
  config.env.table_path = table;
  config.env.schedule = schedule;
  config.grid = GridSpec{10, 500, 50, 500};
  config.horizon = 6000;
  config.trials = 10;
  config.base_seed = 1;
  config.out_dir = "out";
  PolicySpec spec = canned_policy(policy_key, variant);
  if (spec.key.rfind("acidp", 0) == 0 && spec.num.count("l") == 0) {
    spec.num["l"] = 4;  // table-scenario default
    spec.num["n"] = 1;
  }
  config.policies.push_back(std::move(spec));
  apply_common_flags(flags, &config);
  const auto result = run_experiment(config);
  print_summary(result.summary);
  if (!flags.dump_ir.empty()) dump_ir_trace(config, flags.dump_ir);
  std::printf("traces written to %s\n", config.out_dir.c_str());
  return 0;
}

bool check(bool ok, const char* what) {
  std::printf("[%s] %s\n", ok ? "PASS" : "FAIL", what);
  return ok;
}

// Fast self-checks over the numeric kernels; mirrors a slice of the test
// suite for field use.
int cmd_validate() {
  bool all = true;

  {
    // two-universe worked fixture
    MultiUniverse mu;
    mu.belief_floor = 0.0;
    Universe u1{0, UniverseTag::perceived, 2, 1, {0.1, 0.9, 0.8, 0.2}};
    Universe u2{1, UniverseTag::perceived, 2, 1, {0.9, 0.1, 0.4, 0.6}};
    u1.refresh_cache();
    u2.refresh_cache();
    mu.add(u1, 0.5);
    mu.add(u2, 0.5);
    mu.normalize();
    const auto grid = make_price_grid(1.0, 2.0, 2, 1);
    const auto ir = finite_ir(mu, grid);
    const bool ok = std::abs(ir.r_star - 1.05) < 1e-12 && std::abs(ir.delta[0] - 0.55) < 1e-12 &&
                    std::abs(ir.delta[1] - 0.25) < 1e-12 && std::abs(ir.gain[0] - 0.36806412) < 1e-7 &&
                    std::abs(ir.gain[1] - 0.08630462) < 1e-7 &&
                    select_deterministic(ir).arm == 1;
    all &= check(ok, "finite information-ratio worked fixture");
  }

  {
    bool ok = std::abs(binomial_pvalue(5, 10, 0.5) - 1.0) < 1e-12 &&
              std::abs(binomial_pvalue(10, 10, 0.5) - 2.0 / 1024.0) < 1e-12 &&
              std::abs(binomial_pvalue(0, 10, 0.0) - 1.0) < 1e-12;
    all &= check(ok, "exact binomial test fixtures");
  }

  {
    const auto bounds = confidence_bounds(0.0, 1005, 5, 1000, 0.05);
    const bool ok = bounds && std::abs(bounds->radius - 0.13026) < 1e-4;
    all &= check(ok, "confidence-sequence radius");
  }

  {
    // data-processing inequality on random fixtures
    auto rng = make_stream(7, "validate-dpi");
    bool ok = true;
    for (int rep = 0; rep < 100 && ok; ++rep) {
      MultiUniverse mu;
      mu.belief_floor = 0.0;
      const int l = 2 + static_cast<int>(rng() % 3);
      const int k = 2 + static_cast<int>(rng() % 3);
      const int n = 1 + static_cast<int>(rng() % 3);
      std::uniform_real_distribution<double> unif(0.1, 1.0);
      for (int i = 0; i < l; ++i) {
        Universe u;
        u.arms = k;
        u.max_demand = n;
        u.q.resize(static_cast<std::size_t>(k) * (n + 1));
        for (auto& c : u.q) c = unif(rng);
        u.smooth(1e-6);
        mu.add(std::move(u), unif(rng));
      }
      mu.normalize();
      const auto grid = make_price_grid(0.5, 2.0, k, n);
      const auto ir = finite_ir(mu, grid);
      const auto theta_gain = info_gain_theta(mu, grid);
      for (int a = 0; a < k; ++a) {
        ok &= theta_gain[static_cast<std::size_t>(a)] >= ir.gain[static_cast<std::size_t>(a)] - 1e-12;
      }
    }
    all &= check(ok, "data-processing inequality I(theta;d) >= I(a*;d)");
  }

  {
    // posterior hygiene through a short simulated run
    const auto grid = make_price_grid(0.01, 1.0, 20, 10);
    AcidpConfig cfg;
    cfg.perceived = 2;
    cfg.init_reps = 1;
    AcidpPolicy policy(grid, cfg, 21);
    auto env = build_case_environment(2, 21, 2000, {}, grid.batch_size);
    bool ok = true;
    for (int t = 1; t <= 2000 && ok; ++t) {
      const int arm = policy.choose(t);
      const int d = env->sample_batch(t, grid.price(arm));
      policy.observe({t, arm, d});
      if (!policy.initializing()) {
        try {
          policy.multiverse().assert_valid(1e-9);
        } catch (const std::exception&) {
          ok = false;
        }
      }
    }
    all &= check(ok, "posterior hygiene over a 2000-round run");
  }

  return all ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"ACIDP non-stationary dynamic pricing engine"};
  app.require_subcommand(1);

  CommonFlags flags;

  std::string config_path;
  auto* run = app.add_subcommand("run", "run an experiment grid from a config file");
  run->add_option("config", config_path, "TOML config file")->required();
  add_common_flags(run, &flags);

  int case_id = 1;
  std::string policy_key = "acidp";
  std::string variant;
  auto* case_cmd = app.add_subcommand("case", "run one canned market-shift scenario");
  case_cmd->add_option("id", case_id, "case id, 1..6")->required()->check(CLI::Range(1, 6));
  case_cmd->add_option("--policy", policy_key, "policy key (acidp, eg, ucb, ucb-tuned, ucbpi, ts)");
  case_cmd->add_option("--variant", variant, "acidp variant (standard, theta, window, noaudit)");
  case_cmd->add_option("--dump-ir", flags.dump_ir, "write per-round IR vectors as JSON lines");
  add_common_flags(case_cmd, &flags);

  std::string table_path = "data/criteo_demand.csv";
  std::string schedule;
  auto* criteo = app.add_subcommand("criteo", "run the demand-table scenario");
  criteo->add_option("--table", table_path, "demand-table CSV");
  criteo->add_option("--schedule", schedule, "product schedule, e.g. b:2000,c:4000,a:6000");
  criteo->add_option("--policy", policy_key, "policy key");
  criteo->add_option("--variant", variant, "acidp variant");
  criteo->add_option("--dump-ir", flags.dump_ir, "write per-round IR vectors as JSON lines");
  add_common_flags(criteo, &flags);

  auto* validate = app.add_subcommand("validate", "run quick numeric self-checks");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (run->parsed()) return cmd_run(config_path, flags);
    if (case_cmd->parsed()) return cmd_case(case_id, policy_key, variant, flags);
    if (criteo->parsed()) return cmd_criteo(table_path, policy_key, variant, schedule, flags);
    if (validate->parsed()) return cmd_validate();
  } catch (const acidp::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
