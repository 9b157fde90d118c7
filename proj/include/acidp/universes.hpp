#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <iomanip>
#include <istream>
#include <ostream>
#include <random>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "acidp/core.hpp"
#include "acidp/stats.hpp"

namespace acidp {

enum class UniverseTag { perceived, vintage, counterfactual, window };

inline const char* to_string(UniverseTag tag) {
  switch (tag) {
    case UniverseTag::perceived: return "perceived";
    case UniverseTag::vintage: return "vintage";
    case UniverseTag::counterfactual: return "counterfactual";
    case UniverseTag::window: return "window";
  }
  return "perceived";
}

inline UniverseTag universe_tag_from_string(std::string_view s) {
  if (s == "perceived") return UniverseTag::perceived;
  if (s == "vintage") return UniverseTag::vintage;
  if (s == "counterfactual") return UniverseTag::counterfactual;
  if (s == "window") return UniverseTag::window;
  throw std::runtime_error("unknown universe tag: " + std::string(s));
}

// One hypothesized market environment: a full likelihood table
// q[k][d] = P(demand = d | arm k) with strictly positive, normalized rows.
struct Universe {
  int id = 0;
  UniverseTag tag = UniverseTag::perceived;
  int arms = 0;
  int max_demand = 0;  // N; rows have N + 1 cells
  std::vector<double> q;
  std::vector<double> expected_demand;  // per arm, cached from q

  std::span<double> row(int k) {
    return {q.data() + static_cast<std::size_t>(k) * (max_demand + 1),
            static_cast<std::size_t>(max_demand) + 1};
  }
  std::span<const double> row(int k) const {
    return {q.data() + static_cast<std::size_t>(k) * (max_demand + 1),
            static_cast<std::size_t>(max_demand) + 1};
  }

  void refresh_cache() {
    expected_demand.assign(static_cast<std::size_t>(arms), 0.0);
    for (int k = 0; k < arms; ++k) {
      double e = 0.0;
      const auto r = row(k);
      for (int d = 0; d <= max_demand; ++d) e += r[d] * d;
      expected_demand[static_cast<std::size_t>(k)] = e;
    }
  }

  // Replaces zero cells with eps and renormalizes every row.
  void smooth(double eps) {
    for (int k = 0; k < arms; ++k) {
      auto r = row(k);
      double sum = 0.0;
      for (auto& c : r) {
        if (c < eps) c = eps;
        sum += c;
      }
      for (auto& c : r) c /= sum;
    }
    refresh_cache();
  }

  void validate(double tol = 1e-9) const {
    for (int k = 0; k < arms; ++k) {
      double sum = 0.0;
      for (double c : row(k)) {
        if (!(c > 0.0)) throw std::runtime_error("universe row has non-positive cell");
        sum += c;
      }
      if (std::abs(sum - 1.0) > tol) throw std::runtime_error("universe row not normalized");
    }
  }
};

// Empirical pmf rows from per-arm demand samples (Initiator's estimator).
inline Universe empirical_likelihood(const std::vector<std::vector<int>>& samples_per_arm,
                                     int max_demand, double eps,
                                     UniverseTag tag = UniverseTag::perceived, int id = 0) {
  Universe u;
  u.id = id;
  u.tag = tag;
  u.arms = static_cast<int>(samples_per_arm.size());
  u.max_demand = max_demand;
  u.q.assign(static_cast<std::size_t>(u.arms) * (max_demand + 1), 0.0);
  for (int k = 0; k < u.arms; ++k) {
    const auto& samples = samples_per_arm[static_cast<std::size_t>(k)];
    if (samples.empty()) {
      throw std::runtime_error("empirical_likelihood: arm " + std::to_string(k + 1) +
                               " has no samples");
    }
    auto r = u.row(k);
    for (int d : samples) {
      if (d < 0 || d > max_demand) throw std::runtime_error("demand sample out of range");
      r[d] += 1.0 / static_cast<double>(samples.size());
    }
  }
  u.smooth(eps);
  return u;
}

// ---------------------------------------------------------------------------
// Multi-Universe
// ---------------------------------------------------------------------------

// The universe collection with its posterior belief vector. The belief floor
// is applied as a uniform mixture of total mass `belief_floor`, which keeps
// sum(p) = 1 exactly while guaranteeing p >= belief_floor / L, so ruled-out
// universes stay recyclable.
struct MultiUniverse {
  std::vector<Universe> universes;
  std::vector<double> belief;
  double belief_floor = 1e-4;
  int next_id = 0;

  int size() const { return static_cast<int>(universes.size()); }
  int max_demand() const { return universes.empty() ? 0 : universes.front().max_demand; }
  int arms() const { return universes.empty() ? 0 : universes.front().arms; }

  void add(Universe u, double weight) {
    u.id = next_id++;
    if (u.expected_demand.empty()) u.refresh_cache();
    universes.push_back(std::move(u));
    belief.push_back(weight);
  }

  void normalize() {
    double sum = 0.0;
    for (double p : belief) sum += p;
    if (!(sum > 0.0)) throw std::runtime_error("belief vector sums to zero");
    for (double& p : belief) p /= sum;
    if (belief_floor > 0.0 && !belief.empty()) {
      const double uniform = 1.0 / static_cast<double>(belief.size());
      for (double& p : belief) p = (1.0 - belief_floor) * p + belief_floor * uniform;
    }
  }

  double max_belief() const {
    return belief.empty() ? 0.0 : *std::max_element(belief.begin(), belief.end());
  }

  int max_belief_index() const {
    return static_cast<int>(std::max_element(belief.begin(), belief.end()) - belief.begin());
  }

  // p'(theta) proportional to p(theta) * q_theta[k][d].
  void bayes_update(int arm, int demand) {
    for (std::size_t i = 0; i < universes.size(); ++i) {
      belief[i] *= universes[i].row(arm)[demand];
    }
    normalize();
  }

  // Mixture expected demand fraction per arm (Generator line 1).
  std::vector<double> predictive_demand_fraction() const {
    std::vector<double> out(static_cast<std::size_t>(arms()), 0.0);
    for (std::size_t i = 0; i < universes.size(); ++i) {
      for (int k = 0; k < arms(); ++k) {
        out[static_cast<std::size_t>(k)] +=
            belief[i] * universes[i].expected_demand[static_cast<std::size_t>(k)];
      }
    }
    for (double& d : out) d /= static_cast<double>(max_demand());
    return out;
  }

  double predictive_mean_count(int arm) const {
    double e = 0.0;
    for (std::size_t i = 0; i < universes.size(); ++i) {
      e += belief[i] * universes[i].expected_demand[static_cast<std::size_t>(arm)];
    }
    return e;
  }

  void assert_valid(double tol = 1e-9) const {
    double sum = 0.0;
    for (double p : belief) {
      if (!(p >= 0.0)) throw std::runtime_error("negative belief");
      sum += p;
    }
    if (std::abs(sum - 1.0) > tol) throw std::runtime_error("belief not normalized");
    for (const auto& u : universes) u.validate(tol);
  }
};

inline std::vector<double> posterior_predictive_demand(const MultiUniverse& mu) {
  return mu.predictive_demand_fraction();
}

// ---------------------------------------------------------------------------
// Initiator (perceived universes)
// ---------------------------------------------------------------------------

// Builds L_P perceived universes by sampling every arm n times each,
// arms-inner / repetitions-outer so shifts cannot skew one universe's rows
// against each other. Consumes L_P * K * n pricing rounds through `sampler`.
inline std::pair<std::vector<Universe>, std::vector<Observation>> initiator(
    int n_universes, int reps, int arms, int max_demand,
    const std::function<int(int arm)>& sampler, double eps = 1e-6) {
  if (n_universes < 1 || reps < 1) throw ConfigError("initiator: L_P and n must be >= 1");
  std::vector<Universe> universes;
  std::vector<Observation> log;
  int t = 0;
  for (int i = 0; i < n_universes; ++i) {
    std::vector<std::vector<int>> samples(static_cast<std::size_t>(arms));
    for (int rep = 0; rep < reps; ++rep) {
      for (int k = 0; k < arms; ++k) {
        const int d = sampler(k);
        samples[static_cast<std::size_t>(k)].push_back(d);
        log.push_back({++t, k, d});
      }
    }
    universes.push_back(empirical_likelihood(samples, max_demand, eps, UniverseTag::perceived, i));
  }
  return {std::move(universes), std::move(log)};
}

// ---------------------------------------------------------------------------
// Generator (counterfactual universes)
// ---------------------------------------------------------------------------

struct ValuationPmf {
  std::vector<double> support;
  std::vector<double> mass;
};

// Discrete valuation distribution from a demand curve: interior mass
// D(a_k) - D(a_k+1) sits on the price midpoints, the tails go just outside
// the grid so the pmf sums to one. D is isotonic-clamped first because
// posterior-predictive curves can be locally non-monotone.
inline ValuationPmf valuation_from_demand(std::span<const double> demand, const PriceGrid& grid) {
  const int k_arms = grid.arms();
  if (static_cast<int>(demand.size()) != k_arms) {
    throw std::invalid_argument("valuation_from_demand: demand size != K");
  }
  std::vector<double> d(demand.begin(), demand.end());
  for (double& v : d) v = std::clamp(v, 0.0, 1.0);
  d = isotonic_nonincreasing(d);

  ValuationPmf pmf;
  pmf.support.reserve(static_cast<std::size_t>(k_arms) + 1);
  pmf.mass.reserve(static_cast<std::size_t>(k_arms) + 1);
  pmf.support.push_back(grid.min_price() - 0.5 * grid.spacing_below());
  pmf.mass.push_back(1.0 - d.front());
  for (int k = 0; k + 1 < k_arms; ++k) {
    pmf.support.push_back(0.5 * (grid.price(k) + grid.price(k + 1)));
    pmf.mass.push_back(d[static_cast<std::size_t>(k)] - d[static_cast<std::size_t>(k) + 1]);
  }
  pmf.support.push_back(grid.max_price() + 0.5 * grid.spacing_above());
  pmf.mass.push_back(d.back());
  return pmf;
}

struct GeneratorOptions {
  std::vector<double> shifts;   // c values; empty -> default grid below
  double noise_std = -1.0;      // < 0 -> half the grid spacing
  bool paper_literal_noise = false;  // scale = largest price midpoint
  bool exact = true;            // analytic Binomial rows; false -> Monte Carlo
  int n_mc = 1000;
  // Monte Carlo sample sizes cycled across shifts; empty -> n_mc for all.
  // Mixing scales yields counterfactuals at several perturbation widths.
  std::vector<int> n_mc_cycle;
  double eps = 1e-6;
};

inline std::vector<double> default_shift_grid(const PriceGrid& grid, int count = 9,
                                              double span_fraction = 0.3) {
  const double span = span_fraction * grid.max_price();
  std::vector<double> shifts(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    shifts[static_cast<std::size_t>(i)] =
        -span + 2.0 * span * i / static_cast<double>(count - 1);
  }
  return shifts;
}

// Counterfactual universes: estimate the valuation distribution from the
// posterior-predictive demand curve, shift it by each c, smear with Normal
// noise, and rebuild Binomial-style likelihood rows. A caller may anchor the
// base curve to observed data by passing base_demand (per-arm fractions).
inline std::vector<Universe> generator(const MultiUniverse& mu, const GeneratorOptions& opt,
                                       const PriceGrid& grid, std::mt19937_64* rng = nullptr,
                                       const std::vector<double>* base_demand = nullptr) {
  if (opt.shifts.empty()) return {};
  const int n = mu.max_demand();
  const auto demand = base_demand != nullptr ? *base_demand : mu.predictive_demand_fraction();
  const auto pmf = valuation_from_demand(demand, grid);

  double noise = opt.noise_std;
  if (opt.paper_literal_noise) {
    noise = grid.max_price() + 0.5 * grid.spacing_above();  // sup of the midpoints
  } else if (noise < 0.0) {
    // an eighth of the spacing: wide enough to smooth the midpoint
    // discretization, narrow enough not to dis-rank optima that sit next
    // to demand cliffs
    noise = 0.125 * grid.spacing_below();
  }

  std::vector<Universe> out;
  out.reserve(opt.shifts.size());
  for (std::size_t shift_idx = 0; shift_idx < opt.shifts.size(); ++shift_idx) {
    const double c = opt.shifts[shift_idx];
    const int n_mc = opt.n_mc_cycle.empty()
                         ? opt.n_mc
                         : opt.n_mc_cycle[shift_idx % opt.n_mc_cycle.size()];
    Universe u;
    u.tag = UniverseTag::counterfactual;
    u.arms = grid.arms();
    u.max_demand = n;
    u.q.assign(static_cast<std::size_t>(u.arms) * (n + 1), 0.0);

    std::vector<double> buy(static_cast<std::size_t>(u.arms), 0.0);
    if (opt.exact) {
      for (int k = 0; k < u.arms; ++k) {
        double p = 0.0;
        for (std::size_t j = 0; j < pmf.support.size(); ++j) {
          const double x = pmf.support[j] + c - grid.price(k);
          p += pmf.mass[j] * (noise > 0.0 ? normal_cdf(x / noise) : (x >= 0.0 ? 1.0 : 0.0));
        }
        buy[static_cast<std::size_t>(k)] = std::clamp(p, 0.0, 1.0);
      }
    } else {
      if (rng == nullptr) throw std::invalid_argument("generator: Monte Carlo mode needs an rng");
      if (n_mc < 1) throw ConfigError("generator: n_mc must be >= 1");
      std::discrete_distribution<int> pick(pmf.mass.begin(), pmf.mass.end());
      std::normal_distribution<double> xi(0.0, noise > 0.0 ? noise : 1e-12);
      std::vector<int> above(static_cast<std::size_t>(u.arms), 0);
      for (int s = 0; s < n_mc; ++s) {
        const double v = pmf.support[static_cast<std::size_t>(pick(*rng))] + c + xi(*rng);
        for (int k = 0; k < u.arms; ++k) {
          if (v >= grid.price(k)) ++above[static_cast<std::size_t>(k)];
        }
      }
      for (int k = 0; k < u.arms; ++k) {
        buy[static_cast<std::size_t>(k)] =
            static_cast<double>(above[static_cast<std::size_t>(k)]) / n_mc;
      }
    }

    for (int k = 0; k < u.arms; ++k) {
      const auto row = binomial_pmf_row(n, buy[static_cast<std::size_t>(k)]);
      std::copy(row.begin(), row.end(), u.row(k).begin());
    }
    u.smooth(opt.eps);
    out.push_back(std::move(u));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Injection
// ---------------------------------------------------------------------------

enum class InjectMode { yellow, red };

// Yellow: new universes enter at the current maximum belief, competitive but
// not dominant (the literal rule enters them at weight 1, the whole existing
// mass). Red: new universes enter at weight L and take over; anything softer
// leaves stale universes coasting on the arms they happen to fit.
inline void inject_universes(MultiUniverse& mu, std::vector<Universe> fresh, InjectMode mode,
                             bool paper_literal = false) {
  if (fresh.empty()) return;
  const int l_after = mu.size() + static_cast<int>(fresh.size());
  double weight = 1.0;
  if (mode == InjectMode::yellow) {
    weight = paper_literal ? 1.0 : std::max(mu.max_belief(), 1e-12);
  } else {
    weight = static_cast<double>(l_after);
  }
  for (auto& u : fresh) mu.add(std::move(u), weight);
  mu.normalize();
}

// ---------------------------------------------------------------------------
// Universe files (vintage storage)
// ---------------------------------------------------------------------------

inline constexpr const char* kUniverseFileMagic = "acidp-universes v1";

inline void save_universes(const MultiUniverse& mu, std::ostream& os) {
  os << kUniverseFileMagic << '\n';
  os << "K " << mu.arms() << '\n';
  os << "N " << mu.max_demand() << '\n';
  os << "L " << mu.size() << '\n';
  os << std::setprecision(17);
  for (int i = 0; i < mu.size(); ++i) {
    const auto& u = mu.universes[static_cast<std::size_t>(i)];
    os << "universe " << u.id << ' ' << to_string(u.tag) << ' '
       << mu.belief[static_cast<std::size_t>(i)] << '\n';
    for (int k = 0; k < u.arms; ++k) {
      const auto row = u.row(k);
      for (std::size_t d = 0; d < row.size(); ++d) {
        os << (d ? " " : "") << row[d];
      }
      os << '\n';
    }
  }
}

inline void save_universes(const MultiUniverse& mu, const std::string& path) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write universe file: " + path);
  save_universes(mu, os);
}

struct UniverseFile {
  int arms = 0;
  int max_demand = 0;
  std::vector<Universe> universes;
  std::vector<double> beliefs;
};

inline UniverseFile load_universe_file(std::istream& is) {
  UniverseFile file;
  std::string line;
  int line_no = 0;
  auto next_line = [&](const char* what) {
    if (!std::getline(is, line)) {
      throw std::runtime_error(std::string("universe file: unexpected end, expected ") + what);
    }
    ++line_no;
  };
  next_line("header");
  if (line != kUniverseFileMagic) throw std::runtime_error("universe file: bad header");
  int l_count = 0;
  auto read_int_field = [&](const char* name) {
    next_line(name);
    std::stringstream ss(line);
    std::string key;
    int value = 0;
    if (!(ss >> key >> value) || key != name) {
      throw std::runtime_error(std::string("universe file: expected '") + name + "' at line " +
                               std::to_string(line_no));
    }
    return value;
  };
  file.arms = read_int_field("K");
  file.max_demand = read_int_field("N");
  l_count = read_int_field("L");
  for (int i = 0; i < l_count; ++i) {
    next_line("universe record");
    std::stringstream header(line);
    std::string key, tag;
    int id = 0;
    double belief = 0.0;
    if (!(header >> key >> id >> tag >> belief) || key != "universe") {
      throw std::runtime_error("universe file: bad universe record at line " +
                               std::to_string(line_no));
    }
    Universe u;
    u.id = id;
    u.tag = universe_tag_from_string(tag);
    u.arms = file.arms;
    u.max_demand = file.max_demand;
    u.q.reserve(static_cast<std::size_t>(file.arms) * (file.max_demand + 1));
    for (int k = 0; k < file.arms; ++k) {
      next_line("likelihood row");
      std::stringstream row(line);
      double sum = 0.0;
      for (int d = 0; d <= file.max_demand; ++d) {
        double cell = 0.0;
        if (!(row >> cell)) {
          throw std::runtime_error("universe file: short row at line " + std::to_string(line_no) +
                                   ", column " + std::to_string(d + 1));
        }
        if (!(cell > 0.0)) {
          throw std::runtime_error("universe file: non-positive cell at line " +
                                   std::to_string(line_no) + ", column " + std::to_string(d + 1));
        }
        u.q.push_back(cell);
        sum += cell;
      }
      if (std::abs(sum - 1.0) > 1e-6) {
        throw std::runtime_error("universe file: row not normalized at line " +
                                 std::to_string(line_no));
      }
    }
    u.refresh_cache();
    file.universes.push_back(std::move(u));
    file.beliefs.push_back(belief);
  }
  return file;
}

inline UniverseFile load_universe_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("universe file not found: " + path);
  return load_universe_file(is);
}

// Loads stored universes as vintage hypotheses; stored beliefs become
// relative prior weights for whoever absorbs them.
inline std::pair<std::vector<Universe>, std::vector<double>> load_vintage(
    const std::string& path) {
  auto file = load_universe_file(path);
  for (auto& u : file.universes) u.tag = UniverseTag::vintage;
  return {std::move(file.universes), std::move(file.beliefs)};
}

}  // namespace acidp
