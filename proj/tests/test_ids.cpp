#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <random>

#include "acidp/ids.hpp"
#include "acidp/rng.hpp"
#include "acidp/stats.hpp"

using namespace acidp;

namespace {

// Independent oracle: enumerates the (a*, d) joint in long double and takes
// the entropy route H(a*) + H(d) - H(a*, d) for the mutual information.
struct OracleIR {
  std::vector<double> delta, gain, optimal_prob;
  double r_star = 0.0;
};

OracleIR brute_force_ir(const MultiUniverse& mu, const PriceGrid& grid) {
  const int l = mu.size();
  const int k_arms = grid.arms();
  const int n = mu.max_demand();

  std::vector<int> best(static_cast<std::size_t>(l), 0);
  for (int i = 0; i < l; ++i) {
    long double best_profit = -1.0L;
    for (int a = 0; a < k_arms; ++a) {
      long double profit = 0.0L;
      for (int d = 0; d <= n; ++d) {
        profit += static_cast<long double>(mu.universes[static_cast<std::size_t>(i)].row(a)[d]) *
                  grid.price(a) * d;
      }
      if (profit > best_profit) {
        best_profit = profit;
        best[static_cast<std::size_t>(i)] = a;
      }
    }
  }

  OracleIR oracle;
  oracle.optimal_prob.assign(static_cast<std::size_t>(k_arms), 0.0);
  long double r_star = 0.0L;
  for (int i = 0; i < l; ++i) {
    oracle.optimal_prob[static_cast<std::size_t>(best[static_cast<std::size_t>(i)])] +=
        mu.belief[static_cast<std::size_t>(i)];
    long double profit = 0.0L;
    for (int d = 0; d <= n; ++d) {
      profit += static_cast<long double>(
                    mu.universes[static_cast<std::size_t>(i)].row(best[static_cast<std::size_t>(i)])[d]) *
                grid.price(best[static_cast<std::size_t>(i)]) * d;
    }
    r_star += mu.belief[static_cast<std::size_t>(i)] * profit;
  }
  oracle.r_star = static_cast<double>(r_star);

  auto entropy = [](const std::vector<long double>& p) {
    long double h = 0.0L;
    for (long double v : p) {
      if (v > 0.0L) h -= v * std::log(static_cast<double>(v));
    }
    return h;
  };

  for (int a = 0; a < k_arms; ++a) {
    // joint over (a*, d)
    std::vector<long double> joint(static_cast<std::size_t>(k_arms) * (n + 1), 0.0L);
    for (int i = 0; i < l; ++i) {
      for (int d = 0; d <= n; ++d) {
        joint[static_cast<std::size_t>(best[static_cast<std::size_t>(i)]) * (n + 1) + d] +=
            static_cast<long double>(mu.belief[static_cast<std::size_t>(i)]) *
            mu.universes[static_cast<std::size_t>(i)].row(a)[d];
      }
    }
    std::vector<long double> marg_astar(static_cast<std::size_t>(k_arms), 0.0L);
    std::vector<long double> marg_d(static_cast<std::size_t>(n) + 1, 0.0L);
    for (int s = 0; s < k_arms; ++s) {
      for (int d = 0; d <= n; ++d) {
        marg_astar[static_cast<std::size_t>(s)] += joint[static_cast<std::size_t>(s) * (n + 1) + d];
        marg_d[static_cast<std::size_t>(d)] += joint[static_cast<std::size_t>(s) * (n + 1) + d];
      }
    }
    const long double mi = entropy(marg_astar) + entropy(marg_d) - entropy(joint);
    oracle.gain.push_back(static_cast<double>(mi));

    long double mixture_profit = 0.0L;
    for (int i = 0; i < l; ++i) {
      for (int d = 0; d <= n; ++d) {
        mixture_profit += static_cast<long double>(mu.belief[static_cast<std::size_t>(i)]) *
                          mu.universes[static_cast<std::size_t>(i)].row(a)[d] * grid.price(a) * d;
      }
    }
    oracle.delta.push_back(static_cast<double>(r_star - mixture_profit));
  }
  return oracle;
}

MultiUniverse worked_fixture() {
  // two universes, two arms, N = 1, prices (1, 2)
  MultiUniverse mu;
  mu.belief_floor = 0.0;
  Universe u1{0, UniverseTag::perceived, 2, 1, {0.1, 0.9, 0.8, 0.2}};
  Universe u2{1, UniverseTag::perceived, 2, 1, {0.9, 0.1, 0.4, 0.6}};
  u1.refresh_cache();
  u2.refresh_cache();
  mu.add(std::move(u1), 0.5);
  mu.add(std::move(u2), 0.5);
  mu.normalize();
  return mu;
}

MultiUniverse random_fixture(std::mt19937_64& rng, int max_l = 4, int max_k = 4, int max_n = 3) {
  std::uniform_real_distribution<double> unif(0.05, 1.0);
  const int l = 1 + static_cast<int>(rng() % max_l);
  const int k = 2 + static_cast<int>(rng() % (max_k - 1));
  const int n = 1 + static_cast<int>(rng() % max_n);
  MultiUniverse mu;
  mu.belief_floor = 0.0;
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
  return mu;
}

PriceGrid fixture_grid(const MultiUniverse& mu) {
  return make_price_grid(0.5, 0.5 + 0.5 * mu.arms(), mu.arms(), std::max(1, mu.max_demand()));
}

}  // namespace

TEST_CASE("worked two-universe fixture") {
  const auto mu = worked_fixture();
  const auto grid = make_price_grid(1.0, 2.0, 2, 1);
  const auto ir = finite_ir(mu, grid);

  CHECK(ir.r_star == Catch::Approx(1.05).margin(1e-12));
  CHECK(ir.delta[0] == Catch::Approx(0.55).margin(1e-12));
  CHECK(ir.delta[1] == Catch::Approx(0.25).margin(1e-12));
  CHECK(ir.gain[0] == Catch::Approx(0.368064).margin(5e-7));
  CHECK(ir.gain[1] == Catch::Approx(0.086305).margin(5e-7));
  CHECK(ir.optimal_prob[0] == Catch::Approx(0.5));
  CHECK(ir.optimal_prob[1] == Catch::Approx(0.5));

  // ratio arithmetic: 0.0625/0.0863 < 0.3025/0.3681
  const auto sel = select_deterministic(ir);
  CHECK(sel.arm == 1);

  // relabeling symmetry: swap universe labels and arm order (prices travel
  // with their arms, so the mirrored grid lists them high-to-low)
  MultiUniverse swapped;
  swapped.belief_floor = 0.0;
  Universe u1{0, UniverseTag::perceived, 2, 1, {0.4, 0.6, 0.9, 0.1}};
  Universe u2{1, UniverseTag::perceived, 2, 1, {0.8, 0.2, 0.1, 0.9}};
  u1.refresh_cache();
  u2.refresh_cache();
  swapped.add(std::move(u1), 0.5);
  swapped.add(std::move(u2), 0.5);
  swapped.normalize();
  PriceGrid rev;
  rev.prices = {2.0, 1.0};
  rev.batch_size = 1;
  const auto ir_swapped = finite_ir(swapped, rev);
  CHECK(ir_swapped.delta[0] == Catch::Approx(ir.delta[1]).margin(1e-12));
  CHECK(ir_swapped.delta[1] == Catch::Approx(ir.delta[0]).margin(1e-12));
  CHECK(ir_swapped.gain[0] == Catch::Approx(ir.gain[1]).margin(1e-12));
  CHECK(ir_swapped.gain[1] == Catch::Approx(ir.gain[0]).margin(1e-12));
}

TEST_CASE("optimal partition") {
  const auto grid = make_price_grid(1.0, 2.0, 2, 1);
  SECTION("dominant high arm") {
    MultiUniverse mu;
    mu.belief_floor = 0.0;
    Universe u{0, UniverseTag::perceived, 2, 1, {0.9, 0.1, 0.05, 0.95}};
    u.refresh_cache();
    mu.add(std::move(u), 1.0);
    mu.normalize();
    CHECK(optimal_partition(mu, grid).best_arm[0] == 1);
  }
  SECTION("hand-computed two-universe profits") {
    const auto mu = worked_fixture();
    const auto part = optimal_partition(mu, grid);
    CHECK(part.best_arm[0] == 0);  // profits (0.9, 0.4)
    CHECK(part.best_arm[1] == 1);  // profits (0.1, 1.2)
  }
  SECTION("ties break to the lower arm") {
    MultiUniverse mu;
    mu.belief_floor = 0.0;
    // profit 1 * 0.5 = 2 * 0.25 at both arms
    Universe u{0, UniverseTag::perceived, 2, 1, {0.5, 0.5, 0.75, 0.25}};
    u.refresh_cache();
    mu.add(std::move(u), 1.0);
    mu.normalize();
    CHECK(optimal_partition(mu, grid).best_arm[0] == 0);
  }
}

TEST_CASE("finite_ir matches the brute-force oracle on random fixtures") {
  auto rng = make_stream(2024, "ids-oracle");
  for (int rep = 0; rep < 1000; ++rep) {
    const auto mu = random_fixture(rng);
    const auto grid = fixture_grid(mu);
    const auto ir = finite_ir(mu, grid);
    const auto oracle = brute_force_ir(mu, grid);
    REQUIRE(std::abs(ir.r_star - oracle.r_star) < 1e-12);
    for (int a = 0; a < grid.arms(); ++a) {
      REQUIRE(std::abs(ir.delta[static_cast<std::size_t>(a)] -
                       oracle.delta[static_cast<std::size_t>(a)]) < 1e-12);
      REQUIRE(std::abs(ir.gain[static_cast<std::size_t>(a)] -
                       oracle.gain[static_cast<std::size_t>(a)]) < 1e-12);
      REQUIRE(std::abs(ir.optimal_prob[static_cast<std::size_t>(a)] -
                       oracle.optimal_prob[static_cast<std::size_t>(a)]) < 1e-12);
    }
  }
}

TEST_CASE("finite_ir invariants on random fixtures") {
  auto rng = make_stream(77, "ids-invariants");
  for (int rep = 0; rep < 300; ++rep) {
    const auto mu = random_fixture(rng);
    const auto grid = fixture_grid(mu);
    const auto ir = finite_ir(mu, grid);
    double prob_sum = 0.0;
    for (int a = 0; a < grid.arms(); ++a) {
      CHECK(ir.gain[static_cast<std::size_t>(a)] >= -1e-12);
      CHECK(ir.delta[static_cast<std::size_t>(a)] >= -1e-9);
      prob_sum += ir.optimal_prob[static_cast<std::size_t>(a)];
    }
    CHECK(std::abs(prob_sum - 1.0) <= 1e-9);

    // data-processing inequality
    const auto theta_gain = info_gain_theta(mu, grid);
    for (int a = 0; a < grid.arms(); ++a) {
      CHECK(theta_gain[static_cast<std::size_t>(a)] >=
            ir.gain[static_cast<std::size_t>(a)] - 1e-12);
    }
  }
}

TEST_CASE("info_gain_theta degenerate cases") {
  const auto grid = make_price_grid(1.0, 2.0, 2, 1);
  SECTION("single universe carries no information") {
    MultiUniverse mu;
    mu.belief_floor = 0.0;
    Universe u{0, UniverseTag::perceived, 2, 1, {0.3, 0.7, 0.6, 0.4}};
    u.refresh_cache();
    mu.add(std::move(u), 1.0);
    mu.normalize();
    for (double g : info_gain_theta(mu, grid)) CHECK(g == Catch::Approx(0.0).margin(1e-15));
    for (double g : finite_ir(mu, grid).gain) CHECK(g == Catch::Approx(0.0).margin(1e-15));
  }
  SECTION("identical rows at one arm are uninformative there") {
    MultiUniverse mu;
    mu.belief_floor = 0.0;
    Universe u1{0, UniverseTag::perceived, 2, 1, {0.3, 0.7, 0.6, 0.4}};
    Universe u2{1, UniverseTag::perceived, 2, 1, {0.3, 0.7, 0.1, 0.9}};
    u1.refresh_cache();
    u2.refresh_cache();
    mu.add(std::move(u1), 0.5);
    mu.add(std::move(u2), 0.5);
    mu.normalize();
    const auto gain = info_gain_theta(mu, grid);
    CHECK(gain[0] == Catch::Approx(0.0).margin(1e-12));
    CHECK(gain[1] > 0.01);
  }
}

TEST_CASE("deterministic selection rules") {
  SECTION("L=1 selects the known-optimal arm") {
    IRVectors ir;
    ir.delta = {0.4, 0.0, 0.2};
    ir.gain = {0.0, 0.0, 0.0};
    const auto sel = select_deterministic(ir);
    CHECK(sel.arm == 1);
    CHECK(sel.score == 0.0);
    CHECK_FALSE(sel.fallback);
  }
  SECTION("equal regret prefers more information") {
    IRVectors ir;
    ir.delta = {0.5, 0.5};
    ir.gain = {0.1, 0.2};
    CHECK(select_deterministic(ir).arm == 1);
  }
  SECTION("all-infinite scores fall back to argmin delta") {
    IRVectors ir;
    ir.delta = {0.5, 0.3, 0.4};
    ir.gain = {0.0, 0.0, 0.0};
    const auto sel = select_deterministic(ir);
    CHECK(sel.fallback);
    CHECK(sel.arm == 1);
  }
  SECTION("scale invariance: scaling prices scales delta, leaves gain") {
    auto rng = make_stream(5, "scale");
    for (int rep = 0; rep < 100; ++rep) {
      const auto mu = random_fixture(rng);
      const auto grid = fixture_grid(mu);
      PriceGrid scaled = grid;
      for (auto& p : scaled.prices) p *= 3.7;
      const auto ir = finite_ir(mu, grid);
      const auto ir_scaled = finite_ir(mu, scaled);
      for (int a = 0; a < grid.arms(); ++a) {
        CHECK(ir_scaled.delta[static_cast<std::size_t>(a)] ==
              Catch::Approx(3.7 * ir.delta[static_cast<std::size_t>(a)]).margin(1e-9));
        CHECK(ir_scaled.gain[static_cast<std::size_t>(a)] ==
              Catch::Approx(ir.gain[static_cast<std::size_t>(a)]).margin(1e-12));
      }
      CHECK(select_deterministic(ir_scaled).arm == select_deterministic(ir).arm);
    }
  }
}

TEST_CASE("randomized selection") {
  SECTION("support size is at most two and beats the deterministic ratio") {
    auto rng = make_stream(6, "rand-sel");
    for (int rep = 0; rep < 200; ++rep) {
      const auto mu = random_fixture(rng);
      const auto grid = fixture_grid(mu);
      const auto ir = finite_ir(mu, grid);
      const auto mix = optimize_randomized(ir);
      const auto det = select_deterministic(ir);
      if (det.fallback) continue;
      CHECK(mix.ratio <= det.score + 1e-9);

      // dense grid search over all pairs as an independent check
      double grid_best = std::numeric_limits<double>::infinity();
      for (int i = 0; i < grid.arms(); ++i) {
        for (int j = 0; j < grid.arms(); ++j) {
          for (int step = 0; step <= 400; ++step) {
            const double w = step / 400.0;
            const double d = w * std::max(ir.delta[static_cast<std::size_t>(i)], 0.0) +
                             (1 - w) * std::max(ir.delta[static_cast<std::size_t>(j)], 0.0);
            const double g = w * std::max(ir.gain[static_cast<std::size_t>(i)], 0.0) +
                             (1 - w) * std::max(ir.gain[static_cast<std::size_t>(j)], 0.0);
            double r;
            if (g <= 1e-12) {
              r = d <= 1e-9 ? 0.0 : std::numeric_limits<double>::infinity();
            } else {
              r = d * d / g;
            }
            grid_best = std::min(grid_best, r);
          }
        }
      }
      CHECK(mix.ratio <= grid_best + 1e-9);
    }
  }
  SECTION("a zero-regret zero-gain arm is a point mass") {
    IRVectors ir;
    ir.delta = {0.4, 0.0};
    ir.gain = {0.3, 0.0};
    auto rng = make_stream(7, "point");
    for (int i = 0; i < 20; ++i) CHECK(select_randomized(ir, rng) == 1);
  }
}
