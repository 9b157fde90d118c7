#include <catch2/catch_amalgamated.hpp>

#include <random>
#include <sstream>

#include "acidp/rng.hpp"
#include "acidp/stats.hpp"
#include "acidp/universes.hpp"

using namespace acidp;

namespace {

Universe binomial_universe(const PriceGrid& grid, const std::vector<double>& demand_frac,
                           UniverseTag tag = UniverseTag::perceived) {
  Universe u;
  u.tag = tag;
  u.arms = grid.arms();
  u.max_demand = grid.batch_size;
  u.q.assign(static_cast<std::size_t>(u.arms) * (u.max_demand + 1), 0.0);
  for (int k = 0; k < u.arms; ++k) {
    const auto row = binomial_pmf_row(u.max_demand, demand_frac[static_cast<std::size_t>(k)]);
    std::copy(row.begin(), row.end(), u.row(k).begin());
  }
  u.smooth(1e-6);
  return u;
}

double total_variation(std::span<const double> a, std::span<const double> b) {
  double tv = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) tv += std::abs(a[i] - b[i]);
  return 0.5 * tv;
}

}  // namespace

TEST_CASE("empirical likelihood builds smoothed pmf rows") {
  SECTION("point mass from identical samples") {
    const auto u = empirical_likelihood({{3, 3}}, 10, 1e-6);
    const auto row = u.row(0);
    CHECK(row[3] == Catch::Approx(1.0).epsilon(1e-4));
    CHECK(row[0] == Catch::Approx(1e-6).epsilon(1e-3));
    double sum = 0.0;
    for (double c : row) sum += c;
    CHECK(sum == Catch::Approx(1.0).margin(1e-12));
  }
  SECTION("two-point empirical pmf") {
    const auto u = empirical_likelihood({{2, 4}}, 10, 1e-6);
    CHECK(u.row(0)[2] == Catch::Approx(0.5).epsilon(1e-4));
    CHECK(u.row(0)[4] == Catch::Approx(0.5).epsilon(1e-4));
  }
  SECTION("law of large numbers against the analytic pmf") {
    auto rng = make_stream(3, "emp");
    std::vector<int> samples;
    for (int i = 0; i < 1000; ++i) samples.push_back(binomial_inverse_draw(10, 0.3, rng));
    const auto u = empirical_likelihood({samples}, 10, 1e-6);
    const auto truth = binomial_pmf_row(10, 0.3);
    CHECK(total_variation(u.row(0), truth) < 0.05);
  }
  SECTION("empty arm is an error") {
    CHECK_THROWS(empirical_likelihood({{1}, {}}, 10, 1e-6));
  }
}

TEST_CASE("initiator consumes L*K*n rounds, arms-inner") {
  SECTION("round accounting") {
    int calls = 0;
    const auto [universes, log] = initiator(2, 1, 20, 10, [&](int) {
      ++calls;
      return 5;
    });
    CHECK(universes.size() == 2);
    CHECK(calls == 40);
    CHECK(log.size() == 40);
    // arms-inner ordering: the first K rounds sweep arms 0..K-1
    for (int i = 0; i < 20; ++i) CHECK(log[static_cast<std::size_t>(i)].arm == i);
  }
  SECTION("deterministic sampler gives point-mass rows") {
    const auto [universes, log] = initiator(1, 1, 4, 10, [](int) { return 5; });
    for (int k = 0; k < 4; ++k) {
      CHECK(universes[0].row(k)[5] == Catch::Approx(1.0).epsilon(1e-4));
    }
  }
  SECTION("many repetitions approach the true pmf") {
    // the empirical TV error shrinks roughly as 1/sqrt(n)
    auto rng = make_stream(91, "init");
    double tv_small = 0.0, tv_large = 0.0;
    {
      const auto [universes, log] = initiator(1, 50, 3, 10, [&](int arm) {
        return binomial_inverse_draw(10, 0.2 + 0.2 * arm, rng);
      });
      for (int k = 0; k < 3; ++k) {
        tv_small += total_variation(universes[0].row(k), binomial_pmf_row(10, 0.2 + 0.2 * k));
      }
    }
    {
      const auto [universes, log] = initiator(1, 800, 3, 10, [&](int arm) {
        return binomial_inverse_draw(10, 0.2 + 0.2 * arm, rng);
      });
      for (int k = 0; k < 3; ++k) {
        tv_large += total_variation(universes[0].row(k), binomial_pmf_row(10, 0.2 + 0.2 * k));
        CHECK(total_variation(universes[0].row(k), binomial_pmf_row(10, 0.2 + 0.2 * k)) < 0.1);
      }
    }
    CHECK(tv_large < tv_small);
  }
  SECTION("reject bad arguments") {
    CHECK_THROWS_AS(initiator(0, 1, 4, 10, [](int) { return 0; }), ConfigError);
  }
}

TEST_CASE("posterior predictive demand is the mixture mean over N") {
  const auto grid = make_price_grid(0.2, 0.8, 4, 10);
  SECTION("single binomial universe") {
    MultiUniverse mu;
    mu.belief_floor = 0.0;
    mu.add(binomial_universe(grid, {0.4, 0.4, 0.4, 0.4}), 1.0);
    mu.normalize();
    const auto d = posterior_predictive_demand(mu);
    for (double v : d) CHECK(v == Catch::Approx(0.4).epsilon(1e-4));
  }
  SECTION("two-universe mixture") {
    MultiUniverse mu;
    mu.belief_floor = 0.0;
    mu.add(binomial_universe(grid, {0.2, 0.2, 0.2, 0.2}), 0.5);
    mu.add(binomial_universe(grid, {0.6, 0.6, 0.6, 0.6}), 0.5);
    mu.normalize();
    CHECK(posterior_predictive_demand(mu)[0] == Catch::Approx(0.4).epsilon(1e-4));
  }
  SECTION("matches the brute-force double sum on a random fixture") {
    auto rng = make_stream(5, "ppd");
    std::uniform_real_distribution<double> unif(0.05, 0.95);
    MultiUniverse mu;
    mu.belief_floor = 0.0;
    for (int i = 0; i < 3; ++i) {
      Universe u;
      u.arms = grid.arms();
      u.max_demand = grid.batch_size;
      u.q.resize(static_cast<std::size_t>(u.arms) * (u.max_demand + 1));
      for (auto& c : u.q) c = unif(rng);
      u.smooth(1e-6);
      mu.add(std::move(u), unif(rng));
    }
    mu.normalize();
    const auto d = posterior_predictive_demand(mu);
    for (int k = 0; k < grid.arms(); ++k) {
      long double brute = 0.0;
      for (int i = 0; i < mu.size(); ++i) {
        for (int dd = 0; dd <= grid.batch_size; ++dd) {
          brute += static_cast<long double>(mu.belief[static_cast<std::size_t>(i)]) *
                   mu.universes[static_cast<std::size_t>(i)].row(k)[static_cast<std::size_t>(dd)] *
                   dd;
        }
      }
      brute /= grid.batch_size;
      CHECK(std::abs(d[static_cast<std::size_t>(k)] - static_cast<double>(brute)) < 1e-12);
    }
  }
}

TEST_CASE("valuation_from_demand places mass on midpoints") {
  SECTION("textbook example: D(0.5)=0.4, D(0.6)=0.3") {
    PriceGrid grid;
    grid.prices = {0.5, 0.6};
    grid.batch_size = 10;
    const std::vector<double> d{0.4, 0.3};
    const auto pmf = valuation_from_demand(d, grid);
    REQUIRE(pmf.support.size() == 3);
    CHECK(pmf.support[1] == Catch::Approx(0.55));
    CHECK(pmf.mass[1] == Catch::Approx(0.10));
    CHECK(pmf.mass[0] == Catch::Approx(0.6));   // below 0.5
    CHECK(pmf.mass[2] == Catch::Approx(0.3));   // above 0.6
  }
  SECTION("constant demand leaves interior midpoints empty") {
    PriceGrid grid;
    grid.prices = {0.2, 0.4, 0.6};
    grid.batch_size = 10;
    const auto pmf = valuation_from_demand(std::vector<double>{0.5, 0.5, 0.5}, grid);
    CHECK(pmf.mass[1] == Catch::Approx(0.0).margin(1e-12));
    CHECK(pmf.mass[2] == Catch::Approx(0.0).margin(1e-12));
  }
  SECTION("pairwise differences") {
    PriceGrid grid;
    grid.prices = {0.2, 0.4, 0.6};
    grid.batch_size = 10;
    const auto pmf = valuation_from_demand(std::vector<double>{1.0, 0.5, 0.0}, grid);
    CHECK(pmf.mass[1] == Catch::Approx(0.5));
    CHECK(pmf.support[1] == Catch::Approx(0.3));
    CHECK(pmf.mass[2] == Catch::Approx(0.5));
    CHECK(pmf.support[2] == Catch::Approx(0.5));
    double total = 0.0;
    for (double m : pmf.mass) total += m;
    CHECK(total == Catch::Approx(1.0).margin(1e-12));
  }
  SECTION("non-monotone input is isotonically clamped") {
    PriceGrid grid;
    grid.prices = {0.2, 0.4, 0.6};
    grid.batch_size = 10;
    const auto pmf = valuation_from_demand(std::vector<double>{0.3, 0.5, 0.1}, grid);
    for (double m : pmf.mass) CHECK(m >= -1e-12);
  }
}

TEST_CASE("generator") {
  const auto grid = make_price_grid(0.1, 1.0, 10, 10);
  SECTION("identity shift with zero noise reproduces the clamped curve") {
    std::vector<double> demand_frac;
    for (int k = 0; k < grid.arms(); ++k) demand_frac.push_back(1.0 - 0.09 * k);
    MultiUniverse mu;
    mu.belief_floor = 0.0;
    mu.add(binomial_universe(grid, demand_frac), 1.0);
    mu.normalize();
    GeneratorOptions opt;
    opt.shifts = {0.0};
    opt.noise_std = 0.0;
    opt.eps = 1e-12;  // isolate the transform from the smoothing floor
    const auto fresh = generator(mu, opt, grid);
    REQUIRE(fresh.size() == 1);
    const auto predicted = mu.predictive_demand_fraction();
    const auto clamped = isotonic_nonincreasing(predicted);
    for (int k = 0; k < grid.arms(); ++k) {
      const double got =
          fresh[0].expected_demand[static_cast<std::size_t>(k)] / grid.batch_size;
      CHECK(std::abs(got - clamped[static_cast<std::size_t>(k)]) < 1e-6);
    }
  }
  SECTION("positive shift moves the purchase threshold") {
    // point-mass valuation at 0.4: demand 1 below, 0 above
    std::vector<double> step;
    for (int k = 0; k < grid.arms(); ++k) step.push_back(grid.price(k) <= 0.4 ? 1.0 : 0.0);
    MultiUniverse mu;
    mu.belief_floor = 0.0;
    mu.add(binomial_universe(grid, step), 1.0);
    mu.normalize();
    GeneratorOptions opt;
    opt.shifts = {0.3};
    opt.noise_std = 0.0;
    const auto fresh = generator(mu, opt, grid);
    for (int k = 0; k < grid.arms(); ++k) {
      const double d = fresh[0].expected_demand[static_cast<std::size_t>(k)];
      if (grid.price(k) <= 0.7) {
        CHECK(d > 9.99);
      } else if (grid.price(k) > 0.76) {
        CHECK(d < 0.01);
      }
    }
  }
  SECTION("one universe per shift") {
    MultiUniverse mu;
    mu.belief_floor = 0.0;
    mu.add(binomial_universe(grid, std::vector<double>(10, 0.5)), 1.0);
    mu.normalize();
    GeneratorOptions opt;
    opt.shifts = default_shift_grid(grid);
    const auto fresh = generator(mu, opt, grid);
    CHECK(fresh.size() == 9);
    for (const auto& u : fresh) {
      CHECK(u.tag == UniverseTag::counterfactual);
      u.validate(1e-9);
    }
  }
  SECTION("monte carlo mode approaches exact mode") {
    std::vector<double> demand_frac;
    for (int k = 0; k < grid.arms(); ++k) demand_frac.push_back(1.0 - 0.09 * k);
    MultiUniverse mu;
    mu.belief_floor = 0.0;
    mu.add(binomial_universe(grid, demand_frac), 1.0);
    mu.normalize();
    GeneratorOptions exact_opt;
    exact_opt.shifts = {0.05};
    GeneratorOptions mc_opt = exact_opt;
    mc_opt.exact = false;
    mc_opt.n_mc = 40000;
    auto rng = make_stream(77, "gen-mc");
    const auto exact = generator(mu, exact_opt, grid);
    const auto mc = generator(mu, mc_opt, grid, &rng);
    for (int k = 0; k < grid.arms(); ++k) {
      CHECK(std::abs(exact[0].expected_demand[static_cast<std::size_t>(k)] -
                     mc[0].expected_demand[static_cast<std::size_t>(k)]) < 0.15);
    }
  }
  SECTION("empty shift list returns nothing") {
    MultiUniverse mu;
    mu.belief_floor = 0.0;
    mu.add(binomial_universe(grid, std::vector<double>(10, 0.5)), 1.0);
    mu.normalize();
    CHECK(generator(mu, GeneratorOptions{.shifts = {}}, grid).empty());
  }
}

TEST_CASE("bayes updates") {
  const auto grid = make_price_grid(0.2, 0.8, 4, 10);
  SECTION("single universe keeps belief one") {
    MultiUniverse mu;
    mu.add(binomial_universe(grid, {0.5, 0.5, 0.5, 0.5}), 1.0);
    mu.normalize();
    mu.bayes_update(1, 4);
    CHECK(mu.belief[0] == Catch::Approx(1.0));
  }
  SECTION("bayes arithmetic without floor") {
    MultiUniverse mu;
    mu.belief_floor = 0.0;
    Universe a = binomial_universe(grid, {0.5, 0.5, 0.5, 0.5});
    Universe b = binomial_universe(grid, {0.5, 0.5, 0.5, 0.5});
    a.row(2)[7] = 0.2;  // engineered likelihood at the observed cell
    b.row(2)[7] = 0.8;
    mu.add(a, 0.5);
    mu.add(b, 0.5);
    mu.normalize();
    // renormalize rows around the engineered cells so each row stays a pmf
    for (auto& u : mu.universes) u.smooth(1e-9);
    const double qa = mu.universes[0].row(2)[7];
    const double qb = mu.universes[1].row(2)[7];
    mu.bayes_update(2, 7);
    CHECK(mu.belief[0] == Catch::Approx(qa / (qa + qb)).epsilon(1e-9));
    CHECK(mu.belief[1] == Catch::Approx(qb / (qa + qb)).epsilon(1e-9));
  }
  SECTION("posterior consistency: data from one universe concentrates on it") {
    MultiUniverse mu;
    Universe a = binomial_universe(grid, {0.7, 0.6, 0.5, 0.4});
    Universe b = binomial_universe(grid, {0.4, 0.3, 0.2, 0.1});
    mu.add(a, 0.5);
    mu.add(b, 0.5);
    mu.normalize();
    auto rng = make_stream(8, "bayes");
    for (int i = 0; i < 200; ++i) {
      mu.bayes_update(1, binomial_inverse_draw(10, 0.3, rng));  // universe b's world
    }
    CHECK(mu.belief[1] > 0.95);
  }
  SECTION("order consistency for exchangeable data (floor disabled)") {
    MultiUniverse mu1, mu2;
    mu1.belief_floor = 0.0;
    mu2.belief_floor = 0.0;
    for (auto* mu : {&mu1, &mu2}) {
      mu->add(binomial_universe(grid, {0.7, 0.6, 0.5, 0.4}), 0.3);
      mu->add(binomial_universe(grid, {0.4, 0.3, 0.2, 0.1}), 0.7);
      mu->normalize();
    }
    mu1.bayes_update(2, 3);
    mu1.bayes_update(2, 8);
    mu2.bayes_update(2, 8);
    mu2.bayes_update(2, 3);
    CHECK(std::abs(mu1.belief[0] - mu2.belief[0]) < 1e-12);
  }
  SECTION("belief stays normalized and floored") {
    MultiUniverse mu;
    mu.belief_floor = 1e-4;
    for (int i = 0; i < 5; ++i) {
      mu.add(binomial_universe(grid, {0.1 + 0.15 * i, 0.1, 0.1, 0.1}), 1.0);
    }
    mu.normalize();
    auto rng = make_stream(10, "floor");
    for (int i = 0; i < 500; ++i) {
      mu.bayes_update(0, binomial_inverse_draw(10, 0.7, rng));
      double sum = 0.0;
      for (double p : mu.belief) {
        REQUIRE(p >= 1e-4 / mu.size() - 1e-15);
        sum += p;
      }
      REQUIRE(std::abs(sum - 1.0) <= 1e-9);
    }
  }
}

TEST_CASE("inject_universes weighting") {
  const auto grid = make_price_grid(0.2, 0.8, 4, 10);
  SECTION("yellow into a single universe splits evenly") {
    MultiUniverse mu;
    mu.belief_floor = 0.0;
    mu.add(binomial_universe(grid, {0.5, 0.5, 0.5, 0.5}), 1.0);
    mu.normalize();
    std::vector<Universe> fresh{binomial_universe(grid, {0.6, 0.6, 0.6, 0.6},
                                                  UniverseTag::counterfactual)};
    inject_universes(mu, std::move(fresh), InjectMode::yellow);
    REQUIRE(mu.size() == 2);
    CHECK(mu.belief[0] == Catch::Approx(0.5));
    CHECK(mu.belief[1] == Catch::Approx(0.5));
  }
  SECTION("red entrants dominate") {
    MultiUniverse mu;
    mu.belief_floor = 0.0;
    mu.add(binomial_universe(grid, {0.5, 0.5, 0.5, 0.5}), 0.5);
    mu.add(binomial_universe(grid, {0.3, 0.3, 0.3, 0.3}), 0.5);
    mu.normalize();
    std::vector<Universe> fresh;
    fresh.push_back(binomial_universe(grid, {0.6, 0.6, 0.6, 0.6}, UniverseTag::perceived));
    fresh.push_back(binomial_universe(grid, {0.7, 0.7, 0.7, 0.7}, UniverseTag::perceived));
    inject_universes(mu, std::move(fresh), InjectMode::red);
    REQUIRE(mu.size() == 4);
    CHECK(mu.belief[2] > mu.belief[0]);
    CHECK(mu.belief[3] > mu.belief[1]);
    // entrants arrive at weight L = 4 against incumbents holding 0.5 each
    CHECK(mu.belief[2] == Catch::Approx(4.0 / 9.0));
    CHECK(mu.belief[0] == Catch::Approx(0.5 / 9.0));
  }
  SECTION("empty injection is a no-op") {
    MultiUniverse mu;
    mu.add(binomial_universe(grid, {0.5, 0.5, 0.5, 0.5}), 1.0);
    mu.normalize();
    const auto before = mu.belief;
    inject_universes(mu, {}, InjectMode::yellow);
    CHECK(mu.belief == before);
  }
}

TEST_CASE("universe files round-trip") {
  const auto grid = make_price_grid(0.2, 0.8, 4, 10);
  MultiUniverse mu;
  mu.add(binomial_universe(grid, {0.7, 0.6, 0.5, 0.4}), 0.4);
  mu.add(binomial_universe(grid, {0.4, 0.3, 0.2, 0.1}, UniverseTag::counterfactual), 0.6);
  mu.normalize();

  SECTION("save then load preserves beliefs and likelihoods") {
    std::stringstream ss;
    save_universes(mu, ss);
    const auto file = load_universe_file(ss);
    REQUIRE(file.universes.size() == 2);
    CHECK(file.arms == 4);
    CHECK(file.max_demand == 10);
    for (int i = 0; i < 2; ++i) {
      CHECK(std::abs(file.beliefs[static_cast<std::size_t>(i)] -
                     mu.belief[static_cast<std::size_t>(i)]) <= 1e-12);
      for (int k = 0; k < 4; ++k) {
        for (int d = 0; d <= 10; ++d) {
          CHECK(std::abs(file.universes[static_cast<std::size_t>(i)].row(k)[d] -
                         mu.universes[static_cast<std::size_t>(i)].row(k)[d]) <= 1e-12);
        }
      }
    }
  }

  SECTION("load_vintage retags") {
    const std::string path = "/tmp/acidp_test_universes.txt";
    save_universes(mu, path);
    const auto [universes, beliefs] = load_vintage(path);
    REQUIRE(universes.size() == 2);
    CHECK(universes[0].tag == UniverseTag::vintage);
    CHECK(universes[1].tag == UniverseTag::vintage);
  }

  SECTION("unnormalized rows are rejected with a location") {
    std::stringstream ss;
    ss << kUniverseFileMagic << "\nK 2\nN 1\nL 1\nuniverse 0 perceived 1.0\n0.5 0.4\n0.5 0.5\n";
    try {
      load_universe_file(ss);
      FAIL("expected a parse error");
    } catch (const std::runtime_error& e) {
      CHECK(std::string(e.what()).find("not normalized") != std::string::npos);
      CHECK(std::string(e.what()).find("line 6") != std::string::npos);
    }
  }

  SECTION("bad header is rejected") {
    std::stringstream ss("bogus\n");
    CHECK_THROWS(load_universe_file(ss));
  }
}
