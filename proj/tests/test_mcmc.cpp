#include <doctest.h>

#include <cmath>

#include "depgem/mcmc.hpp"
#include "depgem/simulate.hpp"
#include "test_support.hpp"

using namespace depgem;

namespace {

LatentState make_state(Eigen::Index i_count, Eigen::Index j_count,
                       double sigma, double lambda, double m,
                       std::uint64_t seed = 0) {
  LatentState s;
  s.z.resize(i_count, j_count);
  RandomStream rng(seed);
  for (Eigen::Index i = 0; i < i_count; ++i)
    for (Eigen::Index j = 0; j < j_count; ++j) s.z(i, j) = 1.5 * rng.normal();
  s.sigma_z = sigma;
  s.lambda = lambda;
  s.m = m;
  return s;
}

// independent likelihood route: stick weights via the transform, then a
// plain categorical log likelihood
double categorical_loglik(const LatentState& state,
                          const SpeciesCountTable& table) {
  double ll = 0.0;
  const GemParams gem{state.m};
  for (Eigen::Index i = 0; i < table.n_sites(); ++i) {
    std::vector<double> v(static_cast<std::size_t>(table.n_species()));
    for (Eigen::Index j = 0; j < table.n_species(); ++j)
      v[static_cast<std::size_t>(j)] =
          g_transform(state.z(i, j), state.sigma_z, gem);
    const WeightProfile p = stick_break(v);
    for (Eigen::Index j = 0; j < table.n_species(); ++j)
      if (table.counts(i, j) > 0)
        ll += table.counts(i, j) *
              std::log(p.weights[static_cast<std::size_t>(j)]);
  }
  return ll;
}

}  // namespace

TEST_CASE("likelihood of an all-zero table is zero") {
  SpeciesCountTable t = test_support::make_table({0.0, 1.0}, {{0, 0}, {0, 0}});
  const LatentState s = make_state(2, 2, 1.0, 1.0, 1.0);
  CHECK(log_likelihood(s, t) == 0.0);
}

TEST_CASE("likelihood equals the categorical form through stick weights") {
  SUBCASE("single site, two species, hand algebra") {
    SpeciesCountTable t = test_support::make_table({0.0}, {{2, 1}});
    const LatentState s = make_state(1, 2, 1.2, 1.0, 0.8, 5);
    const GemParams gem{s.m};
    const double g1 = g_transform(s.z(0, 0), s.sigma_z, gem);
    const double g2 = g_transform(s.z(0, 1), s.sigma_z, gem);
    const double expected =
        2.0 * std::log(g1) + 1.0 * (std::log(g2) + std::log(1.0 - g1));
    CHECK(log_likelihood(s, t) == doctest::Approx(expected).epsilon(1e-12));
  }

  SUBCASE("random small instances match to 1e-10") {
    // the identity is exact only away from the transform clamp, so the
    // states stay within two prior standard deviations
    RandomStream rng(77);
    for (int trial = 0; trial < 30; ++trial) {
      const auto i_count = static_cast<Eigen::Index>(1 + rng.below(3));
      const auto j_count = static_cast<Eigen::Index>(1 + rng.below(4));
      std::vector<std::vector<double>> counts(
          static_cast<std::size_t>(i_count),
          std::vector<double>(static_cast<std::size_t>(j_count), 0.0));
      for (auto& row : counts) {
        for (double& c : row) c = static_cast<double>(rng.below(5));
        row[rng.below(row.size())] += 1;  // keep row sums positive
      }
      std::vector<double> covs(static_cast<std::size_t>(i_count));
      for (Eigen::Index i = 0; i < i_count; ++i)
        covs[static_cast<std::size_t>(i)] = static_cast<double>(i);
      const auto t = test_support::make_table(covs, counts);
      LatentState s;
      s.z.resize(i_count, j_count);
      s.sigma_z = 0.5 + 1.5 * rng.u01();
      s.lambda = 1.0;
      s.m = 0.7 + 2.3 * rng.u01();
      for (Eigen::Index i = 0; i < i_count; ++i)
        for (Eigen::Index j = 0; j < j_count; ++j)
          s.z(i, j) = s.sigma_z * 4.0 * (rng.u01() - 0.5);
      CHECK(std::abs(log_likelihood(s, t) - categorical_loglik(s, t)) <=
            1e-10);
    }
  }
}

TEST_CASE("log posterior composes likelihood, process prior and hyperpriors") {
  const HyperPriors priors;
  SpeciesCountTable zero = test_support::make_table({0.0, 1.3}, {{0, 0}, {0, 0}});
  const LatentState s = make_state(2, 2, 1.1, 0.9, 1.4, 9);

  // zero counts: posterior reduces to the priors
  const double lp = log_posterior(s, zero, priors, KernelFamily::SE);
  const KernelSpec spec{KernelFamily::SE, s.lambda, s.sigma_z};
  const GramMatrix gm = gram(spec, zero.covariates);
  double expected = 0.0;
  for (Eigen::Index j = 0; j < 2; ++j)
    expected += gp_log_density(s.z.col(j), gm);
  const double v = s.sigma_z * s.sigma_z;
  expected += std::log(priors.b_z) - std::lgamma(priors.a_z) -
              (priors.a_z + 1.0) * std::log(v) - priors.b_z / v;
  expected += std::log(priors.b_lambda) - std::lgamma(priors.a_lambda) -
              (priors.a_lambda + 1.0) * std::log(s.lambda) -
              priors.b_lambda / s.lambda;
  expected += std::log(priors.b_m) - std::lgamma(priors.a_m) +
              (priors.a_m - 1.0) * std::log(s.m) - priors.b_m * s.m;
  CHECK(lp == doctest::Approx(expected).epsilon(1e-10));

  SUBCASE("invariant to permuting sites along with their data") {
    SpeciesCountTable t =
        test_support::make_table({0.0, 1.0, 2.2}, {{3, 1}, {2, 2}, {1, 4}});
    LatentState st = make_state(3, 2, 1.0, 1.0, 1.0, 11);
    const double before = log_posterior(st, t, priors, KernelFamily::SE);
    // swap sites 0 and 2 everywhere
    std::swap(t.covariates[0], t.covariates[2]);
    t.counts.row(0).swap(t.counts.row(2));
    st.z.row(0).swap(st.z.row(2));
    const double after = log_posterior(st, t, priors, KernelFamily::SE);
    CHECK(before == doctest::Approx(after).epsilon(1e-10));
  }

  SUBCASE("coordinate ascent on the scalars improves monotonically") {
    SpeciesCountTable t =
        test_support::make_table({0.0, 1.0}, {{6, 2, 1}, {3, 4, 2}});
    LatentState st = make_state(2, 3, 1.0, 1.0, 1.0, 13);
    double current = log_posterior(st, t, priors, KernelFamily::SE);
    const double first = current;
    for (int pass = 0; pass < 3; ++pass) {
      for (double* coord : {&st.sigma_z, &st.lambda, &st.m}) {
        for (double step : {0.2, -0.2, 0.05, -0.05}) {
          const double saved = *coord;
          if (saved + step <= 0.0) continue;
          *coord = saved + step;
          const double trial = log_posterior(st, t, priors, KernelFamily::SE);
          if (trial > current) {
            current = trial;
          } else {
            *coord = saved;
          }
        }
      }
    }
    CHECK(current >= first);
  }
}

TEST_CASE("metropolis-hastings scalar step") {
  SUBCASE("flat target always accepts") {
    RandomStream rng(1);
    const auto flat = [](double) { return 0.0; };
    for (int t = 0; t < 50; ++t) {
      const MhResult r =
          mh_step(flat, ProposalKind::Gaussian, 1.0, 0.5, rng);
      CHECK(r.accepted);
    }
  }

  SUBCASE("NaN target rejects the proposal") {
    RandomStream rng(2);
    const auto nan_away = [](double x) {
      return x == 1.0 ? 0.0 : std::nan("");
    };
    const MhResult r =
        mh_step(nan_away, ProposalKind::Gaussian, 1.0, 0.5, rng);
    CHECK_FALSE(r.accepted);
    CHECK(r.value == 1.0);
  }

  SUBCASE("truncated walk recovers a Gamma(1,1) mean") {
    RandomStream rng(3);
    const auto log_gamma11 = [](double x) { return -x; };
    double x = 1.0;
    const long n = 100000;
    std::vector<double> trace(static_cast<std::size_t>(n));
    for (long t = 0; t < n; ++t) {
      x = mh_step(log_gamma11, ProposalKind::TruncatedGaussian, x, 1.0, rng)
              .value;
      trace[static_cast<std::size_t>(t)] = x;
    }
    const auto [mean, se] = test_support::chain_mean_se(trace);
    CHECK(std::abs(mean - 1.0) <= 3.0 * se);
  }

  SUBCASE("dropping the correction biases the same chain") {
    RandomStream rng(3);
    const auto log_gamma11 = [](double x) { return -x; };
    double x = 1.0;
    const long n = 100000;
    std::vector<double> trace(static_cast<std::size_t>(n));
    for (long t = 0; t < n; ++t) {
      x = mh_step(log_gamma11, ProposalKind::TruncatedGaussian, x, 1.0, rng,
                  false)
              .value;
      trace[static_cast<std::size_t>(t)] = x;
    }
    const auto [mean, se] = test_support::chain_mean_se(trace);
    CHECK(std::abs(mean - 1.0) > 3.0 * se);
  }

  SUBCASE("nonpositive scale is rejected") {
    RandomStream rng(4);
    CHECK_THROWS_AS(mh_step([](double) { return 0.0; },
                            ProposalKind::Gaussian, 0.0, -1.0, rng),
                    ValidationError);
  }
}

TEST_CASE("lambda block alone reproduces its inverse-gamma prior") {
  // one site, one species, Z = 0: the length-scale conditional is the prior
  SpeciesCountTable t = test_support::make_table({0.5}, {{0}});
  HyperPriors priors;  // IG(1,1) on lambda
  LatentState init;
  init.z = Eigen::MatrixXd::Zero(1, 1);
  init.sigma_z = 1.0;
  init.lambda = 1.0;
  init.m = 1.0;
  GibbsSampler sampler(t, KernelFamily::SE, priors, init, ProposalScales{},
                       1234);
  for (int warm = 0; warm < 20000; ++warm) sampler.update_lambda();
  sampler.set_adaptation(false);
  // the heavy upper tail of IG(1,1) mixes slowly under a random walk, so the
  // quantile check needs a long chain
  const long n = 1000000;
  std::vector<double> lambdas(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) {
    sampler.update_lambda();
    lambdas[static_cast<std::size_t>(i)] = sampler.state().lambda;
  }
  std::sort(lambdas.begin(), lambdas.end());
  // IG(1,1) quantile: q(p) = -1/log(p)
  for (double p : {0.25, 0.5, 0.75}) {
    const double want = -1.0 / std::log(p);
    const double got = lambdas[static_cast<std::size_t>(p * (n - 1))];
    CHECK(std::abs(got - want) / want < 0.05);
  }
}

TEST_CASE("run_chain contracts") {
  SpeciesCountTable t =
      test_support::make_table({0.0, 1.0, 2.0}, {{5, 1}, {3, 2}, {2, 3}});
  ChainConfig config;
  config.iterations = 60;
  config.burn_in = 50;
  config.thin = 10;
  config.seed = 99;

  SUBCASE("iterations = burn_in + thin yields exactly one draw") {
    const ChainSamples chain = run_chain(t, config);
    CHECK(chain.draws.size() == 1);
  }

  SUBCASE("same seed gives identical chains") {
    config.iterations = 300;
    config.burn_in = 100;
    config.thin = 5;
    const ChainSamples a = run_chain(t, config);
    const ChainSamples b = run_chain(t, config);
    REQUIRE(a.draws.size() == b.draws.size());
    for (std::size_t d = 0; d < a.draws.size(); ++d) {
      CHECK(a.draws[d].sigma_z == b.draws[d].sigma_z);
      CHECK(a.draws[d].lambda == b.draws[d].lambda);
      CHECK(a.draws[d].m == b.draws[d].m);
      CHECK((a.draws[d].z - b.draws[d].z).norm() == 0.0);
      CHECK(a.log_posterior[d] == b.log_posterior[d]);
    }
  }

  SUBCASE("thread count does not change the draws") {
    config.iterations = 200;
    config.burn_in = 100;
    config.thin = 2;
    ChainConfig threaded = config;
    threaded.threads = 3;
    const ChainSamples a = run_chain(t, config);
    const ChainSamples b = run_chain(t, threaded);
    REQUIRE(a.draws.size() == b.draws.size());
    for (std::size_t d = 0; d < a.draws.size(); ++d) {
      CHECK(a.draws[d].sigma_z == b.draws[d].sigma_z);
      CHECK((a.draws[d].z - b.draws[d].z).norm() == 0.0);
    }
  }

  SUBCASE("config validation") {
    ChainConfig bad = config;
    bad.iterations = 10;
    bad.burn_in = 10;
    CHECK_THROWS_AS(run_chain(t, bad), ValidationError);
    bad = config;
    bad.thin = 0;
    CHECK_THROWS_AS(run_chain(t, bad), ValidationError);
    SpeciesCountTable tied =
        test_support::make_table({1.0, 1.0}, {{2, 1}, {1, 2}});
    CHECK_THROWS_AS(run_chain(tied, config), ValidationError);
    SpeciesCountTable single = test_support::make_table({1.0}, {{2, 1}});
    CHECK_THROWS_AS(run_chain(single, config), ValidationError);
  }
}

TEST_CASE("per-block prior invariance on a zero-count table") {
  // Geweke-style: with no data every block conditional is its prior slice
  SpeciesCountTable t = test_support::make_table(
      {0.0, 0.8, 2.1}, {{0, 0}, {0, 0}, {0, 0}});
  HyperPriors priors;
  priors.a_z = 3.0;
  priors.b_z = 2.0;
  priors.a_lambda = 3.0;
  priors.b_lambda = 2.0;
  priors.a_m = 2.0;
  priors.b_m = 2.0;
  LatentState init;
  init.z = Eigen::MatrixXd::Zero(3, 2);
  init.sigma_z = 1.0;
  init.lambda = 1.0;
  init.m = 1.0;
  GibbsSampler sampler(t, KernelFamily::SE, priors, init, ProposalScales{},
                       777);
  for (int warm = 0; warm < 5000; ++warm) sampler.sweep();
  sampler.set_adaptation(false);

  const long n = 60000;
  std::vector<double> z00(static_cast<std::size_t>(n));
  std::vector<double> z00_sq(static_cast<std::size_t>(n));
  for (long i = 0; i < n; ++i) {
    sampler.sweep();
    const double z = sampler.state().z(0, 0);
    z00[static_cast<std::size_t>(i)] = z;
    z00_sq[static_cast<std::size_t>(i)] = z * z;
  }
  // marginally E(Z) = 0 and E(Z^2) = E(sigma_Z^2) = 1
  const auto [mz, sez] = test_support::chain_mean_se(z00);
  CHECK(std::abs(mz) <= 4.0 * sez);
  const auto [mz2, sez2] = test_support::chain_mean_se(z00_sq);
  CHECK(std::abs(mz2 - 1.0) <= 4.0 * sez2);
}

TEST_CASE("acceptance rates settle into a sane band on benchmark-like data") {
  // needs enough sites and species that every scalar is identified; on tiny
  // tables the length-scale conditional is nearly flat and its acceptance
  // has no reason to approach the tuning target
  SimulateConfig sim;
  sim.n_sites = 12;
  sim.n_species = 60;
  sim.m = 6.0;
  sim.lambda = 2.0;
  sim.sigma_z = 1.0;
  sim.n_per_site = 500;
  sim.cov_min = 0.0;
  sim.cov_max = 10.0;
  sim.zero_covariate_sites = 0;
  sim.seed = 77;
  SimulatedData data = simulate_dataset(sim);
  data.table.canonicalize();

  ChainConfig config;
  config.iterations = 16000;
  config.burn_in = 8000;
  config.thin = 4;
  config.seed = 31;
  const ChainSamples chain = run_chain(data.table, config);
  for (double rate : {chain.acceptance.z, chain.acceptance.sigma_z,
                      chain.acceptance.lambda, chain.acceptance.m}) {
    CHECK(rate >= 0.15);
    CHECK(rate <= 0.5);
  }
}

TEST_CASE("chain diagnostics") {
  SUBCASE("iid draws give full effective size") {
    RandomStream rng(15);
    std::vector<double> xs(4000);
    for (double& x : xs) x = rng.normal();
    const double ess = effective_sample_size(xs);
    CHECK(ess > 0.8 * 4000);
    CHECK(ess <= 4000);
  }

  SUBCASE("a constant trace carries one effective draw") {
    std::vector<double> xs(500, 3.25);
    CHECK(effective_sample_size(xs) == doctest::Approx(1.0));
  }

  SUBCASE("AR(1) with rho 0.5 loses two thirds of its draws") {
    RandomStream rng(16);
    const long n = 20000;
    std::vector<double> xs(static_cast<std::size_t>(n));
    double x = 0.0;
    for (long t = 0; t < n; ++t) {
      x = 0.5 * x + rng.normal();
      xs[static_cast<std::size_t>(t)] = x;
    }
    const double ess = effective_sample_size(xs);
    CHECK(std::abs(ess - n / 3.0) / (n / 3.0) < 0.25);
  }

  SUBCASE("diagnostics need ten draws") {
    ChainSamples chain;
    chain.draws.resize(5);
    chain.log_posterior.resize(5, 0.0);
    CHECK_THROWS_AS(diagnostics(chain), ValidationError);
  }

  SUBCASE("autocorrelation of an alternating series") {
    std::vector<double> xs(100);
    for (std::size_t i = 0; i < xs.size(); ++i) xs[i] = i % 2 == 0 ? 1.0 : -1.0;
    const auto acf = autocorrelation(xs, 2);
    CHECK(acf[0] == doctest::Approx(1.0));
    CHECK(acf[1] == doctest::Approx(-1.0).epsilon(0.05));
    CHECK(acf[2] == doctest::Approx(1.0).epsilon(0.05));
  }
}
