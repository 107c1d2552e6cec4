#include <doctest.h>

#include <cmath>
#include <sstream>

#include "depgem/predictive.hpp"
#include "test_support.hpp"

using namespace depgem;

TEST_CASE("conditioning on distant training points returns the prior") {
  const KernelSpec spec{KernelFamily::SE, 1.0, 1.3};
  const std::vector<double> xs = {0.0, 0.5};
  const std::vector<double> star = {100.0, 101.0};
  Eigen::VectorXd z(2);
  z << 1.0, -2.0;
  const ConditionResult c = gp_condition(spec, xs, star, z);
  CHECK(c.mean.norm() < 1e-12);
  CHECK(c.cov(0, 0) == doctest::Approx(1.3 * 1.3).epsilon(1e-9));
  CHECK(c.cov(0, 1) ==
        doctest::Approx(kernel_eval(spec, 100.0, 101.0)).epsilon(1e-6));
}

TEST_CASE("single training point conditional mean is the scaled kernel") {
  const KernelSpec spec{KernelFamily::SE, 1.0, 1.0};
  const std::vector<double> xs = {0.0};
  const std::vector<double> star = {1.0};  // one length-scale away
  Eigen::VectorXd z(1);
  z << 2.0;
  const ConditionResult c = gp_condition(spec, xs, star, z);
  CHECK(c.mean(0) == doctest::Approx(2.0 * std::exp(-0.5)).epsilon(1e-6));
}

TEST_CASE("conditional collapses onto a nearby training point") {
  const KernelSpec spec{KernelFamily::SE, 1.0, 1.0};
  const std::vector<double> xs = {0.0, 2.0};
  const std::vector<double> star = {2.0 + 1e-6};
  Eigen::VectorXd z(2);
  z << 0.7, -1.1;
  const ConditionResult c = gp_condition(spec, xs, star, z);
  CHECK(c.mean(0) == doctest::Approx(-1.1).epsilon(1e-6));
  CHECK(c.cov(0, 0) <= 1e-6);
}

TEST_CASE("conditioning never inflates the variance") {
  RandomStream rng(5);
  for (auto family : {KernelFamily::SE, KernelFamily::OU, KernelFamily::RQ}) {
    const KernelSpec spec{family, 0.8, 1.1};
    std::vector<double> xs(4), star(3);
    for (double& x : xs) x = 6.0 * rng.u01();
    for (double& x : star) x = 6.0 * rng.u01() + 7.0;
    Eigen::VectorXd z(4);
    for (Eigen::Index i = 0; i < 4; ++i) z(i) = rng.normal();
    const ConditionResult c = gp_condition(spec, xs, star, z);
    for (Eigen::Index s = 0; s < 3; ++s)
      CHECK(c.cov(s, s) <= spec.sigma_z * spec.sigma_z + 1e-10);
    CHECK(c.cov.isApprox(c.cov.transpose(), 1e-12));
  }
}

TEST_CASE("swapping two test points permutes the conditional") {
  const KernelSpec spec{KernelFamily::OU, 1.5, 0.9};
  const std::vector<double> xs = {0.0, 1.0, 3.0};
  Eigen::VectorXd z(3);
  z << 0.3, -0.6, 1.2;
  const ConditionResult a =
      gp_condition(spec, xs, std::vector<double>{0.4, 2.2}, z);
  const ConditionResult b =
      gp_condition(spec, xs, std::vector<double>{2.2, 0.4}, z);
  CHECK(a.mean(0) == doctest::Approx(b.mean(1)).epsilon(1e-12));
  CHECK(a.mean(1) == doctest::Approx(b.mean(0)).epsilon(1e-12));
  CHECK(a.cov(0, 1) == doctest::Approx(b.cov(1, 0)).epsilon(1e-12));
  CHECK(a.cov(0, 0) == doctest::Approx(b.cov(1, 1)).epsilon(1e-12));
}

TEST_CASE("marginal predictor agrees with the joint conditional") {
  const std::vector<double> xs = {0.0, 1.0, 2.5};
  const std::vector<double> grid = {0.4, 1.7, 3.0};
  MarginalPredictor predictor(KernelFamily::SE, xs, grid);
  predictor.set_lambda(0.9);
  const KernelSpec corr{KernelFamily::SE, 0.9, 1.0};
  Eigen::VectorXd z(3);
  z << 0.5, -0.2, 0.9;
  const ConditionResult joint = gp_condition(corr, xs, grid, z);
  for (Eigen::Index g = 0; g < 3; ++g) {
    CHECK(predictor.mean_coeffs().col(g).dot(z) ==
          doctest::Approx(joint.mean(g)).epsilon(1e-9));
    CHECK(predictor.cond_var()(g) ==
          doctest::Approx(joint.cov(g, g)).epsilon(1e-6));
  }
}

TEST_CASE("grid preparation separates colliding points") {
  const std::vector<double> train = {0.0, 1.0, 2.0};
  std::ostringstream warnings;
  const auto grid = prepare_prediction_grid(std::vector<double>{1.0, 1.5},
                                            train, &warnings);
  CHECK(grid[0] != 1.0);
  CHECK(std::abs(grid[0] - 1.0) < 1e-6);
  CHECK(grid[1] == 1.5);
  CHECK(warnings.str().find("shifted") != std::string::npos);
}

namespace {

ChainSamples tiny_chain(const SpeciesCountTable& table, long iterations,
                        long burn_in, long thin, std::uint64_t seed) {
  ChainConfig config;
  config.iterations = iterations;
  config.burn_in = burn_in;
  config.thin = thin;
  config.seed = seed;
  return run_chain(table, config);
}

}  // namespace

TEST_CASE("predictive sampling basics") {
  const SpeciesCountTable t = test_support::make_table(
      {0.0, 1.0, 2.0}, {{8, 3, 1}, {6, 4, 2}, {5, 4, 3}});

  SUBCASE("chain of length one yields one predictive draw") {
    const ChainSamples chain = tiny_chain(t, 22, 20, 2, 3);
    REQUIRE(chain.draws.size() == 1);
    const PredictiveDraws out =
        sample_predictive(chain, std::vector<double>{0.5}, 7);
    CHECK(out.weights.size() == 1);
    CHECK(out.weights[0].size() == 1);
    CHECK(out.weights[0][0].weights.size() ==
          static_cast<std::size_t>(t.n_species()));
  }

  SUBCASE("predictive weights satisfy the profile invariants") {
    const ChainSamples chain = tiny_chain(t, 140, 100, 2, 5);
    const PredictiveDraws out =
        sample_predictive(chain, std::vector<double>{0.25, 1.6}, 11);
    for (const auto& per_site : out.weights)
      for (const WeightProfile& p : per_site) {
        double total = p.residual;
        for (double w : p.weights) {
          CHECK(w > 0.0);
          total += w;
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-10));
      }
  }

  SUBCASE("a test point glued to a training site reproduces its weights") {
    const ChainSamples chain = tiny_chain(t, 300, 200, 2, 9);
    const double star = 1.0 + 1e-6;
    const PredictiveDraws out =
        sample_predictive(chain, std::vector<double>{star}, 13);
    // compare against the training-site weights of each draw
    double max_gap = 0.0;
    for (std::size_t d = 0; d < chain.draws.size(); ++d) {
      const LatentState& draw = chain.draws[d];
      const GemParams gem{draw.m};
      std::vector<double> v(static_cast<std::size_t>(draw.z.cols()));
      for (Eigen::Index j = 0; j < draw.z.cols(); ++j)
        v[static_cast<std::size_t>(j)] =
            g_transform(draw.z(1, j), draw.sigma_z, gem);
      const WeightProfile site = stick_break(v);
      for (std::size_t j = 0; j < site.weights.size(); ++j)
        max_gap = std::max(max_gap, std::abs(site.weights[j] -
                                             out.weights[d][0].weights[j]));
    }
    CHECK(max_gap < 1e-3);
  }

  SUBCASE("thread count does not change predictive draws") {
    const ChainSamples chain = tiny_chain(t, 160, 100, 2, 15);
    const std::vector<double> star = {0.3, 1.2, 2.6};
    const PredictiveDraws a = sample_predictive(chain, star, 21, 1);
    const PredictiveDraws b = sample_predictive(chain, star, 21, 3);
    REQUIRE(a.weights.size() == b.weights.size());
    for (std::size_t d = 0; d < a.weights.size(); ++d)
      for (std::size_t s = 0; s < a.weights[d].size(); ++s)
        CHECK(a.weights[d][s].weights == b.weights[d][s].weights);
  }

  SUBCASE("empty inputs are rejected") {
    ChainSamples empty;
    CHECK_THROWS_AS(sample_predictive(empty, std::vector<double>{0.5}, 1),
                    ValidationError);
  }
}

TEST_CASE("joint draw and conditional draw have matching moments") {
  // quick two-moment consistency at one kernel; the full three-kernel run
  // lives in the acceptance suite
  const KernelSpec spec{KernelFamily::SE, 1.0, 1.0};
  const std::vector<double> xs = {0.0, 0.7, 1.9};
  const std::vector<double> star = {0.4, 2.5};
  const std::vector<double> joint_xs = {0.0, 0.7, 1.9, 0.4, 2.5};

  const GramMatrix joint_gm = gram(spec, joint_xs);
  const GramMatrix train_gm = gram(spec, xs);
  // conditional operator columns extracted through gp_condition
  Eigen::MatrixXd mean_op(2, 3);
  for (Eigen::Index i = 0; i < 3; ++i) {
    Eigen::VectorXd unit = Eigen::VectorXd::Zero(3);
    unit(i) = 1.0;
    mean_op.col(i) = gp_condition(spec, xs, star, unit).mean;
  }
  const Eigen::MatrixXd cond_cov =
      gp_condition(spec, xs, star, Eigen::VectorXd::Zero(3)).cov;
  const GramMatrix cond_chol = gram_from_matrix(cond_cov, star);

  const long n = 40000;
  double mj = 0, mc = 0, vj = 0, vc = 0;
  RandomStream rng(77);
  Eigen::VectorXd xi5(5), xi3(3), xi2(2);
  for (long t = 0; t < n; ++t) {
    for (Eigen::Index i = 0; i < 5; ++i) xi5(i) = rng.normal();
    const Eigen::VectorXd joint =
        joint_gm.chol.triangularView<Eigen::Lower>() * xi5;
    mj += joint(3);
    vj += joint(3) * joint(3);

    for (Eigen::Index i = 0; i < 3; ++i) xi3(i) = rng.normal();
    const Eigen::VectorXd z =
        train_gm.chol.triangularView<Eigen::Lower>() * xi3;
    for (Eigen::Index i = 0; i < 2; ++i) xi2(i) = rng.normal();
    const Eigen::VectorXd noise =
        cond_chol.chol.triangularView<Eigen::Lower>() * xi2;
    const Eigen::VectorXd star_draw = mean_op * z + noise;
    mc += star_draw(0);
    vc += star_draw(0) * star_draw(0);
  }
  mj /= n; mc /= n; vj = vj / n - mj * mj; vc = vc / n - mc * mc;
  CHECK(std::abs(mj - mc) <= 4.0 * std::sqrt(2.0 / n));
  CHECK(std::abs(vj - vc) <= 4.0 * std::sqrt(2.0 * 2.0 / n) * 2.0);
}
