#include <doctest.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "depgem/data.hpp"
#include "test_support.hpp"

using namespace depgem;

namespace {

std::filesystem::path write_temp(const std::string& name,
                                 const std::string& content) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream out(path);
  out << content;
  return path;
}

}  // namespace

TEST_CASE("long format load orders species by decreasing total abundance") {
  const auto path = write_temp("depgem_long.csv",
                               "site,covariate,species,count\n"
                               "s1,0.0,spA,5\n"
                               "s1,0.0,spB,2\n"
                               "s2,1.0,spB,7\n");
  const SpeciesCountTable t = load_counts(path, {TableFormat::Long});
  REQUIRE(t.n_sites() == 2);
  REQUIRE(t.n_species() == 2);
  // spB totals 9 > spA totals 5
  CHECK(t.species_ids[0] == "spB");
  CHECK(t.species_ids[1] == "spA");
  CHECK(t.counts(0, 0) == 2);
  CHECK(t.counts(0, 1) == 5);
  CHECK(t.counts(1, 0) == 7);
  CHECK(t.counts(1, 1) == 0);
  CHECK(t.covariates[1] == 1.0);
}

TEST_CASE("wide format single site already sorted is unchanged") {
  const auto path = write_temp("depgem_wide.csv",
                               "site,covariate,spA,spB\n"
                               "s1,2.5,3,1\n");
  const SpeciesCountTable t = load_counts(path, {TableFormat::Wide});
  REQUIRE(t.n_sites() == 1);
  CHECK(t.species_ids == std::vector<std::string>{"spA", "spB"});
  CHECK(t.counts(0, 0) == 3);
  CHECK(t.counts(0, 1) == 1);
}

TEST_CASE("parse errors carry line numbers") {
  const auto path = write_temp("depgem_bad.csv",
                               "site,covariate,species,count\n"
                               "s1,0.0,spA,5\n"
                               "s2,zero,spA,3\n");
  try {
    load_counts(path, {TableFormat::Long});
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find(":3:") != std::string::npos);
  }
}

TEST_CASE("negative counts and duplicate cells are rejected") {
  const auto neg = write_temp("depgem_neg.csv",
                              "site,covariate,species,count\n"
                              "s1,0.0,spA,-2\n");
  CHECK_THROWS_AS(load_counts(neg, {TableFormat::Long}), ValidationError);

  const auto dup = write_temp("depgem_dup.csv",
                              "site,covariate,species,count\n"
                              "s1,0.0,spA,2\n"
                              "s1,0.0,spA,3\n");
  CHECK_THROWS_AS(load_counts(dup, {TableFormat::Long}), ValidationError);

  const auto cov = write_temp("depgem_cov.csv",
                              "site,covariate,species,count\n"
                              "s1,0.0,spA,2\n"
                              "s1,1.0,spB,3\n");
  CHECK_THROWS_AS(load_counts(cov, {TableFormat::Long}), ValidationError);
}

TEST_CASE("zero-abundance sites and missing files are rejected") {
  const auto zero = write_temp("depgem_zero.csv",
                               "site,covariate,spA,spB\n"
                               "s1,0.0,2,1\n"
                               "s2,1.0,0,0\n");
  CHECK_THROWS_AS(load_counts(zero, {TableFormat::Wide}), ValidationError);
  CHECK_THROWS_AS(load_counts("/nonexistent/counts.csv", {TableFormat::Long}),
                  ValidationError);
  const auto empty = write_temp("depgem_empty.csv",
                                "site,covariate,species,count\n");
  CHECK_THROWS_AS(load_counts(empty, {TableFormat::Long}), ValidationError);
}

TEST_CASE("species with zero total count are dropped with a warning") {
  const auto path = write_temp("depgem_zero_species.csv",
                               "site,covariate,spA,spB\n"
                               "s1,0.0,2,0\n"
                               "s2,1.0,3,0\n");
  std::ostringstream warnings;
  const SpeciesCountTable t = load_counts(path, {TableFormat::Wide}, &warnings);
  CHECK(t.n_species() == 1);
  CHECK(warnings.str().find("spB") != std::string::npos);
}

TEST_CASE("low-abundance filter drops species at or below the threshold") {
  const auto path = write_temp("depgem_filter.csv",
                               "site,covariate,species,count\n"
                               "s1,0.0,spA,8\n"
                               "s1,0.0,spB,2\n"
                               "s2,1.0,spB,1\n"
                               "s2,1.0,spC,4\n");
  LoadOptions opts{TableFormat::Long, 3};
  const SpeciesCountTable t = load_counts(path, opts);
  REQUIRE(t.n_species() == 2);  // spB total 3 <= 3 dropped
  CHECK(t.species_ids[0] == "spA");
  CHECK(t.species_ids[1] == "spC");
}

TEST_CASE("canonicalization is idempotent and permutation invariant") {
  RandomStream rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const int i_count = 2 + static_cast<int>(rng.below(4));
    const int j_count = 2 + static_cast<int>(rng.below(5));
    std::vector<std::vector<double>> counts(
        static_cast<std::size_t>(i_count),
        std::vector<double>(static_cast<std::size_t>(j_count)));
    for (auto& row : counts)
      for (double& c : row) c = static_cast<double>(rng.below(6)) + 1;
    std::vector<double> covs(static_cast<std::size_t>(i_count));
    for (int i = 0; i < i_count; ++i)
      covs[static_cast<std::size_t>(i)] = static_cast<double>(i);
    SpeciesCountTable a = test_support::make_table(covs, counts);
    a.canonicalize();
    SpeciesCountTable twice = a;
    twice.canonicalize();
    CHECK(twice.species_ids == a.species_ids);
    CHECK(twice.counts.isApprox(a.counts));

    // shuffle columns, canonicalize again: same totals per rank
    SpeciesCountTable b = a;
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(j_count));
    for (Eigen::Index j = 0; j < j_count; ++j)
      perm[static_cast<std::size_t>(j)] = j;
    for (std::size_t j = perm.size(); j-- > 1;)
      std::swap(perm[j], perm[rng.below(j + 1)]);
    Eigen::MatrixXd shuffled(a.counts.rows(), a.counts.cols());
    std::vector<std::string> ids(static_cast<std::size_t>(j_count));
    for (Eigen::Index j = 0; j < j_count; ++j) {
      shuffled.col(j) = a.counts.col(perm[static_cast<std::size_t>(j)]);
      ids[static_cast<std::size_t>(j)] =
          a.species_ids[static_cast<std::size_t>(
              perm[static_cast<std::size_t>(j)])];
    }
    b.counts = shuffled;
    b.species_ids = ids;
    b.canonicalize();
    const Eigen::VectorXd ta = a.counts.colwise().sum();
    const Eigen::VectorXd tb = b.counts.colwise().sum();
    CHECK(ta.isApprox(tb));
  }
}

TEST_CASE("empirical proportions") {
  const SpeciesCountTable t = test_support::make_table(
      {0.0, 1.0, 2.0}, {{2, 2, 0}, {5, 0, 0}, {3, 1, 1}});
  const Eigen::MatrixXd p = empirical_proportions(t);
  CHECK(p(0, 0) == doctest::Approx(0.5));
  CHECK(p(0, 1) == doctest::Approx(0.5));
  CHECK(p(1, 0) == doctest::Approx(1.0));
  CHECK(p(2, 0) == doctest::Approx(0.6));
  CHECK(p(2, 1) == doctest::Approx(0.2));
  CHECK(p(2, 2) == doctest::Approx(0.2));

  RandomStream rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<std::vector<double>> counts(3, std::vector<double>(6));
    for (auto& row : counts)
      for (double& c : row) c = static_cast<double>(rng.below(50)) + 1;
    const auto table = test_support::make_table({0, 1, 2}, counts);
    const Eigen::MatrixXd props = empirical_proportions(table);
    for (Eigen::Index i = 0; i < 3; ++i)
      CHECK(std::abs(props.row(i).sum() - 1.0) <= 1e-12);
  }

  SpeciesCountTable zero = test_support::make_table({0.0, 1.0},
                                                    {{1, 2}, {0, 0}});
  try {
    empirical_proportions(zero);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("s2") != std::string::npos);
  }
}

TEST_CASE("jitter separates ties and keeps zeros nonnegative") {
  const std::vector<double> x = {0.0, 0.0, 5000.0};
  const auto out = jitter_covariates(x, JitterSpec{1.0, 42});
  CHECK(out[0] >= 0.0);
  CHECK(out[1] >= 0.0);
  CHECK(out[0] != out[1]);
  CHECK(out[1] != out[2]);
  CHECK(out[0] != out[2]);

  const std::vector<double> ties = {100.0, 100.0};
  const auto sep = jitter_covariates(ties, JitterSpec{1.0, 7});
  CHECK(sep[0] != sep[1]);
  // deterministic given the seed
  const auto sep2 = jitter_covariates(ties, JitterSpec{1.0, 7});
  CHECK(sep == sep2);

  CHECK_THROWS_AS(jitter_covariates(x, JitterSpec{0.0, 1}), ValidationError);
}

TEST_CASE("small jitter converges to the input for nonzero covariates") {
  const std::vector<double> x = {3.0, 17.5, 240.0};
  const auto out = jitter_covariates(x, JitterSpec{1e-9, 3});
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK(std::abs(out[i] - x[i]) < 1e-7);
}

TEST_CASE("jitter preserves rank order of well separated covariates") {
  // gap of 10 sigma: inversions should never occur across 1000 seeds
  const std::vector<double> x = {10.0, 20.0, 30.0, 40.0};
  int inversions = 0;
  for (std::uint64_t seed = 0; seed < 1000; ++seed) {
    const auto out = jitter_covariates(x, JitterSpec{1.0, seed});
    if (!std::is_sorted(out.begin(), out.end())) ++inversions;
  }
  CHECK(inversions == 0);
}

TEST_CASE("long CSV round trip") {
  const SpeciesCountTable t = test_support::make_table(
      {0.0, 1.5}, {{4, 1, 0}, {2, 0, 3}});
  const auto path = std::filesystem::temp_directory_path() / "depgem_rt.csv";
  save_counts_long(t, path);
  const SpeciesCountTable back = load_counts(path, {TableFormat::Long});
  CHECK(back.n_sites() == 2);
  CHECK(back.n_species() == 3);
  const Eigen::VectorXd totals = back.counts.colwise().sum();
  CHECK(totals(0) == 6);  // canonical order by totals
  CHECK(totals(1) == 3);
  CHECK(totals(2) == 1);
}
