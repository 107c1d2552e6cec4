// Helpers shared by the test suites: one-sample Kolmogorov-Smirnov test,
// chain standard errors, and quick table construction.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "depgem/data.hpp"

namespace test_support {

inline double ks_statistic(std::vector<double> values,
                           const std::function<double(double)>& cdf) {
  std::sort(values.begin(), values.end());
  const auto n = static_cast<double>(values.size());
  double d = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double f = cdf(values[i]);
    d = std::max(d, std::abs(f - static_cast<double>(i) / n));
    d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
  }
  return d;
}

// asymptotic Kolmogorov distribution tail
inline double ks_pvalue(double d, std::size_t n) {
  const double x = (std::sqrt(static_cast<double>(n)) + 0.12 +
                    0.11 / std::sqrt(static_cast<double>(n))) *
                   d;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k)
    p += 2.0 * (k % 2 == 1 ? 1.0 : -1.0) * std::exp(-2.0 * k * k * x * x);
  return std::clamp(p, 0.0, 1.0);
}

// mean and naive standard error of a (possibly autocorrelated) chain using
// nonoverlapping batch means
inline std::pair<double, double> chain_mean_se(std::span<const double> xs,
                                               int n_batches = 50) {
  const std::size_t per = xs.size() / static_cast<std::size_t>(n_batches);
  std::vector<double> batch(static_cast<std::size_t>(n_batches), 0.0);
  for (int b = 0; b < n_batches; ++b) {
    double s = 0.0;
    for (std::size_t i = 0; i < per; ++i)
      s += xs[static_cast<std::size_t>(b) * per + i];
    batch[static_cast<std::size_t>(b)] = s / static_cast<double>(per);
  }
  double mean = 0.0;
  for (double b : batch) mean += b;
  mean /= n_batches;
  double ss = 0.0;
  for (double b : batch) ss += (b - mean) * (b - mean);
  return {mean, std::sqrt(ss / (n_batches * (n_batches - 1.0)))};
}

inline depgem::SpeciesCountTable make_table(
    std::vector<double> covariates,
    const std::vector<std::vector<double>>& counts) {
  depgem::SpeciesCountTable t;
  t.covariates = std::move(covariates);
  const auto i_count = static_cast<Eigen::Index>(counts.size());
  const auto j_count = static_cast<Eigen::Index>(counts.empty() ? 0
                                                                : counts[0].size());
  t.counts.resize(i_count, j_count);
  for (Eigen::Index i = 0; i < i_count; ++i) {
    t.site_ids.push_back("s" + std::to_string(i + 1));
    for (Eigen::Index j = 0; j < j_count; ++j)
      t.counts(i, j) = counts[static_cast<std::size_t>(i)]
                             [static_cast<std::size_t>(j)];
  }
  for (Eigen::Index j = 0; j < j_count; ++j)
    t.species_ids.push_back("sp" + std::to_string(j + 1));
  return t;
}

}  // namespace test_support
