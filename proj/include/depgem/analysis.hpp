// Ecological summaries over weight profiles: diversity indices and their
// prior moments under the GEM law, weighted Jaccard dissimilarity with
// effective-concentration estimation, and conditional predictive ordinates
// for model assessment.

#pragma once

#include <span>
#include <string>
#include <vector>

#include "depgem/data.hpp"
#include "depgem/mcmc.hpp"
#include "depgem/stickbreak.hpp"

namespace depgem {

// ---------------------------------------------------------------------------
// Diversity indices
// ---------------------------------------------------------------------------

/// Simpson index 1 - sum_j p_j^2. Residual mass counts as infinitely
/// fragmented dust, contributing nothing to the square sum.
double simpson(const WeightProfile& p);

/// Shannon index -sum_j p_j log p_j.
double shannon(const WeightProfile& p);

/// Good index sum_j p_j^alpha (-log p_j)^beta; (1,1) is Shannon and (2,0)
/// the Simpson complement.
double good_index(const WeightProfile& p, double alpha, double beta);

struct IndexSpec {
  enum class Kind { Simpson, Shannon, Good };
  Kind kind = Kind::Simpson;
  double alpha = 1.0;
  double beta = 1.0;
};

double diversity_index(const WeightProfile& p, const IndexSpec& index);

/// Prior mean M/(1+M) and variance 2M / ((M+1) (M+1)(M+2)(M+3)) of the
/// Simpson index under GEM(M).
struct SimpsonMoments {
  double mean;
  double variance;
};

SimpsonMoments simpson_prior_moments(const GemParams& params);

/// Location of the interior variance maximum over M (golden-section search).
double simpson_prior_variance_argmax();

/// Monte Carlo estimate with standard error.
struct MonteCarloEstimate {
  double value = 0.0;
  double se = 0.0;
};

/// Prior covariance of the Simpson index at two covariates, assembled from
/// the six break-pair moments that have no closed form.
MonteCarloEstimate simpson_prior_cov(const KernelSpec& spec,
                                     const GemParams& params, double x1,
                                     double x2, long n_mc, std::uint64_t seed,
                                     int threads = 1);

// ---------------------------------------------------------------------------
// Dissimilarity and effective concentration
// ---------------------------------------------------------------------------

/// Weighted (Ruzicka) Jaccard dissimilarity
/// 1 - sum_j min(p_j, q_j) / sum_j max(p_j, q_j); profiles must share the
/// truncation level.
double jaccard(const WeightProfile& p1, const WeightProfile& p2);

struct DiversityCurve {
  std::vector<double> grid;
  std::vector<double> mean;
  std::vector<double> lo95;
  std::vector<double> hi95;
  // plug-in values at the observed sites, as (covariate, value) pairs
  std::vector<std::pair<double, double>> empirical;
};

/// Posterior mean and 95% band of a diversity index over a covariate grid,
/// from per-draw predictive weights.
DiversityCurve diversity_curve(const ChainSamples& chain,
                               const SpeciesCountTable& table,
                               std::span<const double> grid,
                               const IndexSpec& index, std::uint64_t seed,
                               int threads = 1);

struct DissimilarityCurve {
  DiversityCurve curve;  // Jac(X) against the baseline communities
  double jac0 = 0.0;     // posterior mean dissimilarity among baseline sites
};

/// Per draw: Jac(X) is the mean dissimilarity of the predicted community at X
/// to each baseline community, and Jac_0 the mean over unordered baseline
/// pairs. Needs at least two baseline sites.
DissimilarityCurve dissimilarity_curve(const ChainSamples& chain,
                                       const SpeciesCountTable& table,
                                       std::span<const double> grid,
                                       std::span<const Eigen::Index> baseline,
                                       std::uint64_t seed, int threads = 1);

struct EcxEstimate {
  double x_percent = 0.0;
  double ec = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  bool reached = true;  // false when the mean curve never meets the threshold
};

/// Smallest covariate where the mean curve reaches
/// 1 - (1 - jac0) (1 - x/100), linearly interpolated between grid points.
/// The interval takes the first crossing of the upper band and the last
/// crossing of the lower band (grid maximum when the lower band never
/// reaches the threshold).
EcxEstimate ecx(const DiversityCurve& curve, double jac0, double x_percent);

// ---------------------------------------------------------------------------
// Conditional predictive ordinates
// ---------------------------------------------------------------------------

struct CpoReport {
  std::vector<double> per_species_log_cpo;
  double mean_log_cpo = 0.0;
  double median_log_cpo = 0.0;
  std::vector<long> degenerate_draws;  // non-finite likelihood draws per species
};

/// Harmonic-mean estimate of each species' predictive ordinate over the
/// posterior draws, computed in the log domain. The likelihood slice of a
/// species is its own factor of the factorized likelihood.
CpoReport cpo(const ChainSamples& chain, const SpeciesCountTable& table);

}  // namespace depgem
