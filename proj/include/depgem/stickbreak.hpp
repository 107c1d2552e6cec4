// GEM and covariate-dependent GEM distributions: the inverse-CDF transform of
// Gaussian values into Be(1,M) stick breaks, stick-breaking itself, prior
// samplers, and the closed-form moments, joint pick laws, partition
// probabilities and size-biased permutation identities of the model.

#pragma once

#include <Eigen/Dense>
#include <functional>
#include <span>
#include <vector>

#include "depgem/common.hpp"
#include "depgem/kernels.hpp"

namespace depgem {

/// Precision parameter M of the GEM distribution. Small M concentrates mass
/// on the leading species; large M spreads it over many.
struct GemParams {
  double m = 1.0;

  void validate() const {
    if (!(m > 0.0) || !std::isfinite(m))
      throw ValidationError("GEM precision M must be positive");
  }
};

/// Truncated stick-breaking weights plus the untouched residual mass.
struct WeightProfile {
  std::vector<double> weights;  // p_1..p_J, each in (0,1)
  double residual = 0.0;        // prod_j (1 - v_j)
};

/// Be(1,M) quantile function F^{-1}(u) = 1 - (1-u)^{1/M}.
double beta_inv_cdf(double u, const GemParams& params);

/// Weight clamp applied inside transforms so log-likelihoods stay finite.
inline constexpr double kTransformClamp = 1e-12;

/// Transform of a Gaussian value into a Be(1,M) break:
/// g(z) = F^{-1}(Phi(z / sigma_z)), clamped to [1e-12, 1 - 1e-12].
double g_transform(double z, double sigma_z, const GemParams& params);

/// log g and log(1-g) of the transform, computed in the log domain so deep
/// normal tails cannot underflow before the clamp applies.
struct LogBreak {
  double log_v;
  double log_1mv;
};
LogBreak g_transform_log(double z, double sigma_z, const GemParams& params);

/// p_j = v_j * prod_{l<j} (1 - v_l); residual = prod_j (1 - v_j).
WeightProfile stick_break(std::span<const double> v);

/// i.i.d. Be(1,M) breaks fed through stick_break.
WeightProfile sample_gem(const GemParams& params, int j_max, RandomStream& rng);

/// Correlated break rows for the sites whose Gram matrix is `gm`: one
/// Gaussian vector per break depth, transformed entrywise. Row i holds the
/// breaks of site i.
Eigen::MatrixXd depgem_breaks(const GramMatrix& gm, double sigma_z,
                              const GemParams& params, int j_max,
                              RandomStream& rng);

/// Dependent GEM prior draw: one weight profile per site in `xs`.
std::vector<WeightProfile> sample_depgem(const KernelSpec& spec,
                                         const GemParams& params,
                                         std::span<const double> xs, int j_max,
                                         RandomStream& rng);

/// Draws one observation index (1-based) from a weight profile; indices past
/// the truncation (residual hits) return weights.size() + 1.
int pick_species(const WeightProfile& profile, RandomStream& rng);

// ---------------------------------------------------------------------------
// Closed-form marginal quantities
// ---------------------------------------------------------------------------

/// E(p_j^n) = (n! / M_(n)) * (M / (M+n))^j.
double gem_moment(int j, int n, const GemParams& params);

/// E(p_j) = M^{j-1} / (M+1)^j.
double gem_mean(int j, const GemParams& params);

double gem_var(int j, const GemParams& params);

/// Cov(p_j, p_k) for j != k; throws for j == k (the formula does not reduce
/// to the variance there).
double gem_cov(int j, int k, const GemParams& params);

/// Dependence factor mu = (M+1)^2 E(V(x1) V(x2)) with its Monte Carlo
/// standard error; mu has no closed form and is always estimated.
struct DependenceFactor {
  double mu = 1.0;
  double std_error = 0.0;
};

DependenceFactor dependence_factor(const KernelSpec& spec,
                                   const GemParams& params, double x1,
                                   double x2, long n_mc, std::uint64_t seed,
                                   int threads = 1);

/// Upper bound 2(M+1)/(M+2) attained when the two covariates coincide.
double dependence_factor_max(const GemParams& params);

/// P(first pick at x1 = j, first pick at x2 = k) given the dependence factor.
double joint_first_pick_law(int j, int k, const GemParams& params, double mu);

/// P(two picks from independent communities agree) = 1 / (2M + 1).
double prob_same_species_one_site(const GemParams& params);

/// Exchangeable partition probability M^k / M_(n) * prod_j (n_j - 1)!.
double eppf_gem(std::span<const int> cluster_sizes, const GemParams& params);

// ---------------------------------------------------------------------------
// Size-biased permutations
// ---------------------------------------------------------------------------

/// Random reordering where each index is picked with probability proportional
/// to its weight among the remaining ones. Input must sum to 1.
std::vector<double> size_biased_permute(std::span<const double> p,
                                        RandomStream& rng);

/// Checks the identity
///   E[ sum over distinct tuples f(p_{i_1},..,p_{i_k}) ]
///     = E[ f(pt_1,..,pt_k) * prod_i (1 - pt_1 - .. - pt_{i-1}) / pt_i ]
/// for a fixed finite profile: lhs by exact enumeration, rhs by Monte Carlo.
struct SbpCheck {
  double lhs = 0.0;
  double rhs = 0.0;
  double se = 0.0;
};

using TupleFunction = std::function<double(std::span<const double>)>;

SbpCheck sbp_k_identity_check(std::span<const double> p,
                              const TupleFunction& f, int k, long n_mc,
                              RandomStream& rng);

}  // namespace depgem
