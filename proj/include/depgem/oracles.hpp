// Independent Monte Carlo and quadrature verifiers for every closed-form
// result: GEM moments, Beta moments, the joint first-pick law, the partition
// probability function, size-biased permutation identities, a full-support
// smoke test, and a short prior-recovery run of the sampler. The simulation
// side never calls the closed forms it checks.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "depgem/kernels.hpp"
#include "depgem/stickbreak.hpp"

namespace depgem {

struct OracleResult {
  std::string name;
  double closed_form = 0.0;
  double mc_estimate = 0.0;
  double se = 0.0;
  double z_score = 0.0;
  bool pass = false;
};

/// |z| threshold shared by the whole suite; sized for ~30 simultaneous
/// checks.
inline constexpr double kOracleZThreshold = 4.0;

OracleResult make_oracle_result(std::string name, double closed_form,
                                double mc_estimate, double se);

/// E(p_j), E(p_j^2), Var(p_j) for j <= 4 and Cov(p_j, p_k) for j < k <= 4
/// against stick-breaking simulation.
std::vector<OracleResult> verify_gem_moments(double m, long n_mc,
                                             std::uint64_t seed,
                                             int threads = 1);

/// E(V^k (1-V)^j) under Be(alpha, beta) against numerical quadrature;
/// passes when the two agree to 1e-10.
OracleResult verify_beta_moments(double alpha, double beta, int k, int j);

/// Empirical joint first-pick frequencies at two covariates against the
/// closed-form law fed with the estimated dependence factor, plus the
/// equal-pick identity. The dependence-factor uncertainty is propagated
/// through the law's derivative.
std::vector<OracleResult> verify_joint_law(const KernelSpec& spec, double m,
                                           double x1, double x2, long n_mc,
                                           std::uint64_t seed,
                                           int threads = 1);

/// Exact partition enumeration (sums to one) and simulated partition
/// frequencies of n draws from a GEM community.
std::vector<OracleResult> verify_eppf(double m, int n, long n_mc,
                                      std::uint64_t seed, int threads = 1);

/// Size-biased permutation identity for tuple size k on a fixed profile,
/// with f the product of the tuple entries.
OracleResult verify_sbp(std::span<const double> p, int k, long n_mc,
                        std::uint64_t seed);

/// Counts prior draws within L1 distance eps of the target over its support;
/// passes when at least one draw lands inside.
OracleResult verify_full_support_smoke(const GemParams& params,
                                       std::span<const double> target,
                                       double eps, long n_mc,
                                       std::uint64_t seed);

/// Short zero-count sampler run; the chain must reproduce the prior means of
/// sigma_Z^2, lambda and M within 10%. Disabling the Hastings correction is
/// the negative control and is expected to fail.
std::vector<OracleResult> verify_sampler_prior_recovery(
    std::uint64_t seed, long sweeps = 30000, bool hastings_correction = true);

/// The full default suite. n_mc scales the common sample sizes (1.0 keeps
/// the defaults: 10^6 for scalar expectations, 10^5 for partition tallies).
std::vector<OracleResult> run_default_suite(std::uint64_t seed,
                                            int threads = 1,
                                            double n_mc_scale = 1.0,
                                            bool break_hastings = false);

/// All set partitions of {0..n-1} as block-size lists (restricted growth
/// string enumeration); exposed for the partition tally.
std::vector<std::vector<int>> set_partitions_block_sizes(int n);

}  // namespace depgem
