// Metropolis-within-Gibbs sampler over (Z, sigma_Z, lambda, M): per-species
// correlated random-walk updates of the Gaussian values and truncated-normal
// random walks on the three positive scalars, with Robbins-Monro scale
// adaptation frozen at the end of burn-in.

#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "depgem/data.hpp"
#include "depgem/kernels.hpp"
#include "depgem/stickbreak.hpp"

namespace depgem {

/// Conjugate-style hyperpriors: inverse-Gamma on sigma_Z^2 and on lambda,
/// Gamma on M.
struct HyperPriors {
  double a_z = 1.0, b_z = 1.0;
  double a_lambda = 1.0, b_lambda = 1.0;
  double a_m = 1.0, b_m = 1.0;

  void validate() const;
};

/// Current sampler position. z holds one column per species.
struct LatentState {
  Eigen::MatrixXd z;  // I x J
  double sigma_z = 1.0;
  double lambda = 1.0;
  double m = 1.0;
};

struct ProposalScales {
  double s_z = 0.3;
  double s_sigma = 0.3;
  double s_scale = 0.3;  // sd of log c in the joint rescaling move
  double s_lambda = 0.3;
  double s_m = 0.3;
  double s_m_transport = 0.3;

  void validate() const;
};

struct AcceptanceRates {
  double z = 0.0;
  double sigma_z = 0.0;
  double scale = 0.0;
  double lambda = 0.0;
  double m = 0.0;
  double m_transport = 0.0;
};

// ---------------------------------------------------------------------------
// Log densities
// ---------------------------------------------------------------------------

/// Factorized likelihood: sum over species and sites of
/// N_ij log g(Z_ij) + Nbar_{i,j+1} log(1 - g(Z_ij)), with the tail count
/// Nbar_{i,j+1} summing all later species at the site.
double log_likelihood(const LatentState& state, const SpeciesCountTable& table);

/// Likelihood plus GP prior of every species column plus the hyperprior
/// densities (inverse-Gamma evaluated at sigma_Z^2 and lambda, Gamma at M).
double log_posterior(const LatentState& state, const SpeciesCountTable& table,
                     const HyperPriors& priors, KernelFamily family);

// ---------------------------------------------------------------------------
// Metropolis-Hastings steps
// ---------------------------------------------------------------------------

enum class ProposalKind { Gaussian, TruncatedGaussian };

struct MhResult {
  double value;
  bool accepted;
};

/// One random-walk step on a scalar. The truncated proposal resamples until
/// positive and corrects the acceptance ratio by Phi(x/s)/Phi(x'/s); passing
/// hastings_correction = false reproduces the (wrong) uncorrected kernel used
/// as a negative control. A NaN from log_target rejects the proposal.
MhResult mh_step(const std::function<double(double)>& log_target,
                 ProposalKind kind, double current, double scale,
                 RandomStream& rng, bool hastings_correction = true);

struct MhVectorResult {
  Eigen::VectorXd value;
  bool accepted;
};

/// Symmetric Gaussian step with covariance scale^2 * chol chol^T.
MhVectorResult mh_step_correlated(
    const std::function<double(const Eigen::VectorXd&)>& log_target,
    const Eigen::MatrixXd& chol, const Eigen::VectorXd& current, double scale,
    RandomStream& rng);

// ---------------------------------------------------------------------------
// Sampler
// ---------------------------------------------------------------------------

class GibbsSampler {
 public:
  /// `table` must outlive the sampler. Each species block draws from its own
  /// RNG substream of `seed`, so sweeps are reproducible for any thread
  /// count.
  GibbsSampler(const SpeciesCountTable& table, KernelFamily family,
               const HyperPriors& priors, LatentState init,
               const ProposalScales& scales, std::uint64_t seed,
               int threads = 1, bool hastings_correction = true);

  /// One full sweep: every Z_j block, then sigma_Z, the joint rescaling
  /// move, lambda, and M.
  void sweep();

  void update_z_blocks();
  void update_sigma();
  /// Joint multiplicative move (Z, sigma_Z) -> (c Z, c sigma_Z). The data law
  /// depends on Z only through Z / sigma_Z, which makes (Z, sigma_Z) a ridge
  /// that per-block updates cross at a rate of about sigma / sqrt(I J);
  /// rescaling both together walks along the ridge directly.
  void update_scale();
  void update_lambda();
  /// Joint move of (lambda, Z) holding the whitened field L^{-1} Z fixed.
  /// The Gaussian prior score and the Jacobian cancel exactly, so the
  /// length-scale is gated by the likelihood instead of by the current Z.
  void update_lambda_whitened();
  void update_m();
  /// Joint move of (M, Z) that transports every Gaussian value so the break
  /// it maps to stays fixed. The break field is what the counts pin down, so
  /// plain M steps are gated by the current Z; moving both at once lets the
  /// precision mix at the rate of its marginal posterior.
  void update_m_transport();

  void set_adaptation(bool on) { adapting_ = on; }
  const LatentState& state() const { return state_; }
  const ProposalScales& scales() const { return scales_; }
  double total_log_likelihood() const { return loglik_.sum(); }
  /// Assembled from cached quantities; matches log_posterior() up to the
  /// Gram jitter.
  double log_posterior_value() const;
  AcceptanceRates acceptance() const;
  void reset_acceptance();

 private:
  double species_loglik(const Eigen::VectorXd& z_col, Eigen::Index j,
                        double sigma, double m) const;
  double scalar_prior_sigma(double s) const;
  double scalar_prior_lambda(double l) const;
  double scalar_prior_m(double m) const;
  void adapt(double& scale, long& steps, double rate, double target);

  const SpeciesCountTable& table_;
  Eigen::MatrixXd tails_;  // Nbar_{i,j+1}
  KernelFamily family_;
  HyperPriors priors_;
  LatentState state_;
  ProposalScales scales_;
  int threads_;
  bool hastings_;
  bool adapting_ = true;
  long adapt_z_steps_ = 0, adapt_sigma_steps_ = 0, adapt_scale_steps_ = 0;
  long adapt_lambda_steps_ = 0, adapt_m_steps_ = 0, adapt_mt_steps_ = 0;

  GramMatrix corr_;        // normalized Gram of the covariates at lambda
  Eigen::VectorXd quad_;   // z_j^T Ktilde^{-1} z_j per species
  Eigen::VectorXd loglik_; // likelihood contribution per species

  RandomStream main_rng_;
  std::vector<RandomStream> species_rng_;

  long long accept_z_ = 0, total_z_ = 0;
  long long accept_sigma_ = 0, total_sigma_ = 0;
  long long accept_scale_ = 0, total_scale_ = 0;
  long long accept_lambda_ = 0, total_lambda_ = 0;
  long long accept_m_ = 0, total_m_ = 0;
  long long accept_mt_ = 0, total_mt_ = 0;
};

/// Single-sweep convenience wrapper around GibbsSampler.
LatentState gibbs_sweep(const LatentState& state,
                        const SpeciesCountTable& table,
                        const HyperPriors& priors,
                        const ProposalScales& scales, KernelFamily family,
                        std::uint64_t seed);

// ---------------------------------------------------------------------------
// Chain driver
// ---------------------------------------------------------------------------

struct ChainConfig {
  long iterations = 50000;
  long burn_in = 10000;
  long thin = 5;
  std::uint64_t seed = 1;
  KernelFamily kernel = KernelFamily::SE;
  HyperPriors priors;
  int threads = 1;
  bool hastings_correction = true;
  std::optional<LatentState> init;  // default: Z=0, sigma=1, lambda=range/2, M=1

  void validate() const;
};

struct ChainSamples {
  std::vector<LatentState> draws;       // post burn-in, thinned
  std::vector<double> log_posterior;    // one value per draw
  AcceptanceRates acceptance;           // post burn-in rates
  ChainConfig config;
  ProposalScales adapted_scales;
  // data echo for downstream consumers
  std::vector<std::string> site_ids;
  std::vector<double> covariates;
  std::vector<std::string> species_ids;
};

/// Runs the sampler on the table; deterministic given (config, table).
/// Requires at least two sites with pairwise-distinct covariates.
ChainSamples run_chain(const SpeciesCountTable& table,
                       const ChainConfig& config);

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

struct SeriesDiagnostics {
  std::string name;
  std::vector<double> acf;  // lags 0..min(100, n-1)
  double ess = 0.0;
};

struct ChainDiagnostics {
  std::vector<SeriesDiagnostics> series;  // sigma_z, lambda, m, log_posterior
  AcceptanceRates acceptance;
};

/// Autocorrelation of a scalar trace at lags 0..max_lag.
std::vector<double> autocorrelation(std::span<const double> values,
                                    int max_lag);

/// Effective sample size via Geyer's initial positive sequence estimator.
double effective_sample_size(std::span<const double> values);

/// Requires at least 10 draws.
ChainDiagnostics diagnostics(const ChainSamples& chain);

}  // namespace depgem
