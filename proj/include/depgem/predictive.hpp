// Posterior-predictive evaluation at unobserved covariates: exact Gaussian
// conditioning of the latent process on the training sites, joint sampling of
// test vectors per posterior draw, and a cheaper per-point marginal sampler
// for pointwise curve summaries.

#pragma once

#include <Eigen/Dense>
#include <iosfwd>
#include <span>
#include <vector>

#include "depgem/kernels.hpp"
#include "depgem/mcmc.hpp"
#include "depgem/stickbreak.hpp"

namespace depgem {

/// Conditional law of the process at xs_star given its values z at xs:
/// mean = K(*,X) K(X,X)^{-1} z and
/// cov  = K(*,*) - K(*,X) K(X,X)^{-1} K(X,*), symmetrized.
struct ConditionResult {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

ConditionResult gp_condition(const KernelSpec& spec, std::span<const double> xs,
                             std::span<const double> xs_star,
                             const Eigen::VectorXd& z);

/// Moves test points that collide with training points (or each other) apart
/// by the minimum separation, warning once per adjustment.
std::vector<double> prepare_prediction_grid(std::span<const double> xs_star,
                                            std::span<const double> xs_train,
                                            std::ostream* warnings = nullptr);

/// Weight profiles at the test covariates for every posterior draw, sampled
/// from the joint conditional per species. Conditioning matrices are reused
/// across draws that share a length-scale. Draw d uses RNG substream d, so
/// output is reproducible for any thread count.
struct PredictiveDraws {
  std::vector<double> xs_star;
  std::vector<std::vector<WeightProfile>> weights;  // [draw][test site]
};

PredictiveDraws sample_predictive(const ChainSamples& chain,
                                  std::span<const double> xs_star,
                                  std::uint64_t seed, int threads = 1);

/// Pointwise conditional structure for a fixed grid: per grid point, the
/// weights of the training values in the conditional mean and the conditional
/// variance on the correlation (unit-amplitude) scale. Exact for quantities
/// that depend on one grid point at a time.
class MarginalPredictor {
 public:
  MarginalPredictor(KernelFamily family, std::vector<double> xs_train,
                    std::vector<double> grid);

  /// Recomputes the conditioning structure when lambda changes.
  void set_lambda(double lambda);

  const Eigen::MatrixXd& mean_coeffs() const { return coeffs_; }  // I x G
  const Eigen::VectorXd& cond_var() const { return var_; }        // size G

  /// Samples the latent value at grid point g for one species column.
  double sample(Eigen::Index g, const Eigen::VectorXd& z_col, double sigma_z,
                RandomStream& rng) const;

 private:
  KernelFamily family_;
  std::vector<double> xs_train_;
  std::vector<double> grid_;
  double lambda_ = -1.0;
  Eigen::MatrixXd coeffs_;
  Eigen::VectorXd var_;
};

}  // namespace depgem
