// Stationary covariance functions, Gram matrix construction with adaptive
// diagonal jitter, and the Gaussian-vector log density evaluated through the
// cached Cholesky factor.

#pragma once

#include <Eigen/Dense>
#include <span>
#include <string>

#include "depgem/common.hpp"

namespace depgem {

enum class KernelFamily { SE, OU, RQ };

KernelFamily kernel_family_from_string(const std::string& name);
std::string to_string(KernelFamily family);

struct KernelSpec {
  KernelFamily family = KernelFamily::SE;
  double lambda = 1.0;   // length-scale, in covariate units
  double sigma_z = 1.0;  // amplitude standard deviation

  void validate() const;
};

/// Normalized correlation K~(x1, x2) in [0, 1]; equals 1 at zero distance.
double kernel_corr(const KernelSpec& spec, double x1, double x2);

/// Covariance sigma_z^2 * K~(x1, x2).
double kernel_eval(const KernelSpec& spec, double x1, double x2);

/// Dense covariance matrix together with its Cholesky factor. The factor is
/// computed from `values` plus the smallest diagonal jitter (relative to the
/// mean diagonal) that makes the factorization succeed.
struct GramMatrix {
  Eigen::MatrixXd values;  // exact kernel values, diagonal = sigma_z^2
  Eigen::MatrixXd chol;    // lower triangular, chol * chol^T = values + jitter I
  double log_det = 0.0;    // 2 * sum(log(diag(chol)))
  double jitter = 0.0;     // diagonal jitter actually applied

  Eigen::Index size() const { return values.rows(); }

  /// Solves (values + jitter I) x = b through the factor.
  Eigen::VectorXd solve(const Eigen::VectorXd& b) const;

  /// z^T K^{-1} z via one triangular solve.
  double quad_form(const Eigen::VectorXd& z) const;
};

/// Builds the Gram matrix of `xs` under `spec`. Throws NumericError naming the
/// closest covariate pair if the factorization fails at the maximum jitter.
GramMatrix gram(const KernelSpec& spec, std::span<const double> xs);

/// Cholesky with the adaptive jitter schedule applied to an arbitrary
/// symmetric matrix (used for predictive covariances as well).
GramMatrix gram_from_matrix(Eigen::MatrixXd values,
                            std::span<const double> xs = {});

/// Multivariate normal log density of z under N(0, gm.values).
double gp_log_density(const Eigen::VectorXd& z, const GramMatrix& gm);

}  // namespace depgem
