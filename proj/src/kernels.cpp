#include "depgem/kernels.hpp"

#include <cmath>
#include <sstream>

namespace depgem {

KernelFamily kernel_family_from_string(const std::string& name) {
  if (name == "se") return KernelFamily::SE;
  if (name == "ou") return KernelFamily::OU;
  if (name == "rq") return KernelFamily::RQ;
  throw ValidationError("unknown kernel family '" + name +
                        "' (expected se|ou|rq)");
}

std::string to_string(KernelFamily family) {
  switch (family) {
    case KernelFamily::SE: return "se";
    case KernelFamily::OU: return "ou";
    case KernelFamily::RQ: return "rq";
  }
  return "se";
}

void KernelSpec::validate() const {
  if (!(lambda > 0.0) || !std::isfinite(lambda))
    throw ValidationError("kernel length-scale must be positive");
  if (!(sigma_z > 0.0) || !std::isfinite(sigma_z))
    throw ValidationError("kernel amplitude sigma_z must be positive");
}

double kernel_corr(const KernelSpec& spec, double x1, double x2) {
  const double d = x1 - x2;
  switch (spec.family) {
    case KernelFamily::SE:
      return std::exp(-d * d / (2.0 * spec.lambda * spec.lambda));
    case KernelFamily::OU:
      return std::exp(-std::abs(d) / spec.lambda);
    case KernelFamily::RQ:
      return 1.0 / (1.0 + d * d / (2.0 * spec.lambda * spec.lambda));
  }
  return 0.0;
}

double kernel_eval(const KernelSpec& spec, double x1, double x2) {
  spec.validate();
  return spec.sigma_z * spec.sigma_z * kernel_corr(spec, x1, x2);
}

Eigen::VectorXd GramMatrix::solve(const Eigen::VectorXd& b) const {
  Eigen::VectorXd y = chol.triangularView<Eigen::Lower>().solve(b);
  return chol.transpose().triangularView<Eigen::Upper>().solve(y);
}

double GramMatrix::quad_form(const Eigen::VectorXd& z) const {
  return chol.triangularView<Eigen::Lower>().solve(z).squaredNorm();
}

namespace {

// Jitter schedule: 1e-10 * mean diagonal, escalating x10 up to 1e-4.
constexpr double kJitterStart = 1e-10;
constexpr double kJitterMax = 1e-4;

std::string closest_pair_message(std::span<const double> xs) {
  if (xs.size() < 2) return "matrix is not positive definite";
  std::size_t bi = 0, bj = 1;
  double best = std::abs(xs[0] - xs[1]);
  for (std::size_t i = 0; i < xs.size(); ++i)
    for (std::size_t j = i + 1; j < xs.size(); ++j) {
      const double d = std::abs(xs[i] - xs[j]);
      if (d < best) {
        best = d;
        bi = i;
        bj = j;
      }
    }
  std::ostringstream msg;
  msg << "Gram matrix not positive definite at maximum jitter; closest "
         "covariate pair is ("
      << xs[bi] << ", " << xs[bj] << ") at indices (" << bi << ", " << bj
      << "), distance " << best;
  return msg.str();
}

}  // namespace

GramMatrix gram_from_matrix(Eigen::MatrixXd values, std::span<const double> xs) {
  GramMatrix gm;
  gm.values = std::move(values);
  const Eigen::Index n = gm.values.rows();
  if (!gm.values.allFinite())
    throw NumericError(closest_pair_message(xs));
  const double scale = gm.values.diagonal().mean();
  for (double rel = kJitterStart; rel <= kJitterMax * 1.0001; rel *= 10.0) {
    const double jitter = rel * scale;
    Eigen::LLT<Eigen::MatrixXd> llt(
        gm.values + jitter * Eigen::MatrixXd::Identity(n, n));
    // LLT can report success on garbage input; insist on a usable factor
    if (llt.info() == Eigen::Success) {
      Eigen::MatrixXd chol = llt.matrixL();
      if (chol.allFinite() && chol.diagonal().minCoeff() > 0.0) {
        gm.chol = std::move(chol);
        gm.jitter = jitter;
        gm.log_det = 2.0 * gm.chol.diagonal().array().log().sum();
        return gm;
      }
    }
  }
  throw NumericError(closest_pair_message(xs));
}

GramMatrix gram(const KernelSpec& spec, std::span<const double> xs) {
  spec.validate();
  for (double x : xs)
    if (!std::isfinite(x))
      throw ValidationError("covariates must be finite");
  const auto n = static_cast<Eigen::Index>(xs.size());
  Eigen::MatrixXd k(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    k(i, i) = spec.sigma_z * spec.sigma_z;
    for (Eigen::Index j = i + 1; j < n; ++j) {
      k(i, j) = kernel_eval(spec, xs[i], xs[j]);
      k(j, i) = k(i, j);
    }
  }
  return gram_from_matrix(std::move(k), xs);
}

double gp_log_density(const Eigen::VectorXd& z, const GramMatrix& gm) {
  if (z.size() != gm.size())
    throw ValidationError("gp_log_density: dimension mismatch");
  const double quad = gm.quad_form(z);
  return -0.5 * quad - 0.5 * gm.log_det -
         0.5 * static_cast<double>(z.size()) * kLog2Pi;
}

}  // namespace depgem
