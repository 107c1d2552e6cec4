#include "depgem/predictive.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <thread>

namespace depgem {

namespace {

Eigen::MatrixXd cross_kernel(const KernelSpec& spec,
                             std::span<const double> a,
                             std::span<const double> b) {
  Eigen::MatrixXd k(static_cast<Eigen::Index>(a.size()),
                    static_cast<Eigen::Index>(b.size()));
  for (Eigen::Index i = 0; i < k.rows(); ++i)
    for (Eigen::Index j = 0; j < k.cols(); ++j)
      k(i, j) = kernel_eval(spec, a[static_cast<std::size_t>(i)],
                            b[static_cast<std::size_t>(j)]);
  return k;
}

}  // namespace

ConditionResult gp_condition(const KernelSpec& spec, std::span<const double> xs,
                             std::span<const double> xs_star,
                             const Eigen::VectorXd& z) {
  if (z.size() != static_cast<Eigen::Index>(xs.size()))
    throw ValidationError("gp_condition: z length does not match xs");
  const GramMatrix kxx = gram(spec, xs);
  const Eigen::MatrixXd kxs = cross_kernel(spec, xs, xs_star);  // I x I*
  Eigen::MatrixXd kss(static_cast<Eigen::Index>(xs_star.size()),
                      static_cast<Eigen::Index>(xs_star.size()));
  for (Eigen::Index a = 0; a < kss.rows(); ++a) {
    kss(a, a) = spec.sigma_z * spec.sigma_z;
    for (Eigen::Index b = a + 1; b < kss.cols(); ++b) {
      kss(a, b) = kernel_eval(spec, xs_star[static_cast<std::size_t>(a)],
                              xs_star[static_cast<std::size_t>(b)]);
      kss(b, a) = kss(a, b);
    }
  }

  // Solve K(X,X)^{-1} [z | K(X,*)] through the Cholesky factor.
  ConditionResult out;
  out.mean = kxs.transpose() * kxx.solve(z);
  Eigen::MatrixXd w(kxs.rows(), kxs.cols());
  for (Eigen::Index c = 0; c < kxs.cols(); ++c)
    w.col(c) = kxx.solve(kxs.col(c));
  out.cov = kss - kxs.transpose() * w;
  out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  return out;
}

std::vector<double> prepare_prediction_grid(std::span<const double> xs_star,
                                            std::span<const double> xs_train,
                                            std::ostream* warnings) {
  double lo = xs_train.empty() ? 0.0 : xs_train[0];
  double hi = lo;
  for (double x : xs_train) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  const double range = hi - lo;
  const double min_sep = range > 0.0 ? 1e-9 * range : 1e-9;

  std::vector<double> out(xs_star.begin(), xs_star.end());
  auto collides = [&](double x, std::size_t upto) {
    for (double t : xs_train)
      if (std::abs(x - t) < min_sep) return true;
    for (std::size_t s = 0; s < upto; ++s)
      if (std::abs(x - out[s]) < min_sep) return true;
    return false;
  };
  for (std::size_t s = 0; s < out.size(); ++s) {
    if (!collides(out[s], s)) continue;
    double shifted = out[s];
    do {
      shifted += min_sep;
    } while (collides(shifted, s));
    if (warnings)
      *warnings << "warning: test covariate " << out[s]
                << " collides with an existing point; shifted to " << shifted
                << "\n";
    out[s] = shifted;
  }
  return out;
}

PredictiveDraws sample_predictive(const ChainSamples& chain,
                                  std::span<const double> xs_star,
                                  std::uint64_t seed, int threads) {
  if (chain.draws.empty())
    throw ValidationError("sample_predictive: chain has no draws");
  if (xs_star.empty())
    throw ValidationError("sample_predictive: empty test grid");

  PredictiveDraws out;
  out.xs_star.assign(xs_star.begin(), xs_star.end());
  const std::size_t n_draws = chain.draws.size();
  const auto n_star = static_cast<Eigen::Index>(xs_star.size());
  out.weights.resize(n_draws);

  const std::vector<double>& xs = chain.covariates;
  const KernelFamily family = chain.config.kernel;

  // Conditioning on the correlation scale; sigma_z of the draw rescales both
  // the mean (through z) and the noise.
  struct Conditioner {
    double lambda = -1.0;
    Eigen::MatrixXd mean_op;  // I* x I
    Eigen::MatrixXd noise_chol;
  };

  auto process_range = [&](std::size_t d_begin, std::size_t d_end) {
    Conditioner cond;
    for (std::size_t d = d_begin; d < d_end; ++d) {
      const LatentState& draw = chain.draws[d];
      if (draw.lambda != cond.lambda) {
        const KernelSpec corr{family, draw.lambda, 1.0};
        const GramMatrix kxx = gram(corr, xs);
        const Eigen::MatrixXd kxs = cross_kernel(corr, xs, out.xs_star);
        Eigen::MatrixXd w(kxs.rows(), kxs.cols());
        for (Eigen::Index c = 0; c < kxs.cols(); ++c)
          w.col(c) = kxx.solve(kxs.col(c));
        cond.mean_op = w.transpose();
        Eigen::MatrixXd kss(n_star, n_star);
        for (Eigen::Index a = 0; a < n_star; ++a) {
          kss(a, a) = 1.0;
          for (Eigen::Index b = a + 1; b < n_star; ++b) {
            kss(a, b) = kernel_corr(corr, out.xs_star[static_cast<std::size_t>(a)],
                                    out.xs_star[static_cast<std::size_t>(b)]);
            kss(b, a) = kss(a, b);
          }
        }
        Eigen::MatrixXd cov = kss - kxs.transpose() * w;
        cov = 0.5 * (cov + cov.transpose()).eval();
        cond.noise_chol = gram_from_matrix(std::move(cov), out.xs_star).chol;
        cond.lambda = draw.lambda;
      }

      RandomStream rng(seed, static_cast<std::uint64_t>(d));
      const GemParams gem{draw.m};
      const Eigen::Index j_count = draw.z.cols();
      Eigen::MatrixXd star_breaks(n_star, j_count);
      Eigen::VectorXd xi(n_star);
      for (Eigen::Index j = 0; j < j_count; ++j) {
        for (Eigen::Index s = 0; s < n_star; ++s) xi(s) = rng.normal();
        const Eigen::VectorXd noise =
            cond.noise_chol.triangularView<Eigen::Lower>() * xi;
        const Eigen::VectorXd z_star =
            cond.mean_op * draw.z.col(j) + draw.sigma_z * noise;
        for (Eigen::Index s = 0; s < n_star; ++s)
          star_breaks(s, j) = g_transform(z_star(s), draw.sigma_z, gem);
      }
      std::vector<WeightProfile> profiles;
      profiles.reserve(static_cast<std::size_t>(n_star));
      for (Eigen::Index s = 0; s < n_star; ++s) {
        std::vector<double> v(star_breaks.row(s).begin(),
                              star_breaks.row(s).end());
        profiles.push_back(stick_break(v));
      }
      out.weights[d] = std::move(profiles);
    }
  };

  const int workers = std::max(
      1, std::min<int>(threads, static_cast<int>(n_draws)));
  if (workers == 1) {
    process_range(0, n_draws);
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (n_draws + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      const std::size_t b = static_cast<std::size_t>(w) * chunk;
      const std::size_t e = std::min(n_draws, b + chunk);
      if (b < e) pool.emplace_back(process_range, b, e);
    }
    for (auto& t : pool) t.join();
  }
  return out;
}

MarginalPredictor::MarginalPredictor(KernelFamily family,
                                     std::vector<double> xs_train,
                                     std::vector<double> grid)
    : family_(family),
      xs_train_(std::move(xs_train)),
      grid_(std::move(grid)) {}

void MarginalPredictor::set_lambda(double lambda) {
  if (lambda == lambda_) return;
  const KernelSpec corr{family_, lambda, 1.0};
  const GramMatrix kxx = gram(corr, xs_train_);
  const auto i_count = static_cast<Eigen::Index>(xs_train_.size());
  const auto g_count = static_cast<Eigen::Index>(grid_.size());
  coeffs_.resize(i_count, g_count);
  var_.resize(g_count);
  Eigen::VectorXd k(i_count);
  for (Eigen::Index g = 0; g < g_count; ++g) {
    for (Eigen::Index i = 0; i < i_count; ++i)
      k(i) = kernel_corr(corr, xs_train_[static_cast<std::size_t>(i)],
                         grid_[static_cast<std::size_t>(g)]);
    coeffs_.col(g) = kxx.solve(k);
    var_(g) = std::max(0.0, 1.0 - k.dot(coeffs_.col(g)));
  }
  lambda_ = lambda;
}

double MarginalPredictor::sample(Eigen::Index g, const Eigen::VectorXd& z_col,
                                 double sigma_z, RandomStream& rng) const {
  const double mean = coeffs_.col(g).dot(z_col);
  return mean + sigma_z * std::sqrt(var_(g)) * rng.normal();
}

}  // namespace depgem
