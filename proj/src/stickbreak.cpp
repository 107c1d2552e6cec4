#include "depgem/stickbreak.hpp"

#include <algorithm>
#include <cmath>

namespace depgem {

namespace {

const double kLogClampLo = std::log(kTransformClamp);        // log(1e-12)
const double kLogClampHi = std::log1p(-kTransformClamp);     // log(1 - 1e-12)
const double kBreakUpper = std::nextafter(1.0, 0.0);

}  // namespace

double beta_inv_cdf(double u, const GemParams& params) {
  params.validate();
  if (!(u >= 0.0 && u <= 1.0))
    throw ValidationError("beta_inv_cdf: u must lie in [0,1]");
  return -std::expm1(std::log1p(-u) / params.m);
}

double g_transform(double z, double sigma_z, const GemParams& params) {
  const LogBreak lb = g_transform_log(z, sigma_z, params);
  return std::clamp(std::exp(lb.log_v), kTransformClamp,
                    1.0 - kTransformClamp);
}

LogBreak g_transform_log(double z, double sigma_z, const GemParams& params) {
  // 1 - g = Phi_c(z/sigma)^{1/M}; clamp in the log domain.
  const double log_sf = normal_logsf(z / sigma_z) / params.m;
  const double u = std::clamp(log_sf, kLogClampLo, kLogClampHi);
  return LogBreak{log1mexp(u), u};
}

WeightProfile stick_break(std::span<const double> v) {
  WeightProfile out;
  out.weights.reserve(v.size());
  double stick = 1.0;
  for (double vj : v) {
    out.weights.push_back(vj * stick);
    stick *= 1.0 - vj;
  }
  out.residual = stick;
  return out;
}

WeightProfile sample_gem(const GemParams& params, int j_max,
                         RandomStream& rng) {
  params.validate();
  if (j_max < 1) throw ValidationError("sample_gem: j_max must be >= 1");
  std::vector<double> v(static_cast<std::size_t>(j_max));
  for (double& vj : v)
    vj = std::min(beta_inv_cdf(rng.open01(), params), kBreakUpper);
  return stick_break(v);
}

Eigen::MatrixXd depgem_breaks(const GramMatrix& gm, double sigma_z,
                              const GemParams& params, int j_max,
                              RandomStream& rng) {
  const Eigen::Index n_sites = gm.size();
  Eigen::MatrixXd breaks(n_sites, j_max);
  Eigen::VectorXd xi(n_sites);
  for (int j = 0; j < j_max; ++j) {
    for (Eigen::Index i = 0; i < n_sites; ++i) xi(i) = rng.normal();
    const Eigen::VectorXd z = gm.chol.triangularView<Eigen::Lower>() * xi;
    for (Eigen::Index i = 0; i < n_sites; ++i)
      breaks(i, j) = g_transform(z(i), sigma_z, params);
  }
  return breaks;
}

std::vector<WeightProfile> sample_depgem(const KernelSpec& spec,
                                         const GemParams& params,
                                         std::span<const double> xs, int j_max,
                                         RandomStream& rng) {
  params.validate();
  if (j_max < 1) throw ValidationError("sample_depgem: j_max must be >= 1");
  const GramMatrix gm = gram(spec, xs);
  const Eigen::MatrixXd breaks =
      depgem_breaks(gm, spec.sigma_z, params, j_max, rng);
  std::vector<WeightProfile> profiles;
  profiles.reserve(xs.size());
  for (Eigen::Index i = 0; i < breaks.rows(); ++i) {
    std::vector<double> v(breaks.row(i).begin(), breaks.row(i).end());
    profiles.push_back(stick_break(v));
  }
  return profiles;
}

int pick_species(const WeightProfile& profile, RandomStream& rng) {
  double u = rng.u01();
  for (std::size_t j = 0; j < profile.weights.size(); ++j) {
    if (u < profile.weights[j]) return static_cast<int>(j) + 1;
    u -= profile.weights[j];
  }
  return static_cast<int>(profile.weights.size()) + 1;
}

double gem_moment(int j, int n, const GemParams& params) {
  params.validate();
  if (j < 1) throw ValidationError("gem_moment: j must be >= 1");
  if (n < 0) throw ValidationError("gem_moment: n must be >= 0");
  const double m = params.m;
  const double lead = rising_factorial(1.0, n) / rising_factorial(m, n);
  return lead * std::pow(m / (m + n), j);
}

double gem_mean(int j, const GemParams& params) {
  return gem_moment(j, 1, params);
}

double gem_var(int j, const GemParams& params) {
  const double mean = gem_mean(j, params);
  return gem_moment(j, 2, params) - mean * mean;
}

double gem_cov(int j, int k, const GemParams& params) {
  params.validate();
  if (j < 1 || k < 1) throw ValidationError("gem_cov: indices must be >= 1");
  if (j == k)
    throw ValidationError(
        "gem_cov: formula requires j != k; use gem_var for j == k");
  const double m = params.m;
  const int hi = std::max(j, k), lo = std::min(j, k);
  const double cross = std::pow(m, hi - 1) /
                       (std::pow(m + 1.0, std::abs(j - k) + 1) *
                        std::pow(m + 2.0, lo));
  return cross - gem_mean(j, params) * gem_mean(k, params);
}

double dependence_factor_max(const GemParams& params) {
  return 2.0 * (params.m + 1.0) / (params.m + 2.0);
}

DependenceFactor dependence_factor(const KernelSpec& spec,
                                   const GemParams& params, double x1,
                                   double x2, long n_mc, std::uint64_t seed,
                                   int threads) {
  params.validate();
  spec.validate();
  if (n_mc < 1000)
    throw ValidationError("dependence_factor: n_mc must be >= 1000");

  // Only the first break at each site matters; draw the bivariate normal
  // directly from the 2x2 correlation factor.
  const double rho = kernel_corr(spec, x1, x2);
  const double tail = std::sqrt(std::max(0.0, 1.0 - rho * rho));
  const double sigma = spec.sigma_z;

  const int n_batches = 128;
  const long per_batch = (n_mc + n_batches - 1) / n_batches;
  std::vector<double> batch_means(n_batches, 0.0);
  run_batches(seed, n_batches, threads, [&](int b, RandomStream& rng) {
    double sum = 0.0;
    for (long t = 0; t < per_batch; ++t) {
      const double e1 = rng.normal();
      const double e2 = rng.normal();
      const double z1 = sigma * e1;
      const double z2 = sigma * (rho * e1 + tail * e2);
      sum += g_transform(z1, sigma, params) * g_transform(z2, sigma, params);
    }
    batch_means[static_cast<std::size_t>(b)] =
        sum / static_cast<double>(per_batch);
  });

  const BatchSummary s = summarize_batches(batch_means);
  const double scale = (params.m + 1.0) * (params.m + 1.0);
  return DependenceFactor{scale * s.mean, scale * s.se};
}

double joint_first_pick_law(int j, int k, const GemParams& params, double mu) {
  params.validate();
  if (j < 1 || k < 1)
    throw ValidationError("joint_first_pick_law: indices must be >= 1");
  const double m = params.m;
  const double mu_max = dependence_factor_max(params);
  if (!(mu >= 1.0 - 1e-9 && mu <= mu_max + 1e-9))
    throw ValidationError(
        "joint_first_pick_law: mu outside [1, 2(M+1)/(M+2)]");
  const double b = m + 1.0;
  const double a = m * m - 1.0 + mu;
  if (j == k)
    return mu * std::pow(a, j - 1) / std::pow(b, 2 * j);
  const int lo = std::min(j, k);
  return (m + 1.0 - mu) * std::pow(m, std::abs(j - k) - 1) *
         std::pow(a, lo - 1) / std::pow(b, j + k);
}

double prob_same_species_one_site(const GemParams& params) {
  params.validate();
  return 1.0 / (2.0 * params.m + 1.0);
}

double eppf_gem(std::span<const int> cluster_sizes, const GemParams& params) {
  params.validate();
  if (cluster_sizes.empty())
    throw ValidationError("eppf_gem: cluster sizes must be nonempty");
  int n = 0;
  double log_factorials = 0.0;
  for (int nj : cluster_sizes) {
    if (nj < 1)
      throw ValidationError("eppf_gem: cluster sizes must be positive");
    n += nj;
    log_factorials += std::lgamma(static_cast<double>(nj));
  }
  const auto k = static_cast<double>(cluster_sizes.size());
  const double log_p = k * std::log(params.m) -
                       std::log(rising_factorial(params.m, n)) +
                       log_factorials;
  return std::exp(log_p);
}

std::vector<double> size_biased_permute(std::span<const double> p,
                                        RandomStream& rng) {
  double total = 0.0;
  for (double w : p) {
    if (!(w > 0.0))
      throw ValidationError("size_biased_permute: weights must be positive");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9)
    throw ValidationError("size_biased_permute: weights must sum to 1");

  std::vector<double> remaining(p.begin(), p.end());
  std::vector<double> out;
  out.reserve(p.size());
  double mass = total;
  while (!remaining.empty()) {
    double u = rng.u01() * mass;
    std::size_t pick = remaining.size() - 1;
    for (std::size_t i = 0; i < remaining.size(); ++i) {
      if (u < remaining[i]) {
        pick = i;
        break;
      }
      u -= remaining[i];
    }
    out.push_back(remaining[pick]);
    mass -= remaining[pick];
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  return out;
}

namespace {

// Sum of f over all ordered tuples of k distinct indices.
double enumerate_distinct_tuples(std::span<const double> p,
                                 const TupleFunction& f, int k) {
  const std::size_t n = p.size();
  std::vector<std::size_t> idx(static_cast<std::size_t>(k));
  std::vector<double> args(static_cast<std::size_t>(k));
  double sum = 0.0;
  std::function<void(int)> rec = [&](int depth) {
    if (depth == k) {
      for (int i = 0; i < k; ++i)
        args[static_cast<std::size_t>(i)] = p[idx[static_cast<std::size_t>(i)]];
      sum += f(args);
      return;
    }
    for (std::size_t i = 0; i < n; ++i) {
      bool used = false;
      for (int d = 0; d < depth; ++d)
        if (idx[static_cast<std::size_t>(d)] == i) used = true;
      if (used) continue;
      idx[static_cast<std::size_t>(depth)] = i;
      rec(depth + 1);
    }
  };
  rec(0);
  return sum;
}

}  // namespace

SbpCheck sbp_k_identity_check(std::span<const double> p,
                              const TupleFunction& f, int k, long n_mc,
                              RandomStream& rng) {
  if (k < 1 || static_cast<std::size_t>(k) > p.size())
    throw ValidationError("sbp_k_identity_check: need 1 <= k <= len(p)");
  if (n_mc < 1000)
    throw ValidationError("sbp_k_identity_check: n_mc must be >= 1000");

  SbpCheck out;
  out.lhs = enumerate_distinct_tuples(p, f, k);

  double mean = 0.0, m2 = 0.0;
  std::vector<double> head(static_cast<std::size_t>(k));
  for (long t = 0; t < n_mc; ++t) {
    const std::vector<double> perm = size_biased_permute(p, rng);
    double weight = 1.0, prefix = 0.0;
    for (int i = 0; i < k; ++i) {
      const double pi = perm[static_cast<std::size_t>(i)];
      head[static_cast<std::size_t>(i)] = pi;
      weight *= (1.0 - prefix) / pi;
      prefix += pi;
    }
    const double value = f(head) * weight;
    const double delta = value - mean;
    mean += delta / static_cast<double>(t + 1);
    m2 += delta * (value - mean);
  }
  out.rhs = mean;
  out.se = std::sqrt(m2 / (static_cast<double>(n_mc) *
                           static_cast<double>(n_mc - 1)));
  return out;
}

}  // namespace depgem
