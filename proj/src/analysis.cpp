#include "depgem/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <thread>

#include "depgem/predictive.hpp"

namespace depgem {

double simpson(const WeightProfile& p) {
  double sq = 0.0;
  for (double w : p.weights) sq += w * w;
  return 1.0 - sq;
}

double shannon(const WeightProfile& p) { return good_index(p, 1.0, 1.0); }

double good_index(const WeightProfile& p, double alpha, double beta) {
  if (alpha < 0.0 || beta < 0.0)
    throw ValidationError("good_index: alpha and beta must be >= 0");
  double sum = 0.0;
  for (double w : p.weights)
    sum += std::pow(w, alpha) * std::pow(-std::log(w), beta);
  return sum;
}

double diversity_index(const WeightProfile& p, const IndexSpec& index) {
  switch (index.kind) {
    case IndexSpec::Kind::Simpson: return simpson(p);
    case IndexSpec::Kind::Shannon: return shannon(p);
    case IndexSpec::Kind::Good:
      return good_index(p, index.alpha, index.beta);
  }
  return 0.0;
}

SimpsonMoments simpson_prior_moments(const GemParams& params) {
  params.validate();
  const double m = params.m;
  SimpsonMoments out;
  out.mean = m / (1.0 + m);
  out.variance =
      2.0 * m / ((m + 1.0) * (m + 1.0) * (m + 2.0) * (m + 3.0));
  return out;
}

double simpson_prior_variance_argmax() {
  auto var = [](double m) { return simpson_prior_moments(GemParams{m}).variance; };
  // golden-section search on the unimodal variance curve
  const double phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = 1e-3, b = 5.0;
  double c = b - phi * (b - a);
  double d = a + phi * (b - a);
  while (b - a > 1e-10) {
    if (var(c) > var(d)) {
      b = d;
    } else {
      a = c;
    }
    c = b - phi * (b - a);
    d = a + phi * (b - a);
  }
  return 0.5 * (a + b);
}

MonteCarloEstimate simpson_prior_cov(const KernelSpec& spec,
                                     const GemParams& params, double x1,
                                     double x2, long n_mc, std::uint64_t seed,
                                     int threads) {
  params.validate();
  spec.validate();
  if (n_mc < 10000)
    throw ValidationError("simpson_prior_cov: n_mc must be >= 10^4");

  const double rho = kernel_corr(spec, x1, x2);
  const double tail = std::sqrt(std::max(0.0, 1.0 - rho * rho));
  const double sigma = spec.sigma_z;

  // Per batch: estimate nu_22, om_20, om_22, nu_20, ga_22, nu_10 over break
  // pairs, then assemble the covariance so its sampling error is captured by
  // the batch spread.
  const int n_batches = 128;
  const long per_batch = (n_mc + n_batches - 1) / n_batches;
  std::vector<double> batch_cov(n_batches, 0.0);
  run_batches(seed, n_batches, threads, [&](int b, RandomStream& rng) {
    double nu22 = 0, om20 = 0, om22 = 0, nu20 = 0, ga22 = 0, nu10 = 0;
    for (long t = 0; t < per_batch; ++t) {
      const double e1 = rng.normal();
      const double e2 = rng.normal();
      const double v1 =
          g_transform(sigma * e1, sigma, params);
      const double v2 =
          g_transform(sigma * (rho * e1 + tail * e2), sigma, params);
      const double u1 = 1.0 - v1, u2 = 1.0 - v2;
      nu22 += v1 * v1 * v2 * v2;
      om20 += u1 * u1;
      om22 += u1 * u1 * u2 * u2;
      nu20 += v1 * v1;
      ga22 += v1 * v1 * u2 * u2;
      nu10 += v1;
    }
    const auto n = static_cast<double>(per_batch);
    nu22 /= n; om20 /= n; om22 /= n; nu20 /= n; ga22 /= n; nu10 /= n;
    batch_cov[static_cast<std::size_t>(b)] =
        (nu22 * (1.0 - om20) + 2.0 * nu20 * ga22) /
            ((1.0 - om20) * (1.0 - om22)) -
        nu10 * nu10;
  });
  const BatchSummary s = summarize_batches(batch_cov);
  return MonteCarloEstimate{s.mean, s.se};
}

double jaccard(const WeightProfile& p1, const WeightProfile& p2) {
  if (p1.weights.size() != p2.weights.size())
    throw ValidationError("jaccard: profiles have different truncations");
  double min_sum = 0.0, max_sum = 0.0;
  for (std::size_t j = 0; j < p1.weights.size(); ++j) {
    min_sum += std::min(p1.weights[j], p2.weights[j]);
    max_sum += std::max(p1.weights[j], p2.weights[j]);
  }
  if (max_sum == 0.0) return 0.0;
  return 1.0 - min_sum / max_sum;
}

namespace {

// Pointwise mean and central 95% band over per-draw curve values.
DiversityCurve summarize_curve(std::span<const double> grid,
                               std::vector<std::vector<double>>& per_draw) {
  DiversityCurve out;
  out.grid.assign(grid.begin(), grid.end());
  const std::size_t n_draws = per_draw.size();
  const std::size_t n_grid = grid.size();
  out.mean.resize(n_grid);
  out.lo95.resize(n_grid);
  out.hi95.resize(n_grid);
  std::vector<double> column(n_draws);
  auto quantile = [&](double q) {
    const double pos = q * static_cast<double>(n_draws - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, n_draws - 1);
    const double w = pos - std::floor(pos);
    return (1.0 - w) * column[lo] + w * column[hi];
  };
  for (std::size_t g = 0; g < n_grid; ++g) {
    double sum = 0.0;
    for (std::size_t d = 0; d < n_draws; ++d) {
      column[d] = per_draw[d][g];
      sum += column[d];
    }
    out.mean[g] = sum / static_cast<double>(n_draws);
    std::sort(column.begin(), column.end());
    out.lo95[g] = quantile(0.025);
    out.hi95[g] = quantile(0.975);
  }
  return out;
}

// Stick-break the species breaks of one site row of a latent draw.
WeightProfile profile_from_latent(const LatentState& draw, Eigen::Index site) {
  const GemParams gem{draw.m};
  std::vector<double> v(static_cast<std::size_t>(draw.z.cols()));
  for (Eigen::Index j = 0; j < draw.z.cols(); ++j)
    v[static_cast<std::size_t>(j)] =
        g_transform(draw.z(site, j), draw.sigma_z, gem);
  return stick_break(v);
}

// Runs fn(predictor, d) over contiguous draw chunks; each worker owns one
// conditioning structure so lambda caching never crosses threads. Draw d
// always uses RNG substream d, keeping results thread-count independent.
void for_each_draw(const ChainSamples& chain, const std::vector<double>& grid,
                   int threads,
                   const std::function<void(MarginalPredictor&, std::size_t)>& fn) {
  const std::size_t n_draws = chain.draws.size();
  const int workers =
      std::max(1, std::min<int>(threads, static_cast<int>(n_draws)));
  auto run_chunk = [&](std::size_t b, std::size_t e) {
    MarginalPredictor predictor(chain.config.kernel, chain.covariates, grid);
    for (std::size_t d = b; d < e; ++d) fn(predictor, d);
  };
  if (workers == 1) {
    run_chunk(0, n_draws);
    return;
  }
  std::vector<std::thread> pool;
  const std::size_t chunk = (n_draws + workers - 1) / workers;
  for (int w = 0; w < workers; ++w) {
    const std::size_t b = static_cast<std::size_t>(w) * chunk;
    const std::size_t e = std::min(n_draws, b + chunk);
    if (b < e) pool.emplace_back(run_chunk, b, e);
  }
  for (auto& t : pool) t.join();
}

}  // namespace

DiversityCurve diversity_curve(const ChainSamples& chain,
                               const SpeciesCountTable& table,
                               std::span<const double> grid,
                               const IndexSpec& index, std::uint64_t seed,
                               int threads) {
  if (chain.draws.empty()) throw ValidationError("diversity_curve: empty chain");
  if (grid.empty()) throw ValidationError("diversity_curve: empty grid");

  const std::vector<double> grid_sep =
      prepare_prediction_grid(grid, chain.covariates);
  const std::size_t n_draws = chain.draws.size();
  std::vector<std::vector<double>> per_draw(
      n_draws, std::vector<double>(grid.size(), 0.0));

  for_each_draw(chain, grid_sep, threads,
                [&](MarginalPredictor& predictor, std::size_t d) {
    const LatentState& draw = chain.draws[d];
    predictor.set_lambda(draw.lambda);
    RandomStream rng(seed, static_cast<std::uint64_t>(d));
    const GemParams gem{draw.m};
    std::vector<double> v(static_cast<std::size_t>(draw.z.cols()));
    for (std::size_t g = 0; g < grid_sep.size(); ++g) {
      for (Eigen::Index j = 0; j < draw.z.cols(); ++j) {
        const double z_star = predictor.sample(
            static_cast<Eigen::Index>(g), draw.z.col(j), draw.sigma_z, rng);
        v[static_cast<std::size_t>(j)] =
            g_transform(z_star, draw.sigma_z, gem);
      }
      per_draw[d][g] = diversity_index(stick_break(v), index);
    }
  });

  DiversityCurve out = summarize_curve(grid, per_draw);
  const Eigen::MatrixXd props = empirical_proportions(table);
  for (Eigen::Index i = 0; i < table.n_sites(); ++i) {
    WeightProfile p;
    p.weights.assign(props.row(i).begin(), props.row(i).end());
    std::erase_if(p.weights, [](double w) { return w <= 0.0; });
    out.empirical.emplace_back(table.covariates[static_cast<std::size_t>(i)],
                               diversity_index(p, index));
  }
  return out;
}

DissimilarityCurve dissimilarity_curve(const ChainSamples& chain,
                                       const SpeciesCountTable& table,
                                       std::span<const double> grid,
                                       std::span<const Eigen::Index> baseline,
                                       std::uint64_t seed, int threads) {
  if (chain.draws.empty())
    throw ValidationError("dissimilarity_curve: empty chain");
  if (baseline.size() < 2)
    throw ValidationError(
        "dissimilarity_curve: need at least two baseline sites to define the "
        "baseline variability");
  for (Eigen::Index b : baseline)
    if (b < 0 || b >= table.n_sites())
      throw ValidationError("dissimilarity_curve: baseline index out of range");

  const std::vector<double> grid_sep =
      prepare_prediction_grid(grid, chain.covariates);
  const std::size_t n_draws = chain.draws.size();
  std::vector<std::vector<double>> per_draw(
      n_draws, std::vector<double>(grid.size(), 0.0));
  std::vector<double> jac0_draws(n_draws, 0.0);

  for_each_draw(chain, grid_sep, threads,
                [&](MarginalPredictor& predictor, std::size_t d) {
    const LatentState& draw = chain.draws[d];
    predictor.set_lambda(draw.lambda);
    RandomStream rng(seed, static_cast<std::uint64_t>(d));
    const GemParams gem{draw.m};

    std::vector<WeightProfile> base_profiles;
    base_profiles.reserve(baseline.size());
    for (Eigen::Index b : baseline)
      base_profiles.push_back(profile_from_latent(draw, b));

    double jac0 = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < base_profiles.size(); ++a)
      for (std::size_t b = a + 1; b < base_profiles.size(); ++b) {
        jac0 += jaccard(base_profiles[a], base_profiles[b]);
        ++pairs;
      }
    jac0_draws[d] = jac0 / static_cast<double>(pairs);

    std::vector<double> v(static_cast<std::size_t>(draw.z.cols()));
    for (std::size_t g = 0; g < grid_sep.size(); ++g) {
      for (Eigen::Index j = 0; j < draw.z.cols(); ++j) {
        const double z_star = predictor.sample(
            static_cast<Eigen::Index>(g), draw.z.col(j), draw.sigma_z, rng);
        v[static_cast<std::size_t>(j)] =
            g_transform(z_star, draw.sigma_z, gem);
      }
      const WeightProfile at_x = stick_break(v);
      double jac = 0.0;
      for (const WeightProfile& base : base_profiles)
        jac += jaccard(at_x, base);
      per_draw[d][g] = jac / static_cast<double>(base_profiles.size());
    }
  });

  DissimilarityCurve out;
  out.curve = summarize_curve(grid, per_draw);
  double jac0_sum = 0.0;
  for (double j0 : jac0_draws) jac0_sum += j0;
  out.jac0 = jac0_sum / static_cast<double>(n_draws);
  return out;
}

namespace {

// First up-crossing of `curve` through `t`, linearly interpolated; returns
// the grid maximum when the curve never reaches the threshold.
double first_crossing(std::span<const double> grid,
                      std::span<const double> curve, double t, bool* found) {
  if (curve[0] >= t) {
    if (found) *found = true;
    return grid[0];
  }
  for (std::size_t g = 1; g < curve.size(); ++g) {
    if (curve[g] >= t) {
      if (found) *found = true;
      const double w = (t - curve[g - 1]) / (curve[g] - curve[g - 1]);
      return grid[g - 1] + w * (grid[g] - grid[g - 1]);
    }
  }
  if (found) *found = false;
  return grid.back();
}

double last_crossing(std::span<const double> grid,
                     std::span<const double> curve, double t) {
  for (std::size_t g = curve.size(); g-- > 1;) {
    if (curve[g] >= t && curve[g - 1] < t) {
      const double w = (t - curve[g - 1]) / (curve[g] - curve[g - 1]);
      return grid[g - 1] + w * (grid[g] - grid[g - 1]);
    }
  }
  if (curve[0] >= t) return grid[0];
  return grid.back();
}

}  // namespace

EcxEstimate ecx(const DiversityCurve& curve, double jac0, double x_percent) {
  if (!(x_percent >= 0.0 && x_percent <= 100.0))
    throw ValidationError("ecx: x must lie in [0, 100]");
  if (curve.grid.size() < 2) throw ValidationError("ecx: grid too small");
  for (std::size_t g = 1; g < curve.grid.size(); ++g)
    if (!(curve.grid[g] > curve.grid[g - 1]))
      throw ValidationError("ecx: grid must be sorted ascending");

  const double t = 1.0 - (1.0 - jac0) * (1.0 - x_percent / 100.0);
  EcxEstimate out;
  out.x_percent = x_percent;
  out.ec = first_crossing(curve.grid, curve.mean, t, &out.reached);
  // conservative interval: earliest crossing of the upper band, latest
  // crossing of the lower band
  out.ci_lo = first_crossing(curve.grid, curve.hi95, t, nullptr);
  out.ci_hi = last_crossing(curve.grid, curve.lo95, t);
  return out;
}

CpoReport cpo(const ChainSamples& chain, const SpeciesCountTable& table) {
  const auto t_count = static_cast<long>(chain.draws.size());
  if (t_count < 1) throw ValidationError("cpo: empty chain");
  const Eigen::Index j_count = table.n_species();
  const Eigen::Index i_count = table.n_sites();
  if (!chain.draws.empty() && (chain.draws[0].z.cols() != j_count ||
                               chain.draws[0].z.rows() != i_count))
    throw ValidationError("cpo: chain and table dimensions do not match");

  // tails(i, j) = sum of counts of later species at site i
  Eigen::MatrixXd tails(i_count, j_count);
  for (Eigen::Index i = 0; i < i_count; ++i) {
    double acc = 0.0;
    for (Eigen::Index j = j_count - 1; j >= 0; --j) {
      tails(i, j) = acc;
      acc += table.counts(i, j);
    }
  }

  CpoReport out;
  out.per_species_log_cpo.resize(static_cast<std::size_t>(j_count));
  out.degenerate_draws.assign(static_cast<std::size_t>(j_count), 0);
  std::vector<double> neg_ll(static_cast<std::size_t>(t_count));
  for (Eigen::Index j = 0; j < j_count; ++j) {
    std::size_t kept = 0;
    for (long t = 0; t < t_count; ++t) {
      const LatentState& draw = chain.draws[static_cast<std::size_t>(t)];
      const GemParams gem{draw.m};
      double ll = 0.0;
      for (Eigen::Index i = 0; i < i_count; ++i) {
        const double n = table.counts(i, j);
        const double tl = tails(i, j);
        if (n == 0.0 && tl == 0.0) continue;
        const LogBreak lb = g_transform_log(draw.z(i, j), draw.sigma_z, gem);
        ll += n * lb.log_v + tl * lb.log_1mv;
      }
      if (std::isfinite(ll)) {
        neg_ll[kept++] = -ll;
      } else {
        ++out.degenerate_draws[static_cast<std::size_t>(j)];
      }
    }
    if (kept == 0)
      throw NumericError("cpo: species " + std::to_string(j) +
                         " has no finite-likelihood draws");
    // log CPO_j = log T' - logsumexp_t(-log L_jt)
    const double lse = logsumexp(std::span(neg_ll.data(), kept));
    out.per_species_log_cpo[static_cast<std::size_t>(j)] =
        std::log(static_cast<double>(kept)) - lse;
  }

  std::vector<double> sorted = out.per_species_log_cpo;
  std::sort(sorted.begin(), sorted.end());
  double sum = 0.0;
  for (double v : sorted) sum += v;
  out.mean_log_cpo = sum / static_cast<double>(sorted.size());
  const std::size_t mid = sorted.size() / 2;
  out.median_log_cpo = sorted.size() % 2 == 1
                           ? sorted[mid]
                           : 0.5 * (sorted[mid - 1] + sorted[mid]);
  return out;
}

}  // namespace depgem
