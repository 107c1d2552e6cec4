#include "depgem/mcmc.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

namespace depgem {

namespace {

void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v))
    throw ValidationError(std::string(what) + " must be positive");
}

double propose_truncated(double current, double scale, RandomStream& rng) {
  for (;;) {
    const double p = current + scale * rng.normal();
    if (p > 0.0) return p;
  }
}

// log of Phi(cur/s) / Phi(prop/s), the truncation-normalizer ratio of the
// left-truncated normal proposal.
double truncation_correction(double current, double proposal, double scale) {
  return std::log(normal_cdf(current / scale)) -
         std::log(normal_cdf(proposal / scale));
}

// Unnormalized inverse-Gamma(a, b) log density.
double log_inv_gamma(double x, double a, double b) {
  return -(a + 1.0) * std::log(x) - b / x;
}

double log_inv_gamma_norm(double x, double a, double b) {
  return a * std::log(b) - std::lgamma(a) + log_inv_gamma(x, a, b);
}

double log_gamma_norm(double x, double a, double b) {
  return a * std::log(b) - std::lgamma(a) + (a - 1.0) * std::log(x) - b * x;
}

Eigen::MatrixXd tail_counts(const SpeciesCountTable& table) {
  // tails(i, j) = sum of counts of species after j at site i
  Eigen::MatrixXd tails(table.n_sites(), table.n_species());
  for (Eigen::Index i = 0; i < table.n_sites(); ++i) {
    double acc = 0.0;
    for (Eigen::Index j = table.n_species() - 1; j >= 0; --j) {
      tails(i, j) = acc;
      acc += table.counts(i, j);
    }
  }
  return tails;
}

bool accepted(double log_rho, RandomStream& rng) {
  if (std::isnan(log_rho)) return false;
  if (log_rho >= 0.0) return true;
  return std::log(rng.open01()) < log_rho;
}

}  // namespace

void HyperPriors::validate() const {
  require_positive(a_z, "hyperprior a_z");
  require_positive(b_z, "hyperprior b_z");
  require_positive(a_lambda, "hyperprior a_lambda");
  require_positive(b_lambda, "hyperprior b_lambda");
  require_positive(a_m, "hyperprior a_m");
  require_positive(b_m, "hyperprior b_m");
}

void ProposalScales::validate() const {
  require_positive(s_z, "proposal scale s_z");
  require_positive(s_sigma, "proposal scale s_sigma");
  require_positive(s_scale, "proposal scale s_scale");
  require_positive(s_lambda, "proposal scale s_lambda");
  require_positive(s_m, "proposal scale s_m");
  require_positive(s_m_transport, "proposal scale s_m_transport");
}

double log_likelihood(const LatentState& state,
                      const SpeciesCountTable& table) {
  if (state.z.rows() != table.n_sites() ||
      state.z.cols() != table.n_species())
    throw ValidationError("log_likelihood: state/table dimension mismatch");
  const Eigen::MatrixXd tails = tail_counts(table);
  const GemParams gem{state.m};
  double ll = 0.0;
  for (Eigen::Index j = 0; j < table.n_species(); ++j) {
    for (Eigen::Index i = 0; i < table.n_sites(); ++i) {
      const double n = table.counts(i, j);
      const double t = tails(i, j);
      if (n == 0.0 && t == 0.0) continue;
      const LogBreak lb = g_transform_log(state.z(i, j), state.sigma_z, gem);
      ll += n * lb.log_v + t * lb.log_1mv;
    }
  }
  if (std::isnan(ll))
    throw NumericError("log_likelihood produced NaN; transform not clamped");
  return ll;
}

double log_posterior(const LatentState& state, const SpeciesCountTable& table,
                     const HyperPriors& priors, KernelFamily family) {
  priors.validate();
  double lp = log_likelihood(state, table);
  const KernelSpec spec{family, state.lambda, state.sigma_z};
  const GramMatrix gm = gram(spec, table.covariates);
  for (Eigen::Index j = 0; j < state.z.cols(); ++j)
    lp += gp_log_density(state.z.col(j), gm);
  lp += log_inv_gamma_norm(state.sigma_z * state.sigma_z, priors.a_z,
                           priors.b_z);
  lp += log_inv_gamma_norm(state.lambda, priors.a_lambda, priors.b_lambda);
  lp += log_gamma_norm(state.m, priors.a_m, priors.b_m);
  return lp;
}

MhResult mh_step(const std::function<double(double)>& log_target,
                 ProposalKind kind, double current, double scale,
                 RandomStream& rng, bool hastings_correction) {
  require_positive(scale, "mh_step scale");
  double proposal, correction = 0.0;
  if (kind == ProposalKind::TruncatedGaussian) {
    proposal = propose_truncated(current, scale, rng);
    if (hastings_correction)
      correction = truncation_correction(current, proposal, scale);
  } else {
    proposal = current + scale * rng.normal();
  }
  const double log_rho =
      log_target(proposal) - log_target(current) + correction;
  if (accepted(log_rho, rng)) return {proposal, true};
  return {current, false};
}

MhVectorResult mh_step_correlated(
    const std::function<double(const Eigen::VectorXd&)>& log_target,
    const Eigen::MatrixXd& chol, const Eigen::VectorXd& current, double scale,
    RandomStream& rng) {
  require_positive(scale, "mh_step scale");
  Eigen::VectorXd xi(current.size());
  for (Eigen::Index i = 0; i < xi.size(); ++i) xi(i) = rng.normal();
  const Eigen::VectorXd step = chol.triangularView<Eigen::Lower>() * xi;
  const Eigen::VectorXd proposal = current + scale * step;
  const double log_rho = log_target(proposal) - log_target(current);
  if (accepted(log_rho, rng)) return {proposal, true};
  return {current, false};
}

// ---------------------------------------------------------------------------
// GibbsSampler
// ---------------------------------------------------------------------------

GibbsSampler::GibbsSampler(const SpeciesCountTable& table, KernelFamily family,
                           const HyperPriors& priors, LatentState init,
                           const ProposalScales& scales, std::uint64_t seed,
                           int threads, bool hastings_correction)
    : table_(table),
      tails_(tail_counts(table)),
      family_(family),
      priors_(priors),
      state_(std::move(init)),
      scales_(scales),
      threads_(std::max(1, threads)),
      hastings_(hastings_correction),
      main_rng_(seed, 0) {
  priors_.validate();
  scales_.validate();
  if (state_.z.rows() != table.n_sites() ||
      state_.z.cols() != table.n_species())
    throw ValidationError("sampler init: Z dimensions do not match the table");
  require_positive(state_.sigma_z, "initial sigma_z");
  require_positive(state_.lambda, "initial lambda");
  require_positive(state_.m, "initial M");

  corr_ = gram(KernelSpec{family_, state_.lambda, 1.0}, table.covariates);

  const Eigen::Index j_count = table.n_species();
  species_rng_.reserve(static_cast<std::size_t>(j_count));
  for (Eigen::Index j = 0; j < j_count; ++j)
    species_rng_.emplace_back(seed, static_cast<std::uint64_t>(j) + 1);

  quad_.resize(j_count);
  loglik_.resize(j_count);
  for (Eigen::Index j = 0; j < j_count; ++j) {
    quad_(j) = corr_.quad_form(state_.z.col(j));
    loglik_(j) = species_loglik(state_.z.col(j), j, state_.sigma_z, state_.m);
  }
}

double GibbsSampler::species_loglik(const Eigen::VectorXd& z_col,
                                    Eigen::Index j, double sigma,
                                    double m) const {
  const GemParams gem{m};
  double ll = 0.0;
  for (Eigen::Index i = 0; i < z_col.size(); ++i) {
    const double n = table_.counts(i, j);
    const double t = tails_(i, j);
    if (n == 0.0 && t == 0.0) continue;
    const LogBreak lb = g_transform_log(z_col(i), sigma, gem);
    ll += n * lb.log_v + t * lb.log_1mv;
  }
  return ll;
}

double GibbsSampler::scalar_prior_sigma(double s) const {
  // density of sigma_Z induced by sigma_Z^2 ~ IG(a, b)
  return -(2.0 * priors_.a_z + 1.0) * std::log(s) - priors_.b_z / (s * s);
}

double GibbsSampler::scalar_prior_lambda(double l) const {
  return log_inv_gamma(l, priors_.a_lambda, priors_.b_lambda);
}

double GibbsSampler::scalar_prior_m(double m) const {
  return (priors_.a_m - 1.0) * std::log(m) - priors_.b_m * m;
}

void GibbsSampler::update_z_blocks() {
  const Eigen::Index j_count = state_.z.cols();
  const Eigen::Index i_count = state_.z.rows();
  const double inv_two_var =
      0.5 / (state_.sigma_z * state_.sigma_z);
  std::atomic<long long> accepted_blocks{0};

  auto update_range = [&](Eigen::Index j_begin, Eigen::Index j_end) {
    Eigen::VectorXd xi(i_count), step(i_count), zp(i_count);
    long long local_accepts = 0;
    for (Eigen::Index j = j_begin; j < j_end; ++j) {
      RandomStream& rng = species_rng_[static_cast<std::size_t>(j)];
      for (Eigen::Index i = 0; i < i_count; ++i) xi(i) = rng.normal();
      step = corr_.chol.triangularView<Eigen::Lower>() * xi;
      zp = state_.z.col(j) + scales_.s_z * step;
      const double qp = corr_.quad_form(zp);
      const double llp = species_loglik(zp, j, state_.sigma_z, state_.m);
      const double log_rho =
          (llp - loglik_(j)) - (qp - quad_(j)) * inv_two_var;
      if (accepted(log_rho, rng)) {
        state_.z.col(j) = zp;
        quad_(j) = qp;
        loglik_(j) = llp;
        ++local_accepts;
      }
    }
    accepted_blocks += local_accepts;
  };

  const int workers =
      static_cast<int>(std::min<Eigen::Index>(threads_, j_count));
  if (workers <= 1) {
    update_range(0, j_count);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    const Eigen::Index chunk = (j_count + workers - 1) / workers;
    for (int w = 0; w < workers; ++w) {
      const Eigen::Index b = w * chunk;
      const Eigen::Index e = std::min(j_count, b + chunk);
      if (b < e) pool.emplace_back(update_range, b, e);
    }
    for (auto& t : pool) t.join();
  }

  accept_z_ += accepted_blocks;
  total_z_ += j_count;
  if (j_count > 0)
    adapt(scales_.s_z, adapt_z_steps_,
          static_cast<double>(accepted_blocks) / static_cast<double>(j_count),
          0.3);
}

void GibbsSampler::update_sigma() {
  const double s = state_.sigma_z;
  const double sp = propose_truncated(s, scales_.s_sigma, main_rng_);
  const Eigen::Index j_count = state_.z.cols();
  Eigen::VectorXd ll_new(j_count);
  for (Eigen::Index j = 0; j < j_count; ++j)
    ll_new(j) = species_loglik(state_.z.col(j), j, sp, state_.m);

  const double n_gauss =
      static_cast<double>(state_.z.rows()) * static_cast<double>(j_count);
  const double q_total = quad_.sum();
  double log_rho = (ll_new.sum() - loglik_.sum()) -
                   n_gauss * (std::log(sp) - std::log(s)) -
                   0.5 * q_total * (1.0 / (sp * sp) - 1.0 / (s * s)) +
                   scalar_prior_sigma(sp) - scalar_prior_sigma(s);
  if (hastings_) log_rho += truncation_correction(s, sp, scales_.s_sigma);

  const bool acc = accepted(log_rho, main_rng_);
  if (acc) {
    state_.sigma_z = sp;
    loglik_ = ll_new;
    ++accept_sigma_;
  }
  ++total_sigma_;
  adapt(scales_.s_sigma, adapt_sigma_steps_, acc ? 1.0 : 0.0, 0.44);
}

void GibbsSampler::update_scale() {
  const double c = std::exp(scales_.s_scale * main_rng_.normal());
  const double s = state_.sigma_z;
  const double sp = c * s;
  const Eigen::Index j_count = state_.z.cols();

  // the likelihood depends on Z/sigma_Z and is invariant up to rounding;
  // evaluate it anyway so the kernel stays exact near the transform clamp
  Eigen::VectorXd ll_new(j_count);
  Eigen::MatrixXd z_new = c * state_.z;
  for (Eigen::Index j = 0; j < j_count; ++j)
    ll_new(j) = species_loglik(z_new.col(j), j, sp, state_.m);

  // target ratio x Jacobian c^{IJ+1} of the multiplicative map with a
  // log-symmetric proposal; the Gaussian quadratic form is scale invariant
  const double log_rho = (ll_new.sum() - loglik_.sum()) +
                         scalar_prior_sigma(sp) - scalar_prior_sigma(s) +
                         std::log(c);

  const bool acc = accepted(log_rho, main_rng_);
  if (acc) {
    state_.z = std::move(z_new);
    state_.sigma_z = sp;
    loglik_ = ll_new;
    quad_ *= c * c;
    ++accept_scale_;
  }
  ++total_scale_;
  adapt(scales_.s_scale, adapt_scale_steps_, acc ? 1.0 : 0.0, 0.44);
}

void GibbsSampler::update_lambda() {
  const double l = state_.lambda;
  const double lp = propose_truncated(l, scales_.s_lambda, main_rng_);
  GramMatrix corr_new = gram(KernelSpec{family_, lp, 1.0}, table_.covariates);
  const Eigen::Index j_count = state_.z.cols();
  Eigen::VectorXd quad_new(j_count);
  for (Eigen::Index j = 0; j < j_count; ++j)
    quad_new(j) = corr_new.quad_form(state_.z.col(j));

  const double inv_two_var = 0.5 / (state_.sigma_z * state_.sigma_z);
  double log_rho = -0.5 * static_cast<double>(j_count) *
                       (corr_new.log_det - corr_.log_det) -
                   (quad_new.sum() - quad_.sum()) * inv_two_var +
                   scalar_prior_lambda(lp) - scalar_prior_lambda(l);
  if (hastings_) log_rho += truncation_correction(l, lp, scales_.s_lambda);

  const bool acc = accepted(log_rho, main_rng_);
  if (acc) {
    state_.lambda = lp;
    corr_ = std::move(corr_new);
    quad_ = quad_new;
    ++accept_lambda_;
  }
  ++total_lambda_;
  adapt(scales_.s_lambda, adapt_lambda_steps_, acc ? 1.0 : 0.0, 0.44);
}

void GibbsSampler::update_m() {
  const double m = state_.m;
  const double mp = propose_truncated(m, scales_.s_m, main_rng_);
  const Eigen::Index j_count = state_.z.cols();
  Eigen::VectorXd ll_new(j_count);
  for (Eigen::Index j = 0; j < j_count; ++j)
    ll_new(j) = species_loglik(state_.z.col(j), j, state_.sigma_z, mp);

  double log_rho = (ll_new.sum() - loglik_.sum()) + scalar_prior_m(mp) -
                   scalar_prior_m(m);
  if (hastings_) log_rho += truncation_correction(m, mp, scales_.s_m);

  const bool acc = accepted(log_rho, main_rng_);
  if (acc) {
    state_.m = mp;
    loglik_ = ll_new;
    ++accept_m_;
  }
  ++total_m_;
  adapt(scales_.s_m, adapt_m_steps_, acc ? 1.0 : 0.0, 0.44);
}

void GibbsSampler::update_m_transport() {
  const double m = state_.m;
  const double mp = propose_truncated(m, scales_.s_m_transport, main_rng_);
  const double ratio = mp / m;
  const double s = state_.sigma_z;
  const Eigen::Index i_count = state_.z.rows();
  const Eigen::Index j_count = state_.z.cols();

  // transport every Gaussian value so its break stays fixed:
  // log Phi_c(z'/s) = (M'/M) log Phi_c(z/s)
  Eigen::MatrixXd z_new(i_count, j_count);
  double log_jacobian = 0.0;
  for (Eigen::Index j = 0; j < j_count; ++j) {
    for (Eigen::Index i = 0; i < i_count; ++i) {
      const double w = state_.z(i, j) / s;
      const double u = normal_logsf(w);
      const double up = ratio * u;
      const double wp = normal_isf_log(up);
      z_new(i, j) = s * wp;
      // dz'/dz = (M'/M) h(w) / h(w'), with log h(w) = log phi(w) - log Phi_c(w)
      const double log_h = -0.5 * w * w - u;
      const double log_hp = -0.5 * wp * wp - up;
      log_jacobian += std::log(ratio) + log_h - log_hp;
    }
  }

  Eigen::VectorXd ll_new(j_count), quad_new(j_count);
  for (Eigen::Index j = 0; j < j_count; ++j) {
    ll_new(j) = species_loglik(z_new.col(j), j, s, mp);
    quad_new(j) = corr_.quad_form(z_new.col(j));
  }

  double log_rho = (ll_new.sum() - loglik_.sum()) -
                   (quad_new.sum() - quad_.sum()) * 0.5 / (s * s) +
                   scalar_prior_m(mp) - scalar_prior_m(m) + log_jacobian;
  if (hastings_)
    log_rho += truncation_correction(m, mp, scales_.s_m_transport);

  const bool acc = accepted(log_rho, main_rng_);
  if (acc) {
    state_.z = std::move(z_new);
    state_.m = mp;
    loglik_ = ll_new;
    quad_ = quad_new;
    ++accept_mt_;
  }
  ++total_mt_;
  adapt(scales_.s_m_transport, adapt_mt_steps_, acc ? 1.0 : 0.0, 0.44);
}

void GibbsSampler::sweep() {
  update_z_blocks();
  update_sigma();
  update_scale();
  update_lambda();
  update_m();
  update_m_transport();
}

void GibbsSampler::adapt(double& scale, long& steps, double rate,
                         double target) {
  if (!adapting_) return;
  ++steps;
  const double eta =
      std::min(0.25, std::pow(static_cast<double>(steps), -0.6));
  scale = std::clamp(scale * std::exp(eta * (rate - target)), 1e-8, 1e10);
}

double GibbsSampler::log_posterior_value() const {
  const auto i_count = static_cast<double>(state_.z.rows());
  const auto j_count = static_cast<double>(state_.z.cols());
  const double s = state_.sigma_z;
  const double log_det_k = 2.0 * i_count * std::log(s) + corr_.log_det;
  const double gp = -0.5 * quad_.sum() / (s * s) -
                    0.5 * j_count * (log_det_k + i_count * kLog2Pi);
  return loglik_.sum() + gp +
         log_inv_gamma_norm(s * s, priors_.a_z, priors_.b_z) +
         log_inv_gamma_norm(state_.lambda, priors_.a_lambda,
                            priors_.b_lambda) +
         log_gamma_norm(state_.m, priors_.a_m, priors_.b_m);
}

AcceptanceRates GibbsSampler::acceptance() const {
  auto rate = [](long long a, long long t) {
    return t > 0 ? static_cast<double>(a) / static_cast<double>(t) : 0.0;
  };
  return AcceptanceRates{rate(accept_z_, total_z_),
                         rate(accept_sigma_, total_sigma_),
                         rate(accept_scale_, total_scale_),
                         rate(accept_lambda_, total_lambda_),
                         rate(accept_m_, total_m_),
                         rate(accept_mt_, total_mt_)};
}

void GibbsSampler::reset_acceptance() {
  accept_z_ = total_z_ = 0;
  accept_sigma_ = total_sigma_ = 0;
  accept_scale_ = total_scale_ = 0;
  accept_lambda_ = total_lambda_ = 0;
  accept_m_ = total_m_ = 0;
  accept_mt_ = total_mt_ = 0;
}

LatentState gibbs_sweep(const LatentState& state,
                        const SpeciesCountTable& table,
                        const HyperPriors& priors,
                        const ProposalScales& scales, KernelFamily family,
                        std::uint64_t seed) {
  GibbsSampler sampler(table, family, priors, state, scales, seed);
  sampler.set_adaptation(false);
  sampler.sweep();
  return sampler.state();
}

// ---------------------------------------------------------------------------
// Chain driver
// ---------------------------------------------------------------------------

void ChainConfig::validate() const {
  if (iterations <= burn_in)
    throw ValidationError("iterations must exceed burn_in");
  if (burn_in < 0) throw ValidationError("burn_in must be >= 0");
  if (thin < 1) throw ValidationError("thin must be >= 1");
  if (threads < 1) throw ValidationError("threads must be >= 1");
  priors.validate();
}

ChainSamples run_chain(const SpeciesCountTable& table,
                       const ChainConfig& config) {
  config.validate();
  table.validate();
  if (table.n_sites() < 2)
    throw ValidationError("at least two sites are required");
  if (table.n_species() < 1)
    throw ValidationError("at least one species is required");
  for (std::size_t i = 0; i < table.covariates.size(); ++i)
    for (std::size_t j = i + 1; j < table.covariates.size(); ++j)
      if (table.covariates[i] == table.covariates[j])
        throw ValidationError(
            "covariates contain ties; jitter them before fitting");

  LatentState init;
  if (config.init.has_value()) {
    init = *config.init;
  } else {
    const auto [lo, hi] = std::minmax_element(table.covariates.begin(),
                                              table.covariates.end());
    init.z = Eigen::MatrixXd::Zero(table.n_sites(), table.n_species());
    init.sigma_z = 1.0;
    init.lambda = 0.5 * (*hi - *lo);
    init.m = 1.0;
  }

  ProposalScales scales;
  scales.s_lambda = std::max(0.25 * init.lambda, 1e-3);

  GibbsSampler sampler(table, config.kernel, config.priors, std::move(init),
                       scales, config.seed, config.threads,
                       config.hastings_correction);
  sampler.set_adaptation(config.burn_in > 0);

  ChainSamples out;
  out.config = config;
  out.site_ids = table.site_ids;
  out.covariates = table.covariates;
  out.species_ids = table.species_ids;
  const long n_draws = (config.iterations - config.burn_in) / config.thin;
  out.draws.reserve(static_cast<std::size_t>(n_draws));
  out.log_posterior.reserve(static_cast<std::size_t>(n_draws));

  for (long t = 1; t <= config.iterations; ++t) {
    if (t == config.burn_in + 1) {
      sampler.set_adaptation(false);
      sampler.reset_acceptance();
    }
    sampler.sweep();
    if (t > config.burn_in && (t - config.burn_in) % config.thin == 0) {
      out.draws.push_back(sampler.state());
      out.log_posterior.push_back(sampler.log_posterior_value());
    }
  }
  out.acceptance = sampler.acceptance();
  out.adapted_scales = sampler.scales();
  return out;
}

// ---------------------------------------------------------------------------
// Diagnostics
// ---------------------------------------------------------------------------

std::vector<double> autocorrelation(std::span<const double> values,
                                    int max_lag) {
  const auto n = static_cast<Eigen::Index>(values.size());
  max_lag = std::min<int>(max_lag, static_cast<int>(n) - 1);
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(n);
  std::vector<double> acf(static_cast<std::size_t>(max_lag) + 1, 0.0);
  double c0 = 0.0;
  for (Eigen::Index t = 0; t < n; ++t)
    c0 += (values[t] - mean) * (values[t] - mean);
  c0 /= static_cast<double>(n);
  acf[0] = 1.0;
  if (c0 <= 0.0) return acf;
  for (int k = 1; k <= max_lag; ++k) {
    double ck = 0.0;
    for (Eigen::Index t = 0; t + k < n; ++t)
      ck += (values[t] - mean) * (values[t + k] - mean);
    ck /= static_cast<double>(n);
    acf[static_cast<std::size_t>(k)] = ck / c0;
  }
  return acf;
}

double effective_sample_size(std::span<const double> values) {
  const auto n = static_cast<double>(values.size());
  if (values.size() < 2) return 1.0;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= n;
  double c0 = 0.0;
  for (double v : values) c0 += (v - mean) * (v - mean);
  // a constant trace carries no information beyond one draw
  if (c0 <= 0.0) return 1.0;

  const int max_lag =
      std::min<int>(static_cast<int>(values.size()) - 1, 2000);
  const auto acf = autocorrelation(values, max_lag);

  // Geyer initial positive sequence: sum paired autocorrelations while the
  // pair sums stay positive.
  double tau = -1.0;
  for (std::size_t m = 0; 2 * m + 1 < acf.size(); ++m) {
    const double pair = acf[2 * m] + acf[2 * m + 1];
    if (pair <= 0.0) break;
    tau += 2.0 * pair;
  }
  tau = std::max(tau, 1.0 / n);
  return std::clamp(n / tau, 1.0, n);
}

ChainDiagnostics diagnostics(const ChainSamples& chain) {
  if (chain.draws.size() < 10)
    throw ValidationError("diagnostics require at least 10 draws");
  const std::size_t n = chain.draws.size();
  std::vector<double> sigma(n), lambda(n), m(n);
  for (std::size_t t = 0; t < n; ++t) {
    sigma[t] = chain.draws[t].sigma_z;
    lambda[t] = chain.draws[t].lambda;
    m[t] = chain.draws[t].m;
  }
  ChainDiagnostics out;
  auto add = [&](const std::string& name, std::span<const double> series) {
    SeriesDiagnostics d;
    d.name = name;
    d.acf = autocorrelation(series, 100);
    d.ess = effective_sample_size(series);
    out.series.push_back(std::move(d));
  };
  add("sigma_z", sigma);
  add("lambda", lambda);
  add("m", m);
  add("log_posterior", chain.log_posterior);
  out.acceptance = chain.acceptance;
  return out;
}

}  // namespace depgem
