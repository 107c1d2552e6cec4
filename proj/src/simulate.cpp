#include "depgem/simulate.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

namespace depgem {

void SimulateConfig::validate() const {
  if (n_sites < 1) throw ValidationError("simulate: n_sites must be >= 1");
  if (n_species < 1) throw ValidationError("simulate: n_species must be >= 1");
  if (!(m > 0.0)) throw ValidationError("simulate: M must be positive");
  if (!(lambda > 0.0)) throw ValidationError("simulate: lambda must be positive");
  if (!(sigma_z > 0.0))
    throw ValidationError("simulate: sigma_z must be positive");
  if (n_per_site < 0)
    throw ValidationError("simulate: n_per_site must be >= 0");
  if (zero_covariate_sites < 0 || zero_covariate_sites > n_sites)
    throw ValidationError("simulate: zero_covariate_sites out of range");
  if (!(cov_max > cov_min))
    throw ValidationError("simulate: cov_max must exceed cov_min");
}

SimulatedData simulate_dataset(const SimulateConfig& config) {
  config.validate();
  RandomStream rng(config.seed, 0x73696dULL);

  // Sites in the zero block share covariate 0 and therefore one community;
  // the unique covariates drive the latent process.
  const int n_zero = config.zero_covariate_sites;
  const int n_spread = config.n_sites - n_zero;
  std::vector<double> covariates(static_cast<std::size_t>(config.n_sites));
  std::vector<double> unique_xs;
  std::vector<std::size_t> site_to_unique(
      static_cast<std::size_t>(config.n_sites));
  if (n_zero > 0) unique_xs.push_back(0.0);
  for (int s = 0; s < n_zero; ++s) {
    covariates[static_cast<std::size_t>(s)] = 0.0;
    site_to_unique[static_cast<std::size_t>(s)] = 0;
  }
  for (int k = 1; k <= n_spread; ++k) {
    const double frac = static_cast<double>(k) / n_spread;
    const double x = n_zero > 0
                         ? config.cov_min +
                               frac * (config.cov_max - config.cov_min)
                         : config.cov_min + (k - 1) *
                               (config.cov_max - config.cov_min) /
                               std::max(1, n_spread - 1);
    covariates[static_cast<std::size_t>(n_zero + k - 1)] = x;
    site_to_unique[static_cast<std::size_t>(n_zero + k - 1)] =
        unique_xs.size();
    unique_xs.push_back(x);
  }

  const KernelSpec spec{config.kernel, config.lambda, config.sigma_z};
  const GramMatrix gm = gram(spec, unique_xs);
  const GemParams gem{config.m};
  const auto n_unique = static_cast<Eigen::Index>(unique_xs.size());

  // Break rows over unique covariates; extended on demand when observations
  // fall beyond the truncation.
  std::vector<Eigen::VectorXd> break_rows;
  Eigen::VectorXd xi(n_unique);
  auto draw_break_row = [&]() {
    for (Eigen::Index i = 0; i < n_unique; ++i) xi(i) = rng.normal();
    const Eigen::VectorXd z = gm.chol.triangularView<Eigen::Lower>() * xi;
    Eigen::VectorXd v(n_unique);
    for (Eigen::Index i = 0; i < n_unique; ++i)
      v(i) = g_transform(z(i), config.sigma_z, gem);
    break_rows.push_back(std::move(v));
  };
  for (int j = 0; j < config.n_species; ++j) draw_break_row();

  SimulatedData out;
  out.config = config;
  out.true_weights.resize(config.n_sites, config.n_species);
  out.residuals.resize(static_cast<std::size_t>(config.n_sites));
  for (int s = 0; s < config.n_sites; ++s) {
    const auto u = static_cast<Eigen::Index>(site_to_unique
                                                 [static_cast<std::size_t>(s)]);
    double stick = 1.0;
    for (int j = 0; j < config.n_species; ++j) {
      const double v = break_rows[static_cast<std::size_t>(j)](u);
      out.true_weights(s, j) = v * stick;
      stick *= 1.0 - v;
    }
    out.residuals[static_cast<std::size_t>(s)] = stick;
  }

  // Categorical observations by walking the sticks; residual picks extend
  // the shared break sequence until they resolve.
  std::vector<std::vector<long>> counts(
      static_cast<std::size_t>(config.n_sites));
  std::size_t max_species = static_cast<std::size_t>(config.n_species);
  for (int s = 0; s < config.n_sites; ++s) {
    auto& site_counts = counts[static_cast<std::size_t>(s)];
    site_counts.assign(max_species, 0);
    const auto u = static_cast<Eigen::Index>(site_to_unique
                                                 [static_cast<std::size_t>(s)]);
    for (long obs = 0; obs < config.n_per_site; ++obs) {
      double r = rng.u01();
      double stick = 1.0;
      std::size_t j = 0;
      for (;;) {
        if (j >= break_rows.size()) draw_break_row();
        const double v = break_rows[j](u);
        const double p = v * stick;
        if (r < p) break;
        r -= p;
        stick *= 1.0 - v;
        ++j;
        if (stick <= 1e-300) break;  // fp exhaustion of the stick
      }
      if (j + 1 > max_species) {
        max_species = j + 1;
        for (auto& c : counts) c.resize(max_species, 0);
      }
      if (site_counts.size() < max_species) site_counts.resize(max_species, 0);
      ++site_counts[j];
    }
  }

  out.table.counts = Eigen::MatrixXd::Zero(
      config.n_sites, static_cast<Eigen::Index>(max_species));
  for (int s = 0; s < config.n_sites; ++s) {
    out.table.site_ids.push_back("site" + std::to_string(s + 1));
    for (std::size_t j = 0; j < counts[static_cast<std::size_t>(s)].size();
         ++j)
      out.table.counts(s, static_cast<Eigen::Index>(j)) =
          static_cast<double>(counts[static_cast<std::size_t>(s)][j]);
  }
  out.table.covariates = covariates;
  for (std::size_t j = 0; j < max_species; ++j)
    out.table.species_ids.push_back("sp" + std::to_string(j + 1));
  return out;
}

void save_truth_json(const SimulatedData& sim,
                     const std::filesystem::path& path) {
  nlohmann::json truth;
  truth["m"] = sim.config.m;
  truth["lambda"] = sim.config.lambda;
  truth["sigma_z"] = sim.config.sigma_z;
  truth["kernel"] = to_string(sim.config.kernel);
  truth["seed"] = sim.config.seed;
  truth["n_per_site"] = sim.config.n_per_site;
  truth["species"] = sim.table.species_ids;
  nlohmann::json sites = nlohmann::json::array();
  for (Eigen::Index s = 0; s < sim.table.n_sites(); ++s) {
    nlohmann::json site;
    site["id"] = sim.table.site_ids[static_cast<std::size_t>(s)];
    site["covariate"] = sim.table.covariates[static_cast<std::size_t>(s)];
    site["residual"] = sim.residuals[static_cast<std::size_t>(s)];
    std::vector<double> w(static_cast<std::size_t>(sim.true_weights.cols()));
    for (Eigen::Index j = 0; j < sim.true_weights.cols(); ++j)
      w[static_cast<std::size_t>(j)] = sim.true_weights(s, j);
    site["weights"] = w;
    sites.push_back(std::move(site));
  }
  truth["sites"] = std::move(sites);
  std::ofstream outfile(path);
  if (!outfile)
    throw ValidationError("cannot write truth file '" + path.string() + "'");
  outfile << truth.dump(2) << "\n";
}

}  // namespace depgem
