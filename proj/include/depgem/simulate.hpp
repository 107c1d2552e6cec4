// Synthetic species-by-site generator: draws dependent stick-breaking weights
// on a covariate grid (optionally with a block of zero-covariate baseline
// sites sharing one community) and categorical observations per site, keeping
// the ground truth for benchmarking.

#pragma once

#include <Eigen/Dense>
#include <filesystem>

#include "depgem/data.hpp"
#include "depgem/kernels.hpp"
#include "depgem/stickbreak.hpp"

namespace depgem {

struct SimulateConfig {
  int n_sites = 22;
  int n_species = 100;  // truncation depth for the recorded truth
  double m = 1.0;
  KernelFamily kernel = KernelFamily::SE;
  double lambda = 4000.0;
  double sigma_z = 1.0;
  long n_per_site = 1000;
  double cov_min = 0.0;
  double cov_max = 22000.0;
  int zero_covariate_sites = 10;  // baseline block at covariate exactly 0
  std::uint64_t seed = 1;

  void validate() const;
};

struct SimulatedData {
  SpeciesCountTable table;        // species labels follow generation order
  Eigen::MatrixXd true_weights;   // n_sites x n_species
  std::vector<double> residuals;  // per-site mass beyond the truncation
  SimulateConfig config;
};

/// Observations land in the residual tail with its true probability; the
/// break sequence is extended on demand so such picks get genuine species
/// indices past the truncation.
SimulatedData simulate_dataset(const SimulateConfig& config);

/// Writes the ground truth (hyperparameters, per-site weights and residuals)
/// as JSON next to the data file.
void save_truth_json(const SimulatedData& sim,
                     const std::filesystem::path& path);

}  // namespace depgem
