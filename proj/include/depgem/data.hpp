// Species-by-site count tables: CSV ingestion (long and wide layouts),
// validation, canonical ordering by decreasing overall abundance, covariate
// jittering and empirical proportions.

#pragma once

#include <Eigen/Dense>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "depgem/common.hpp"

namespace depgem {

/// Validated site-by-species abundance matrix with one covariate per site.
/// Columns are kept sorted by strictly non-increasing total abundance.
struct SpeciesCountTable {
  std::vector<std::string> site_ids;
  std::vector<double> covariates;      // one per site, same order as rows
  std::vector<std::string> species_ids;
  Eigen::MatrixXd counts;              // I x J, nonnegative integers

  Eigen::Index n_sites() const { return counts.rows(); }
  Eigen::Index n_species() const { return counts.cols(); }

  double row_sum(Eigen::Index i) const { return counts.row(i).sum(); }

  /// Checks count nonnegativity and positive row sums; throws ValidationError.
  void validate() const;

  /// Stable-sorts species columns by decreasing total abundance (ties keep
  /// their current order) and drops species with zero total count.
  void canonicalize(std::ostream* warnings = nullptr);
};

enum class TableFormat { Long, Wide };

struct LoadOptions {
  TableFormat format = TableFormat::Long;
  // Species whose total abundance is <= min_total are dropped (0 keeps all).
  long min_total = 0;
};

/// Parses, validates and canonicalizes a count table. Parse errors carry the
/// 1-based line number.
SpeciesCountTable load_counts(const std::filesystem::path& path,
                              const LoadOptions& options = {},
                              std::ostream* warnings = nullptr);

/// Writes the long CSV layout `site,covariate,species,count`, omitting zero
/// cells.
void save_counts_long(const SpeciesCountTable& table,
                      const std::filesystem::path& path);

/// Gaussian jitter applied to covariates to break measurement ties.
struct JitterSpec {
  double sigma = 1.0;
  std::uint64_t seed = 0;

  void validate() const {
    if (!(sigma > 0.0)) throw ValidationError("jitter sigma must be positive");
  }
};

/// Adds N(0, sigma^2) noise to each covariate, taking the absolute value
/// where the recorded covariate is exactly zero. Colliding entries are
/// redrawn until all outputs are pairwise distinct.
std::vector<double> jitter_covariates(std::span<const double> x,
                                      const JitterSpec& spec);

/// Observed proportions N_ij / N_i; throws naming any zero-abundance site.
Eigen::MatrixXd empirical_proportions(const SpeciesCountTable& table);

}  // namespace depgem
