// Batch front end: fit the sampler to a count table, predict weights at new
// covariates, produce diversity / dissimilarity / effective-concentration /
// CPO summaries, generate synthetic benchmarks, and run the verification
// suite. Exit codes: 0 ok, 1 validation, 2 numeric failure, 3 oracle failure.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "depgem/analysis.hpp"
#include "depgem/chain_io.hpp"
#include "depgem/data.hpp"
#include "depgem/mcmc.hpp"
#include "depgem/oracles.hpp"
#include "depgem/predictive.hpp"
#include "depgem/simulate.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt(double v) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

depgem::TableFormat parse_format(const std::string& f) {
  if (f == "long") return depgem::TableFormat::Long;
  if (f == "wide") return depgem::TableFormat::Wide;
  throw depgem::ValidationError("unknown data format '" + f +
                                "' (expected long|wide)");
}

struct FitSettings {
  std::string kernel = "se";
  long iterations = 50000;
  long burn_in = 10000;
  long thin = 5;
  std::uint64_t seed = 1;
  int threads = 1;
  depgem::HyperPriors priors;
  double jitter_sigma = 0.0;
  std::uint64_t jitter_seed = 1;
  long min_total = 0;

  json to_json() const {
    json j;
    j["kernel"] = kernel;
    j["iterations"] = iterations;
    j["burn_in"] = burn_in;
    j["thin"] = thin;
    j["seed"] = seed;
    j["threads"] = threads;
    j["priors"] = {{"a_z", priors.a_z},           {"b_z", priors.b_z},
                   {"a_lambda", priors.a_lambda}, {"b_lambda", priors.b_lambda},
                   {"a_m", priors.a_m},           {"b_m", priors.b_m}};
    j["jitter"] = {{"sigma", jitter_sigma}, {"seed", jitter_seed}};
    j["min_total"] = min_total;
    return j;
  }

  void apply_json(const json& j) {
    for (const auto& [key, value] : j.items()) {
      if (key == "kernel") {
        kernel = value.get<std::string>();
      } else if (key == "iterations") {
        iterations = value.get<long>();
      } else if (key == "burn_in") {
        burn_in = value.get<long>();
      } else if (key == "thin") {
        thin = value.get<long>();
      } else if (key == "seed") {
        seed = value.get<std::uint64_t>();
      } else if (key == "threads") {
        threads = value.get<int>();
      } else if (key == "min_total") {
        min_total = value.get<long>();
      } else if (key == "priors") {
        for (const auto& [pk, pv] : value.items()) {
          if (pk == "a_z") priors.a_z = pv.get<double>();
          else if (pk == "b_z") priors.b_z = pv.get<double>();
          else if (pk == "a_lambda") priors.a_lambda = pv.get<double>();
          else if (pk == "b_lambda") priors.b_lambda = pv.get<double>();
          else if (pk == "a_m") priors.a_m = pv.get<double>();
          else if (pk == "b_m") priors.b_m = pv.get<double>();
          else
            throw depgem::ValidationError("unknown prior key '" + pk + "'");
        }
      } else if (key == "jitter") {
        for (const auto& [jk, jv] : value.items()) {
          if (jk == "sigma") jitter_sigma = jv.get<double>();
          else if (jk == "seed") jitter_seed = jv.get<std::uint64_t>();
          else
            throw depgem::ValidationError("unknown jitter key '" + jk + "'");
        }
      } else {
        throw depgem::ValidationError("unknown config key '" + key + "'");
      }
    }
  }
};

json load_json_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in)
    throw depgem::ValidationError("cannot open '" + path.string() + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw depgem::ValidationError(path.string() + ": " + e.what());
  }
  return j;
}

bool has_ties(const std::vector<double>& xs) {
  for (std::size_t i = 0; i < xs.size(); ++i)
    for (std::size_t j = i + 1; j < xs.size(); ++j)
      if (xs[i] == xs[j]) return true;
  return false;
}

void write_csv(const fs::path& path, const std::string& header,
               const std::vector<std::vector<std::string>>& rows) {
  std::ofstream out(path);
  if (!out)
    throw depgem::ValidationError("cannot write '" + path.string() + "'");
  out << header << "\n";
  for (const auto& row : rows) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c > 0) out << ',';
      out << row[c];
    }
    out << "\n";
  }
}

// ---------------------------------------------------------------------------
// fit
// ---------------------------------------------------------------------------

int cmd_fit(const std::string& data_path, const std::string& format,
            const FitSettings& settings, const std::string& out_dir,
            bool break_hastings) {
  depgem::LoadOptions load_opts;
  load_opts.format = parse_format(format);
  load_opts.min_total = settings.min_total;
  depgem::SpeciesCountTable table =
      depgem::load_counts(data_path, load_opts, &std::cerr);

  const std::vector<double> raw_covariates = table.covariates;
  if (settings.jitter_sigma > 0.0) {
    table.covariates = depgem::jitter_covariates(
        raw_covariates,
        depgem::JitterSpec{settings.jitter_sigma, settings.jitter_seed});
  } else if (has_ties(table.covariates)) {
    throw depgem::ValidationError(
        "covariates contain ties; set jitter.sigma > 0 to separate them");
  }

  depgem::ChainConfig config;
  config.iterations = settings.iterations;
  config.burn_in = settings.burn_in;
  config.thin = settings.thin;
  config.seed = settings.seed;
  config.kernel = depgem::kernel_family_from_string(settings.kernel);
  config.priors = settings.priors;
  config.threads = settings.threads;
  config.hastings_correction = !break_hastings;

  const auto t0 = std::chrono::steady_clock::now();
  const depgem::ChainSamples chain = depgem::run_chain(table, config);
  const double wall =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();

  fs::create_directories(out_dir);
  const fs::path chain_path = fs::path(out_dir) / "chain.ndjson";
  depgem::write_chain_ndjson(chain, chain_path);

  json manifest;
  manifest["config"] = settings.to_json();
  manifest["config"]["break_hastings"] = break_hastings;
  manifest["data_file"] = data_path;
  manifest["data_hash"] = depgem::hash_hex(depgem::file_hash(data_path));
  manifest["chain_file"] = chain_path.filename().string();
  manifest["chain_hash"] = depgem::hash_hex(depgem::file_hash(chain_path));
  manifest["draws"] = chain.draws.size();
  manifest["wall_time_s"] = wall;
  manifest["acceptance"] = {{"z", chain.acceptance.z},
                            {"sigma_z", chain.acceptance.sigma_z},
                            {"scale", chain.acceptance.scale},
                            {"lambda", chain.acceptance.lambda},
                            {"m", chain.acceptance.m}};
  json sites = json::array();
  for (std::size_t i = 0; i < table.site_ids.size(); ++i)
    sites.push_back({{"id", table.site_ids[i]},
                     {"covariate_raw", raw_covariates[i]},
                     {"covariate", table.covariates[i]}});
  manifest["sites"] = std::move(sites);
  manifest["species"] = table.species_ids;
  {
    std::ofstream mf(fs::path(out_dir) / "manifest.json");
    mf << manifest.dump(2) << "\n";
  }

  // scalar trace, plot-ready
  {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t d = 0; d < chain.draws.size(); ++d)
      rows.push_back({std::to_string(d), fmt(chain.draws[d].sigma_z),
                      fmt(chain.draws[d].lambda), fmt(chain.draws[d].m),
                      fmt(chain.log_posterior[d])});
    write_csv(fs::path(out_dir) / "trace.csv",
              "draw,sigma_z,lambda,m,log_posterior", rows);
  }
  if (chain.draws.size() >= 10) {
    const depgem::ChainDiagnostics diag = depgem::diagnostics(chain);
    std::vector<std::vector<std::string>> rows;
    for (const auto& series : diag.series)
      for (std::size_t lag = 0; lag < series.acf.size(); ++lag)
        rows.push_back({series.name, std::to_string(lag),
                        fmt(series.acf[lag]), fmt(series.ess)});
    write_csv(fs::path(out_dir) / "diagnostics.csv", "series,lag,acf,ess",
              rows);
  }

  std::cout << "fit: " << chain.draws.size() << " draws in " << fmt(wall)
            << " s; acceptance z=" << fmt(chain.acceptance.z)
            << " sigma_z=" << fmt(chain.acceptance.sigma_z)
            << " lambda=" << fmt(chain.acceptance.lambda)
            << " m=" << fmt(chain.acceptance.m) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// shared loading for analysis commands
// ---------------------------------------------------------------------------

struct LoadedRun {
  depgem::SpeciesCountTable table;  // covariates are the fitted (jittered) ones
  std::vector<double> raw_covariates;
  depgem::ChainSamples chain;
};

LoadedRun load_run(const std::string& run_dir, const std::string& data_path,
                   const std::string& format) {
  const fs::path manifest_path = fs::path(run_dir) / "manifest.json";
  const json manifest = load_json_file(manifest_path);

  const std::string data_hash =
      depgem::hash_hex(depgem::file_hash(data_path));
  if (manifest.at("data_hash").get<std::string>() != data_hash)
    throw depgem::ValidationError(
        "data file does not match the manifest hash; analysis outputs would "
        "not correspond to the chain");

  const fs::path chain_path =
      fs::path(run_dir) / manifest.at("chain_file").get<std::string>();
  if (manifest.at("chain_hash").get<std::string>() !=
      depgem::hash_hex(depgem::file_hash(chain_path)))
    throw depgem::ValidationError("chain file does not match the manifest hash");

  LoadedRun run;
  depgem::LoadOptions opts;
  opts.format = parse_format(format);
  opts.min_total = manifest.at("config").at("min_total").get<long>();
  run.table = depgem::load_counts(data_path, opts, &std::cerr);

  const auto& sites = manifest.at("sites");
  if (sites.size() != run.table.site_ids.size())
    throw depgem::ValidationError("manifest site count differs from data");
  run.raw_covariates.resize(sites.size());
  for (std::size_t i = 0; i < sites.size(); ++i) {
    if (sites[i].at("id").get<std::string>() != run.table.site_ids[i])
      throw depgem::ValidationError("manifest site order differs from data");
    run.raw_covariates[i] = sites[i].at("covariate_raw").get<double>();
    run.table.covariates[i] = sites[i].at("covariate").get<double>();
  }

  run.chain = depgem::read_chain_ndjson(chain_path);
  if (run.chain.draws.empty())
    throw depgem::ValidationError("chain file has no draws");
  run.chain.config.kernel = depgem::kernel_family_from_string(
      manifest.at("config").at("kernel").get<std::string>());
  run.chain.site_ids = run.table.site_ids;
  run.chain.covariates = run.table.covariates;
  run.chain.species_ids = run.table.species_ids;
  if (run.chain.draws[0].z.rows() != run.table.n_sites() ||
      run.chain.draws[0].z.cols() != run.table.n_species())
    throw depgem::ValidationError("chain dimensions do not match the data");
  return run;
}

std::vector<double> build_grid(double lo, double hi, int points) {
  if (points < 2) throw depgem::ValidationError("grid needs >= 2 points");
  if (!(hi > lo))
    throw depgem::ValidationError("grid max must exceed grid min");
  std::vector<double> grid(static_cast<std::size_t>(points));
  for (int g = 0; g < points; ++g)
    grid[static_cast<std::size_t>(g)] =
        lo + (hi - lo) * static_cast<double>(g) / (points - 1);
  return grid;
}

std::vector<double> read_grid_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw depgem::ValidationError("cannot open grid file '" + path + "'");
  std::vector<double> grid;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || (line_no == 1 && !std::isdigit(line[0]) &&
                         line[0] != '-' && line[0] != '.'))
      continue;  // header or blank
    grid.push_back(std::stod(line));
  }
  if (grid.size() < 2)
    throw depgem::ValidationError("grid file needs >= 2 values");
  return grid;
}

// ---------------------------------------------------------------------------
// analysis subcommands
// ---------------------------------------------------------------------------

int cmd_predict(const LoadedRun& run, const std::vector<double>& grid,
                std::uint64_t seed, int threads, const std::string& out_dir) {
  const std::vector<double> grid_sep =
      depgem::prepare_prediction_grid(grid, run.chain.covariates, &std::cerr);
  const depgem::PredictiveDraws pred =
      depgem::sample_predictive(run.chain, grid_sep, seed, threads);

  const std::size_t n_draws = pred.weights.size();
  const std::size_t n_sites = grid.size();
  const std::size_t n_species = run.table.species_ids.size();
  std::vector<std::vector<std::string>> rows;
  std::vector<double> column(n_draws);
  for (std::size_t s = 0; s < n_sites; ++s) {
    for (std::size_t j = 0; j < n_species; ++j) {
      for (std::size_t d = 0; d < n_draws; ++d)
        column[d] = pred.weights[d][s].weights[j];
      std::sort(column.begin(), column.end());
      double mean = 0.0;
      for (double v : column) mean += v;
      mean /= static_cast<double>(n_draws);
      auto quantile = [&](double q) {
        const double pos = q * static_cast<double>(n_draws - 1);
        const auto lo = static_cast<std::size_t>(pos);
        const auto hi = std::min(lo + 1, n_draws - 1);
        const double w = pos - static_cast<double>(lo);
        return (1.0 - w) * column[lo] + w * column[hi];
      };
      rows.push_back({fmt(grid[s]), run.table.species_ids[j], fmt(mean),
                      fmt(quantile(0.025)), fmt(quantile(0.975))});
    }
  }
  fs::create_directories(out_dir);
  write_csv(fs::path(out_dir) / "predictive_weights.csv",
            "x,species,mean,lo95,hi95", rows);
  std::cout << "predict: " << n_sites << " covariates x " << n_species
            << " species over " << n_draws << " draws\n";
  return 0;
}

void write_curve_csv(const fs::path& path, const depgem::DiversityCurve& c) {
  std::vector<std::vector<std::string>> rows;
  for (std::size_t g = 0; g < c.grid.size(); ++g)
    rows.push_back(
        {fmt(c.grid[g]), fmt(c.mean[g]), fmt(c.lo95[g]), fmt(c.hi95[g])});
  write_csv(path, "grid,mean,lo95,hi95", rows);
}

int cmd_diversity(const LoadedRun& run, const std::vector<double>& grid,
                  const depgem::IndexSpec& index, std::uint64_t seed,
                  int threads, const std::string& out_dir) {
  const depgem::DiversityCurve curve = depgem::diversity_curve(
      run.chain, run.table, grid, index, seed, threads);
  fs::create_directories(out_dir);
  write_curve_csv(fs::path(out_dir) / "diversity.csv", curve);
  std::vector<std::vector<std::string>> rows;
  for (const auto& [x, value] : curve.empirical)
    rows.push_back({fmt(x), fmt(value)});
  write_csv(fs::path(out_dir) / "diversity_empirical.csv", "covariate,value",
            rows);
  std::cout << "diversity: " << curve.grid.size() << " grid points over "
            << run.chain.draws.size() << " draws\n";
  return 0;
}

int cmd_ecx(const LoadedRun& run, const std::vector<double>& grid,
            const std::vector<double>& levels, double baseline_threshold,
            std::uint64_t seed, int threads, const std::string& out_dir) {
  std::vector<Eigen::Index> baseline;
  for (std::size_t i = 0; i < run.raw_covariates.size(); ++i)
    if (run.raw_covariates[i] <= baseline_threshold)
      baseline.push_back(static_cast<Eigen::Index>(i));
  if (baseline.size() < 2)
    throw depgem::ValidationError(
        "fewer than two baseline sites at or below covariate " +
        fmt(baseline_threshold) + "; baseline dissimilarity is undefined");

  const depgem::DissimilarityCurve dis = depgem::dissimilarity_curve(
      run.chain, run.table, grid, baseline, seed, threads);
  fs::create_directories(out_dir);
  write_curve_csv(fs::path(out_dir) / "dissimilarity.csv", dis.curve);

  std::vector<std::vector<std::string>> rows;
  for (double x : levels) {
    const depgem::EcxEstimate e = depgem::ecx(dis.curve, dis.jac0, x);
    rows.push_back({fmt(x), fmt(e.ec), fmt(e.ci_lo), fmt(e.ci_hi)});
    std::cout << "EC_" << fmt(x) << " = " << fmt(e.ec) << " [" << fmt(e.ci_lo)
              << ", " << fmt(e.ci_hi) << "]"
              << (e.reached ? "" : " (threshold not reached within grid)")
              << "\n";
  }
  write_csv(fs::path(out_dir) / "ecx.csv", "x,ec,ci_lo,ci_hi", rows);
  std::cout << "baseline dissimilarity Jac_0 = " << fmt(dis.jac0) << "\n";
  return 0;
}

int cmd_cpo(const LoadedRun& run, const std::string& out_dir) {
  const depgem::CpoReport report = depgem::cpo(run.chain, run.table);
  fs::create_directories(out_dir);
  std::vector<std::vector<std::string>> rows;
  for (std::size_t j = 0; j < report.per_species_log_cpo.size(); ++j)
    rows.push_back(
        {run.table.species_ids[j], fmt(report.per_species_log_cpo[j])});
  write_csv(fs::path(out_dir) / "cpo.csv", "species,log_cpo", rows);
  long degenerate = 0;
  for (long d : report.degenerate_draws) degenerate += d;
  if (degenerate > 0)
    std::cerr << "warning: " << degenerate
              << " draws had non-finite species likelihoods and were "
                 "excluded\n";
  std::cout << "log-CPO mean = " << fmt(report.mean_log_cpo)
            << ", median = " << fmt(report.median_log_cpo) << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// verify
// ---------------------------------------------------------------------------

int cmd_verify(std::uint64_t seed, int threads, double n_mc_scale,
               bool break_hastings) {
  if (n_mc_scale < 0.1)
    std::cerr << "warning: n-mc-scale < 0.1 makes the Monte Carlo checks "
                 "inconclusive; treat results as a smoke run\n";
  const auto results =
      depgem::run_default_suite(seed, threads, n_mc_scale, break_hastings);
  std::size_t failures = 0;
  std::printf("%-44s %14s %14s %12s %8s  %s\n", "oracle", "closed", "estimate",
              "se", "z", "result");
  for (const auto& r : results) {
    if (!r.pass) ++failures;
    std::printf("%-44s %14.8g %14.8g %12.4g %8.2f  %s\n", r.name.c_str(),
                r.closed_form, r.mc_estimate, r.se, r.z_score,
                r.pass ? "pass" : "FAIL");
  }
  std::printf("%zu/%zu oracles passed\n", results.size() - failures,
              results.size());
  return failures == 0 ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Covariate-dependent stick-breaking model for species count data"};
  app.require_subcommand(1);

  // fit ---------------------------------------------------------------------
  auto* fit = app.add_subcommand("fit", "sample the posterior on a data set");
  std::string fit_data, fit_format = "long", fit_config, fit_out = "out";
  bool fit_break_hastings = false;
  FitSettings settings;
  fit->add_option("--data", fit_data, "count table CSV")->required();
  fit->add_option("--format", fit_format, "long|wide");
  fit->add_option("--config", fit_config, "JSON config file");
  fit->add_option("--out", fit_out, "output directory");
  fit->add_option("--iterations", settings.iterations);
  fit->add_option("--burn-in", settings.burn_in);
  fit->add_option("--thin", settings.thin);
  fit->add_option("--seed", settings.seed);
  fit->add_option("--threads", settings.threads);
  fit->add_option("--kernel", settings.kernel, "se|ou|rq");
  fit->add_option("--jitter-sigma", settings.jitter_sigma);
  fit->add_option("--jitter-seed", settings.jitter_seed);
  fit->add_option("--min-total", settings.min_total,
                  "drop species whose total count is <= this");
  fit->add_flag("--break-hastings", fit_break_hastings,
                "negative control: drop the truncated-proposal correction");

  // shared analysis options ---------------------------------------------------
  std::string run_dir, data_path, data_format = "long", out_dir = "out";
  double grid_min = std::numeric_limits<double>::quiet_NaN();
  double grid_max = std::numeric_limits<double>::quiet_NaN();
  int grid_points = 0;
  std::string grid_file;
  std::uint64_t analysis_seed = 1;
  int analysis_threads = 1;

  auto add_analysis_options = [&](CLI::App* cmd, int default_points) {
    cmd->add_option("--run", run_dir, "fit output directory")->required();
    cmd->add_option("--data", data_path, "count table CSV")->required();
    cmd->add_option("--format", data_format, "long|wide");
    cmd->add_option("--out", out_dir, "output directory");
    cmd->add_option("--grid-min", grid_min);
    cmd->add_option("--grid-max", grid_max);
    cmd->add_option("--grid-points", grid_points)
        ->default_val(default_points);
    cmd->add_option("--grid-file", grid_file, "CSV of covariates, one per line");
    cmd->add_option("--seed", analysis_seed);
    cmd->add_option("--threads", analysis_threads);
  };

  auto* predict = app.add_subcommand("predict",
                                     "posterior-predictive weights on a grid");
  add_analysis_options(predict, 65);

  auto* diversity =
      app.add_subcommand("diversity", "diversity curve over the covariate");
  add_analysis_options(diversity, 129);
  std::string index_name = "simpson";
  double good_alpha = 1.0, good_beta = 1.0;
  diversity->add_option("--index", index_name, "simpson|shannon|good");
  diversity->add_option("--alpha", good_alpha, "Good index alpha");
  diversity->add_option("--beta", good_beta, "Good index beta");

  auto* ecx_cmd = app.add_subcommand(
      "ecx", "dissimilarity curve and effective concentrations");
  add_analysis_options(ecx_cmd, 641);
  std::vector<double> ec_levels = {10.0, 20.0, 50.0};
  double baseline_threshold = 0.0;
  ecx_cmd->add_option("--levels", ec_levels, "effect levels in percent");
  ecx_cmd->add_option("--baseline-threshold", baseline_threshold,
                      "sites with raw covariate <= this form the baseline");

  auto* cpo_cmd =
      app.add_subcommand("cpo", "conditional predictive ordinates");
  cpo_cmd->add_option("--run", run_dir, "fit output directory")->required();
  cpo_cmd->add_option("--data", data_path, "count table CSV")->required();
  cpo_cmd->add_option("--format", data_format, "long|wide");
  cpo_cmd->add_option("--out", out_dir, "output directory");

  // simulate ------------------------------------------------------------------
  auto* simulate = app.add_subcommand("simulate", "generate a synthetic table");
  depgem::SimulateConfig sim_config;
  std::string sim_kernel = "se", sim_out = "synthetic.csv",
              sim_truth = "truth.json";
  simulate->add_option("--sites", sim_config.n_sites);
  simulate->add_option("--species", sim_config.n_species);
  simulate->add_option("--m", sim_config.m);
  simulate->add_option("--kernel", sim_kernel, "se|ou|rq");
  simulate->add_option("--lambda", sim_config.lambda);
  simulate->add_option("--sigma-z", sim_config.sigma_z);
  simulate->add_option("--n-per-site", sim_config.n_per_site);
  simulate->add_option("--cov-min", sim_config.cov_min);
  simulate->add_option("--cov-max", sim_config.cov_max);
  simulate->add_option("--zero-sites", sim_config.zero_covariate_sites);
  simulate->add_option("--seed", sim_config.seed);
  simulate->add_option("--out", sim_out, "data CSV path");
  simulate->add_option("--truth", sim_truth, "ground-truth JSON path");

  // verify ----------------------------------------------------------------
  auto* verify = app.add_subcommand("verify", "run the oracle suite");
  std::uint64_t verify_seed = 1;
  int verify_threads = 1;
  double n_mc_scale = 1.0;
  bool verify_break_hastings = false;
  verify->add_option("--seed", verify_seed);
  verify->add_option("--threads", verify_threads);
  verify->add_option("--n-mc-scale", n_mc_scale,
                     "scales every Monte Carlo sample size");
  verify->add_flag("--break-hastings", verify_break_hastings,
                   "negative control: expected to fail");

  CLI11_PARSE(app, argc, argv);

  try {
    if (fit->parsed()) {
      if (!fit_config.empty()) {
        FitSettings from_file;
        from_file.apply_json(load_json_file(fit_config));
        // file values fill everything the user did not pass explicitly
        auto keep = [&](const std::string& flag, auto& target, auto file_value) {
          if (fit->count(flag) == 0) target = file_value;
        };
        keep("--iterations", settings.iterations, from_file.iterations);
        keep("--burn-in", settings.burn_in, from_file.burn_in);
        keep("--thin", settings.thin, from_file.thin);
        keep("--seed", settings.seed, from_file.seed);
        keep("--threads", settings.threads, from_file.threads);
        keep("--kernel", settings.kernel, from_file.kernel);
        keep("--jitter-sigma", settings.jitter_sigma, from_file.jitter_sigma);
        keep("--jitter-seed", settings.jitter_seed, from_file.jitter_seed);
        keep("--min-total", settings.min_total, from_file.min_total);
        settings.priors = from_file.priors;
      }
      return cmd_fit(fit_data, fit_format, settings, fit_out,
                     fit_break_hastings);
    }

    if (simulate->parsed()) {
      sim_config.kernel = depgem::kernel_family_from_string(sim_kernel);
      const depgem::SimulatedData sim = depgem::simulate_dataset(sim_config);
      depgem::save_counts_long(sim.table, sim_out);
      depgem::save_truth_json(sim, sim_truth);
      std::cout << "simulate: wrote " << sim_out << " ("
                << sim.table.n_sites() << " sites, " << sim.table.n_species()
                << " species) and " << sim_truth << "\n";
      return 0;
    }

    if (verify->parsed())
      return cmd_verify(verify_seed, verify_threads, n_mc_scale,
                        verify_break_hastings);

    // remaining subcommands analyze an existing run
    const LoadedRun run = load_run(run_dir, data_path, data_format);
    std::vector<double> grid;
    if (cpo_cmd->parsed()) {
      // CPO works on the training sites directly; no grid involved
    } else if (!grid_file.empty()) {
      grid = read_grid_file(grid_file);
    } else {
      double lo = grid_min, hi = grid_max;
      if (std::isnan(lo))
        lo = *std::min_element(run.raw_covariates.begin(),
                               run.raw_covariates.end());
      if (std::isnan(hi))
        hi = *std::max_element(run.raw_covariates.begin(),
                               run.raw_covariates.end());
      grid = build_grid(lo, hi, grid_points);
    }

    if (predict->parsed())
      return cmd_predict(run, grid, analysis_seed, analysis_threads, out_dir);
    if (diversity->parsed()) {
      depgem::IndexSpec index;
      if (index_name == "simpson") {
        index.kind = depgem::IndexSpec::Kind::Simpson;
      } else if (index_name == "shannon") {
        index.kind = depgem::IndexSpec::Kind::Shannon;
      } else if (index_name == "good") {
        index.kind = depgem::IndexSpec::Kind::Good;
        index.alpha = good_alpha;
        index.beta = good_beta;
      } else {
        throw depgem::ValidationError("unknown index '" + index_name + "'");
      }
      return cmd_diversity(run, grid, index, analysis_seed, analysis_threads,
                           out_dir);
    }
    if (ecx_cmd->parsed())
      return cmd_ecx(run, grid, ec_levels, baseline_threshold, analysis_seed,
                     analysis_threads, out_dir);
    if (cpo_cmd->parsed()) return cmd_cpo(run, out_dir);
  } catch (const depgem::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const depgem::NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
