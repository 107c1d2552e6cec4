#include "depgem/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace depgem {

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::stringstream ss(line);
  while (std::getline(ss, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

class ParseContext {
 public:
  ParseContext(const std::filesystem::path& path, std::size_t line)
      : path_(path.string()), line_(line) {}

  [[noreturn]] void fail(const std::string& what) const {
    throw ValidationError(path_ + ":" + std::to_string(line_) + ": " + what);
  }

  double parse_double(const std::string& raw, const char* what) const {
    const std::string s = trim(raw);
    double value = 0.0;
    const auto [ptr, ec] =
        std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size())
      fail(std::string("malformed ") + what + " '" + raw + "'");
    return value;
  }

  long long parse_count(const std::string& raw) const {
    const std::string s = trim(raw);
    long long value = 0;
    const auto [ptr, ec] =
        std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size())
      fail("malformed count '" + raw + "'");
    if (value < 0) fail("negative count " + std::to_string(value));
    return value;
  }

 private:
  std::string path_;
  std::size_t line_;
};

struct RawTable {
  std::vector<std::string> site_ids;
  std::vector<double> covariates;
  std::vector<std::string> species_ids;
  std::vector<std::vector<double>> cells;  // [site][species], built at the end
};

RawTable parse_long(std::istream& in, const std::filesystem::path& path) {
  RawTable t;
  std::unordered_map<std::string, std::size_t> site_index;
  std::unordered_map<std::string, std::size_t> species_index;
  struct Cell {
    std::size_t site, species;
    double count;
  };
  std::vector<Cell> entries;
  std::unordered_set<std::uint64_t> seen;

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    ParseContext ctx(path, line_no);
    const auto fields = split_csv_line(stripped);
    if (line_no == 1) {
      if (fields.size() != 4 || trim(fields[0]) != "site")
        ctx.fail("expected header 'site,covariate,species,count'");
      continue;
    }
    if (fields.size() != 4) ctx.fail("expected 4 fields, got " +
                                     std::to_string(fields.size()));
    const std::string site = trim(fields[0]);
    const double cov = ctx.parse_double(fields[1], "covariate");
    const std::string species = trim(fields[2]);
    const auto count = static_cast<double>(ctx.parse_count(fields[3]));

    auto [site_it, site_new] = site_index.try_emplace(site, t.site_ids.size());
    if (site_new) {
      t.site_ids.push_back(site);
      t.covariates.push_back(cov);
    } else if (t.covariates[site_it->second] != cov) {
      ctx.fail("site '" + site + "' repeated with a different covariate");
    }
    auto [sp_it, sp_new] =
        species_index.try_emplace(species, t.species_ids.size());
    if (sp_new) t.species_ids.push_back(species);

    const std::uint64_t key =
        (static_cast<std::uint64_t>(site_it->second) << 32) |
        static_cast<std::uint64_t>(sp_it->second);
    if (!seen.insert(key).second)
      ctx.fail("duplicate cell for site '" + site + "', species '" + species +
               "'");
    entries.push_back({site_it->second, sp_it->second, count});
  }

  t.cells.assign(t.site_ids.size(),
                 std::vector<double>(t.species_ids.size(), 0.0));
  for (const Cell& c : entries) t.cells[c.site][c.species] = c.count;
  return t;
}

RawTable parse_wide(std::istream& in, const std::filesystem::path& path) {
  RawTable t;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    ParseContext ctx(path, line_no);
    const auto fields = split_csv_line(stripped);
    if (t.species_ids.empty() && line_no == 1) {
      if (fields.size() < 3 || trim(fields[0]) != "site" ||
          trim(fields[1]) != "covariate")
        ctx.fail("expected header 'site,covariate,<species...>'");
      for (std::size_t j = 2; j < fields.size(); ++j) {
        const std::string id = trim(fields[j]);
        if (id.empty()) ctx.fail("empty species name in header");
        if (std::find(t.species_ids.begin(), t.species_ids.end(), id) !=
            t.species_ids.end())
          ctx.fail("duplicate species '" + id + "' in header");
        t.species_ids.push_back(id);
      }
      continue;
    }
    if (fields.size() != t.species_ids.size() + 2)
      ctx.fail("expected " + std::to_string(t.species_ids.size() + 2) +
               " fields, got " + std::to_string(fields.size()));
    const std::string site = trim(fields[0]);
    const double cov = ctx.parse_double(fields[1], "covariate");
    if (std::find(t.site_ids.begin(), t.site_ids.end(), site) !=
        t.site_ids.end())
      ctx.fail("duplicate site '" + site + "'");
    t.site_ids.push_back(site);
    t.covariates.push_back(cov);
    std::vector<double> row(t.species_ids.size());
    for (std::size_t j = 0; j < row.size(); ++j)
      row[j] = static_cast<double>(ctx.parse_count(fields[j + 2]));
    t.cells.push_back(std::move(row));
  }
  return t;
}

}  // namespace

void SpeciesCountTable::validate() const {
  if (counts.rows() != static_cast<Eigen::Index>(site_ids.size()) ||
      counts.rows() != static_cast<Eigen::Index>(covariates.size()) ||
      counts.cols() != static_cast<Eigen::Index>(species_ids.size()))
    throw ValidationError("count table dimensions are inconsistent");
  for (Eigen::Index i = 0; i < counts.rows(); ++i) {
    for (Eigen::Index j = 0; j < counts.cols(); ++j) {
      const double c = counts(i, j);
      if (!(c >= 0.0) || c != std::floor(c))
        throw ValidationError("count for site '" + site_ids[i] +
                              "', species '" + species_ids[j] +
                              "' is not a nonnegative integer");
    }
    if (row_sum(i) < 1.0)
      throw ValidationError("site '" + site_ids[i] +
                            "' has zero total abundance");
  }
}

void SpeciesCountTable::canonicalize(std::ostream* warnings) {
  const Eigen::Index j_count = counts.cols();
  std::vector<Eigen::Index> order(static_cast<std::size_t>(j_count));
  std::iota(order.begin(), order.end(), 0);
  Eigen::VectorXd totals = counts.colwise().sum();
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) {
                     return totals(a) > totals(b);
                   });
  std::vector<Eigen::Index> kept;
  for (Eigen::Index j : order) {
    if (totals(j) > 0.0) {
      kept.push_back(j);
    } else if (warnings) {
      *warnings << "warning: dropping species '"
                << species_ids[static_cast<std::size_t>(j)]
                << "' with zero total count\n";
    }
  }
  Eigen::MatrixXd sorted(counts.rows(),
                         static_cast<Eigen::Index>(kept.size()));
  std::vector<std::string> ids;
  ids.reserve(kept.size());
  for (std::size_t j = 0; j < kept.size(); ++j) {
    sorted.col(static_cast<Eigen::Index>(j)) = counts.col(kept[j]);
    ids.push_back(species_ids[static_cast<std::size_t>(kept[j])]);
  }
  counts = std::move(sorted);
  species_ids = std::move(ids);
}

SpeciesCountTable load_counts(const std::filesystem::path& path,
                              const LoadOptions& options,
                              std::ostream* warnings) {
  std::ifstream in(path);
  if (!in)
    throw ValidationError("cannot open data file '" + path.string() + "'");
  RawTable raw = options.format == TableFormat::Long ? parse_long(in, path)
                                                     : parse_wide(in, path);
  if (raw.site_ids.empty())
    throw ValidationError("data file '" + path.string() + "' has no rows");

  SpeciesCountTable table;
  table.site_ids = std::move(raw.site_ids);
  table.covariates = std::move(raw.covariates);
  table.species_ids = std::move(raw.species_ids);
  table.counts.resize(static_cast<Eigen::Index>(table.site_ids.size()),
                      static_cast<Eigen::Index>(table.species_ids.size()));
  for (std::size_t i = 0; i < raw.cells.size(); ++i)
    for (std::size_t j = 0; j < raw.cells[i].size(); ++j)
      table.counts(static_cast<Eigen::Index>(i),
                   static_cast<Eigen::Index>(j)) = raw.cells[i][j];

  if (options.min_total > 0) {
    const Eigen::VectorXd totals = table.counts.colwise().sum();
    std::vector<Eigen::Index> kept;
    for (Eigen::Index j = 0; j < table.counts.cols(); ++j)
      if (totals(j) > static_cast<double>(options.min_total))
        kept.push_back(j);
      else if (warnings)
        *warnings << "warning: dropping low-abundance species '"
                  << table.species_ids[static_cast<std::size_t>(j)] << "' ("
                  << totals(j) << " <= " << options.min_total << ")\n";
    Eigen::MatrixXd filtered(table.counts.rows(),
                             static_cast<Eigen::Index>(kept.size()));
    std::vector<std::string> ids;
    for (std::size_t j = 0; j < kept.size(); ++j) {
      filtered.col(static_cast<Eigen::Index>(j)) = table.counts.col(kept[j]);
      ids.push_back(table.species_ids[static_cast<std::size_t>(kept[j])]);
    }
    table.counts = std::move(filtered);
    table.species_ids = std::move(ids);
  }

  table.canonicalize(warnings);
  table.validate();
  return table;
}

void save_counts_long(const SpeciesCountTable& table,
                      const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out)
    throw ValidationError("cannot write data file '" + path.string() + "'");
  out << "site,covariate,species,count\n";
  char buf[32];
  for (Eigen::Index i = 0; i < table.n_sites(); ++i) {
    const auto cov = table.covariates[static_cast<std::size_t>(i)];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), cov);
    const std::string cov_str(buf, end);
    for (Eigen::Index j = 0; j < table.n_species(); ++j) {
      const double c = table.counts(i, j);
      if (c == 0.0) continue;
      out << table.site_ids[static_cast<std::size_t>(i)] << ',' << cov_str
          << ',' << table.species_ids[static_cast<std::size_t>(j)] << ','
          << static_cast<long long>(c) << '\n';
    }
  }
}

std::vector<double> jitter_covariates(std::span<const double> x,
                                      const JitterSpec& spec) {
  spec.validate();
  RandomStream rng(spec.seed, 0x6a69747465726564ULL);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double eps = spec.sigma * rng.normal();
    out[i] = x[i] == 0.0 ? std::abs(eps) : x[i] + eps;
  }
  // Redraw only colliding entries until all are pairwise distinct.
  for (;;) {
    bool collision = false;
    for (std::size_t i = 0; i < out.size(); ++i)
      for (std::size_t j = i + 1; j < out.size(); ++j)
        if (out[i] == out[j]) {
          const double eps = spec.sigma * rng.normal();
          out[j] = x[j] == 0.0 ? std::abs(eps) : x[j] + eps;
          collision = true;
        }
    if (!collision) return out;
  }
}

Eigen::MatrixXd empirical_proportions(const SpeciesCountTable& table) {
  Eigen::MatrixXd props(table.n_sites(), table.n_species());
  for (Eigen::Index i = 0; i < table.n_sites(); ++i) {
    const double total = table.row_sum(i);
    if (!(total > 0.0))
      throw ValidationError("site '" +
                            table.site_ids[static_cast<std::size_t>(i)] +
                            "' has zero abundance");
    props.row(i) = table.counts.row(i) / total;
  }
  return props;
}

}  // namespace depgem
