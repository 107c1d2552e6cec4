#include "depgem/chain_io.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace depgem {

namespace {

void append_double(std::string& out, double v) {
  char buf[32];
  const auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, end);
}

}  // namespace

void write_chain_ndjson(const ChainSamples& chain,
                        const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out)
    throw ValidationError("cannot write chain file '" + path.string() + "'");
  std::string line;
  for (std::size_t d = 0; d < chain.draws.size(); ++d) {
    const LatentState& s = chain.draws[d];
    line.clear();
    line += "{\"sigma_z\":";
    append_double(line, s.sigma_z);
    line += ",\"lambda\":";
    append_double(line, s.lambda);
    line += ",\"m\":";
    append_double(line, s.m);
    line += ",\"log_post\":";
    append_double(line, chain.log_posterior[d]);
    line += ",\"z\":[";
    for (Eigen::Index j = 0; j < s.z.cols(); ++j) {
      if (j > 0) line += ',';
      line += '[';
      for (Eigen::Index i = 0; i < s.z.rows(); ++i) {
        if (i > 0) line += ',';
        append_double(line, s.z(i, j));
      }
      line += ']';
    }
    line += "]}\n";
    out << line;
  }
}

ChainSamples read_chain_ndjson(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in)
    throw ValidationError("cannot open chain file '" + path.string() + "'");
  ChainSamples chain;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                            ": bad draw record: " + e.what());
    }
    LatentState s;
    s.sigma_z = j.at("sigma_z").get<double>();
    s.lambda = j.at("lambda").get<double>();
    s.m = j.at("m").get<double>();
    const auto& z = j.at("z");
    const auto n_species = static_cast<Eigen::Index>(z.size());
    if (n_species == 0)
      throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                            ": draw has no species columns");
    const auto n_sites = static_cast<Eigen::Index>(z.at(0).size());
    s.z.resize(n_sites, n_species);
    for (Eigen::Index col = 0; col < n_species; ++col) {
      const auto& column = z.at(static_cast<std::size_t>(col));
      if (static_cast<Eigen::Index>(column.size()) != n_sites)
        throw ValidationError(path.string() + ":" + std::to_string(line_no) +
                              ": ragged Z columns");
      for (Eigen::Index row = 0; row < n_sites; ++row)
        s.z(row, col) = column.at(static_cast<std::size_t>(row)).get<double>();
    }
    chain.log_posterior.push_back(j.at("log_post").get<double>());
    chain.draws.push_back(std::move(s));
  }
  return chain;
}

std::uint64_t file_hash(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in)
    throw ValidationError("cannot open file '" + path.string() +
                          "' for hashing");
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string bytes = ss.str();
  return fnv1a64(std::span(bytes.data(), bytes.size()));
}

std::string hash_hex(std::uint64_t hash) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(hash));
  return std::string(buf);
}

}  // namespace depgem
