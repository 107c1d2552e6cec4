// Chain serialization: one NDJSON line per posterior draw (species columns of
// Z, the three scalars, and the log posterior) plus file hashing used to bind
// analysis outputs to their inputs.

#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "depgem/mcmc.hpp"

namespace depgem {

/// One draw per line:
/// {"sigma_z":..,"lambda":..,"m":..,"log_post":..,"z":[[col 1],[col 2],..]}
void write_chain_ndjson(const ChainSamples& chain,
                        const std::filesystem::path& path);

/// Reads draws and log-posterior values; the caller restores config and data
/// echoes from the run manifest.
ChainSamples read_chain_ndjson(const std::filesystem::path& path);

std::uint64_t file_hash(const std::filesystem::path& path);
std::string hash_hex(std::uint64_t hash);

}  // namespace depgem
