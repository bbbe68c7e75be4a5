#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace actpred::cli {

/// Provenance record written next to every run's outputs.
struct RunManifest {
  std::string command;
  std::vector<std::string> arguments;
  std::string config_hash;
  std::vector<std::pair<std::string, std::string>> inputs;   // path, digest
  std::vector<std::pair<std::string, std::string>> outputs;  // path, digest
  std::uint64_t seed = 0;
  int threads = 1;
  std::string version;
  double wall_time_s = 0.0;
};

/// FNV-1a digest of a file's bytes, hex encoded.
std::string file_digest(const std::string& path);
void write_manifest(const std::string& path, const RunManifest& manifest);

}  // namespace actpred::cli
