#include "manifest.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "actpred/csv.hpp"
#include "actpred/errors.hpp"

namespace actpred::cli {

std::string file_digest(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read '" + path + "'");
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  char buffer[1 << 16];
  while (in) {
    in.read(buffer, sizeof(buffer));
    hash = fnv1a64(std::string_view(buffer, static_cast<std::size_t>(in.gcount())), hash);
  }
  return "fnv1a64:" + hex64(hash);
}

void write_manifest(const std::string& path, const RunManifest& manifest) {
  nlohmann::ordered_json doc;
  doc["command"] = manifest.command;
  doc["arguments"] = manifest.arguments;
  doc["config_hash"] = manifest.config_hash;
  auto files = [](const auto& list) {
    auto array = nlohmann::ordered_json::array();
    for (const auto& [file, digest] : list) array.push_back({{"path", file}, {"digest", digest}});
    return array;
  };
  doc["inputs"] = files(manifest.inputs);
  doc["outputs"] = files(manifest.outputs);
  doc["seed"] = manifest.seed;
  doc["threads"] = manifest.threads;
  doc["tool_version"] = manifest.version;
  doc["wall_time_s"] = manifest.wall_time_s;
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write manifest '" + path + "'");
  out << doc.dump(2) << '\n';
}

}  // namespace actpred::cli
