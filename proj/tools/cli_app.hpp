#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

namespace pvcrack::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

// Name of the environment variable holding the default dataset root.
inline constexpr const char* kDataEnv = "PVCRACK_DATA";

struct Artifact {
  std::string path;
  std::uintmax_t bytes = 0;
  std::uint32_t crc32 = 0;
};

struct RunManifest {
  std::string command;
  std::vector<std::string> argv;
  std::map<std::string, std::string> config;  // every flag, defaults resolved
  std::map<std::string, std::uint64_t> seeds;
  std::string variant;
  std::vector<std::string> inputs;
  std::vector<Artifact> outputs;
  std::string started_utc;
  std::string finished_utc;
  double wall_seconds = 0.0;
  bool deterministic = false;

  std::string to_json() const;
};

Artifact describe_artifact(const std::filesystem::path& path);

// Entries of a config file, in file order. Either "key=value" lines ('#'
// comments and blank lines skipped) or a run manifest JSON, whose "config"
// object is used when its command equals `command`. UsageError on malformed
// input, LoadError when unreadable.
std::vector<std::pair<std::string, std::string>> read_config_file(const std::filesystem::path& path,
                                                                  const std::string& command);

// Runs one subcommand. args excludes the program name.
int dispatch(const std::vector<std::string>& args);

}  // namespace pvcrack::cli
