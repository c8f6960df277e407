#pragma once

#include <map>
#include <string>
#include <vector>

#include "coda/trainer.hpp"

namespace coda::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;
inline constexpr int kExitNonFinite = 3;

// Fully resolved run description: every key explicit, no implicit defaults
// left by the time it is serialized. Written to <out>/manifest.json before
// any computation starts; a run is reproducible from that file alone.
struct RunManifest {
  std::string command;  // train | eval | augment | mmd | sweep
  std::string out_dir = "out";
  bool force_weights = false;
  std::string version;

  std::string train_path;
  std::string dev_path;
  std::string paraphrase_path;
  std::string init_from;
  std::string format = "tsv";  // tsv | jsonl
  int num_classes = 2;

  trainer::TrainConfig config;

  std::vector<double> sweep_fractions = {1.0};
  std::vector<std::uint64_t> sweep_seeds = {1, 2, 3, 4, 5};
  std::vector<std::string> sweep_methods = {"coda", "ce"};

  std::vector<std::string> mmd_strategies = {"identity", "cutoff", "back", "stack(back,adv)"};
  int mmd_sample_count = 512;
  int mmd_warm_epochs = 0;
  bool mmd_unbiased = false;
  std::vector<double> mmd_bandwidth_scales = {0.25, 0.5, 1.0, 2.0, 4.0};

  // Every config key with its resolved value.
  std::map<std::string, std::string> to_map() const;
  std::string to_json() const;
};

// Reads a flat `key = value` file ('#' starts a comment), then applies
// overrides in order. Unknown keys raise; the weight windows are enforced
// unless force_weights. config_path may be empty (defaults + overrides only).
RunManifest parse_config(const std::string& command, const std::string& config_path,
                         const std::vector<std::pair<std::string, std::string>>& overrides,
                         bool force_weights);

// Applies one key=value assignment to the manifest; throws on unknown keys.
void apply_key(RunManifest& manifest, const std::string& key, const std::string& value);

// Dispatches the manifest's command. Returns a process exit code; never throws.
int run(const RunManifest& manifest);

}  // namespace coda::cli
