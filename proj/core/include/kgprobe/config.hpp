#pragma once

/**
 * @file config.hpp
 * RunConfig: one structured JSON document mirroring every module's
 * configuration. Unknown keys are rejected at every level; missing keys keep
 * their defaults. The effective config is echoed into reports.
 *
 * {
 *   "task": "tc" | "rp",
 *   "data":       {"train", "valid", "test", "descriptions": [..], "relation_descriptions": [..]},
 *   "synthetic":  {"entities", "relations", "triples", "seed", "valid_fraction", "test_fraction"},
 *   "sampling":   {"seed", "head_corrupt_prob", "max_resample_attempts",
 *                  "train_pairs", "valid_pairs", "test_pairs"},
 *   "descriptions": {"mode": "none"|"concat"|"llm", "cap", "separator", "seed", "cache",
 *                    "endpoint", "model", "concurrency", "generation_template"},
 *   "prompts":    {"template_file", "template_id"},
 *   "extraction": {"backend": "mock"|"http", "layers", "batch_size", "url", "num_layers",
 *                  "mock": {"seed", "dim", "num_layers", "planted_layers": [..], "margin"}},
 *   "probe":      {"model", "batch_size", "learning_rate", "epochs", "weight_decay",
 *                  "hidden_width", "seed", "standardize"},
 *   "experiment": {"test_all_layers", "train_sizes": [..], "size_seeds": [..], "pca", "threads"},
 *   "output_dir": "..."
 * }
 */

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kgprobe/descgen.hpp"
#include "kgprobe/extraction.hpp"
#include "kgprobe/probe.hpp"
#include "kgprobe/sampling.hpp"
#include "kgprobe/store.hpp"

namespace kgprobe {

struct DataConfig {
  std::string train;
  std::string valid;
  std::string test;
  std::vector<std::string> descriptions;
  std::vector<std::string> relation_descriptions;
};

/// Random graph used when no dataset is configured.
struct SyntheticGraphSpec {
  std::size_t entities = 200;
  std::size_t relations = 4;
  std::size_t triples = 2000;
  std::uint64_t seed = 0;
  double valid_fraction = 0.1;
  double test_fraction = 0.1;
};

struct SamplingConfig {
  SamplerConfig sampler;
  /// Triple classification: positive/negative pairs per split.
  /// Relation prediction: examples per split.
  std::size_t train_pairs = 1000;
  std::size_t valid_pairs = 250;
  std::size_t test_pairs = 250;
};

struct DescriptionConfig {
  bool enabled = false;
  DescGenConfig generator;
  std::string endpoint;
  std::string model;
};

struct PromptConfig {
  std::string template_file;
  std::string template_id = "PT1";
};

struct ExtractionConfig {
  std::string backend = "mock";
  std::string layers = "all";
  std::size_t batch_size = 16;
  std::string url;
  int num_layers = 0;
  MockLmConfig mock;
};

struct ExperimentOptions {
  bool test_all_layers = true;
  std::vector<std::size_t> train_sizes;
  std::vector<std::uint64_t> size_seeds{0};
  bool pca = true;
  std::size_t threads = 1;
};

struct RunConfig {
  TaskTag task = TaskTag::tc;
  std::optional<DataConfig> data;
  std::optional<SyntheticGraphSpec> synthetic;
  SamplingConfig sampling;
  DescriptionConfig descriptions;
  PromptConfig prompts;
  ExtractionConfig extraction;
  TrainConfig probe;
  ExperimentOptions experiment;
  std::string output_dir;
};

/// Strict parse; throws Errc::parse naming the offending key path.
RunConfig parse_run_config(std::string_view json_text);
RunConfig load_run_config(const std::filesystem::path& path);
/// Canonical JSON (sorted keys) of the effective configuration.
std::string run_config_json(const RunConfig& cfg);

}  // namespace kgprobe
