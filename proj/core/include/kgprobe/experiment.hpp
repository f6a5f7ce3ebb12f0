#pragma once

/**
 * @file experiment.hpp
 * End-to-end driver: ingest -> sample -> (describe) -> render -> extract ->
 * sweep -> evaluate, plus the JSON/CSV artifacts consumed by plotting tools.
 */

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "kgprobe/config.hpp"
#include "kgprobe/eval.hpp"
#include "kgprobe/kg.hpp"
#include "kgprobe/probe.hpp"
#include "kgprobe/prompts.hpp"
#include "kgprobe/store.hpp"

namespace kgprobe {

/// Loads the configured TSV splits and description files. Label columns
/// are detected per file.
KnowledgeGraph load_graph(const DataConfig& data);

/// Random graph with entity names "e<i>" and relation names "r<j>". Train,
/// valid and test triples are disjoint, no ordered entity pair carries two
/// relations, and every split holds positives only.
KnowledgeGraph make_synthetic_graph(const SyntheticGraphSpec& spec);

/// Rendered texts with their labels and example ids (position in the input).
struct PromptSet {
  std::vector<std::string> texts;
  std::vector<std::int32_t> labels;
  std::vector<std::uint64_t> ids;
};

/// Triple classification keeps the example label; relation prediction
/// labels each example with its relation index.
PromptSet render_examples(const KnowledgeGraph& g, std::span<const LabeledTriple> examples,
                          const PromptTemplate& tpl, TaskTag task);

/// Relation-prediction example set: the first `n` positives of a split.
std::vector<LabeledTriple> relation_examples(const KnowledgeGraph& g, Split split, std::size_t n);

struct SizePoint {
  std::size_t n = 0;
  double accuracy = 0.0;
  std::uint64_t seed = 0;
};

struct EvalReport {
  TaskTag task = TaskTag::tc;
  /// "accuracy" for triple classification, "hits_at_1" for relation prediction.
  std::map<std::string, double> metrics;
  std::optional<LayerSweepReport> sweep;
  std::map<std::string, std::size_t> sample_counts;
  std::vector<std::pair<std::string, double>> stage_seconds;
  std::optional<std::uint64_t> peak_rss_bytes;
  std::vector<SizePoint> sizes;
  /// Effective configuration as canonical JSON; "{}" when not applicable.
  std::string config_json = "{}";
  std::vector<std::string> warnings;
  /// ISO-8601 UTC; the only field that varies between identical runs.
  std::string created_at;

  /// Same key set for every report, whatever parts are absent.
  std::string to_json() const;
};

/// Projection of the selected-layer test states, kept for pca.csv.
struct PcaArtifact {
  PcaResult pca;
  std::vector<std::uint64_t> ids;
  std::vector<std::int32_t> labels;
};

struct ExperimentResult {
  EvalReport report;
  std::optional<PcaArtifact> pca;
};

/// Runs the configured pipeline. Stage errors are rethrown with the stage
/// name prepended to the message and the original error code kept.
/// `client` serves llm-mode descriptions; without one an HttpTextClient is
/// built from the config. `backend` replaces the configured backend.
ExperimentResult run_experiment(const RunConfig& cfg, TextGenerationClient* client = nullptr,
                                ExtractionBackend* backend = nullptr);

/// Accuracy (or Hits@1) of a trained probe on a test store.
EvalReport evaluate_model(const ProbeModel& model, const HiddenStateStore& test);

void write_layers_csv(const LayerSweepReport& report, std::ostream& out);
void write_sizes_csv(std::span<const SizePoint> sizes, std::ostream& out);
void write_pca_csv(const PcaArtifact& pca, std::ostream& out);

/// report.json, layers.csv, sizes.csv and pca.csv under `dir` (created if
/// needed). CSV tables are written with headers even when empty.
void write_artifacts(const ExperimentResult& result, const std::filesystem::path& dir);

std::string utc_timestamp();

}  // namespace kgprobe
