#pragma once

/**
 * @file descgen.hpp
 * Entity descriptions built from one-hop train subgraphs, either by
 * concatenating transformed triples or by asking a text-generation model to
 * rephrase them. Only train triples ever reach a generation prompt.
 */

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kgprobe/kg.hpp"

namespace kgprobe {

enum class DescMode { concat, llm_rephrase };

std::string_view desc_mode_name(DescMode m) noexcept;
DescMode parse_desc_mode(std::string_view name);

/// Generation prompt used in rephrase mode. `{entity}` receives the entity
/// name and `{subgraph}` the separator-joined fact sentences; in-context
/// exemplars, if any, belong in the template text itself.
inline constexpr std::string_view kDefaultGenerationTemplate =
    "Write a short, factual description of the entity using only the facts listed.\n"
    "Entity: {entity}\n"
    "Facts: {subgraph}\n"
    "Description:";

struct DescGenConfig {
  DescMode mode = DescMode::concat;
  std::size_t max_subgraph_triples = 16;
  std::string separator = "; ";
  std::uint64_t seed = 0;
  std::optional<std::filesystem::path> cache_path;
  std::string generation_template{kDefaultGenerationTemplate};
  std::size_t max_concurrency = 1;

  void validate() const;
};

class TextGenerationClient {
 public:
  virtual ~TextGenerationClient() = default;
  virtual std::string generate(std::string_view prompt) = 0;
  /// Model name; part of every cache key.
  virtual std::string identity() const = 0;
};

/// Canned client for tests and offline runs. Thread-safe; records every
/// prompt it receives.
class ReplayClient final : public TextGenerationClient {
 public:
  using Responder = std::function<std::string(std::string_view prompt)>;

  ReplayClient(std::string identity, Responder responder)
      : identity_(std::move(identity)), responder_(std::move(responder)) {}

  static std::unique_ptr<ReplayClient> fixed(std::string identity, std::string text);

  std::string generate(std::string_view prompt) override;
  std::string identity() const override { return identity_; }

  std::size_t calls() const noexcept { return calls_.load(); }
  std::vector<std::string> prompts() const;

 private:
  std::string identity_;
  Responder responder_;
  std::atomic<std::size_t> calls_{0};
  mutable std::mutex mu_;
  std::vector<std::string> prompts_;
};

/// OpenAI-style completions endpoint: POST {base_url}/v1/completions with
/// {"model", "prompt", "max_tokens", "temperature": 0}; reads choices[0].text.
class HttpTextClient final : public TextGenerationClient {
 public:
  HttpTextClient(std::string base_url, std::string model, int max_tokens = 256);
  std::string generate(std::string_view prompt) override;
  std::string identity() const override { return model_; }

 private:
  std::string base_url_;
  std::string model_;
  int max_tokens_;
};

/// One-hop train subgraph of `e`, downsampled uniformly to the cap with a
/// per-entity seed derived from cfg.seed. File order is kept.
std::vector<Triple> sampled_subgraph(const KnowledgeGraph& g, EntityId e, const DescGenConfig& cfg);

std::string concat_subgraph(const KnowledgeGraph& g, const std::vector<Triple>& triples,
                            std::string_view separator);

/// Stable hash of a subgraph's (head, relation, tail) names.
std::uint64_t subgraph_hash(const KnowledgeGraph& g, const std::vector<Triple>& triples);

std::string concat_description(const KnowledgeGraph& g, EntityId e, const DescGenConfig& cfg);

std::string generation_prompt(const KnowledgeGraph& g, EntityId e, const DescGenConfig& cfg);

/// Keyed by (entity name, model identity, subgraph hash). Safe for
/// concurrent lookups and inserts. Persisted as a `name<TAB>text` TSV plus a
/// `<path>.keys` sidecar holding `name<TAB>model<TAB>hash`.
class DescriptionCache {
 public:
  struct Entry {
    std::string model;
    std::uint64_t hash = 0;
    std::string text;
  };

  DescriptionCache() = default;
  DescriptionCache(DescriptionCache&& other) noexcept;
  DescriptionCache& operator=(DescriptionCache&& other) noexcept;

  std::optional<std::string> lookup(const std::string& entity, const std::string& model,
                                    std::uint64_t hash) const;
  void insert(const std::string& entity, const std::string& model, std::uint64_t hash,
              std::string text);
  std::size_t size() const;

  static DescriptionCache load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

 private:
  mutable std::mutex mu_;
  std::map<std::string, Entry> entries_;
};

/// Rephrase mode. Calls the client at most once per cache key; an entity
/// with an empty train subgraph yields "" without a call.
std::string rephrase_description(const KnowledgeGraph& g, EntityId e, const DescGenConfig& cfg,
                                 TextGenerationClient& client, DescriptionCache& cache);

struct DescribeResult {
  std::map<EntityId, std::string> descriptions;
  std::vector<std::pair<EntityId, std::string>> failures;
  std::size_t client_calls = 0;
};

/// Describes every entity, loading and re-persisting cfg.cache_path when set.
/// Failures are collected; successful entries are still persisted.
DescribeResult describe_all(const KnowledgeGraph& g, const std::vector<EntityId>& entities,
                            const DescGenConfig& cfg, TextGenerationClient* client = nullptr);

}  // namespace kgprobe
