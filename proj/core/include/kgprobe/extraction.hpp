#pragma once

/**
 * @file extraction.hpp
 * Backends that turn prompt texts into last-token hidden states, and the
 * driver that assembles them into a HiddenStateStore.
 *
 * Layer i means the output of transformer block i; the embedding output
 * (0) and anything at or past the model depth are rejected.
 */

#include <cstdint>
#include <functional>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "kgprobe/store.hpp"

namespace kgprobe {

class ExtractionBackend {
 public:
  virtual ~ExtractionBackend() = default;

  /// One layer-major vector (layers.size() * dim floats) per text, in input
  /// order. States are taken at the final token of the unpadded prompt.
  virtual std::vector<std::vector<float>> extract(std::span<const std::string> texts,
                                                  std::span<const int> layers) = 0;
  /// 0 while unknown (e.g. before the first remote response).
  virtual std::size_t dim() const = 0;
  /// Transformer depth L, or 0 when the backend cannot tell.
  virtual int num_layers() const = 0;
  virtual std::string model_name() const = 0;
};

/// Throws unless layers are strictly increasing and within 1..L-1 (only the
/// lower bound is checked when num_layers is 0).
void check_interior_layers(std::span<const int> layers, int num_layers);

/// "3", "1,4,5", "2..6" (inclusive), or "all" for 1..L-1.
std::vector<int> parse_layer_spec(std::string_view spec, int num_layers);

struct ExtractOptions {
  std::size_t batch_size = 16;
  int max_retries = 2;
  TaskTag task = TaskTag::tc;
  std::vector<std::string> label_names{"negative", "positive"};
};

/// One record per text; example ids default to 0..N-1.
HiddenStateStore extract_dataset(ExtractionBackend& backend, std::span<const std::string> texts,
                                 std::span<const std::int32_t> labels, std::span<const int> layers,
                                 const ExtractOptions& options,
                                 std::span<const std::uint64_t> example_ids = {});

// ---------------------------------------------------------------------------
// MockLM: deterministic stand-in for a frozen language model.
//
// base(text, layer)_j = g_j / sqrt(dim), where g_0, g_1, ... are successive
// HashStream(derive_seed(seed ^ fnv1a64(text), layer)).next_gaussian() draws.
//
// direction(c) is the normalized vector of HashStream(derive_seed(seed,
// kDirectionStream + c)).next_gaussian() draws.
//
// At a planted layer, binary mocks add (+margin if the oracle says 1, else
// -margin) * direction(0); multi-class mocks add margin * direction(class).
// Unplanted layers return the base vector.
// ---------------------------------------------------------------------------

struct MockLmConfig {
  std::uint64_t seed = 0;
  std::size_t dim = 64;
  int num_layers = 8;
  std::set<int> planted_layers;
  double margin = 1.0;
  std::size_t num_classes = 2;
  std::string model_name = "mock-lm";
};

class MockLM final : public ExtractionBackend {
 public:
  static constexpr std::uint64_t kDirectionStream = 0xD1EC7105ULL;
  using Oracle = std::function<std::int32_t(std::string_view text)>;

  MockLM(MockLmConfig cfg, Oracle oracle);

  std::vector<std::vector<float>> extract(std::span<const std::string> texts,
                                          std::span<const int> layers) override;
  std::size_t dim() const override { return cfg_.dim; }
  int num_layers() const override { return cfg_.num_layers; }
  std::string model_name() const override { return cfg_.model_name; }

  /// Single-layer state for `text`.
  std::vector<float> state(std::string_view text, int layer) const;
  std::vector<double> base(std::string_view text, int layer) const;
  const std::vector<double>& direction(std::size_t c) const { return directions_.at(c); }
  const MockLmConfig& config() const noexcept { return cfg_; }

 private:
  MockLmConfig cfg_;
  Oracle oracle_;
  std::vector<std::vector<double>> directions_;
};

/// Oracle backed by a text -> label table (unknown text is an error).
MockLM::Oracle table_oracle(std::unordered_map<std::string, std::int32_t> labels);

/// Client for POST /v1/hidden_states. A 413 reply halves the batch and
/// retries; other non-200 replies raise Errc::backend.
class HttpBackend final : public ExtractionBackend {
 public:
  explicit HttpBackend(std::string base_url, int num_layers = 0);

  std::vector<std::vector<float>> extract(std::span<const std::string> texts,
                                          std::span<const int> layers) override;
  std::size_t dim() const override { return dim_; }
  int num_layers() const override { return num_layers_; }
  std::string model_name() const override { return model_; }

 private:
  std::string base_url_;
  int num_layers_;
  std::size_t dim_ = 0;
  std::string model_ = "http";
};

/// Serves states from an existing store (e.g. one written by an external
/// dumper). Texts are matched to records through the prompt id table.
class StoreBackend final : public ExtractionBackend {
 public:
  StoreBackend(HiddenStateStore store, std::unordered_map<std::string, std::uint64_t> text_ids);

  std::vector<std::vector<float>> extract(std::span<const std::string> texts,
                                          std::span<const int> layers) override;
  std::size_t dim() const override { return store_.dim(); }
  int num_layers() const override { return 0; }
  std::string model_name() const override { return store_.header().model; }

 private:
  HiddenStateStore store_;
  std::unordered_map<std::string, std::uint64_t> text_ids_;
  std::unordered_map<std::uint64_t, std::size_t> by_id_;
};

}  // namespace kgprobe
