#pragma once

/**
 * @file probe.hpp
 * Probing classifiers over single-layer hidden states.
 *
 * Parameters live in one flat vector. Layout, with O = 1 output for binary
 * problems and O = C otherwise:
 *   logreg / svm:  W (O x d, row-major), b (O)
 *   mlp:           W1 (h x d), b1 (h), W2 (O x h), b2 (O)
 * Inputs are standardized with the stored per-dimension mean/scale before
 * the first layer.
 */

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kgprobe/store.hpp"

namespace kgprobe {

enum class ProbeKind { logreg, mlp, svm };

std::string_view probe_kind_name(ProbeKind k) noexcept;
ProbeKind parse_probe_kind(std::string_view s);

/// Defaults: batch 64, lr 3e-5, AdamW, 30 epochs.
struct TrainConfig {
  ProbeKind kind = ProbeKind::logreg;
  std::size_t batch_size = 64;
  double learning_rate = 3e-5;
  std::size_t epochs = 30;
  double weight_decay = 0.0;
  std::size_t hidden_width = 256;
  std::uint64_t seed = 0;
  bool standardize = true;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

/// Dense row-major view of one layer of a store.
struct LayerData {
  std::size_t dim = 0;
  std::size_t num_classes = 2;
  std::vector<double> features;
  std::vector<std::int32_t> labels;

  std::size_t size() const noexcept { return labels.size(); }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(features).subspan(i * dim, dim);
  }
};

/// num_classes comes from the store's label space (at least 2).
LayerData layer_data(const HiddenStateStore& store, int layer);

class ProbeModel {
 public:
  ProbeModel() = default;
  ProbeModel(ProbeKind kind, int layer, std::size_t dim, std::size_t num_classes,
             std::size_t hidden_width = 0);

  ProbeKind kind() const noexcept { return kind_; }
  int layer() const noexcept { return layer_; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t num_classes() const noexcept { return classes_; }
  std::size_t hidden_width() const noexcept { return hidden_; }
  std::size_t num_outputs() const noexcept { return classes_ == 2 ? 1 : classes_; }
  std::size_t param_count() const noexcept;

  std::span<const double> mean() const noexcept { return mean_; }
  std::span<const double> scale() const noexcept { return scale_; }
  void set_standardization(std::vector<double> mean, std::vector<double> scale);

  std::span<double> params() noexcept { return params_; }
  std::span<const double> params() const noexcept { return params_; }

  /// Configuration the model was trained with (echoed into model files).
  TrainConfig& config() noexcept { return config_; }
  const TrainConfig& config() const noexcept { return config_; }

  /// Raw scores for an already-standardized input; O values.
  void scores(std::span<const double> x_std, std::span<double> out) const;

  /// Class distribution (C values). Binary: {1 - p, p} with p = sigmoid(score).
  std::vector<double> predict_proba(std::span<const float> x) const;
  std::vector<double> predict_proba(std::span<const double> x) const;
  /// Argmax class; ties go to the lowest class id.
  std::int32_t predict(std::span<const float> x) const;
  std::int32_t predict(std::span<const double> x) const;

  /// FNV-1a over the f32 parameter bytes and standardization statistics.
  std::uint64_t checksum() const;

 private:
  std::vector<double> standardized(std::span<const double> x) const;

  ProbeKind kind_ = ProbeKind::logreg;
  int layer_ = 0;
  std::size_t dim_ = 0;
  std::size_t classes_ = 2;
  std::size_t hidden_ = 0;
  std::vector<double> mean_;
  std::vector<double> scale_;
  std::vector<double> params_;
  TrainConfig config_;
};

/// Mean training loss over a batch of standardized rows, and its gradient
/// with respect to model.params() when `grad` is non-empty (same size).
/// Cross-entropy for logreg/mlp, hinge (Crammer-Singer when C > 2) for svm.
double loss_and_gradient(const ProbeModel& model, std::span<const double> x_std,
                         std::span<const std::int32_t> labels, std::span<double> grad);

/// Per-dimension mean and population std; zero-variance dims get scale 1.
std::pair<std::vector<double>, std::vector<double>> fit_standardization(const LayerData& data);

struct TrainResult {
  ProbeModel model;
  /// Mean loss over each epoch's mini-batches.
  std::vector<double> epoch_loss;
};

/// Mini-batch AdamW on the mean loss. Shuffle order per epoch is derived
/// from cfg.seed; final parameters are rounded to f32 so a saved model
/// reloads bit-for-bit.
TrainResult train_probe(const LayerData& data, int layer, const TrainConfig& cfg);
ProbeModel train(const HiddenStateStore& store, int layer, const TrainConfig& cfg);

/// Fraction of records in `data` that `model` labels correctly.
double evaluate_accuracy(const ProbeModel& model, const LayerData& data);
std::vector<std::int32_t> predict_all(const ProbeModel& model, const LayerData& data);

/// Largest relative error between the analytic gradient and central finite
/// differences (step 1e-5) over every parameter of a random model on a
/// random batch. Relative error is |a - n| / max(|a|, |n|, 1e-7).
double gradient_check(ProbeKind kind, std::size_t dim, std::size_t num_classes,
                      std::uint64_t seed, std::size_t hidden_width = 4);

struct LayerResult {
  int layer = 0;
  double valid_accuracy = 0.0;
  std::optional<double> test_accuracy;
  std::uint64_t checksum = 0;
};

struct LayerSweepReport {
  std::vector<LayerResult> layers;
  int selected_layer = 0;
  std::string selection_rule = "max_valid_accuracy_lowest_layer";
};

struct SweepOptions {
  /// Empty: every layer present in both train and valid stores.
  std::vector<int> layers;
  /// Score the test store at every layer, not just the selected one.
  bool test_all_layers = false;
  std::size_t threads = 1;
};

struct SweepResult {
  LayerSweepReport report;
  ProbeModel selected_model;
};

/// Trains one probe per layer (seed derived from cfg.seed and the layer
/// index) and picks the best validation accuracy, lowest layer on ties.
SweepResult sweep_layers(const HiddenStateStore& train_store, const HiddenStateStore& valid_store,
                         const HiddenStateStore* test_store, const TrainConfig& cfg,
                         const SweepOptions& options = {});

/// Model file: "KGPM", u32 version, u32 header length, JSON header, then
/// param_count little-endian f32 values.
void write_model(const ProbeModel& model, const std::filesystem::path& path);
ProbeModel read_model(const std::filesystem::path& path);

}  // namespace kgprobe
