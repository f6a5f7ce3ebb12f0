#include <algorithm>
#include <atomic>
#include <exception>
#include <thread>

#include "kgprobe/error.hpp"
#include "kgprobe/probe.hpp"
#include "kgprobe/random.hpp"

namespace kgprobe {

SweepResult sweep_layers(const HiddenStateStore& train_store, const HiddenStateStore& valid_store,
                         const HiddenStateStore* test_store, const TrainConfig& cfg,
                         const SweepOptions& options) {
  cfg.validate();
  std::vector<int> layers = options.layers;
  if (layers.empty()) {
    for (int l : train_store.header().layers) {
      if (valid_store.has_layer(l)) layers.push_back(l);
    }
  }
  if (layers.empty()) throw Error(Errc::invalid_argument, "layer sweep has no layers");
  std::sort(layers.begin(), layers.end());
  for (int l : layers) {
    if (!train_store.has_layer(l) || !valid_store.has_layer(l)) {
      throw Error(Errc::invalid_argument, "layer " + std::to_string(l) + " missing from a store");
    }
    if (test_store && options.test_all_layers && !test_store->has_layer(l)) {
      throw Error(Errc::invalid_argument, "layer " + std::to_string(l) + " missing from test store");
    }
  }
  if (valid_store.size() == 0) throw Error(Errc::invalid_argument, "validation store is empty");

  std::vector<LayerResult> results(layers.size());
  std::vector<ProbeModel> models(layers.size());
  std::vector<std::exception_ptr> errors(layers.size());
  std::atomic<std::size_t> next{0};

  auto work = [&] {
    for (std::size_t i = next++; i < layers.size(); i = next++) {
      try {
        TrainConfig layer_cfg = cfg;
        layer_cfg.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(layers[i]));
        auto model = train(train_store, layers[i], layer_cfg);
        auto& r = results[i];
        r.layer = layers[i];
        r.valid_accuracy = evaluate_accuracy(model, layer_data(valid_store, layers[i]));
        r.checksum = model.checksum();
        if (test_store && options.test_all_layers) {
          r.test_accuracy = evaluate_accuracy(model, layer_data(*test_store, layers[i]));
        }
        models[i] = std::move(model);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    }
  };
  const auto threads = std::clamp<std::size_t>(options.threads, 1, layers.size());
  if (threads == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t) pool.emplace_back(work);
  }
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  // Layers are ascending, so the first maximum is the lowest-index one.
  std::size_t best = 0;
  for (std::size_t i = 1; i < results.size(); ++i) {
    if (results[i].valid_accuracy > results[best].valid_accuracy) best = i;
  }
  if (test_store && !options.test_all_layers) {
    results[best].test_accuracy =
        evaluate_accuracy(models[best], layer_data(*test_store, layers[best]));
  }

  SweepResult out;
  out.report.layers = std::move(results);
  out.report.selected_layer = layers[best];
  out.selected_model = std::move(models[best]);
  return out;
}

}  // namespace kgprobe
