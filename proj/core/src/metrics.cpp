#include <string>

#include "kgprobe/error.hpp"
#include "kgprobe/eval.hpp"

namespace kgprobe {

double accuracy(std::span<const std::int32_t> predictions, std::span<const std::int32_t> labels) {
  if (predictions.size() != labels.size()) {
    throw Error(Errc::invalid_argument, "accuracy: " + std::to_string(predictions.size()) +
                                            " predictions for " + std::to_string(labels.size()) +
                                            " labels");
  }
  if (labels.empty()) throw Error(Errc::invalid_argument, "accuracy: no examples");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double hits_at_1(std::span<const std::int32_t> predicted, std::span<const std::int32_t> gold,
                 std::size_t num_classes) {
  auto check = [num_classes](std::span<const std::int32_t> ids) {
    for (auto c : ids) {
      if (c < 0 || static_cast<std::size_t>(c) >= num_classes) {
        throw Error(Errc::invalid_argument, "hits_at_1: class id " + std::to_string(c) +
                                                " outside the label space");
      }
    }
  };
  check(predicted);
  check(gold);
  return accuracy(predicted, gold);
}

}  // namespace kgprobe
