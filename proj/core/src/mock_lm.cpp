#include <cmath>

#include "kgprobe/error.hpp"
#include "kgprobe/extraction.hpp"
#include "kgprobe/random.hpp"

namespace kgprobe {

MockLM::MockLM(MockLmConfig cfg, Oracle oracle) : cfg_(std::move(cfg)), oracle_(std::move(oracle)) {
  if (cfg_.dim == 0) throw Error(Errc::invalid_argument, "mock dim must be positive");
  if (cfg_.num_layers < 2) throw Error(Errc::invalid_argument, "mock needs at least 2 layers");
  if (cfg_.num_classes < 2) throw Error(Errc::invalid_argument, "mock needs at least 2 classes");
  for (int l : cfg_.planted_layers) {
    if (l < 1 || l > cfg_.num_layers - 1) {
      throw Error(Errc::invalid_argument, "planted layer " + std::to_string(l) + " is not interior");
    }
  }
  const std::size_t n_dirs = cfg_.num_classes == 2 ? 1 : cfg_.num_classes;
  for (std::size_t c = 0; c < n_dirs; ++c) {
    HashStream stream(derive_seed(cfg_.seed, kDirectionStream + c));
    std::vector<double> d(cfg_.dim);
    double norm = 0.0;
    for (auto& x : d) {
      x = stream.next_gaussian();
      norm += x * x;
    }
    norm = std::sqrt(norm);
    for (auto& x : d) x /= norm;
    directions_.push_back(std::move(d));
  }
}

std::vector<double> MockLM::base(std::string_view text, int layer) const {
  HashStream stream(derive_seed(cfg_.seed ^ fnv1a64(text), static_cast<std::uint64_t>(layer)));
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg_.dim));
  std::vector<double> v(cfg_.dim);
  for (auto& x : v) x = stream.next_gaussian() * scale;
  return v;
}

std::vector<float> MockLM::state(std::string_view text, int layer) const {
  if (layer < 1 || layer > cfg_.num_layers - 1) {
    throw Error(Errc::invalid_argument,
                "mock layer " + std::to_string(layer) + " outside 1.." + std::to_string(cfg_.num_layers - 1));
  }
  auto v = base(text, layer);
  if (cfg_.planted_layers.contains(layer) && cfg_.margin != 0.0) {
    const auto cls = oracle_(text);
    if (cls < 0 || static_cast<std::size_t>(cls) >= cfg_.num_classes) {
      throw Error(Errc::invalid_argument, "mock oracle returned class " + std::to_string(cls));
    }
    const std::vector<double>* dir;
    double coef;
    if (cfg_.num_classes == 2) {
      dir = &directions_[0];
      coef = cls == 1 ? cfg_.margin : -cfg_.margin;
    } else {
      dir = &directions_[static_cast<std::size_t>(cls)];
      coef = cfg_.margin;
    }
    for (std::size_t j = 0; j < v.size(); ++j) v[j] += coef * (*dir)[j];
  }
  return {v.begin(), v.end()};
}

std::vector<std::vector<float>> MockLM::extract(std::span<const std::string> texts,
                                                std::span<const int> layers) {
  std::vector<std::vector<float>> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    std::vector<float> flat;
    flat.reserve(layers.size() * cfg_.dim);
    for (int l : layers) {
      const auto s = state(text, l);
      flat.insert(flat.end(), s.begin(), s.end());
    }
    out.push_back(std::move(flat));
  }
  return out;
}

MockLM::Oracle table_oracle(std::unordered_map<std::string, std::int32_t> labels) {
  return [table = std::move(labels)](std::string_view text) -> std::int32_t {
    const auto it = table.find(std::string(text));
    if (it == table.end()) throw Error(Errc::invalid_argument, "mock oracle: unknown text");
    return it->second;
  };
}

}  // namespace kgprobe
