#include "kgprobe/extraction.hpp"

#include <algorithm>
#include <charconv>
#include <optional>

#include "kgprobe/error.hpp"

namespace kgprobe {
namespace {

int parse_int(std::string_view s) {
  int v = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || ptr != end) {
    throw Error(Errc::invalid_argument, "bad layer index '" + std::string(s) + "'");
  }
  return v;
}

}  // namespace

void check_interior_layers(std::span<const int> layers, int num_layers) {
  if (layers.empty()) throw Error(Errc::invalid_argument, "no layers requested");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const int l = layers[i];
    if (l < 1 || (num_layers > 0 && l > num_layers - 1)) {
      throw Error(Errc::invalid_argument,
                  "layer " + std::to_string(l) + " is outside the interior range 1.." +
                      (num_layers > 0 ? std::to_string(num_layers - 1) : std::string("L-1")));
    }
    if (i > 0 && l <= layers[i - 1]) {
      throw Error(Errc::invalid_argument, "layers must be strictly increasing");
    }
  }
}

std::vector<int> parse_layer_spec(std::string_view spec, int num_layers) {
  std::vector<int> out;
  if (spec == "all") {
    if (num_layers < 2) throw Error(Errc::invalid_argument, "'all' needs a known depth >= 2");
    for (int l = 1; l < num_layers; ++l) out.push_back(l);
    return out;
  }
  std::size_t pos = 0;
  while (pos <= spec.size()) {
    const auto comma = std::min(spec.find(',', pos), spec.size());
    const auto item = spec.substr(pos, comma - pos);
    if (const auto dots = item.find(".."); dots != std::string_view::npos) {
      const int lo = parse_int(item.substr(0, dots));
      const int hi = parse_int(item.substr(dots + 2));
      if (hi < lo) throw Error(Errc::invalid_argument, "empty layer range '" + std::string(item) + "'");
      for (int l = lo; l <= hi; ++l) out.push_back(l);
    } else {
      out.push_back(parse_int(item));
    }
    pos = comma + 1;
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  check_interior_layers(out, num_layers);
  return out;
}

HiddenStateStore extract_dataset(ExtractionBackend& backend, std::span<const std::string> texts,
                                 std::span<const std::int32_t> labels, std::span<const int> layers,
                                 const ExtractOptions& options,
                                 std::span<const std::uint64_t> example_ids) {
  if (texts.size() != labels.size()) {
    throw Error(Errc::invalid_argument, "texts and labels differ in length");
  }
  if (!example_ids.empty() && example_ids.size() != texts.size()) {
    throw Error(Errc::invalid_argument, "example ids and texts differ in length");
  }
  if (options.batch_size == 0) throw Error(Errc::invalid_argument, "batch size must be positive");
  check_interior_layers(layers, backend.num_layers());

  auto id_of = [&](std::size_t i) { return example_ids.empty() ? std::uint64_t{i} : example_ids[i]; };

  auto call = [&](std::span<const std::string> batch) {
    for (int attempt = 0;; ++attempt) {
      try {
        auto out = backend.extract(batch, layers);
        if (out.size() != batch.size()) {
          throw Error(Errc::backend, "backend returned " + std::to_string(out.size()) +
                                         " results for " + std::to_string(batch.size()) + " texts");
        }
        return out;
      } catch (const Error& e) {
        if (e.code() == Errc::dimension_mismatch || e.code() == Errc::invalid_argument ||
            attempt >= options.max_retries) {
          throw;
        }
      }
    }
  };

  std::optional<HiddenStateStore> store;
  std::size_t dim = 0;
  for (std::size_t start = 0; start < texts.size(); start += options.batch_size) {
    const auto n = std::min(options.batch_size, texts.size() - start);
    const auto batch = texts.subspan(start, n);
    std::vector<std::vector<float>> states;
    try {
      states = call(batch);
    } catch (const Error& e) {
      if (e.code() == Errc::dimension_mismatch || e.code() == Errc::invalid_argument) throw;
      // Isolate the failing text.
      states.clear();
      for (std::size_t i = 0; i < n; ++i) {
        try {
          states.push_back(std::move(call(batch.subspan(i, 1)).front()));
        } catch (const Error& inner) {
          throw Error(inner.code(), "extraction failed for example " +
                                        std::to_string(id_of(start + i)) + ": " + inner.what());
        }
      }
    }
    if (!store) {
      dim = backend.dim();
      if (dim == 0 && !states.empty()) dim = states.front().size() / layers.size();
      StoreHeader header;
      header.model = backend.model_name();
      header.dim = static_cast<std::uint32_t>(dim);
      header.layers.assign(layers.begin(), layers.end());
      header.task = options.task;
      header.labels = options.label_names;
      store.emplace(std::move(header));
    }
    for (std::size_t i = 0; i < n; ++i) {
      if (states[i].size() != layers.size() * dim || backend.dim() != dim) {
        throw Error(Errc::dimension_mismatch,
                    "backend dimension changed at example " + std::to_string(id_of(start + i)));
      }
      store->add({id_of(start + i), labels[start + i], std::move(states[i])});
    }
  }
  if (!store) {
    StoreHeader header;
    header.model = backend.model_name();
    header.dim = static_cast<std::uint32_t>(std::max<std::size_t>(backend.dim(), 1));
    header.layers.assign(layers.begin(), layers.end());
    header.task = options.task;
    header.labels = options.label_names;
    store.emplace(std::move(header));
  }
  return std::move(*store);
}

StoreBackend::StoreBackend(HiddenStateStore store,
                           std::unordered_map<std::string, std::uint64_t> text_ids)
    : store_(std::move(store)), text_ids_(std::move(text_ids)) {
  for (std::size_t i = 0; i < store_.size(); ++i) by_id_[store_.record(i).example_id] = i;
}

std::vector<std::vector<float>> StoreBackend::extract(std::span<const std::string> texts,
                                                      std::span<const int> layers) {
  for (int l : layers) {
    if (!store_.has_layer(l)) {
      throw Error(Errc::invalid_argument, "layer " + std::to_string(l) + " not in source store");
    }
  }
  std::vector<std::vector<float>> out;
  out.reserve(texts.size());
  for (const auto& text : texts) {
    const auto id = text_ids_.find(text);
    if (id == text_ids_.end()) throw Error(Errc::invalid_argument, "text has no prompt id");
    const auto rec = by_id_.find(id->second);
    if (rec == by_id_.end()) {
      throw Error(Errc::invalid_argument,
                  "source store has no record for example " + std::to_string(id->second));
    }
    std::vector<float> v;
    v.reserve(layers.size() * store_.dim());
    for (int l : layers) {
      const auto s = store_.state(rec->second, l);
      v.insert(v.end(), s.begin(), s.end());
    }
    out.push_back(std::move(v));
  }
  return out;
}

}  // namespace kgprobe
