#include "kgprobe/sampling.hpp"

#include <string>

#include "kgprobe/error.hpp"

namespace kgprobe {

void SamplerConfig::validate() const {
  if (!(head_corrupt_prob >= 0.0 && head_corrupt_prob <= 1.0)) {
    throw Error(Errc::invalid_argument, "head_corrupt_prob must lie in [0, 1]");
  }
  if (max_resample_attempts < 1) {
    throw Error(Errc::invalid_argument, "max_resample_attempts must be at least 1");
  }
}

Triple corrupt_triple(const KnowledgeGraph& g, const Triple& triple, Rng& rng,
                      const SamplerConfig& cfg) {
  const auto n_entities = g.entity_count();
  if (n_entities == 0) throw Error(Errc::invalid_argument, "graph has no entities");
  for (int attempt = 0; attempt < cfg.max_resample_attempts; ++attempt) {
    Triple candidate = triple;
    const bool corrupt_head = uniform01(rng) < cfg.head_corrupt_prob;
    const EntityId replacement{static_cast<std::uint32_t>(uniform_below(rng, n_entities))};
    EntityId& slot = corrupt_head ? candidate.head : candidate.tail;
    if (slot == replacement) continue;
    slot = replacement;
    if (!g.contains(candidate)) return candidate;
  }
  throw Error(Errc::sampling_exhausted,
              "no filtered corruption found for (" + g.entity_name(triple.head) + ", " +
                  g.relation_name(triple.relation) + ", " + g.entity_name(triple.tail) +
                  ") after " + std::to_string(cfg.max_resample_attempts) + " attempts");
}

std::vector<LabeledTriple> build_balanced_set(const KnowledgeGraph& g, std::size_t n_pairs,
                                              const SamplerConfig& cfg, Split source) {
  cfg.validate();
  std::vector<Triple> positives;
  for (const auto& rec : g.split(source)) {
    if (rec.label == 1) positives.push_back(rec.triple);
  }
  if (n_pairs > positives.size()) {
    throw Error(Errc::invalid_argument, "n_pairs (" + std::to_string(n_pairs) +
                                            ") exceeds available positives (" +
                                            std::to_string(positives.size()) + ")");
  }
  Rng rng(cfg.seed);
  const auto chosen = sample_indices(positives.size(), n_pairs, rng);
  std::vector<LabeledTriple> out;
  out.reserve(2 * n_pairs);
  for (auto i : chosen) {
    const auto& pos = positives[i];
    out.push_back({pos, 1});
    out.push_back({corrupt_triple(g, pos, rng, cfg), 0});
  }
  return out;
}

std::vector<std::size_t> subsample_indices(std::span<const std::int32_t> labels, std::size_t k,
                                           std::uint64_t seed, bool balanced) {
  if (k > labels.size()) {
    throw Error(Errc::invalid_argument, "subsample size " + std::to_string(k) +
                                            " exceeds " + std::to_string(labels.size()) +
                                            " examples");
  }
  Rng rng(seed);
  if (!balanced) return sample_indices(labels.size(), k, rng);

  if (k % 2 != 0) throw Error(Errc::invalid_argument, "balanced subsample size must be even");
  std::vector<std::size_t> by_class[2];
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) {
      throw Error(Errc::invalid_argument, "balanced subsampling requires binary labels");
    }
    by_class[labels[i]].push_back(i);
  }
  const auto per_class = k / 2;
  std::vector<std::size_t> out;
  out.reserve(k);
  for (auto& members : by_class) {
    if (members.size() < per_class) {
      throw Error(Errc::invalid_argument, "not enough examples per class for a balanced subsample");
    }
    for (auto j : sample_indices(members.size(), per_class, rng)) out.push_back(members[j]);
  }
  shuffle(std::span<std::size_t>(out), rng);
  return out;
}

std::vector<LabeledTriple> subsample(std::span<const LabeledTriple> examples, std::size_t k,
                                     std::uint64_t seed, bool balanced) {
  std::vector<std::int32_t> labels;
  labels.reserve(examples.size());
  for (const auto& e : examples) labels.push_back(e.label);
  std::vector<LabeledTriple> out;
  out.reserve(k);
  for (auto i : subsample_indices(labels, k, seed, balanced)) out.push_back(examples[i]);
  return out;
}

}  // namespace kgprobe
