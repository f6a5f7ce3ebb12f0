#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "kgprobe/kg.hpp"
#include "kgprobe/random.hpp"

namespace kgprobe {

struct SamplerConfig {
  std::uint64_t seed = 0;
  double head_corrupt_prob = 0.5;
  int max_resample_attempts = 100;

  void validate() const;
};

/// Replaces the head (with probability head_corrupt_prob) or the tail by an
/// entity drawn uniformly from E, retrying until the result is absent from
/// the membership set of every split. Throws Errc::sampling_exhausted after
/// max_resample_attempts failures.
Triple corrupt_triple(const KnowledgeGraph& g, const Triple& triple, Rng& rng,
                      const SamplerConfig& cfg);

/// n_pairs positives drawn without replacement from `source`, each followed
/// by one filtered corruption: pos, neg, pos, neg, ...
std::vector<LabeledTriple> build_balanced_set(const KnowledgeGraph& g, std::size_t n_pairs,
                                              const SamplerConfig& cfg,
                                              Split source = Split::train);

/// Indices of a uniform k-subset of `labels`. In balanced mode k must be
/// even and the result holds k/2 indices with label 0 and k/2 with label 1.
std::vector<std::size_t> subsample_indices(std::span<const std::int32_t> labels, std::size_t k,
                                           std::uint64_t seed, bool balanced = true);

std::vector<LabeledTriple> subsample(std::span<const LabeledTriple> examples, std::size_t k,
                                     std::uint64_t seed, bool balanced = true);

}  // namespace kgprobe
