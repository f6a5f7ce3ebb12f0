#include "kgprobe/descgen.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <thread>

#include "kgprobe/error.hpp"
#include "kgprobe/prompts.hpp"
#include "kgprobe/random.hpp"

namespace kgprobe {
namespace {

constexpr std::string_view kConcatIdentity = "concat";

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::filesystem::path keys_path(const std::filesystem::path& p) {
  auto s = p;
  s += ".keys";
  return s;
}

}  // namespace

std::string_view desc_mode_name(DescMode m) noexcept {
  return m == DescMode::concat ? "concat" : "llm";
}

DescMode parse_desc_mode(std::string_view name) {
  if (name == "concat") return DescMode::concat;
  if (name == "llm" || name == "llm_rephrase") return DescMode::llm_rephrase;
  throw Error(Errc::invalid_argument, "unknown description mode '" + std::string(name) + "'");
}

void DescGenConfig::validate() const {
  if (max_subgraph_triples < 1) {
    throw Error(Errc::invalid_argument, "max_subgraph_triples must be at least 1");
  }
  if (max_concurrency < 1) throw Error(Errc::invalid_argument, "max_concurrency must be at least 1");
  if (mode == DescMode::llm_rephrase &&
      generation_template.find("{subgraph}") == std::string::npos) {
    throw Error(Errc::invalid_argument, "generation template must contain {subgraph}");
  }
}

std::unique_ptr<ReplayClient> ReplayClient::fixed(std::string identity, std::string text) {
  return std::make_unique<ReplayClient>(std::move(identity),
                                        [text = std::move(text)](std::string_view) { return text; });
}

std::string ReplayClient::generate(std::string_view prompt) {
  ++calls_;
  {
    std::lock_guard lock(mu_);
    prompts_.emplace_back(prompt);
  }
  return responder_(prompt);
}

std::vector<std::string> ReplayClient::prompts() const {
  std::lock_guard lock(mu_);
  return prompts_;
}

std::vector<Triple> sampled_subgraph(const KnowledgeGraph& g, EntityId e, const DescGenConfig& cfg) {
  auto triples = g.one_hop_subgraph(e);
  if (triples.size() <= cfg.max_subgraph_triples) return triples;
  Rng rng(derive_seed(cfg.seed, index_of(e)));
  auto keep = sample_indices(triples.size(), cfg.max_subgraph_triples, rng);
  std::sort(keep.begin(), keep.end());
  std::vector<Triple> out;
  out.reserve(keep.size());
  for (auto i : keep) out.push_back(triples[i]);
  return out;
}

std::string concat_subgraph(const KnowledgeGraph& g, const std::vector<Triple>& triples,
                            std::string_view separator) {
  std::string out;
  for (std::size_t i = 0; i < triples.size(); ++i) {
    if (i > 0) out.append(separator);
    out.append(transform_triple(triples[i], g));
  }
  return out;
}

std::uint64_t subgraph_hash(const KnowledgeGraph& g, const std::vector<Triple>& triples) {
  std::uint64_t h = fnv1a64("subgraph");
  for (const auto& t : triples) {
    h = fnv1a64(g.entity_name(t.head), h);
    h = fnv1a64("\t", h);
    h = fnv1a64(g.relation_name(t.relation), h);
    h = fnv1a64("\t", h);
    h = fnv1a64(g.entity_name(t.tail), h);
    h = fnv1a64("\n", h);
  }
  return h;
}

std::string concat_description(const KnowledgeGraph& g, EntityId e, const DescGenConfig& cfg) {
  return concat_subgraph(g, sampled_subgraph(g, e, cfg), cfg.separator);
}

std::string generation_prompt(const KnowledgeGraph& g, EntityId e, const DescGenConfig& cfg) {
  const auto facts = concat_subgraph(g, sampled_subgraph(g, e, cfg), cfg.separator);
  // Single pass; substituted values are never re-scanned.
  const auto name = entity_phrase(g.entity_name(e));
  std::string out;
  std::string_view tpl = cfg.generation_template;
  std::size_t pos = 0;
  while (pos < tpl.size()) {
    const auto a = tpl.find("{entity}", pos);
    const auto b = tpl.find("{subgraph}", pos);
    const auto hit = std::min(a, b);
    if (hit == std::string_view::npos) break;
    out.append(tpl.substr(pos, hit - pos));
    if (hit == a) {
      out.append(name);
      pos = hit + 8;
    } else {
      out.append(facts);
      pos = hit + 10;
    }
  }
  if (pos < tpl.size()) out.append(tpl.substr(pos));
  return out;
}

std::optional<std::string> DescriptionCache::lookup(const std::string& entity,
                                                    const std::string& model,
                                                    std::uint64_t hash) const {
  std::lock_guard lock(mu_);
  const auto it = entries_.find(entity);
  if (it == entries_.end() || it->second.model != model || it->second.hash != hash) {
    return std::nullopt;
  }
  return it->second.text;
}

void DescriptionCache::insert(const std::string& entity, const std::string& model,
                              std::uint64_t hash, std::string text) {
  std::lock_guard lock(mu_);
  entries_[entity] = Entry{model, hash, std::move(text)};
}

DescriptionCache::DescriptionCache(DescriptionCache&& other) noexcept {
  std::lock_guard lock(other.mu_);
  entries_ = std::move(other.entries_);
}

DescriptionCache& DescriptionCache::operator=(DescriptionCache&& other) noexcept {
  if (this != &other) {
    std::scoped_lock lock(mu_, other.mu_);
    entries_ = std::move(other.entries_);
  }
  return *this;
}

std::size_t DescriptionCache::size() const {
  std::lock_guard lock(mu_);
  return entries_.size();
}

DescriptionCache DescriptionCache::load(const std::filesystem::path& path) {
  DescriptionCache cache;
  if (!std::filesystem::exists(path)) return cache;
  const auto texts = load_descriptions(path);
  std::map<std::string, std::pair<std::string, std::uint64_t>> keys;
  if (std::ifstream in(keys_path(path)); in) {
    std::string line;
    while (std::getline(in, line)) {
      const auto t1 = line.find('\t');
      const auto t2 = line.rfind('\t');
      if (t1 == std::string::npos || t1 == t2) continue;
      keys[line.substr(0, t1)] = {line.substr(t1 + 1, t2 - t1 - 1),
                                  std::stoull(line.substr(t2 + 1), nullptr, 16)};
    }
  }
  // A description without a matching key row can never satisfy a lookup.
  for (const auto& [name, text] : texts) {
    if (auto it = keys.find(name); it != keys.end()) {
      cache.entries_[name] = Entry{it->second.first, it->second.second, text};
    }
  }
  return cache;
}

void DescriptionCache::save(const std::filesystem::path& path) const {
  std::lock_guard lock(mu_);
  DescriptionEntries rows;
  rows.reserve(entries_.size());
  for (const auto& [name, e] : entries_) rows.emplace_back(name, e.text);
  const auto tmp_text = path.string() + ".tmp";
  const auto tmp_keys = keys_path(path).string() + ".tmp";
  {
    std::ofstream out(tmp_text, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(Errc::io, "cannot write " + tmp_text);
    write_descriptions(out, rows);
    std::ofstream keys(tmp_keys, std::ios::binary | std::ios::trunc);
    if (!keys) throw Error(Errc::io, "cannot write " + tmp_keys);
    for (const auto& [name, e] : entries_) keys << name << '\t' << e.model << '\t' << hex64(e.hash) << '\n';
    if (!out || !keys) throw Error(Errc::io, "write failed for " + path.string());
  }
  std::filesystem::rename(tmp_text, path);
  std::filesystem::rename(tmp_keys, keys_path(path));
}

std::string rephrase_description(const KnowledgeGraph& g, EntityId e, const DescGenConfig& cfg,
                                 TextGenerationClient& client, DescriptionCache& cache) {
  const auto triples = sampled_subgraph(g, e, cfg);
  if (triples.empty()) return {};
  const auto& name = g.entity_name(e);
  const auto model = client.identity();
  const auto hash = subgraph_hash(g, triples);
  if (auto hit = cache.lookup(name, model, hash)) return *hit;

  const auto prompt = generation_prompt(g, e, cfg);
  std::string text;
  try {
    text = client.generate(prompt);
  } catch (const std::exception& ex) {
    throw Error(Errc::generation, "generation failed for entity " + std::to_string(index_of(e)) +
                                      " ('" + name + "'): " + ex.what());
  }
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) {
    throw Error(Errc::generation, "empty generation for entity " + std::to_string(index_of(e)) +
                                      " ('" + name + "')");
  }
  text = text.substr(first, text.find_last_not_of(" \t\r\n") - first + 1);
  // Stored as one TSV field.
  for (char& c : text) {
    if (c == '\t' || c == '\n' || c == '\r') c = ' ';
  }
  cache.insert(name, model, hash, text);
  return text;
}

DescribeResult describe_all(const KnowledgeGraph& g, const std::vector<EntityId>& entities,
                            const DescGenConfig& cfg, TextGenerationClient* client) {
  cfg.validate();
  if (cfg.mode == DescMode::llm_rephrase && client == nullptr) {
    throw Error(Errc::invalid_argument, "rephrase mode needs a text-generation client");
  }
  for (auto e : entities) {
    if (index_of(e) >= g.entity_count()) throw Error(Errc::invalid_argument, "unknown entity id");
  }
  DescriptionCache cache = cfg.cache_path ? DescriptionCache::load(*cfg.cache_path) : DescriptionCache{};

  // Counts only calls made here, even if the client is shared.
  std::atomic<std::size_t> calls{0};
  struct Counting final : TextGenerationClient {
    TextGenerationClient& inner;
    std::atomic<std::size_t>& n;
    Counting(TextGenerationClient& c, std::atomic<std::size_t>& k) : inner(c), n(k) {}
    std::string generate(std::string_view p) override {
      ++n;
      return inner.generate(p);
    }
    std::string identity() const override { return inner.identity(); }
  };

  std::vector<std::optional<std::string>> texts(entities.size());
  std::vector<std::string> errors(entities.size());
  std::atomic<std::size_t> next{0};

  auto work = [&] {
    std::optional<Counting> counting;
    if (client) counting.emplace(*client, calls);
    for (std::size_t i = next++; i < entities.size(); i = next++) {
      const auto e = entities[i];
      try {
        if (cfg.mode == DescMode::concat) {
          const auto triples = sampled_subgraph(g, e, cfg);
          const auto& name = g.entity_name(e);
          const auto hash = subgraph_hash(g, triples);
          auto hit = cache.lookup(name, std::string(kConcatIdentity), hash);
          if (!hit) {
            hit = concat_subgraph(g, triples, cfg.separator);
            cache.insert(name, std::string(kConcatIdentity), hash, *hit);
          }
          texts[i] = std::move(*hit);
        } else {
          texts[i] = rephrase_description(g, e, cfg, *counting, cache);
        }
      } catch (const std::exception& ex) {
        errors[i] = ex.what();
      }
    }
  };

  const auto workers = std::min(cfg.max_concurrency, std::max<std::size_t>(entities.size(), 1));
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
  }

  DescribeResult result;
  for (std::size_t i = 0; i < entities.size(); ++i) {
    if (texts[i]) {
      result.descriptions[entities[i]] = std::move(*texts[i]);
    } else {
      result.failures.emplace_back(entities[i], errors[i]);
    }
  }
  result.client_calls = calls.load();
  if (cfg.cache_path) cache.save(*cfg.cache_path);
  return result;
}

}  // namespace kgprobe
