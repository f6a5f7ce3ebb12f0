#pragma once

/**
 * @file kg.hpp
 * Knowledge-graph core: interning, TSV loaders, and the immutable
 * KnowledgeGraph with membership and one-hop adjacency indexes.
 */

#include <compare>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace kgprobe {

enum class EntityId : std::uint32_t {};
enum class RelationId : std::uint32_t {};

constexpr std::uint32_t index_of(EntityId e) noexcept { return static_cast<std::uint32_t>(e); }
constexpr std::uint32_t index_of(RelationId r) noexcept { return static_cast<std::uint32_t>(r); }

struct Triple {
  EntityId head{};
  RelationId relation{};
  EntityId tail{};

  friend auto operator<=>(const Triple&, const Triple&) = default;
};

struct TripleHash {
  std::size_t operator()(const Triple& t) const noexcept;
};

/// Binary labels are {1 = positive, 0 = negative}; relation prediction
/// stores the gold relation index as the label.
struct LabeledTriple {
  Triple triple;
  std::int32_t label = 1;

  friend bool operator==(const LabeledTriple&, const LabeledTriple&) = default;
};

/// Bijective name <-> dense id table.
class Interner {
 public:
  std::uint32_t intern(std::string_view name);
  std::optional<std::uint32_t> find(std::string_view name) const;
  const std::string& name(std::uint32_t id) const { return names_.at(id); }
  std::size_t size() const noexcept { return names_.size(); }
  std::span<const std::string> names() const noexcept { return names_; }

 private:
  struct StringHash {
    using is_transparent = void;
    std::size_t operator()(std::string_view s) const noexcept {
      return std::hash<std::string_view>{}(s);
    }
  };
  std::vector<std::string> names_;
  std::unordered_map<std::string, std::uint32_t, StringHash, std::equal_to<>> ids_;
};

/// Entity and relation interning tables shared by all splits of a dataset.
struct Vocabulary {
  Interner entities;
  Interner relations;
};

/// Parses `head<TAB>relation<TAB>tail[<TAB>label]` records. Labels in
/// {1,-1} or {1,0}; -1 is normalized to 0. Unlabeled records get label 1.
std::vector<LabeledTriple> parse_triples(std::istream& in, bool labeled, Vocabulary& vocab,
                                         std::string_view source = "<stream>");
std::vector<LabeledTriple> load_triples(const std::filesystem::path& path, bool labeled,
                                        Vocabulary& vocab);

/// True when the first non-empty line of the file carries a fourth field.
bool detect_labeled(const std::filesystem::path& path);

/// `name<TAB>description` records, file order. Lines without a tab are a
/// parse error; an empty description is allowed.
using DescriptionEntries = std::vector<std::pair<std::string, std::string>>;
DescriptionEntries parse_descriptions(std::istream& in, std::string_view source = "<stream>");
DescriptionEntries load_descriptions(const std::filesystem::path& path);
void write_descriptions(std::ostream& out, const DescriptionEntries& entries);

enum class Split { train, valid, test };

struct GraphInputs {
  Vocabulary vocab;
  std::vector<LabeledTriple> train;
  std::vector<LabeledTriple> valid;
  std::vector<LabeledTriple> test;
  DescriptionEntries entity_descriptions;
  DescriptionEntries relation_descriptions;
};

/// Immutable after construction; safe for concurrent readers.
class KnowledgeGraph {
 public:
  KnowledgeGraph() = default;
  static KnowledgeGraph build(GraphInputs inputs);

  std::span<const LabeledTriple> split(Split s) const noexcept;

  /// Membership over every triple loaded into any split.
  bool contains(const Triple& t) const { return membership_.contains(t); }

  /// Positive train triples with `e` as head or tail, in file order.
  std::vector<Triple> one_hop_subgraph(EntityId e) const;

  std::size_t entity_count() const noexcept { return vocab_.entities.size(); }
  std::size_t relation_count() const noexcept { return vocab_.relations.size(); }
  const std::string& entity_name(EntityId e) const { return vocab_.entities.name(index_of(e)); }
  const std::string& relation_name(RelationId r) const {
    return vocab_.relations.name(index_of(r));
  }
  std::optional<EntityId> find_entity(std::string_view name) const;
  std::optional<RelationId> find_relation(std::string_view name) const;
  const Vocabulary& vocabulary() const noexcept { return vocab_; }

  std::optional<std::string_view> entity_description(EntityId e) const;
  /// Stored for completeness; no built-in prompt reads relation descriptions.
  std::optional<std::string_view> relation_description(RelationId r) const;
  const std::unordered_map<std::uint32_t, std::string>& entity_descriptions() const noexcept {
    return entity_desc_;
  }
  const std::unordered_map<std::uint32_t, std::string>& relation_descriptions() const noexcept {
    return relation_desc_;
  }

  /// Non-fatal problems collected during build (e.g. descriptions for
  /// names that were never interned).
  std::span<const std::string> warnings() const noexcept { return warnings_; }

 private:
  Vocabulary vocab_;
  std::vector<LabeledTriple> train_, valid_, test_;
  std::unordered_set<Triple, TripleHash> membership_;
  // Offsets into train_, indexed by entity id.
  std::vector<std::vector<std::uint32_t>> by_entity_;
  std::unordered_map<std::uint32_t, std::string> entity_desc_;
  std::unordered_map<std::uint32_t, std::string> relation_desc_;
  std::vector<std::string> warnings_;
};

/// Copy of `g` whose entity descriptions are replaced by `entries` (unknown
/// names become warnings). Relation descriptions are kept.
KnowledgeGraph with_entity_descriptions(const KnowledgeGraph& g, const DescriptionEntries& entries);

/// Binary graph bundle used by the CLI between `ingest` and later stages.
void write_graph(const KnowledgeGraph& g, const std::filesystem::path& path);
KnowledgeGraph read_graph(const std::filesystem::path& path);

}  // namespace kgprobe
