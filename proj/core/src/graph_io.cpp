// Graph bundle layout (little-endian):
//   "KGGB" u32 version
//   u32 n_entities, n_entities × string
//   u32 n_relations, n_relations × string
//   3 × (u64 n, n × {u32 head, u32 relation, u32 tail, i32 label})   train/valid/test
//   u32 n, n × {string name, string text}   entity descriptions
//   u32 n, n × {string name, string text}   relation descriptions
// where string = u32 length + UTF-8 bytes.

#include <algorithm>
#include <fstream>

#include "binary_io.hpp"
#include "kgprobe/kg.hpp"

namespace kgprobe {
namespace {

constexpr std::string_view kGraphMagic = "KGGB";
constexpr std::uint32_t kGraphVersion = 1;

void put_descriptions(std::ostream& out, const std::unordered_map<std::uint32_t, std::string>& m,
                      const Interner& names) {
  std::vector<std::uint32_t> ids;
  ids.reserve(m.size());
  for (const auto& [id, _] : m) ids.push_back(id);
  std::sort(ids.begin(), ids.end());
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(ids.size()));
  for (auto id : ids) {
    detail::put_string(out, names.name(id));
    detail::put_string(out, m.at(id));
  }
}

DescriptionEntries get_descriptions(std::istream& in) {
  DescriptionEntries entries;
  const auto n = detail::get<std::uint32_t>(in, "description count");
  for (std::uint32_t i = 0; i < n; ++i) {
    auto name = detail::get_string(in, "description name");
    auto text = detail::get_string(in, "description text");
    entries.emplace_back(std::move(name), std::move(text));
  }
  return entries;
}

}  // namespace

void write_graph(const KnowledgeGraph& g, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot write " + path.string());
  detail::put_bytes(out, kGraphMagic);
  detail::put<std::uint32_t>(out, kGraphVersion);
  const auto& vocab = g.vocabulary();
  for (const auto* table : {&vocab.entities, &vocab.relations}) {
    detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(table->size()));
    for (const auto& name : table->names()) detail::put_string(out, name);
  }
  for (auto s : {Split::train, Split::valid, Split::test}) {
    const auto recs = g.split(s);
    detail::put<std::uint64_t>(out, recs.size());
    for (const auto& r : recs) {
      detail::put<std::uint32_t>(out, index_of(r.triple.head));
      detail::put<std::uint32_t>(out, index_of(r.triple.relation));
      detail::put<std::uint32_t>(out, index_of(r.triple.tail));
      detail::put<std::int32_t>(out, r.label);
    }
  }
  put_descriptions(out, g.entity_descriptions(), vocab.entities);
  put_descriptions(out, g.relation_descriptions(), vocab.relations);
  if (!out) throw Error(Errc::io, "write failed for " + path.string());
}

KnowledgeGraph read_graph(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  const auto magic = detail::get_bytes(in, 4, "magic");
  if (magic != kGraphMagic) throw Error(Errc::bad_magic, path.string() + ": not a graph bundle");
  const auto version = detail::get<std::uint32_t>(in, "version");
  if (version != kGraphVersion) {
    throw Error(Errc::version_mismatch,
                path.string() + ": unsupported graph bundle version " + std::to_string(version));
  }
  GraphInputs inputs;
  for (auto* table : {&inputs.vocab.entities, &inputs.vocab.relations}) {
    const auto n = detail::get<std::uint32_t>(in, "name count");
    for (std::uint32_t i = 0; i < n; ++i) {
      const auto name = detail::get_string(in, "name");
      if (table->intern(name) != i) {
        throw Error(Errc::bad_header, path.string() + ": duplicate name '" + name + "'");
      }
    }
  }
  for (auto* split : {&inputs.train, &inputs.valid, &inputs.test}) {
    const auto n = detail::get<std::uint64_t>(in, "split size");
    split->reserve(static_cast<std::size_t>(std::min<std::uint64_t>(n, 1u << 20)));
    for (std::uint64_t i = 0; i < n; ++i) {
      LabeledTriple r;
      r.triple.head = EntityId{detail::get<std::uint32_t>(in, "triple")};
      r.triple.relation = RelationId{detail::get<std::uint32_t>(in, "triple")};
      r.triple.tail = EntityId{detail::get<std::uint32_t>(in, "triple")};
      r.label = detail::get<std::int32_t>(in, "label");
      split->push_back(r);
    }
  }
  inputs.entity_descriptions = get_descriptions(in);
  inputs.relation_descriptions = get_descriptions(in);
  return KnowledgeGraph::build(std::move(inputs));
}

}  // namespace kgprobe
