#include "kgprobe/kg.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include "kgprobe/error.hpp"

namespace kgprobe {
namespace {

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    if (pos == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
}

void strip_cr(std::string& line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::string where(std::string_view source, std::size_t line_no) {
  return std::string(source) + ":" + std::to_string(line_no);
}

std::ifstream open_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  return in;
}

}  // namespace

std::size_t TripleHash::operator()(const Triple& t) const noexcept {
  std::uint64_t h = (static_cast<std::uint64_t>(index_of(t.head)) << 32) | index_of(t.tail);
  h ^= static_cast<std::uint64_t>(index_of(t.relation)) * 0x9E3779B97F4A7C15ULL;
  h ^= h >> 29;
  h *= 0xBF58476D1CE4E5B9ULL;
  return static_cast<std::size_t>(h ^ (h >> 32));
}

std::uint32_t Interner::intern(std::string_view name) {
  if (auto it = ids_.find(name); it != ids_.end()) return it->second;
  const auto id = static_cast<std::uint32_t>(names_.size());
  names_.emplace_back(name);
  ids_.emplace(names_.back(), id);
  return id;
}

std::optional<std::uint32_t> Interner::find(std::string_view name) const {
  if (auto it = ids_.find(name); it != ids_.end()) return it->second;
  return std::nullopt;
}

std::vector<LabeledTriple> parse_triples(std::istream& in, bool labeled, Vocabulary& vocab,
                                         std::string_view source) {
  std::vector<LabeledTriple> out;
  std::string line;
  std::size_t line_no = 0;
  const std::size_t expected = labeled ? 4 : 3;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split_tabs(line);
    if (fields.size() != expected) {
      throw Error(Errc::parse, where(source, line_no) + ": expected " +
                                   std::to_string(expected) + " tab-separated fields, got " +
                                   std::to_string(fields.size()));
    }
    for (std::size_t i = 0; i < 3; ++i) {
      if (fields[i].empty()) {
        throw Error(Errc::parse, where(source, line_no) + ": empty field " + std::to_string(i + 1));
      }
    }
    LabeledTriple rec;
    rec.triple.head = EntityId{vocab.entities.intern(fields[0])};
    rec.triple.relation = RelationId{vocab.relations.intern(fields[1])};
    rec.triple.tail = EntityId{vocab.entities.intern(fields[2])};
    if (labeled) {
      const auto lab = fields[3];
      if (lab == "1") {
        rec.label = 1;
      } else if (lab == "0" || lab == "-1") {
        rec.label = 0;
      } else {
        throw Error(Errc::parse, where(source, line_no) + ": label must be one of 1, 0, -1, got '" +
                                     std::string(lab) + "'");
      }
    }
    out.push_back(rec);
  }
  if (line_no == 0 || out.empty()) {
    throw Error(Errc::parse, std::string(source) + ": no triples");
  }
  return out;
}

std::vector<LabeledTriple> load_triples(const std::filesystem::path& path, bool labeled,
                                        Vocabulary& vocab) {
  auto in = open_text(path);
  return parse_triples(in, labeled, vocab, path.string());
}

bool detect_labeled(const std::filesystem::path& path) {
  auto in = open_text(path);
  std::string line;
  while (std::getline(in, line)) {
    strip_cr(line);
    if (line.empty()) continue;
    return split_tabs(line).size() == 4;
  }
  throw Error(Errc::parse, path.string() + ": no triples");
}

DescriptionEntries parse_descriptions(std::istream& in, std::string_view source) {
  DescriptionEntries out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    strip_cr(line);
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos || tab == 0) {
      throw Error(Errc::parse, where(source, line_no) + ": expected name<TAB>description");
    }
    out.emplace_back(line.substr(0, tab), line.substr(tab + 1));
  }
  return out;
}

DescriptionEntries load_descriptions(const std::filesystem::path& path) {
  auto in = open_text(path);
  return parse_descriptions(in, path.string());
}

void write_descriptions(std::ostream& out, const DescriptionEntries& entries) {
  auto clean = [](std::string s) {
    for (char& c : s) {
      if (c == '\t' || c == '\n' || c == '\r') c = ' ';
    }
    return s;
  };
  for (const auto& [name, text] : entries) {
    out << clean(name) << '\t' << clean(text) << '\n';
  }
}

KnowledgeGraph KnowledgeGraph::build(GraphInputs inputs) {
  KnowledgeGraph g;
  g.vocab_ = std::move(inputs.vocab);
  g.train_ = std::move(inputs.train);
  g.valid_ = std::move(inputs.valid);
  g.test_ = std::move(inputs.test);

  const auto n_entities = g.vocab_.entities.size();
  const auto n_relations = g.vocab_.relations.size();
  for (const auto* split : {&g.train_, &g.valid_, &g.test_}) {
    for (const auto& rec : *split) {
      const auto& t = rec.triple;
      if (index_of(t.head) >= n_entities || index_of(t.tail) >= n_entities ||
          index_of(t.relation) >= n_relations) {
        throw Error(Errc::invalid_argument, "triple references an id outside the vocabulary");
      }
      g.membership_.insert(t);
    }
  }

  g.by_entity_.assign(n_entities, {});
  for (std::uint32_t i = 0; i < g.train_.size(); ++i) {
    const auto& rec = g.train_[i];
    if (rec.label != 1) continue;
    g.by_entity_[index_of(rec.triple.head)].push_back(i);
    if (rec.triple.tail != rec.triple.head) g.by_entity_[index_of(rec.triple.tail)].push_back(i);
  }

  for (auto& [name, text] : inputs.entity_descriptions) {
    if (auto id = g.vocab_.entities.find(name)) {
      g.entity_desc_[*id] = std::move(text);
    } else {
      g.warnings_.push_back("description for unknown entity '" + name + "' ignored");
    }
  }
  for (auto& [name, text] : inputs.relation_descriptions) {
    if (auto id = g.vocab_.relations.find(name)) {
      g.relation_desc_[*id] = std::move(text);
    } else {
      g.warnings_.push_back("description for unknown relation '" + name + "' ignored");
    }
  }
  return g;
}

std::span<const LabeledTriple> KnowledgeGraph::split(Split s) const noexcept {
  switch (s) {
    case Split::train: return train_;
    case Split::valid: return valid_;
    case Split::test: return test_;
  }
  return {};
}

std::vector<Triple> KnowledgeGraph::one_hop_subgraph(EntityId e) const {
  std::vector<Triple> out;
  if (index_of(e) >= by_entity_.size()) return out;
  const auto& offsets = by_entity_[index_of(e)];
  out.reserve(offsets.size());
  for (auto i : offsets) out.push_back(train_[i].triple);
  return out;
}

std::optional<EntityId> KnowledgeGraph::find_entity(std::string_view name) const {
  if (auto id = vocab_.entities.find(name)) return EntityId{*id};
  return std::nullopt;
}

std::optional<RelationId> KnowledgeGraph::find_relation(std::string_view name) const {
  if (auto id = vocab_.relations.find(name)) return RelationId{*id};
  return std::nullopt;
}

std::optional<std::string_view> KnowledgeGraph::entity_description(EntityId e) const {
  if (auto it = entity_desc_.find(index_of(e)); it != entity_desc_.end()) return it->second;
  return std::nullopt;
}

std::optional<std::string_view> KnowledgeGraph::relation_description(RelationId r) const {
  if (auto it = relation_desc_.find(index_of(r)); it != relation_desc_.end()) return it->second;
  return std::nullopt;
}

KnowledgeGraph with_entity_descriptions(const KnowledgeGraph& g, const DescriptionEntries& entries) {
  GraphInputs inputs;
  inputs.vocab = g.vocabulary();
  for (auto s : {Split::train, Split::valid, Split::test}) {
    const auto recs = g.split(s);
    auto& dst = s == Split::train ? inputs.train : s == Split::valid ? inputs.valid : inputs.test;
    dst.assign(recs.begin(), recs.end());
  }
  inputs.entity_descriptions = entries;
  for (const auto& [id, text] : g.relation_descriptions()) {
    inputs.relation_descriptions.emplace_back(g.relation_name(RelationId{id}), text);
  }
  return KnowledgeGraph::build(std::move(inputs));
}

}  // namespace kgprobe
