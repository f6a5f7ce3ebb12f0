#include "kgprobe/prompts.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "kgprobe/error.hpp"

namespace kgprobe {
namespace {

struct SlotName {
  Slot slot;
  std::string_view name;
};

constexpr std::array<SlotName, 5> kSlots{{
    {Slot::head, "head"},
    {Slot::relation, "relation"},
    {Slot::tail, "tail"},
    {Slot::head_desc, "head_desc"},
    {Slot::tail_desc, "tail_desc"},
}};

struct Piece {
  std::string_view literal;
  std::optional<Slot> slot;
};

// Splits a body into literal runs and placeholders. Unknown `{...}` names
// are reported through `unknown`.
std::vector<Piece> tokenize(std::string_view body, std::string* unknown) {
  std::vector<Piece> pieces;
  std::size_t pos = 0;
  while (pos < body.size()) {
    const auto open = body.find('{', pos);
    if (open == std::string_view::npos) {
      pieces.push_back({body.substr(pos), std::nullopt});
      break;
    }
    const auto close = body.find('}', open);
    if (close == std::string_view::npos) {
      pieces.push_back({body.substr(pos), std::nullopt});
      break;
    }
    const auto name = body.substr(open + 1, close - open - 1);
    const auto it = std::find_if(kSlots.begin(), kSlots.end(),
                                 [&](const SlotName& s) { return s.name == name; });
    if (it == kSlots.end()) {
      if (unknown && unknown->empty()) *unknown = std::string(name);
      pieces.push_back({body.substr(pos, close + 1 - pos), std::nullopt});
    } else {
      if (open > pos) pieces.push_back({body.substr(pos, open - pos), std::nullopt});
      pieces.push_back({{}, it->slot});
    }
    pos = close + 1;
  }
  return pieces;
}

std::string replace_all(std::string_view s, std::string_view chars) {
  std::string out(s);
  for (char& c : out) {
    if (chars.find(c) != std::string_view::npos) c = ' ';
  }
  return out;
}

std::string collapse_spaces(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    if (c == ' ' && (out.empty() || out.back() == ' ')) continue;
    out.push_back(c);
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

}  // namespace

std::string_view task_style_name(TaskStyle s) noexcept {
  return s == TaskStyle::triple_classification ? "triple_classification" : "relation_prediction";
}

TaskStyle parse_task_style(std::string_view name) {
  if (name == "triple_classification" || name == "tc") return TaskStyle::triple_classification;
  if (name == "relation_prediction" || name == "rp") return TaskStyle::relation_prediction;
  throw Error(Errc::invalid_argument, "unknown task style '" + std::string(name) + "'");
}

bool PromptTemplate::uses(Slot slot) const {
  for (const auto& p : tokenize(body, nullptr)) {
    if (p.slot == slot) return true;
  }
  return false;
}

void PromptTemplate::validate() const {
  if (id.empty()) throw Error(Errc::invalid_argument, "template id is empty");
  std::string unknown;
  tokenize(body, &unknown);
  if (!unknown.empty()) {
    throw Error(Errc::invalid_argument,
                "template '" + id + "': unknown placeholder {" + unknown + "}");
  }
  if (!uses(Slot::head) || !uses(Slot::tail)) {
    throw Error(Errc::invalid_argument, "template '" + id + "' must use {head} and {tail}");
  }
  if (style == TaskStyle::relation_prediction && uses(Slot::relation)) {
    throw Error(Errc::invalid_argument,
                "relation-prediction template '" + id + "' must not render {relation}");
  }
  if (style == TaskStyle::triple_classification && !uses(Slot::relation)) {
    throw Error(Errc::invalid_argument,
                "triple-classification template '" + id + "' must render {relation}");
  }
  if (uses(Slot::head_desc) != uses(Slot::tail_desc)) {
    throw Error(Errc::invalid_argument,
                "template '" + id + "' must use both or neither of {head_desc}, {tail_desc}");
  }
}

const std::vector<PromptTemplate>& builtin_templates() {
  static const std::vector<PromptTemplate> templates = [] {
    const std::string tc = "Is it true that {head} {relation} {tail}?";
    const std::string rp = "What is the relationship between {head} and {tail}?";
    const std::string desc = " {head} is described as: {head_desc}. {tail} is described as: {tail_desc}.";
    return std::vector<PromptTemplate>{
        {"PT1", TaskStyle::triple_classification, tc},
        {"PT2", TaskStyle::triple_classification, tc + desc},
        {"PT3", TaskStyle::relation_prediction, rp},
        {"PT4", TaskStyle::relation_prediction, rp + desc},
    };
  }();
  return templates;
}

const PromptTemplate& find_template(const std::vector<PromptTemplate>& templates,
                                    std::string_view id) {
  for (const auto& t : templates) {
    if (t.id == id) return t;
  }
  throw Error(Errc::invalid_argument, "no template with id '" + std::string(id) + "'");
}

std::vector<PromptTemplate> parse_templates(std::string_view json_text) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::parse, std::string("template file: ") + e.what());
  }
  if (!doc.is_array()) throw Error(Errc::parse, "template file must hold a JSON array");
  std::vector<PromptTemplate> out;
  for (const auto& entry : doc) {
    if (!entry.is_object()) throw Error(Errc::parse, "template entries must be objects");
    for (const auto& [key, _] : entry.items()) {
      if (key != "id" && key != "style" && key != "body") {
        throw Error(Errc::parse, "template entry has unknown key '" + key + "'");
      }
    }
    try {
      PromptTemplate t;
      t.id = entry.at("id").get<std::string>();
      t.style = parse_task_style(entry.at("style").get<std::string>());
      t.body = entry.at("body").get<std::string>();
      t.validate();
      out.push_back(std::move(t));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::parse, std::string("template entry: ") + e.what());
    }
  }
  return out;
}

std::vector<PromptTemplate> load_templates(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_templates(buf.str());
}

std::string RenderedPrompt::scaffold() const {
  std::string out;
  std::size_t pos = 0;
  for (const auto& s : spans) {
    out.append(text, pos, s.offset - pos);
    pos = s.offset + s.length;
  }
  out.append(text, pos, std::string::npos);
  return out;
}

std::string entity_phrase(std::string_view name) { return replace_all(name, "_"); }

std::string relation_phrase(std::string_view name) {
  return collapse_spaces(replace_all(name, "_/"));
}

std::string transform_triple(const Triple& t, const KnowledgeGraph& g) {
  return entity_phrase(g.entity_name(t.head)) + " " + relation_phrase(g.relation_name(t.relation)) +
         " " + entity_phrase(g.entity_name(t.tail)) + ".";
}

RenderedPrompt render(const PromptTemplate& tpl, const SlotValues& values) {
  std::string unknown;
  const auto pieces = tokenize(tpl.body, &unknown);
  if (!unknown.empty()) {
    throw Error(Errc::invalid_argument,
                "template '" + tpl.id + "': unknown placeholder {" + unknown + "}");
  }
  RenderedPrompt out;
  out.template_id = tpl.id;
  for (const auto& p : pieces) {
    if (!p.slot) {
      out.text.append(p.literal);
      continue;
    }
    const std::string* value = nullptr;
    switch (*p.slot) {
      case Slot::head: value = &values.head; break;
      case Slot::relation:
        if (tpl.style == TaskStyle::relation_prediction) {
          throw Error(Errc::invalid_argument, "relation-prediction prompts never render the relation");
        }
        value = &values.relation;
        break;
      case Slot::tail: value = &values.tail; break;
      case Slot::head_desc:
      case Slot::tail_desc: {
        const auto& d = *p.slot == Slot::head_desc ? values.head_desc : values.tail_desc;
        if (!d || d->empty()) {
          throw Error(Errc::invalid_argument,
                      "template '" + tpl.id + "' needs entity descriptions that were not supplied");
        }
        value = &*d;
        break;
      }
    }
    out.spans.push_back({*p.slot, out.text.size(), value->size()});
    out.text.append(*value);
  }
  return out;
}

RenderedPrompt render(const PromptTemplate& tpl, const Triple& t, const KnowledgeGraph& g) {
  SlotValues v;
  v.head = entity_phrase(g.entity_name(t.head));
  v.tail = entity_phrase(g.entity_name(t.tail));
  if (tpl.style == TaskStyle::triple_classification) {
    v.relation = relation_phrase(g.relation_name(t.relation));
  }
  if (tpl.needs_descriptions()) {
    if (auto d = g.entity_description(t.head)) v.head_desc = std::string(*d);
    if (auto d = g.entity_description(t.tail)) v.tail_desc = std::string(*d);
  }
  auto out = render(tpl, v);
  out.source = t;
  return out;
}

}  // namespace kgprobe
