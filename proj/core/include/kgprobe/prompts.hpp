#pragma once

/**
 * @file prompts.hpp
 * Stimulation prompt templates and their rendering.
 *
 * A template body is plain text with `{head}`, `{relation}`, `{tail}`,
 * `{head_desc}` and `{tail_desc}` placeholders. Substitution is a single
 * left-to-right pass, so substituted values are never re-scanned.
 */

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kgprobe/kg.hpp"

namespace kgprobe {

enum class TaskStyle { triple_classification, relation_prediction };

std::string_view task_style_name(TaskStyle s) noexcept;
TaskStyle parse_task_style(std::string_view name);

enum class Slot { head, relation, tail, head_desc, tail_desc };

struct PromptTemplate {
  std::string id;
  TaskStyle style = TaskStyle::triple_classification;
  std::string body;

  /// Rejects unknown placeholders, a {relation} slot in relation-prediction
  /// bodies, and a lone description placeholder.
  void validate() const;
  bool uses(Slot slot) const;
  bool needs_descriptions() const { return uses(Slot::head_desc) || uses(Slot::tail_desc); }
};

/// Shipped defaults PT1..PT4. Override with a template file to use other wording.
const std::vector<PromptTemplate>& builtin_templates();
const PromptTemplate& find_template(const std::vector<PromptTemplate>& templates,
                                    std::string_view id);

/// JSON array of {"id", "style", "body"} objects.
std::vector<PromptTemplate> load_templates(const std::filesystem::path& path);
std::vector<PromptTemplate> parse_templates(std::string_view json_text);

struct SlotValues {
  std::string head;
  std::string relation;
  std::string tail;
  std::optional<std::string> head_desc;
  std::optional<std::string> tail_desc;
};

struct SlotSpan {
  Slot slot;
  std::size_t offset;
  std::size_t length;
};

struct RenderedPrompt {
  std::string text;
  std::string template_id;
  Triple source{};
  /// Where each substituted value landed in `text`.
  std::vector<SlotSpan> spans;

  /// `text` with every substituted span removed.
  std::string scaffold() const;
};

/// Entity surface form: underscores become spaces.
std::string entity_phrase(std::string_view name);
/// Relation surface form: '_' and '/' become spaces, whitespace collapsed.
std::string relation_phrase(std::string_view name);

/// "<head> <relation phrase> <tail>."
std::string transform_triple(const Triple& t, const KnowledgeGraph& g);

RenderedPrompt render(const PromptTemplate& tpl, const SlotValues& values);

/// Fills slots from `g`. Descriptions come from `g`'s entity descriptions;
/// a missing or empty one is an error when the template needs it.
RenderedPrompt render(const PromptTemplate& tpl, const Triple& t, const KnowledgeGraph& g);

/// One line of prompts.jsonl: {"id": u64, "text": string, "label": i32}.
struct PromptRecord {
  std::uint64_t id = 0;
  std::string text;
  std::int32_t label = 0;

  friend bool operator==(const PromptRecord&, const PromptRecord&) = default;
};

void write_prompts_jsonl(std::ostream& out, const std::vector<PromptRecord>& records);
void write_prompts_jsonl(const std::filesystem::path& path, const std::vector<PromptRecord>& records);
/// Blank lines are skipped; a malformed line, a missing field or an extra
/// key is a parse error naming the line.
std::vector<PromptRecord> read_prompts_jsonl(std::istream& in, std::string_view source = "<stream>");
std::vector<PromptRecord> read_prompts_jsonl(const std::filesystem::path& path);

}  // namespace kgprobe
