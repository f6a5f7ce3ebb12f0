#include <fstream>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "kgprobe/error.hpp"
#include "kgprobe/prompts.hpp"

namespace kgprobe {

void write_prompts_jsonl(std::ostream& out, const std::vector<PromptRecord>& records) {
  for (const auto& r : records) {
    nlohmann::ordered_json j;
    j["id"] = r.id;
    j["text"] = r.text;
    j["label"] = r.label;
    out << j.dump() << '\n';
  }
}

void write_prompts_jsonl(const std::filesystem::path& path, const std::vector<PromptRecord>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io, "cannot write " + path.string());
  write_prompts_jsonl(out, records);
  if (!out) throw Error(Errc::io, "write failed: " + path.string());
}

std::vector<PromptRecord> read_prompts_jsonl(std::istream& in, std::string_view source) {
  std::vector<PromptRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    const auto where = std::string(source) + ":" + std::to_string(line_no);
    try {
      const auto j = nlohmann::json::parse(line);
      if (!j.is_object() || j.size() != 3 || !j.contains("id") || !j.contains("text") ||
          !j.contains("label")) {
        throw Error(Errc::parse, where + ": expected exactly {id, text, label}");
      }
      if (!j["id"].is_number_unsigned() && !(j["id"].is_number_integer() && j["id"].get<std::int64_t>() >= 0)) {
        throw Error(Errc::parse, where + ": id must be a non-negative integer");
      }
      if (!j["text"].is_string()) throw Error(Errc::parse, where + ": text must be a string");
      if (!j["label"].is_number_integer()) throw Error(Errc::parse, where + ": label must be an integer");
      PromptRecord r;
      r.id = j["id"].get<std::uint64_t>();
      r.text = j["text"].get<std::string>();
      r.label = j["label"].get<std::int32_t>();
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw Error(Errc::parse, where + ": " + e.what());
    }
  }
  return out;
}

std::vector<PromptRecord> read_prompts_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  return read_prompts_jsonl(in, path.string());
}

}  // namespace kgprobe
