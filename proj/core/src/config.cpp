#include "kgprobe/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "kgprobe/error.hpp"

namespace kgprobe {
namespace {

using nlohmann::json;

// Reads known keys from one JSON object and rejects the rest on finish().
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw Error(Errc::parse, where() + " must be an object");
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    known_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception& e) {
      throw Error(Errc::parse, where(key) + ": " + e.what());
    }
  }

  template <typename Fn>
  void with_string(const std::string& key, Fn&& fn) {
    std::string s;
    known_.insert(key);
    if (!j_.contains(key)) return;
    read(key, s);
    try {
      fn(s);
    } catch (const Error& e) {
      throw Error(Errc::parse, where(key) + ": " + e.what());
    }
  }

  const json* child(const std::string& key) {
    known_.insert(key);
    return j_.contains(key) ? &j_.at(key) : nullptr;
  }

  std::string where(const std::string& key = {}) const {
    if (key.empty()) return path_.empty() ? "config" : path_;
    return path_.empty() ? key : path_ + "." + key;
  }

  void finish() const {
    for (const auto& [key, _] : j_.items()) {
      if (!known_.contains(key)) throw Error(Errc::parse, "unknown config key '" + where(key) + "'");
    }
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> known_;
};

void read_sampler(ObjectReader& r, SamplingConfig& s) {
  r.read("seed", s.sampler.seed);
  r.read("head_corrupt_prob", s.sampler.head_corrupt_prob);
  r.read("max_resample_attempts", s.sampler.max_resample_attempts);
  r.read("train_pairs", s.train_pairs);
  r.read("valid_pairs", s.valid_pairs);
  r.read("test_pairs", s.test_pairs);
}

void read_probe(ObjectReader& r, TrainConfig& p) {
  r.with_string("model", [&](const std::string& s) { p.kind = parse_probe_kind(s); });
  r.read("batch_size", p.batch_size);
  r.read("learning_rate", p.learning_rate);
  r.read("epochs", p.epochs);
  r.read("weight_decay", p.weight_decay);
  r.read("hidden_width", p.hidden_width);
  r.read("seed", p.seed);
  r.read("standardize", p.standardize);
}

}  // namespace

RunConfig parse_run_config(std::string_view json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::exception& e) {
    throw Error(Errc::parse, std::string("config: ") + e.what());
  }
  RunConfig cfg;
  ObjectReader root(doc, "");
  root.with_string("task", [&](const std::string& s) { cfg.task = parse_task_tag(s); });
  root.read("output_dir", cfg.output_dir);

  if (const auto* j = root.child("data")) {
    ObjectReader r(*j, "data");
    DataConfig d;
    r.read("train", d.train);
    r.read("valid", d.valid);
    r.read("test", d.test);
    r.read("descriptions", d.descriptions);
    r.read("relation_descriptions", d.relation_descriptions);
    r.finish();
    cfg.data = std::move(d);
  }
  if (const auto* j = root.child("synthetic")) {
    ObjectReader r(*j, "synthetic");
    SyntheticGraphSpec s;
    r.read("entities", s.entities);
    r.read("relations", s.relations);
    r.read("triples", s.triples);
    r.read("seed", s.seed);
    r.read("valid_fraction", s.valid_fraction);
    r.read("test_fraction", s.test_fraction);
    r.finish();
    cfg.synthetic = s;
  }
  if (const auto* j = root.child("sampling")) {
    ObjectReader r(*j, "sampling");
    read_sampler(r, cfg.sampling);
    r.finish();
  }
  if (const auto* j = root.child("descriptions")) {
    ObjectReader r(*j, "descriptions");
    auto& d = cfg.descriptions;
    r.with_string("mode", [&](const std::string& s) {
      d.enabled = s != "none";
      if (d.enabled) d.generator.mode = parse_desc_mode(s);
    });
    r.read("cap", d.generator.max_subgraph_triples);
    r.read("separator", d.generator.separator);
    r.read("seed", d.generator.seed);
    std::string cache;
    r.read("cache", cache);
    if (!cache.empty()) d.generator.cache_path = cache;
    r.read("endpoint", d.endpoint);
    r.read("model", d.model);
    r.read("concurrency", d.generator.max_concurrency);
    r.read("generation_template", d.generator.generation_template);
    r.finish();
  }
  if (const auto* j = root.child("prompts")) {
    ObjectReader r(*j, "prompts");
    r.read("template_file", cfg.prompts.template_file);
    r.read("template_id", cfg.prompts.template_id);
    r.finish();
  }
  if (const auto* j = root.child("extraction")) {
    ObjectReader r(*j, "extraction");
    auto& e = cfg.extraction;
    r.read("backend", e.backend);
    r.read("layers", e.layers);
    r.read("batch_size", e.batch_size);
    r.read("url", e.url);
    r.read("num_layers", e.num_layers);
    if (const auto* m = r.child("mock")) {
      ObjectReader mr(*m, "extraction.mock");
      mr.read("seed", e.mock.seed);
      mr.read("dim", e.mock.dim);
      mr.read("num_layers", e.mock.num_layers);
      std::vector<int> planted;
      mr.read("planted_layers", planted);
      if (m->contains("planted_layers")) e.mock.planted_layers = {planted.begin(), planted.end()};
      mr.read("margin", e.mock.margin);
      mr.finish();
    }
    r.finish();
  }
  if (const auto* j = root.child("probe")) {
    ObjectReader r(*j, "probe");
    read_probe(r, cfg.probe);
    r.finish();
  }
  if (const auto* j = root.child("experiment")) {
    ObjectReader r(*j, "experiment");
    auto& x = cfg.experiment;
    r.read("test_all_layers", x.test_all_layers);
    r.read("train_sizes", x.train_sizes);
    r.read("size_seeds", x.size_seeds);
    r.read("pca", x.pca);
    r.read("threads", x.threads);
    r.finish();
  }
  root.finish();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_run_config(buf.str());
}

std::string run_config_json(const RunConfig& cfg) {
  json j;
  j["task"] = std::string(task_tag_name(cfg.task));
  j["output_dir"] = cfg.output_dir;
  if (cfg.data) {
    const auto& d = *cfg.data;
    j["data"] = {{"train", d.train},
                 {"valid", d.valid},
                 {"test", d.test},
                 {"descriptions", d.descriptions},
                 {"relation_descriptions", d.relation_descriptions}};
  }
  if (cfg.synthetic) {
    const auto& s = *cfg.synthetic;
    j["synthetic"] = {{"entities", s.entities},     {"relations", s.relations},
                      {"triples", s.triples},       {"seed", s.seed},
                      {"valid_fraction", s.valid_fraction}, {"test_fraction", s.test_fraction}};
  }
  const auto& s = cfg.sampling;
  j["sampling"] = {{"seed", s.sampler.seed},
                   {"head_corrupt_prob", s.sampler.head_corrupt_prob},
                   {"max_resample_attempts", s.sampler.max_resample_attempts},
                   {"train_pairs", s.train_pairs},
                   {"valid_pairs", s.valid_pairs},
                   {"test_pairs", s.test_pairs}};
  const auto& d = cfg.descriptions;
  j["descriptions"] = {
      {"mode", d.enabled ? std::string(desc_mode_name(d.generator.mode)) : std::string("none")},
      {"cap", d.generator.max_subgraph_triples},
      {"separator", d.generator.separator},
      {"seed", d.generator.seed},
      {"cache", d.generator.cache_path ? d.generator.cache_path->string() : std::string()},
      {"endpoint", d.endpoint},
      {"model", d.model},
      {"concurrency", d.generator.max_concurrency},
      {"generation_template", d.generator.generation_template}};
  j["prompts"] = {{"template_file", cfg.prompts.template_file},
                  {"template_id", cfg.prompts.template_id}};
  const auto& e = cfg.extraction;
  j["extraction"] = {
      {"backend", e.backend},
      {"layers", e.layers},
      {"batch_size", e.batch_size},
      {"url", e.url},
      {"num_layers", e.num_layers},
      {"mock",
       {{"seed", e.mock.seed},
        {"dim", e.mock.dim},
        {"num_layers", e.mock.num_layers},
        {"planted_layers", std::vector<int>(e.mock.planted_layers.begin(), e.mock.planted_layers.end())},
        {"margin", e.mock.margin}}}};
  const auto& p = cfg.probe;
  j["probe"] = {{"model", std::string(probe_kind_name(p.kind))},
                {"batch_size", p.batch_size},
                {"learning_rate", p.learning_rate},
                {"epochs", p.epochs},
                {"weight_decay", p.weight_decay},
                {"hidden_width", p.hidden_width},
                {"seed", p.seed},
                {"standardize", p.standardize}};
  const auto& x = cfg.experiment;
  j["experiment"] = {{"test_all_layers", x.test_all_layers},
                     {"train_sizes", x.train_sizes},
                     {"size_seeds", x.size_seeds},
                     {"pca", x.pca},
                     {"threads", x.threads}};
  return j.dump();
}

}  // namespace kgprobe
