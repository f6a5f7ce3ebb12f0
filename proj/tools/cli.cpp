#include "cli.hpp"

#include <algorithm>
#include <fstream>
#include <functional>
#include <memory>
#include <ostream>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "kgprobe/config.hpp"
#include "kgprobe/descgen.hpp"
#include "kgprobe/error.hpp"
#include "kgprobe/experiment.hpp"
#include "kgprobe/extraction.hpp"
#include "kgprobe/kg.hpp"
#include "kgprobe/probe.hpp"
#include "kgprobe/prompts.hpp"
#include "kgprobe/sampling.hpp"
#include "kgprobe/store.hpp"

namespace kgprobe::cli {
namespace {

using nlohmann::json;

// An option whose value only overrides the config when given on the
// command line.
template <typename T>
struct Flag {
  T value{};
  CLI::Option* opt = nullptr;
  bool set() const { return opt != nullptr && opt->count() > 0; }
  void apply(T& target) const {
    if (set()) target = value;
  }
};

template <typename T>
void add(CLI::App* app, const std::string& name, Flag<T>& f, const std::string& help) {
  f.opt = app->add_option(name, f.value, help);
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io, "cannot write " + path);
  return out;
}

void finish(std::ofstream& out, const std::string& path) {
  out.close();
  if (!out) throw Error(Errc::io, "write failed: " + path);
}

void write_text(const std::string& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
  finish(out, path);
}

// Pairs files name entities and relations; map them onto the graph's ids.
std::vector<LabeledTriple> load_pairs(const std::string& path, const KnowledgeGraph& g) {
  Vocabulary local;
  const auto recs = load_triples(path, detect_labeled(path), local);
  std::vector<LabeledTriple> out;
  out.reserve(recs.size());
  for (const auto& r : recs) {
    const auto& h = local.entities.name(index_of(r.triple.head));
    const auto& rel = local.relations.name(index_of(r.triple.relation));
    const auto& t = local.entities.name(index_of(r.triple.tail));
    const auto hid = g.find_entity(h);
    const auto rid = g.find_relation(rel);
    const auto tid = g.find_entity(t);
    if (!hid || !tid) throw Error(Errc::invalid_argument, path + ": entity not in graph: " + (hid ? t : h));
    if (!rid) throw Error(Errc::invalid_argument, path + ": relation not in graph: " + rel);
    out.push_back({{*hid, *rid, *tid}, r.label});
  }
  return out;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path);
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

void print_error(std::ostream& err, bool json_errors, std::string_view code, const std::string& message) {
  if (json_errors) {
    err << json{{"error", {{"code", std::string(code)}, {"message", message}}}}.dump() << '\n';
  } else {
    err << "kgprobe: error: " << message << '\n';
  }
}

struct Context {
  RunConfig cfg;
  std::ostream& out;
};

// ---------------------------------------------------------------------------
// Subcommands. Each registers its options and returns the action to run
// after parsing.
// ---------------------------------------------------------------------------

using Action = std::function<int(Context&)>;

Action add_ingest(CLI::App& app) {
  auto* sub = app.add_subcommand("ingest", "Load TSV splits into a graph bundle");
  auto o = std::make_shared<DataConfig>();
  auto out = std::make_shared<std::string>();
  sub->add_option("--train", o->train, "Training triples TSV")->required();
  sub->add_option("--valid", o->valid, "Validation triples TSV");
  sub->add_option("--test", o->test, "Test triples TSV");
  sub->add_option("--desc", o->descriptions, "Entity description TSV (repeatable)");
  sub->add_option("--relation-desc", o->relation_descriptions, "Relation description TSV (repeatable)");
  sub->add_option("--out", *out, "Output graph bundle")->required();
  return [sub, o, out](Context& ctx) {
    if (!sub->parsed()) return -1;
    const auto g = load_graph(*o);
    write_graph(g, *out);
    ctx.out << "entities=" << g.entity_count() << " relations=" << g.relation_count()
            << " train=" << g.split(Split::train).size() << " valid=" << g.split(Split::valid).size()
            << " test=" << g.split(Split::test).size() << '\n';
    for (const auto& w : g.warnings()) ctx.out << "warning: " << w << '\n';
    return 0;
  };
}

Action add_sample(CLI::App& app) {
  auto* sub = app.add_subcommand("sample", "Draw a balanced positive/negative pair set");
  struct Opts {
    std::string graph, out, split = "train";
    Flag<std::size_t> n_pairs;
    Flag<std::uint64_t> seed;
    Flag<double> head_prob;
    Flag<int> max_attempts;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--graph", o->graph, "Graph bundle")->required();
  sub->add_option("--out", o->out, "Output pairs TSV (head, relation, tail, label)")->required();
  sub->add_option("--split", o->split, "Split providing positives")
      ->check(CLI::IsMember({"train", "valid", "test"}));
  add(sub, "--n-pairs", o->n_pairs, "Number of positive/negative pairs");
  add(sub, "--seed", o->seed, "Sampler seed");
  add(sub, "--head-prob", o->head_prob, "Probability of corrupting the head");
  add(sub, "--max-attempts", o->max_attempts, "Resampling attempts per corruption");
  return [sub, o](Context& ctx) {
    if (!sub->parsed()) return -1;
    auto& sc = ctx.cfg.sampling;
    o->n_pairs.apply(sc.train_pairs);
    o->seed.apply(sc.sampler.seed);
    o->head_prob.apply(sc.sampler.head_corrupt_prob);
    o->max_attempts.apply(sc.sampler.max_resample_attempts);
    const auto g = read_graph(o->graph);
    const auto split = o->split == "train" ? Split::train : o->split == "valid" ? Split::valid : Split::test;
    const auto pairs = build_balanced_set(g, sc.train_pairs, sc.sampler, split);
    auto out = open_out(o->out);
    for (const auto& p : pairs) {
      out << g.entity_name(p.triple.head) << '\t' << g.relation_name(p.triple.relation) << '\t'
          << g.entity_name(p.triple.tail) << '\t' << p.label << '\n';
    }
    finish(out, o->out);
    ctx.out << "pairs=" << pairs.size() / 2 << " lines=" << pairs.size() << '\n';
    return 0;
  };
}

Action add_describe(CLI::App& app) {
  auto* sub = app.add_subcommand("describe", "Generate entity descriptions from train subgraphs");
  struct Opts {
    std::string graph, out;
    Flag<std::string> mode, separator, cache, endpoint, model;
    Flag<std::size_t> cap, concurrency;
    Flag<std::uint64_t> seed;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--graph", o->graph, "Graph bundle")->required();
  sub->add_option("--out", o->out, "Output description TSV")->required();
  add(sub, "--mode", o->mode, "concat | llm");
  add(sub, "--cap", o->cap, "Maximum subgraph triples per entity");
  add(sub, "--seed", o->seed, "Subgraph downsampling seed");
  add(sub, "--separator", o->separator, "Separator between concatenated triples");
  add(sub, "--cache", o->cache, "Description cache TSV (llm mode)");
  add(sub, "--endpoint", o->endpoint, "Text-generation base URL (llm mode)");
  add(sub, "--model", o->model, "Text-generation model name (llm mode)");
  add(sub, "--concurrency", o->concurrency, "Concurrent generation requests");
  return [sub, o](Context& ctx) {
    if (!sub->parsed()) return -1;
    auto& d = ctx.cfg.descriptions;
    if (o->mode.set()) d.generator.mode = parse_desc_mode(o->mode.value);
    o->cap.apply(d.generator.max_subgraph_triples);
    o->seed.apply(d.generator.seed);
    o->separator.apply(d.generator.separator);
    if (o->cache.set()) d.generator.cache_path = o->cache.value;
    o->endpoint.apply(d.endpoint);
    o->model.apply(d.model);
    o->concurrency.apply(d.generator.max_concurrency);

    const auto g = read_graph(o->graph);
    std::unique_ptr<TextGenerationClient> client;
    if (d.generator.mode == DescMode::llm_rephrase) {
      if (d.endpoint.empty()) throw Error(Errc::invalid_argument, "llm mode needs --endpoint");
      client = std::make_unique<HttpTextClient>(d.endpoint, d.model);
    }
    std::vector<EntityId> entities;
    for (std::uint32_t i = 0; i < g.entity_count(); ++i) entities.push_back(EntityId{i});
    const auto result = describe_all(g, entities, d.generator, client.get());
    if (!result.failures.empty()) {
      const auto& [id, msg] = result.failures.front();
      throw Error(Errc::generation, std::to_string(result.failures.size()) +
                                        " description(s) failed; first: " + g.entity_name(id) + ": " + msg);
    }
    DescriptionEntries entries;
    for (const auto& [id, text] : result.descriptions) entries.emplace_back(g.entity_name(id), text);
    auto out = open_out(o->out);
    write_descriptions(out, entries);
    finish(out, o->out);
    ctx.out << "described=" << entries.size() << " client_calls=" << result.client_calls << '\n';
    return 0;
  };
}

Action add_render(CLI::App& app) {
  auto* sub = app.add_subcommand("render", "Render pairs into prompts.jsonl");
  struct Opts {
    std::string pairs, graph, out, labels_out;
    std::vector<std::string> desc;
    Flag<std::string> template_file, template_id, task;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--pairs", o->pairs, "Pairs TSV from `sample` (or any labeled triple TSV)")->required();
  sub->add_option("--graph", o->graph, "Graph bundle the pairs refer to")->required();
  sub->add_option("--out", o->out, "Output prompts.jsonl")->required();
  sub->add_option("--desc", o->desc, "Entity description TSV replacing the bundle's (repeatable)");
  sub->add_option("--labels-out", o->labels_out, "Write the label names, one per line");
  add(sub, "--template-file", o->template_file, "JSON template file (default: built-in templates)");
  add(sub, "--template-id", o->template_id, "Template id");
  add(sub, "--task", o->task, "tc | rp");
  return [sub, o](Context& ctx) {
    if (!sub->parsed()) return -1;
    auto& cfg = ctx.cfg;
    o->template_file.apply(cfg.prompts.template_file);
    o->template_id.apply(cfg.prompts.template_id);
    if (o->task.set()) cfg.task = parse_task_tag(o->task.value);

    auto g = read_graph(o->graph);
    if (!o->desc.empty()) {
      DescriptionEntries entries;
      for (const auto& p : o->desc) {
        auto e = load_descriptions(p);
        entries.insert(entries.end(), e.begin(), e.end());
      }
      g = with_entity_descriptions(g, entries);
    }
    const auto templates =
        cfg.prompts.template_file.empty() ? builtin_templates() : load_templates(cfg.prompts.template_file);
    const auto& tpl = find_template(templates, cfg.prompts.template_id);
    const auto pairs = load_pairs(o->pairs, g);
    const auto set = render_examples(g, pairs, tpl, cfg.task);
    std::vector<PromptRecord> records;
    records.reserve(set.texts.size());
    for (std::size_t i = 0; i < set.texts.size(); ++i) records.push_back({set.ids[i], set.texts[i], set.labels[i]});
    write_prompts_jsonl(std::filesystem::path(o->out), records);
    if (!o->labels_out.empty()) {
      std::string names;
      if (cfg.task == TaskTag::tc) {
        names = "negative\npositive\n";
      } else {
        for (std::uint32_t r = 0; r < g.relation_count(); ++r) names += g.relation_name(RelationId{r}) + "\n";
      }
      write_text(o->labels_out, names);
    }
    ctx.out << "prompts=" << records.size() << " template=" << tpl.id << '\n';
    return 0;
  };
}

Action add_extract(CLI::App& app) {
  auto* sub = app.add_subcommand("extract", "Extract last-token hidden states into a .kgph store");
  struct Opts {
    std::string prompts, out, label_file, source_store;
    Flag<std::string> backend, layers, url, task, model_name;
    Flag<std::size_t> batch_size, mock_dim, num_classes;
    Flag<int> num_layers;
    Flag<std::uint64_t> mock_seed;
    Flag<std::vector<int>> planted;
    Flag<double> margin;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--prompts", o->prompts, "prompts.jsonl")->required();
  sub->add_option("--out", o->out, "Output store")->required();
  sub->add_option("--label-file", o->label_file, "Label names, one per line (default: tc names or class indices)");
  sub->add_option("--source-store", o->source_store, "Existing store read by the `store` backend");
  add(sub, "--backend", o->backend, "mock | http | store");
  add(sub, "--layers", o->layers, "all | a..b | comma list (interior layers 1..L-1)");
  add(sub, "--batch-size", o->batch_size, "Texts per backend request");
  add(sub, "--url", o->url, "Hidden-state server base URL (http backend)");
  add(sub, "--num-layers", o->num_layers, "Model depth L (http: 0 = unknown; mock: depth)");
  add(sub, "--task", o->task, "tc | rp");
  add(sub, "--num-classes", o->num_classes, "Label-space size (default: from labels)");
  add(sub, "--mock-dim", o->mock_dim, "Mock hidden size");
  add(sub, "--mock-seed", o->mock_seed, "Mock seed");
  add(sub, "--planted", o->planted, "Mock planted layers");
  add(sub, "--margin", o->margin, "Mock planted margin");
  add(sub, "--model-name", o->model_name, "Mock model identifier recorded in the header");
  return [sub, o](Context& ctx) {
    if (!sub->parsed()) return -1;
    auto& cfg = ctx.cfg;
    auto& ec = cfg.extraction;
    o->backend.apply(ec.backend);
    o->layers.apply(ec.layers);
    o->batch_size.apply(ec.batch_size);
    o->url.apply(ec.url);
    if (o->task.set()) cfg.task = parse_task_tag(o->task.value);
    if (o->num_layers.set()) {
      ec.num_layers = o->num_layers.value;
      ec.mock.num_layers = o->num_layers.value;
    }
    o->mock_dim.apply(ec.mock.dim);
    o->mock_seed.apply(ec.mock.seed);
    if (o->planted.set()) ec.mock.planted_layers = {o->planted.value.begin(), o->planted.value.end()};
    o->margin.apply(ec.mock.margin);
    o->model_name.apply(ec.mock.model_name);

    const auto records = read_prompts_jsonl(std::filesystem::path(o->prompts));
    std::vector<std::string> texts;
    std::vector<std::int32_t> labels;
    std::vector<std::uint64_t> ids;
    for (const auto& r : records) {
      texts.push_back(r.text);
      labels.push_back(r.label);
      ids.push_back(r.id);
    }

    std::vector<std::string> label_names;
    if (!o->label_file.empty()) {
      label_names = read_lines(o->label_file);
    } else if (cfg.task == TaskTag::tc) {
      label_names = {"negative", "positive"};
    } else {
      std::int32_t max_label = 1;
      for (auto l : labels) max_label = std::max(max_label, l);
      std::size_t n = o->num_classes.set() ? o->num_classes.value : static_cast<std::size_t>(max_label) + 1;
      for (std::size_t c = 0; c < n; ++c) label_names.push_back(std::to_string(c));
    }

    std::unique_ptr<ExtractionBackend> backend;
    if (ec.backend == "mock") {
      auto mc = ec.mock;
      mc.num_classes = label_names.size();
      std::unordered_map<std::string, std::int32_t> table;
      for (std::size_t i = 0; i < texts.size(); ++i) {
        const auto [it, fresh] = table.emplace(texts[i], labels[i]);
        if (!fresh && it->second != labels[i]) {
          throw Error(Errc::invalid_argument, "prompt text appears with conflicting labels: " + texts[i]);
        }
      }
      backend = std::make_unique<MockLM>(mc, table_oracle(std::move(table)));
    } else if (ec.backend == "http") {
      if (ec.url.empty()) throw Error(Errc::invalid_argument, "http backend needs --url");
      backend = std::make_unique<HttpBackend>(ec.url, ec.num_layers);
    } else if (ec.backend == "store") {
      if (o->source_store.empty()) throw Error(Errc::invalid_argument, "store backend needs --source-store");
      std::unordered_map<std::string, std::uint64_t> text_ids;
      for (std::size_t i = 0; i < texts.size(); ++i) text_ids.emplace(texts[i], ids[i]);
      backend = std::make_unique<StoreBackend>(read_store(std::filesystem::path(o->source_store)), std::move(text_ids));
    } else {
      throw Error(Errc::invalid_argument, "unknown backend '" + ec.backend + "'");
    }

    std::vector<int> layers;
    if (ec.backend == "store" && ec.layers == "all") {
      layers = read_store(std::filesystem::path(o->source_store)).header().layers;
    } else {
      layers = parse_layer_spec(ec.layers, backend->num_layers());
    }
    ExtractOptions opts;
    opts.batch_size = ec.batch_size;
    opts.task = cfg.task;
    opts.label_names = label_names;
    const auto store = extract_dataset(*backend, texts, labels, layers, opts, ids);
    write_store(store, std::filesystem::path(o->out));
    ctx.out << "records=" << store.size() << " dim=" << store.dim() << " layers=" << layers.size() << '\n';
    return 0;
  };
}

struct ProbeFlags {
  Flag<std::string> model;
  Flag<std::size_t> epochs, batch_size, hidden;
  Flag<double> lr, weight_decay;
  Flag<std::uint64_t> seed;

  void add_to(CLI::App* sub) {
    add(sub, "--model", model, "logreg | mlp | svm");
    add(sub, "--epochs", epochs, "Training epochs");
    add(sub, "--batch-size", batch_size, "Minibatch size");
    add(sub, "--lr", lr, "AdamW learning rate");
    add(sub, "--weight-decay", weight_decay, "AdamW decoupled weight decay");
    add(sub, "--hidden", hidden, "MLP hidden width");
    add(sub, "--seed", seed, "Training seed");
  }
  void apply(TrainConfig& c) const {
    if (model.set()) c.kind = parse_probe_kind(model.value);
    epochs.apply(c.epochs);
    batch_size.apply(c.batch_size);
    lr.apply(c.learning_rate);
    weight_decay.apply(c.weight_decay);
    hidden.apply(c.hidden_width);
    seed.apply(c.seed);
  }
};

Action add_train(CLI::App& app) {
  auto* sub = app.add_subcommand("train", "Train a probe on one layer, or pick the layer by validation");
  struct Opts {
    std::string states, states_valid, layer = "auto", out;
    std::size_t threads = 1;
    ProbeFlags probe;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--states", o->states, "Training store")->required();
  sub->add_option("--states-valid", o->states_valid, "Validation store (required for --layer auto)");
  sub->add_option("--layer", o->layer, "Layer index or auto");
  sub->add_option("--out", o->out, "Output model file")->required();
  sub->add_option("--threads", o->threads, "Parallel layers for --layer auto");
  o->probe.add_to(sub);
  return [sub, o](Context& ctx) {
    if (!sub->parsed()) return -1;
    auto& pc = ctx.cfg.probe;
    o->probe.apply(pc);
    const auto train_store = read_store(std::filesystem::path(o->states));
    ProbeModel model;
    if (o->layer == "auto") {
      if (o->states_valid.empty()) throw Error(Errc::invalid_argument, "--layer auto needs --states-valid");
      const auto valid_store = read_store(std::filesystem::path(o->states_valid));
      SweepOptions so;
      so.threads = o->threads;
      auto res = sweep_layers(train_store, valid_store, nullptr, pc, so);
      model = std::move(res.selected_model);
      ctx.out << "selected_layer=" << res.report.selected_layer << '\n';
    } else {
      int layer = 0;
      try {
        std::size_t used = 0;
        layer = std::stoi(o->layer, &used);
        if (used != o->layer.size()) throw std::invalid_argument("trailing");
      } catch (const std::exception&) {
        throw Error(Errc::invalid_argument, "--layer must be an integer or auto, got '" + o->layer + "'");
      }
      model = train(train_store, layer, pc);
    }
    write_model(model, o->out);
    ctx.out << "layer=" << model.layer() << " kind=" << probe_kind_name(model.kind())
            << " params=" << model.param_count() << '\n';
    return 0;
  };
}

Action add_sweep(CLI::App& app) {
  auto* sub = app.add_subcommand("sweep", "Train one probe per layer and select by validation accuracy");
  struct Opts {
    std::string train, valid, test, out, report, model_out;
    std::size_t threads = 1;
    bool selected_only = false;
    ProbeFlags probe;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--states-train", o->train, "Training store")->required();
  sub->add_option("--states-valid", o->valid, "Validation store")->required();
  sub->add_option("--states-test", o->test, "Test store");
  sub->add_option("--out", o->out, "Output layers.csv")->required();
  sub->add_option("--report", o->report, "Also write a JSON report");
  sub->add_option("--model-out", o->model_out, "Save the selected layer's probe");
  sub->add_option("--threads", o->threads, "Layers trained in parallel");
  sub->add_flag("--selected-only", o->selected_only, "Score the test store on the selected layer only");
  o->probe.add_to(sub);
  return [sub, o](Context& ctx) {
    if (!sub->parsed()) return -1;
    auto& cfg = ctx.cfg;
    o->probe.apply(cfg.probe);
    const auto train_store = read_store(std::filesystem::path(o->train));
    const auto valid_store = read_store(std::filesystem::path(o->valid));
    std::optional<HiddenStateStore> test_store;
    if (!o->test.empty()) test_store = read_store(std::filesystem::path(o->test));
    SweepOptions so;
    so.threads = o->threads;
    so.test_all_layers = !o->selected_only;
    const auto res = sweep_layers(train_store, valid_store, test_store ? &*test_store : nullptr, cfg.probe, so);
    std::ostringstream csv;
    write_layers_csv(res.report, csv);
    write_text(o->out, csv.str());
    if (!o->model_out.empty()) write_model(res.selected_model, o->model_out);
    if (!o->report.empty()) {
      EvalReport r;
      r.task = train_store.header().task;
      r.sweep = res.report;
      const auto metric = r.task == TaskTag::tc ? "accuracy" : "hits_at_1";
      for (const auto& l : res.report.layers) {
        if (l.layer != res.report.selected_layer) continue;
        r.metrics[std::string("valid_") + metric] = l.valid_accuracy;
        if (l.test_accuracy) r.metrics[metric] = *l.test_accuracy;
      }
      r.sample_counts = {{"train", train_store.size()}, {"valid", valid_store.size()}};
      if (test_store) r.sample_counts["test"] = test_store->size();
      r.config_json = run_config_json(cfg);
      r.peak_rss_bytes = peak_rss_bytes();
      r.created_at = utc_timestamp();
      write_text(o->report, r.to_json());
    }
    ctx.out << "selected_layer=" << res.report.selected_layer << '\n';
    return 0;
  };
}

Action add_eval(CLI::App& app) {
  auto* sub = app.add_subcommand("eval", "Score a trained probe on a test store");
  struct Opts {
    std::string test, model, out;
  };
  auto o = std::make_shared<Opts>();
  sub->add_option("--states-test", o->test, "Test store")->required();
  sub->add_option("--model", o->model, "Model file from `train`")->required();
  sub->add_option("--out", o->out, "Output report.json")->required();
  return [sub, o](Context& ctx) {
    if (!sub->parsed()) return -1;
    const auto model = read_model(o->model);
    const auto store = read_store(std::filesystem::path(o->test));
    auto report = evaluate_model(model, store);
    auto cfg = ctx.cfg;
    cfg.task = store.header().task;
    cfg.probe = model.config();
    report.config_json = run_config_json(cfg);
    write_text(o->out, report.to_json());
    for (const auto& [name, value] : report.metrics) ctx.out << name << '=' << value << '\n';
    return 0;
  };
}

Action add_validate(CLI::App& app, bool& json_errors, std::ostream& err) {
  auto* sub = app.add_subcommand("validate-store", "Check a .kgph store; exit 0 when valid, 1 otherwise");
  auto in = std::make_shared<std::string>();
  sub->add_option("--in", *in, "Store to validate")->required();
  return [sub, in, &json_errors, &err](Context& ctx) {
    if (!sub->parsed()) return -1;
    const auto v = validate_store(*in);
    if (!v.ok) {
      print_error(err, json_errors, errc_name(v.code), v.message);
      return 1;
    }
    ctx.out << "ok model=" << v.header.model << " dim=" << v.header.dim << " layers=" << v.header.layers.size()
            << " count=" << v.header.count << " task=" << task_tag_name(v.header.task) << '\n';
    return 0;
  };
}

Action add_run(CLI::App& app, bool& have_config) {
  auto* sub = app.add_subcommand("run", "Run the whole pipeline from a config file");
  auto out_dir = std::make_shared<std::string>();
  sub->add_option("--out-dir", *out_dir, "Artifact directory (overrides output_dir)");
  return [sub, out_dir, &have_config](Context& ctx) {
    if (!sub->parsed()) return -1;
    if (!have_config) throw Error(Errc::invalid_argument, "run needs --config");
    if (!out_dir->empty()) ctx.cfg.output_dir = *out_dir;
    if (ctx.cfg.output_dir.empty()) throw Error(Errc::invalid_argument, "no output_dir in config and no --out-dir");
    const auto result = run_experiment(ctx.cfg);
    write_artifacts(result, ctx.cfg.output_dir);
    const auto& r = result.report;
    if (r.sweep) ctx.out << "selected_layer=" << r.sweep->selected_layer << '\n';
    for (const auto& [name, value] : r.metrics) ctx.out << name << '=' << value << '\n';
    return 0;
  };
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  bool json_errors = false;
  for (int i = 1; i < argc; ++i) {
    if (std::string_view(argv[i]) == "--json-errors") json_errors = true;
  }

  CLI::App app{"Probe frozen language-model hidden states for knowledge-graph completion", "kgprobe"};
  app.fallthrough();
  app.require_subcommand(1);
  std::string config_path;
  app.add_option("--config", config_path, "JSON run config; command-line flags override its values");
  app.add_flag("--json-errors", json_errors, "Print errors as JSON objects on stderr");

  bool have_config = false;
  std::vector<Action> actions{add_ingest(app),   add_sample(app),   add_describe(app),
                              add_render(app),   add_extract(app),  add_train(app),
                              add_sweep(app),    add_eval(app),     add_validate(app, json_errors, err),
                              add_run(app, have_config)};

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    if (json_errors) {
      print_error(err, true, "usage", e.what());
    } else {
      app.exit(e, out, err);
    }
    return 2;
  }

  try {
    Context ctx{config_path.empty() ? RunConfig{} : load_run_config(config_path), out};
    have_config = !config_path.empty();
    for (auto& action : actions) {
      const int code = action(ctx);
      if (code >= 0) return code;
    }
    return 2;
  } catch (const Error& e) {
    print_error(err, json_errors, errc_name(e.code()), e.what());
  } catch (const std::exception& e) {
    print_error(err, json_errors, "internal", e.what());
  }
  return 1;
}

}  // namespace kgprobe::cli
