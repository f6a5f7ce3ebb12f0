#include "kgprobe/experiment.hpp"

#include <algorithm>
#include <ctime>
#include <fstream>
#include <memory>
#include <ostream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include <json.hpp>

#include "kgprobe/descgen.hpp"
#include "kgprobe/error.hpp"
#include "kgprobe/extraction.hpp"
#include "kgprobe/random.hpp"
#include "kgprobe/sampling.hpp"

namespace kgprobe {
namespace {

using nlohmann::json;

constexpr std::uint64_t kValidStream = 1;
constexpr std::uint64_t kTestStream = 2;

template <typename Fn>
auto stage(StageTimer& timer, const std::string& name, Fn&& fn) {
  auto scope = timer.scope(name);
  try {
    return fn();
  } catch (const Error& e) {
    throw Error(e.code(), "stage '" + name + "': " + e.what());
  } catch (const std::exception& e) {
    throw Error(Errc::io, "stage '" + name + "': " + e.what());
  }
}

std::string fixed(double v) {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed << v;
  return os.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(Errc::io, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(Errc::io, "write failed: " + path.string());
}

std::size_t positives_in(const KnowledgeGraph& g, Split s) {
  const auto recs = g.split(s);
  return static_cast<std::size_t>(
      std::count_if(recs.begin(), recs.end(), [](const LabeledTriple& r) { return r.label == 1; }));
}

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::valid: return "valid";
    case Split::test: return "test";
  }
  return "?";
}

json optional_number(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace

KnowledgeGraph load_graph(const DataConfig& d) {
  GraphInputs in;
  auto load = [&](const std::string& path) -> std::vector<LabeledTriple> {
    if (path.empty()) return {};
    return load_triples(path, detect_labeled(path), in.vocab);
  };
  if (d.train.empty()) throw Error(Errc::invalid_argument, "data.train is required");
  in.train = load(d.train);
  in.valid = load(d.valid);
  in.test = load(d.test);
  for (const auto& p : d.descriptions) {
    auto entries = load_descriptions(p);
    in.entity_descriptions.insert(in.entity_descriptions.end(), entries.begin(), entries.end());
  }
  for (const auto& p : d.relation_descriptions) {
    auto entries = load_descriptions(p);
    in.relation_descriptions.insert(in.relation_descriptions.end(), entries.begin(), entries.end());
  }
  return KnowledgeGraph::build(std::move(in));
}

KnowledgeGraph make_synthetic_graph(const SyntheticGraphSpec& spec) {
  if (spec.entities < 2 || spec.relations < 1 || spec.triples < 1) {
    throw Error(Errc::invalid_argument, "synthetic graph needs >= 2 entities, >= 1 relation and >= 1 triple");
  }
  if (spec.valid_fraction < 0 || spec.test_fraction < 0 ||
      spec.valid_fraction + spec.test_fraction >= 1.0) {
    throw Error(Errc::invalid_argument, "synthetic split fractions must be >= 0 and sum below 1");
  }
  // One relation per ordered entity pair, so relation prediction has a single
  // gold answer. Staying well below saturation keeps rejection sampling (and
  // later filtered corruption) cheap.
  const double capacity = static_cast<double>(spec.entities) * static_cast<double>(spec.entities - 1);
  if (static_cast<double>(spec.triples) > 0.5 * capacity) {
    throw Error(Errc::invalid_argument, "synthetic graph is too dense for the requested triple count");
  }

  GraphInputs in;
  for (std::size_t i = 0; i < spec.entities; ++i) in.vocab.entities.intern("e" + std::to_string(i));
  for (std::size_t j = 0; j < spec.relations; ++j) in.vocab.relations.intern("r" + std::to_string(j));

  Rng rng(spec.seed);
  std::unordered_set<std::uint64_t> seen_pairs;
  std::vector<Triple> triples;
  triples.reserve(spec.triples);
  while (triples.size() < spec.triples) {
    const auto h = static_cast<std::uint32_t>(uniform_below(rng, spec.entities));
    const auto r = static_cast<std::uint32_t>(uniform_below(rng, spec.relations));
    const auto t = static_cast<std::uint32_t>(uniform_below(rng, spec.entities));
    if (h == t) continue;
    if (seen_pairs.insert(std::uint64_t{h} << 32 | t).second) {
      triples.push_back({EntityId{h}, RelationId{r}, EntityId{t}});
    }
  }

  const auto n = triples.size();
  const auto n_valid = static_cast<std::size_t>(spec.valid_fraction * static_cast<double>(n));
  const auto n_test = static_cast<std::size_t>(spec.test_fraction * static_cast<double>(n));
  const auto n_train = n - n_valid - n_test;
  for (std::size_t i = 0; i < n; ++i) {
    auto& dst = i < n_train ? in.train : i < n_train + n_valid ? in.valid : in.test;
    dst.push_back({triples[i], 1});
  }
  return KnowledgeGraph::build(std::move(in));
}

PromptSet render_examples(const KnowledgeGraph& g, std::span<const LabeledTriple> examples,
                          const PromptTemplate& tpl, TaskTag task) {
  PromptSet out;
  out.texts.reserve(examples.size());
  for (std::size_t i = 0; i < examples.size(); ++i) {
    const auto& ex = examples[i];
    out.texts.push_back(render(tpl, ex.triple, g).text);
    out.labels.push_back(task == TaskTag::tc ? ex.label
                                             : static_cast<std::int32_t>(index_of(ex.triple.relation)));
    out.ids.push_back(i);
  }
  return out;
}

std::vector<LabeledTriple> relation_examples(const KnowledgeGraph& g, Split split, std::size_t n) {
  std::vector<LabeledTriple> out;
  for (const auto& rec : g.split(split)) {
    if (out.size() == n) break;
    if (rec.label == 1) out.push_back(rec);
  }
  if (out.size() < n) {
    throw Error(Errc::invalid_argument, std::string(split_name(split)) + " split has only " +
                                            std::to_string(out.size()) + " positives, " +
                                            std::to_string(n) + " requested");
  }
  return out;
}

std::string EvalReport::to_json() const {
  json j;
  j["task"] = std::string(task_tag_name(task));
  j["metrics"] = json::object();
  for (const auto& [k, v] : metrics) j["metrics"][k] = v;

  json layers = json::array();
  if (sweep) {
    for (const auto& l : sweep->layers) {
      layers.push_back({{"layer", l.layer},
                        {"valid_accuracy", l.valid_accuracy},
                        {"test_accuracy", optional_number(l.test_accuracy)}});
    }
  }
  j["layers"] = layers;
  j["selected_layer"] = sweep ? json(sweep->selected_layer) : json(nullptr);
  j["selection_rule"] = sweep ? json(sweep->selection_rule) : json(nullptr);

  j["sample_counts"] = json::object();
  for (const auto& [k, v] : sample_counts) j["sample_counts"][k] = v;

  json stages = json::array();
  for (const auto& [name, secs] : stage_seconds) stages.push_back({{"stage", name}, {"seconds", secs}});
  const json timings = {{"stages", stages},
                  {"peak_rss_bytes", peak_rss_bytes ? json(*peak_rss_bytes) : json(nullptr)},
                  {"memory_note",
                   "process resident-set high-water mark (getrusage); best effort, "
                   "includes everything the process allocated"}};

  json sz = json::array();
  for (const auto& p : sizes) sz.push_back({{"n", p.n}, {"accuracy", p.accuracy}, {"seed", p.seed}});
  j["sizes"] = sz;
  j["config"] = json::parse(config_json);
  j["warnings"] = warnings;
  // Everything that differs between identical runs lives under metadata.
  j["metadata"] = {{"created_at", created_at}, {"timings", timings}};
  return j.dump(2) + "\n";
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

EvalReport evaluate_model(const ProbeModel& model, const HiddenStateStore& test) {
  const auto data = layer_data(test, model.layer());
  if (data.dim != model.dim()) {
    throw Error(Errc::dimension_mismatch, "model dim " + std::to_string(model.dim()) +
                                              " does not match store dim " + std::to_string(data.dim));
  }
  if (test.num_classes() != model.num_classes()) {
    throw Error(Errc::invalid_argument, "model has " + std::to_string(model.num_classes()) +
                                            " classes, store has " + std::to_string(test.num_classes()));
  }
  EvalReport r;
  r.task = test.header().task;
  const auto preds = predict_all(model, data);
  if (r.task == TaskTag::tc) {
    r.metrics["accuracy"] = accuracy(preds, data.labels);
  } else {
    r.metrics["hits_at_1"] = hits_at_1(preds, data.labels, model.num_classes());
  }
  r.sample_counts["test"] = data.size();
  LayerSweepReport sweep;
  sweep.layers.push_back({model.layer(), 0.0, r.metrics.begin()->second, model.checksum()});
  sweep.selected_layer = model.layer();
  sweep.selection_rule = "fixed";
  r.sweep = sweep;
  r.peak_rss_bytes = kgprobe::peak_rss_bytes();
  r.created_at = utc_timestamp();
  return r;
}

ExperimentResult run_experiment(const RunConfig& cfg, TextGenerationClient* client,
                                ExtractionBackend* backend) {
  ExperimentResult result;
  auto& report = result.report;
  report.task = cfg.task;
  report.config_json = run_config_json(cfg);
  StageTimer timer;

  auto graph = stage(timer, "ingest", [&] {
    if (cfg.data && cfg.synthetic) {
      throw Error(Errc::invalid_argument, "config sets both data and synthetic");
    }
    return cfg.data ? load_graph(*cfg.data) : make_synthetic_graph(cfg.synthetic.value_or(SyntheticGraphSpec{}));
  });
  for (const auto& w : graph.warnings()) report.warnings.push_back(w);

  struct Splits {
    std::vector<LabeledTriple> train, valid, test;
  };
  const auto splits = stage(timer, "sample", [&] {
    Splits s;
    const auto& sc = cfg.sampling;
    auto size_for = [&](Split split, std::size_t want) {
      const auto have = positives_in(graph, split);
      if (want > have) {
        report.warnings.push_back(std::string(split_name(split)) + ": requested " + std::to_string(want) +
                                  " examples, using the " + std::to_string(have) + " available");
      }
      return std::min(want, have);
    };
    if (cfg.task == TaskTag::tc) {
      auto sampler = sc.sampler;
      s.train = build_balanced_set(graph, size_for(Split::train, sc.train_pairs), sampler, Split::train);
      sampler.seed = derive_seed(sc.sampler.seed, kValidStream);
      s.valid = build_balanced_set(graph, size_for(Split::valid, sc.valid_pairs), sampler, Split::valid);
      sampler.seed = derive_seed(sc.sampler.seed, kTestStream);
      s.test = build_balanced_set(graph, size_for(Split::test, sc.test_pairs), sampler, Split::test);
    } else {
      s.train = relation_examples(graph, Split::train, size_for(Split::train, sc.train_pairs));
      s.valid = relation_examples(graph, Split::valid, size_for(Split::valid, sc.valid_pairs));
      s.test = relation_examples(graph, Split::test, size_for(Split::test, sc.test_pairs));
    }
    if (s.train.empty() || s.valid.empty()) {
      throw Error(Errc::invalid_argument, "train and valid example sets must be non-empty");
    }
    return s;
  });
  report.sample_counts = {{"train", splits.train.size()},
                          {"valid", splits.valid.size()},
                          {"test", splits.test.size()}};

  if (cfg.descriptions.enabled) {
    graph = stage(timer, "describe", [&] {
      std::unique_ptr<TextGenerationClient> owned;
      TextGenerationClient* gen = client;
      if (cfg.descriptions.generator.mode == DescMode::llm_rephrase && gen == nullptr) {
        owned = std::make_unique<HttpTextClient>(cfg.descriptions.endpoint, cfg.descriptions.model);
        gen = owned.get();
      }
      std::vector<EntityId> entities;
      for (std::uint32_t i = 0; i < graph.entity_count(); ++i) entities.push_back(EntityId{i});
      const auto described = describe_all(graph, entities, cfg.descriptions.generator, gen);
      if (!described.failures.empty()) {
        const auto& [id, msg] = described.failures.front();
        throw Error(Errc::generation, std::to_string(described.failures.size()) +
                                          " description(s) failed; first: " + graph.entity_name(id) +
                                          ": " + msg);
      }
      DescriptionEntries entries;
      for (const auto& [id, text] : described.descriptions) entries.emplace_back(graph.entity_name(id), text);
      return with_entity_descriptions(graph, entries);
    });
  }

  struct Rendered {
    PromptSet train, valid, test;
  };
  const auto prompts = stage(timer, "render", [&] {
    std::vector<PromptTemplate> templates =
        cfg.prompts.template_file.empty() ? builtin_templates() : load_templates(cfg.prompts.template_file);
    const auto& tpl = find_template(templates, cfg.prompts.template_id);
    const auto want = cfg.task == TaskTag::tc ? TaskStyle::triple_classification
                                              : TaskStyle::relation_prediction;
    if (tpl.style != want) {
      throw Error(Errc::invalid_argument, "template " + tpl.id + " has style " +
                                              std::string(task_style_name(tpl.style)) +
                                              " but the task is " + std::string(task_tag_name(cfg.task)));
    }
    return Rendered{render_examples(graph, splits.train, tpl, cfg.task),
                    render_examples(graph, splits.valid, tpl, cfg.task),
                    render_examples(graph, splits.test, tpl, cfg.task)};
  });

  struct Stores {
    HiddenStateStore train, valid, test;
  };
  const auto stores = stage(timer, "extract", [&] {
    std::vector<std::string> label_names;
    if (cfg.task == TaskTag::tc) {
      label_names = {"negative", "positive"};
    } else {
      for (std::uint32_t r = 0; r < graph.relation_count(); ++r) {
        label_names.push_back(graph.relation_name(RelationId{r}));
      }
    }
    std::unique_ptr<ExtractionBackend> owned;
    ExtractionBackend* be = backend;
    if (be == nullptr) {
      const auto& ec = cfg.extraction;
      if (ec.backend == "mock") {
        auto mc = ec.mock;
        mc.num_classes = label_names.size();
        std::unordered_map<std::string, std::int32_t> table;
        for (const auto* set : {&prompts.train, &prompts.valid, &prompts.test}) {
          for (std::size_t i = 0; i < set->texts.size(); ++i) {
            const auto [it, fresh] = table.emplace(set->texts[i], set->labels[i]);
            if (!fresh && it->second != set->labels[i]) {
              throw Error(Errc::invalid_argument, "prompt text rendered with conflicting labels: " + set->texts[i]);
            }
          }
        }
        owned = std::make_unique<MockLM>(mc, table_oracle(std::move(table)));
      } else if (ec.backend == "http") {
        owned = std::make_unique<HttpBackend>(ec.url, ec.num_layers);
      } else {
        throw Error(Errc::invalid_argument, "unknown extraction backend '" + ec.backend + "'");
      }
      be = owned.get();
    }
    const auto layers = parse_layer_spec(cfg.extraction.layers, be->num_layers());
    ExtractOptions opts;
    opts.batch_size = cfg.extraction.batch_size;
    opts.task = cfg.task;
    opts.label_names = label_names;
    auto run = [&](const PromptSet& p) {
      return extract_dataset(*be, p.texts, p.labels, layers, opts, p.ids);
    };
    return Stores{run(prompts.train), run(prompts.valid), run(prompts.test)};
  });

  const bool have_test = stores.test.size() > 0;
  const auto sweep = stage(timer, "sweep", [&] {
    SweepOptions so;
    so.test_all_layers = cfg.experiment.test_all_layers;
    so.threads = cfg.experiment.threads;
    return sweep_layers(stores.train, stores.valid, have_test ? &stores.test : nullptr, cfg.probe, so);
  });
  report.sweep = sweep.report;
  const int best = sweep.report.selected_layer;

  stage(timer, "evaluate", [&] {
    const auto metric = cfg.task == TaskTag::tc ? "accuracy" : "hits_at_1";
    for (const auto& l : sweep.report.layers) {
      if (l.layer != best) continue;
      report.metrics[std::string("valid_") + metric] = l.valid_accuracy;
    }
    if (have_test) {
      const auto data = layer_data(stores.test, best);
      const auto preds = predict_all(sweep.selected_model, data);
      report.metrics[metric] = cfg.task == TaskTag::tc
                                   ? accuracy(preds, data.labels)
                                   : hits_at_1(preds, data.labels, stores.test.num_classes());
    }
    return 0;
  });

  if (!cfg.experiment.train_sizes.empty() && have_test) {
    stage(timer, "sizes", [&] {
      const auto train_data = layer_data(stores.train, best);
      const auto test_data = layer_data(stores.test, best);
      for (const auto n : cfg.experiment.train_sizes) {
        if (n > train_data.size()) {
          report.warnings.push_back("train size " + std::to_string(n) + " exceeds " +
                                    std::to_string(train_data.size()) + " training examples; skipped");
          continue;
        }
        for (const auto seed : cfg.experiment.size_seeds) {
          const auto idx = subsample_indices(train_data.labels, n, seed, cfg.task == TaskTag::tc);
          LayerData sub;
          sub.dim = train_data.dim;
          sub.num_classes = train_data.num_classes;
          sub.features.reserve(n * sub.dim);
          for (const auto i : idx) {
            const auto row = train_data.row(i);
            sub.features.insert(sub.features.end(), row.begin(), row.end());
            sub.labels.push_back(train_data.labels[i]);
          }
          auto tc = cfg.probe;
          tc.seed = derive_seed(cfg.probe.seed, seed);
          const auto model = train_probe(sub, best, tc).model;
          report.sizes.push_back({n, evaluate_accuracy(model, test_data), seed});
        }
      }
      return 0;
    });
  }

  if (cfg.experiment.pca && have_test) {
    stage(timer, "pca", [&] {
      const auto data = layer_data(stores.test, best);
      const auto k = std::min<std::size_t>({3, data.size(), data.dim});
      if (k == 0) return 0;
      PcaArtifact art;
      art.pca = pca_project(data.features, data.size(), data.dim, k);
      art.labels = data.labels;
      for (const auto& rec : stores.test.records()) art.ids.push_back(rec.example_id);
      result.pca = std::move(art);
      return 0;
    });
  }

  report.stage_seconds = timer.stages();
  report.peak_rss_bytes = kgprobe::peak_rss_bytes();
  report.created_at = utc_timestamp();
  return result;
}

void write_layers_csv(const LayerSweepReport& report, std::ostream& out) {
  out << "layer,valid_acc,test_acc\n";
  for (const auto& l : report.layers) {
    out << l.layer << ',' << fixed(l.valid_accuracy) << ',';
    if (l.test_accuracy) out << fixed(*l.test_accuracy);
    out << '\n';
  }
}

void write_sizes_csv(std::span<const SizePoint> sizes, std::ostream& out) {
  out << "n,accuracy,seed\n";
  for (const auto& p : sizes) out << p.n << ',' << fixed(p.accuracy) << ',' << p.seed << '\n';
}

void write_pca_csv(const PcaArtifact& art, std::ostream& out) {
  out << "id,label,x,y,z\n";
  const auto& p = art.pca;
  for (std::size_t i = 0; i < p.n; ++i) {
    out << art.ids.at(i) << ',' << art.labels.at(i);
    for (std::size_t c = 0; c < 3; ++c) {
      out << ',' << fixed(c < p.k ? p.coords[i * p.k + c] : 0.0);
    }
    out << '\n';
  }
}

void write_artifacts(const ExperimentResult& result, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error(Errc::io, "cannot create " + dir.string() + ": " + ec.message());
  write_file(dir / "report.json", result.report.to_json());
  std::ostringstream layers, sizes, pca;
  write_layers_csv(result.report.sweep.value_or(LayerSweepReport{}), layers);
  write_sizes_csv(result.report.sizes, sizes);
  if (result.pca) {
    write_pca_csv(*result.pca, pca);
  } else {
    pca << "id,label,x,y,z\n";
  }
  write_file(dir / "layers.csv", layers.str());
  write_file(dir / "sizes.csv", sizes.str());
  write_file(dir / "pca.csv", pca.str());
}

}  // namespace kgprobe
