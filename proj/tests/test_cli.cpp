#include <doctest.h>

#include <json.hpp>

#include <algorithm>
#include <map>
#include <sstream>

#include "cli.hpp"
#include "kgprobe/store.hpp"
#include "test_util.hpp"

using namespace kgprobe;
using namespace kgprobe::testing;

namespace {

struct Outcome {
  int code;
  std::string out;
  std::string err;
};

Outcome kgprobe_cli(std::vector<std::string> args) {
  args.insert(args.begin(), "kgprobe");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

std::string p(const TempDir& d, const std::string& name) { return (d / name).string(); }

void write_graph_files(const TempDir& dir, const RandomGraph& rg) {
  write_file(dir / "train.tsv", to_tsv(rg.train));
  write_file(dir / "valid.tsv", to_tsv(rg.valid));
  write_file(dir / "test.tsv", to_tsv(rg.test));
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("staged pipeline from TSV to evaluation") {
  TempDir dir("cli-pipe");
  write_graph_files(dir, random_graph({80, 4, 800, 200, 200}, 3));
  auto ok = [](const Outcome& o) {
    INFO(o.err);
    REQUIRE(o.code == 0);
  };
  ok(kgprobe_cli({"ingest", "--train", p(dir, "train.tsv"), "--valid", p(dir, "valid.tsv"), "--test",
                  p(dir, "test.tsv"), "--out", p(dir, "graph.kgg")}));
  for (const auto& [split, n] : {std::pair<std::string, std::string>{"train", "400"}, {"valid", "150"}, {"test", "150"}}) {
    ok(kgprobe_cli({"sample", "--graph", p(dir, "graph.kgg"), "--split", split, "--n-pairs", n, "--out",
                    p(dir, split + ".pairs")}));
    ok(kgprobe_cli({"render", "--pairs", p(dir, split + ".pairs"), "--graph", p(dir, "graph.kgg"), "--out",
                    p(dir, split + ".jsonl")}));
    ok(kgprobe_cli({"extract", "--prompts", p(dir, split + ".jsonl"), "--out", p(dir, split + ".kgph"),
                    "--backend", "mock", "--num-layers", "6", "--mock-dim", "16", "--planted", "3"}));
    const auto v = kgprobe_cli({"validate-store", "--in", p(dir, split + ".kgph")});
    CHECK(v.code == 0);
    CHECK(v.out.rfind("ok ", 0) == 0);
  }
  CHECK(read_lines(dir / "train.pairs").size() == 800);
  CHECK(read_lines(dir / "train.jsonl").size() == 800);

  const auto sweep = kgprobe_cli({"sweep", "--states-train", p(dir, "train.kgph"), "--states-valid",
                                  p(dir, "valid.kgph"), "--states-test", p(dir, "test.kgph"), "--out",
                                  p(dir, "layers.csv"), "--report", p(dir, "report.json"), "--model-out",
                                  p(dir, "best.kgpm"), "--lr", "0.01", "--epochs", "10"});
  ok(sweep);
  CHECK(sweep.out.find("selected_layer=3") != std::string::npos);
  CHECK(read_lines(dir / "layers.csv").size() == 6);

  const auto train = kgprobe_cli({"train", "--states", p(dir, "train.kgph"), "--layer", "3", "--out",
                                  p(dir, "l3.kgpm"), "--lr", "0.01", "--epochs", "10"});
  ok(train);
  const auto eval = kgprobe_cli({"eval", "--states-test", p(dir, "test.kgph"), "--model", p(dir, "l3.kgpm"),
                                 "--out", p(dir, "eval.json")});
  ok(eval);
  const auto rep = nlohmann::json::parse(read_file(dir / "eval.json"));
  CHECK(rep["metrics"]["accuracy"].get<double>() > 0.95);
  CHECK(rep["selection_rule"] == "fixed");

  const auto bad_layer = kgprobe_cli({"train", "--states", p(dir, "train.kgph"), "--layer", "x3", "--out",
                                      p(dir, "bad.kgpm")});
  CHECK(bad_layer.code == 1);
}

TEST_CASE("sample writes one line per positive and per negative") {
  TempDir dir("cli-sample");
  write_graph_files(dir, random_graph({200, 5, 5000, 10, 10}, 8));
  REQUIRE(kgprobe_cli({"ingest", "--train", p(dir, "train.tsv"), "--out", p(dir, "g.kgg")}).code == 0);
  const auto s = kgprobe_cli({"sample", "--graph", p(dir, "g.kgg"), "--n-pairs", "5000", "--seed", "4", "--out",
                              p(dir, "pairs.tsv")});
  REQUIRE(s.code == 0);
  const auto lines = read_lines(dir / "pairs.tsv");
  CHECK(lines.size() == 10000);
  std::size_t ones = 0;
  for (const auto& l : lines) {
    CHECK(std::count(l.begin(), l.end(), '\t') == 3);
    if (l.back() == '1') ++ones;
  }
  CHECK(ones == 5000);
  const auto again = kgprobe_cli({"sample", "--graph", p(dir, "g.kgg"), "--n-pairs", "5000", "--seed", "4",
                                  "--out", p(dir, "pairs2.tsv")});
  REQUIRE(again.code == 0);
  CHECK(read_file(dir / "pairs.tsv") == read_file(dir / "pairs2.tsv"));
}

TEST_CASE("errors as text or JSON with distinct exit codes") {
  TempDir dir("cli-err");
  const auto text = kgprobe_cli({"validate-store", "--in", p(dir, "none.kgph")});
  CHECK(text.code == 1);
  CHECK(text.err.rfind("kgprobe: error: ", 0) == 0);

  const auto js = kgprobe_cli({"--json-errors", "validate-store", "--in", p(dir, "none.kgph")});
  CHECK(js.code == 1);
  const auto doc = nlohmann::json::parse(js.err);
  CHECK(doc["error"]["code"] == "io");
  CHECK(doc["error"]["message"].is_string());

  write_file(dir / "junk.kgph", "KGPX....");
  const auto magic = kgprobe_cli({"--json-errors", "validate-store", "--in", p(dir, "junk.kgph")});
  CHECK(magic.code == 1);
  CHECK(nlohmann::json::parse(magic.err)["error"]["code"] == "bad_magic");

  const auto usage = kgprobe_cli({"--json-errors", "frobnicate"});
  CHECK(usage.code == 2);
  CHECK(nlohmann::json::parse(usage.err)["error"]["code"] == "usage");
  CHECK(kgprobe_cli({"sample"}).code == 2);
  CHECK(kgprobe_cli({}).code == 2);

  write_file(dir / "bad.json", R"({"probe": {"nope": 1}})");
  const auto cfg = kgprobe_cli({"--json-errors", "--config", p(dir, "bad.json"), "run", "--out-dir", p(dir, "o")});
  CHECK(cfg.code == 1);
  CHECK(nlohmann::json::parse(cfg.err)["error"]["code"] == "parse");
}

TEST_CASE("run is idempotent apart from report metadata") {
  TempDir dir("cli-run");
  write_file(dir / "cfg.json", R"({
    "synthetic": {"entities": 120, "relations": 3, "triples": 1200, "seed": 2},
    "sampling": {"train_pairs": 300, "valid_pairs": 100, "test_pairs": 100},
    "extraction": {"mock": {"dim": 16, "num_layers": 5, "planted_layers": [2]}},
    "probe": {"learning_rate": 0.01, "epochs": 8},
    "experiment": {"train_sizes": [50, 100], "size_seeds": [0, 1]}
  })");
  std::map<std::string, std::string> first;
  for (int round = 0; round < 2; ++round) {
    const auto r = kgprobe_cli({"--config", p(dir, "cfg.json"), "run", "--out-dir", p(dir, "a")});
    INFO(r.err);
    REQUIRE(r.code == 0);
    CHECK(r.out.find("selected_layer=2") != std::string::npos);
    for (const char* f : {"layers.csv", "sizes.csv", "pca.csv", "report.json"}) {
      if (round == 0) first[f] = read_file(dir / "a" / f);
      else if (std::string(f) != "report.json") CHECK(read_file(dir / "a" / f) == first[f]);
    }
  }
  auto a = nlohmann::json::parse(first["report.json"]);
  auto b = nlohmann::json::parse(read_file(dir / "a" / "report.json"));
  a.erase("metadata");
  b.erase("metadata");
  CHECK(a.dump() == b.dump());
  CHECK(read_lines(dir / "a" / "sizes.csv").size() == 5);

  CHECK(kgprobe_cli({"run", "--out-dir", p(dir, "c")}).code == 1);
}

TEST_CASE("extract through the store backend replays an external dump") {
  TempDir dir("cli-store");
  write_file(dir / "p.jsonl",
             "{\"id\":4,\"text\":\"alpha\",\"label\":1}\n{\"id\":9,\"text\":\"beta\",\"label\":0}\n");
  REQUIRE(kgprobe_cli({"extract", "--prompts", p(dir, "p.jsonl"), "--out", p(dir, "src.kgph"), "--layers", "1..3",
                       "--mock-dim", "4"})
              .code == 0);
  const auto r = kgprobe_cli({"extract", "--prompts", p(dir, "p.jsonl"), "--out", p(dir, "copy.kgph"), "--backend",
                              "store", "--source-store", p(dir, "src.kgph"), "--layers", "2"});
  INFO(r.err);
  REQUIRE(r.code == 0);
  const auto src = read_store(dir / "src.kgph");
  const auto copy = read_store(dir / "copy.kgph");
  REQUIRE(copy.size() == 2);
  CHECK(copy.record(1).example_id == 9);
  const auto a = src.state(1, 2);
  const auto b = copy.state(1, 2);
  CHECK(std::equal(a.begin(), a.end(), b.begin(), b.end()));
}

}  // TEST_SUITE
