#include <doctest.h>

#include <json.hpp>

#include "kgprobe/config.hpp"
#include "kgprobe/error.hpp"
#include "test_util.hpp"

using namespace kgprobe;
using namespace kgprobe::testing;

namespace {

std::string parse_error(const std::string& json) {
  try {
    parse_run_config(json);
  } catch (const Error& e) {
    CHECK(e.code() == Errc::parse);
    return e.what();
  }
  FAIL("config unexpectedly parsed: " << json);
  return {};
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("empty document keeps every default") {
  const auto c = parse_run_config("{}");
  CHECK(c.task == TaskTag::tc);
  CHECK_FALSE(c.data);
  CHECK_FALSE(c.synthetic);
  CHECK(c.probe.kind == ProbeKind::logreg);
  CHECK(c.probe.batch_size == 64);
  CHECK(c.probe.learning_rate == 3e-5);
  CHECK(c.probe.epochs == 30);
  CHECK(c.prompts.template_id == "PT1");
  CHECK(c.extraction.backend == "mock");
  CHECK_FALSE(c.descriptions.enabled);
  CHECK(c.descriptions.generator.max_subgraph_triples == 16);
}

TEST_CASE("nested values are read") {
  const auto c = parse_run_config(R"({
    "task": "rp",
    "synthetic": {"entities": 50, "seed": 3},
    "descriptions": {"mode": "concat", "cap": 4, "cache": "c.tsv"},
    "extraction": {"layers": "2..4", "mock": {"dim": 12, "planted_layers": [3], "margin": 2.5}},
    "probe": {"model": "mlp", "hidden_width": 32},
    "experiment": {"train_sizes": [10, 20], "size_seeds": [1, 2, 3]}
  })");
  CHECK(c.task == TaskTag::rp);
  REQUIRE(c.synthetic);
  CHECK(c.synthetic->entities == 50);
  CHECK(c.synthetic->relations == 4);
  CHECK(c.descriptions.enabled);
  CHECK(c.descriptions.generator.mode == DescMode::concat);
  CHECK(c.descriptions.generator.max_subgraph_triples == 4);
  CHECK(c.descriptions.generator.cache_path == std::filesystem::path("c.tsv"));
  CHECK(c.extraction.layers == "2..4");
  CHECK(c.extraction.mock.dim == 12);
  CHECK(c.extraction.mock.planted_layers == std::set<int>{3});
  CHECK(c.extraction.mock.margin == 2.5);
  CHECK(c.probe.kind == ProbeKind::mlp);
  CHECK(c.probe.hidden_width == 32);
  CHECK(c.experiment.train_sizes == std::vector<std::size_t>{10, 20});
}

TEST_CASE("unknown keys and wrong types are rejected with their path") {
  CHECK(parse_error(R"({"bogus": 1})").find("bogus") != std::string::npos);
  CHECK(parse_error(R"({"probe": {"lr": 1}})").find("probe.lr") != std::string::npos);
  CHECK(parse_error(R"({"extraction": {"mock": {"dims": 3}}})").find("extraction.mock.dims") != std::string::npos);
  CHECK(parse_error(R"({"probe": {"epochs": "ten"}})").find("probe.epochs") != std::string::npos);
  parse_error(R"({"task": "xx"})");
  parse_error(R"({"probe": {"model": "forest"}})");
  parse_error("[1]");
  parse_error("{");
}

TEST_CASE("the canonical echo reparses to the same configuration") {
  const auto c = parse_run_config(R"({"task":"tc","synthetic":{"triples":500},
    "data":{"train":"a.tsv","descriptions":["d.tsv"]},
    "descriptions":{"mode":"llm","endpoint":"http://x","model":"m"},
    "probe":{"model":"svm","seed":9},"output_dir":"out"})");
  const auto echo = run_config_json(c);
  const auto again = run_config_json(parse_run_config(echo));
  CHECK(echo == again);
  const auto doc = nlohmann::json::parse(echo);
  CHECK(doc["probe"]["model"] == "svm");
  CHECK(doc["descriptions"]["mode"] == "llm");
  CHECK(doc["synthetic"]["triples"] == 500);
}

TEST_CASE("load_run_config reads files") {
  TempDir dir("cfg");
  write_file(dir / "c.json", R"({"output_dir": "o"})");
  CHECK(load_run_config(dir / "c.json").output_dir == "o");
  CHECK_THROWS_AS(load_run_config(dir / "missing.json"), Error);
}

}  // TEST_SUITE
