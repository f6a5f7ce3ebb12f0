#include <doctest.h>

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <set>

#include "fake_server.hpp"
#include "kgprobe/descgen.hpp"
#include "kgprobe/error.hpp"
#include "kgprobe/prompts.hpp"
#include "test_util.hpp"

using namespace kgprobe;
using namespace kgprobe::testing;

namespace {

// Entity "hub" with `degree` outgoing train triples plus an isolated entity.
KnowledgeGraph hub_graph(int degree) {
  GraphInputs in;
  const auto hub = EntityId{in.vocab.entities.intern("hub")};
  for (int i = 0; i < degree; ++i) {
    const auto r = RelationId{in.vocab.relations.intern("rel_" + std::to_string(i % 3))};
    in.train.push_back({{hub, r, EntityId{in.vocab.entities.intern("n" + std::to_string(i))}}, 1});
  }
  const auto lone = EntityId{in.vocab.entities.intern("lone")};
  const auto r = RelationId{in.vocab.relations.intern("rel_0")};
  in.test.push_back({{lone, r, hub}, 1});
  return KnowledgeGraph::build(std::move(in));
}

std::vector<std::string> split_on(const std::string& s, const std::string& sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string::npos) return out;
    start = pos + sep.size();
  }
}

}  // namespace

TEST_SUITE("descgen") {

TEST_CASE("concat joins transformed train triples") {
  const auto g = hub_graph(2);
  DescGenConfig cfg;
  const auto hub = *g.find_entity("hub");
  CHECK(concat_description(g, hub, cfg) == "hub rel 0 n0.; hub rel 1 n1.");
  cfg.separator = " | ";
  CHECK(concat_description(g, hub, cfg) == "hub rel 0 n0. | hub rel 1 n1.");
  // Only test triples touch "lone".
  CHECK(concat_description(g, *g.find_entity("lone"), cfg).empty());
}

TEST_CASE("high-degree entities are capped with sentences from the true subgraph") {
  const auto g = hub_graph(40);
  const auto hub = *g.find_entity("hub");
  std::set<std::string> truth;
  for (const auto& t : g.one_hop_subgraph(hub)) truth.insert(transform_triple(t, g));
  DescGenConfig cfg;
  cfg.seed = 5;
  const auto text = concat_description(g, hub, cfg);
  const auto parts = split_on(text, cfg.separator);
  CHECK(parts.size() == 16);
  CHECK(std::set<std::string>(parts.begin(), parts.end()).size() == 16);
  for (const auto& p : parts) CHECK(truth.contains(p));
  CHECK(concat_description(g, hub, cfg) == text);
  cfg.seed = 6;
  CHECK(concat_description(g, hub, cfg) != text);
  cfg.max_subgraph_triples = 0;
  CHECK_THROWS_AS(cfg.validate(), Error);
}

TEST_CASE("rephrase uses the client once per cache key") {
  const auto g = hub_graph(3);
  const auto hub = *g.find_entity("hub");
  DescGenConfig cfg;
  cfg.mode = DescMode::llm_rephrase;
  auto client = ReplayClient::fixed("model-a", "  Hub is connected to three nodes.\n");
  DescriptionCache cache;
  CHECK(rephrase_description(g, hub, cfg, *client, cache) == "Hub is connected to three nodes.");
  CHECK(rephrase_description(g, hub, cfg, *client, cache) == "Hub is connected to three nodes.");
  CHECK(client->calls() == 1);
  const auto prompt = client->prompts().at(0);
  CHECK(prompt.find("Entity: hub") != std::string::npos);
  CHECK(prompt.find(concat_description(g, hub, cfg)) != std::string::npos);

  // A different model identity misses the cache.
  auto other = ReplayClient::fixed("model-b", "other");
  CHECK(rephrase_description(g, hub, cfg, *other, cache) == "other");
  CHECK(other->calls() == 1);

  // Empty subgraph: no call at all.
  CHECK(rephrase_description(g, *g.find_entity("lone"), cfg, *client, cache).empty());
  CHECK(client->calls() == 1);
}

TEST_CASE("rephrase errors name the entity") {
  const auto g = hub_graph(2);
  DescGenConfig cfg;
  cfg.mode = DescMode::llm_rephrase;
  DescriptionCache cache;
  auto blank = ReplayClient::fixed("m", " \n ");
  ReplayClient failing("m", [](std::string_view) -> std::string { throw std::runtime_error("boom"); });
  for (TextGenerationClient* c : std::initializer_list<TextGenerationClient*>{blank.get(), &failing}) {
    try {
      rephrase_description(g, *g.find_entity("hub"), cfg, *c, cache);
      FAIL("expected a generation error");
    } catch (const Error& e) {
      CHECK(e.code() == Errc::generation);
      CHECK(std::string(e.what()).find("hub") != std::string::npos);
    }
  }
}

TEST_CASE("cache returns text only when entity, model and subgraph all match") {
  DescriptionCache cache;
  cache.insert("e", "m", 1, "text");
  CHECK(cache.lookup("e", "m", 1) == std::optional<std::string>("text"));
  CHECK_FALSE(cache.lookup("e", "m", 2));
  CHECK_FALSE(cache.lookup("e", "n", 1));
  CHECK_FALSE(cache.lookup("f", "m", 1));
}

TEST_CASE("generation prompts never contain test triples") {
  // Disjoint train/test; every test sentence must be absent from every prompt.
  const auto rg = random_graph({40, 5, 300, 30, 60}, 101);
  const auto g = build_graph(rg);
  std::vector<std::string> test_sentences;
  for (const auto& rec : g.split(Split::test)) test_sentences.push_back(transform_triple(rec.triple, g));
  ReplayClient client("m", [](std::string_view) { return std::string("d"); });
  DescGenConfig cfg;
  cfg.mode = DescMode::llm_rephrase;
  std::vector<EntityId> all;
  for (std::uint32_t i = 0; i < g.entity_count(); ++i) all.push_back(EntityId{i});
  describe_all(g, all, cfg, &client);
  const auto prompts = client.prompts();
  CHECK(prompts.size() > 10);
  for (const auto& p : prompts) {
    for (const auto& s : test_sentences) CHECK(p.find(s) == std::string::npos);
  }
}

TEST_CASE("describe_all persists a loadable cache and reuses it") {
  TempDir dir("desc");
  const auto rg = random_graph({100, 4, 400, 10, 10}, 5);
  const auto g = build_graph(rg);
  std::vector<EntityId> all;
  for (std::uint32_t i = 0; i < g.entity_count(); ++i) all.push_back(EntityId{i});

  DescGenConfig cfg;
  cfg.cache_path = dir / "cache.tsv";
  const auto first = describe_all(g, all, cfg);
  CHECK(first.failures.empty());
  CHECK(first.descriptions.size() == all.size());
  const auto loaded = load_descriptions(dir / "cache.tsv");
  CHECK(loaded.size() == all.size());
  for (const auto& [name, text] : loaded) CHECK(first.descriptions.at(*g.find_entity(name)) == text);

  cfg.mode = DescMode::llm_rephrase;
  cfg.max_concurrency = 4;
  ReplayClient client("m", [](std::string_view p) { return "about " + std::to_string(p.size()); });
  const auto llm = describe_all(g, all, cfg, &client);
  CHECK(llm.failures.empty());
  CHECK(llm.client_calls > 0);
  const auto again = describe_all(g, all, cfg, &client);
  CHECK(again.client_calls == 0);
  CHECK(again.descriptions == llm.descriptions);

  CHECK(describe_all(g, {}, cfg, &client).descriptions.empty());
}

TEST_CASE("describe_all collects failures and keeps successes") {
  TempDir dir("descfail");
  const auto g = hub_graph(3);
  DescGenConfig cfg;
  cfg.mode = DescMode::llm_rephrase;
  cfg.cache_path = dir / "c.tsv";
  std::atomic<int> n{0};
  ReplayClient flaky("m", [&](std::string_view) -> std::string {
    if (n++ == 0) return "ok";
    throw std::runtime_error("down");
  });
  std::vector<EntityId> ents{*g.find_entity("hub"), *g.find_entity("n0"), *g.find_entity("n1")};
  const auto res = describe_all(g, ents, cfg, &flaky);
  CHECK(res.descriptions.size() == 1);
  CHECK(res.failures.size() == 2);
  CHECK(load_descriptions(dir / "c.tsv").size() == 1);
  CHECK_THROWS_AS(describe_all(g, ents, cfg, nullptr), Error);
}

TEST_CASE("HttpTextClient speaks the completions protocol") {
  FakeServer fake;
  nlohmann::json seen;
  fake.server().Post("/v1/completions", [&](const httplib::Request& req, httplib::Response& res) {
    seen = nlohmann::json::parse(req.body);
    res.set_content(R"({"choices":[{"text":" described "}]})", "application/json");
  });
  fake.server().Post("/broken/v1/completions", [](const httplib::Request&, httplib::Response& res) {
    res.status = 500;
  });
  const auto url = fake.start();
  HttpTextClient client(url, "gen-model", 64);
  CHECK(client.generate("prompt text") == " described ");
  CHECK(seen["model"] == "gen-model");
  CHECK(seen["prompt"] == "prompt text");
  CHECK(seen["max_tokens"] == 64);
  CHECK(seen["temperature"] == 0);
  CHECK(client.identity() == "gen-model");

  HttpTextClient broken(url + "/broken", "x");
  try {
    broken.generate("p");
    FAIL("expected an error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::generation);
  }
}

}  // TEST_SUITE
