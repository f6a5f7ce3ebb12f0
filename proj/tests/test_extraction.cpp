#include <doctest.h>

#include <json.hpp>

#include <atomic>
#include <cmath>
#include <mutex>
#include <numeric>

#include "fake_server.hpp"
#include "kgprobe/error.hpp"
#include "kgprobe/extraction.hpp"
#include "test_util.hpp"

using namespace kgprobe;
using namespace kgprobe::testing;

namespace {

// Independent implementation of the mock's documented generator.
struct RefStream {
  std::uint64_t s;
  std::uint64_t next() {
    s += 0x9E3779B97F4A7C15ULL;
    auto z = s;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }
  double open01() { return (static_cast<double>(next() >> 11) + 0.5) / 9007199254740992.0; }
  double gauss() {
    const double u1 = open01();
    const double u2 = open01();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
  }
};

std::uint64_t ref_mix(std::uint64_t x) { return RefStream{x}.next(); }
std::uint64_t ref_derive(std::uint64_t seed, std::uint64_t stream) {
  return ref_mix(ref_mix(seed) ^ (stream * 0xD1B54A32D192ED03ULL + 1));
}
std::uint64_t ref_fnv(const std::string& s) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001B3ULL;
  }
  return h;
}

std::vector<double> ref_base(std::uint64_t seed, const std::string& text, int layer, std::size_t dim) {
  RefStream st{ref_derive(seed ^ ref_fnv(text), static_cast<std::uint64_t>(layer))};
  std::vector<double> v(dim);
  for (auto& x : v) x = st.gauss() / std::sqrt(static_cast<double>(dim));
  return v;
}

std::vector<double> ref_direction(std::uint64_t seed, std::uint64_t c, std::size_t dim) {
  RefStream st{ref_derive(seed, 0xD1EC7105ULL + c)};
  std::vector<double> v(dim);
  double n = 0;
  for (auto& x : v) {
    x = st.gauss();
    n += x * x;
  }
  for (auto& x : v) x /= std::sqrt(n);
  return v;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

// Backend that fails a configurable number of times before delegating.
class FlakyBackend final : public ExtractionBackend {
 public:
  FlakyBackend(ExtractionBackend& inner, int failures) : inner_(inner), failures_(failures) {}
  std::vector<std::vector<float>> extract(std::span<const std::string> texts,
                                          std::span<const int> layers) override {
    ++calls;
    if (failures_ > 0) {
      --failures_;
      throw Error(Errc::backend, "transient");
    }
    return inner_.extract(texts, layers);
  }
  std::size_t dim() const override { return inner_.dim(); }
  int num_layers() const override { return inner_.num_layers(); }
  std::string model_name() const override { return inner_.model_name(); }
  int calls = 0;

 private:
  ExtractionBackend& inner_;
  int failures_;
};

std::vector<std::string> texts_n(std::size_t n) {
  std::vector<std::string> t;
  for (std::size_t i = 0; i < n; ++i) t.push_back("prompt number " + std::to_string(i));
  return t;
}

}  // namespace

TEST_SUITE("extraction") {

TEST_CASE("mock base vectors match the reference generator") {
  MockLmConfig cfg;
  cfg.seed = 1234;
  cfg.dim = 16;
  MockLM lm(cfg, [](std::string_view) { return 0; });
  for (const std::string text : {"a", "Is it true that x r y?", ""}) {
    for (int layer : {1, 4, 7}) {
      const auto got = lm.state(text, layer);
      const auto want = ref_base(1234, text, layer, 16);
      for (std::size_t j = 0; j < 16; ++j) CHECK(got[j] == static_cast<float>(want[j]));
    }
  }
  const auto d = ref_direction(1234, 0, 16);
  for (std::size_t j = 0; j < 16; ++j) CHECK(lm.direction(0)[j] == doctest::Approx(d[j]).epsilon(1e-15));
}

TEST_CASE("planted layers shift along the class direction") {
  MockLmConfig cfg;
  cfg.seed = 9;
  cfg.dim = 32;
  cfg.planted_layers = {3};
  cfg.margin = 2.0;
  MockLM lm(cfg, table_oracle({{"yes", 1}, {"no", 0}}));
  const auto dir = ref_direction(9, 0, 32);
  for (const auto& [text, sign] : {std::pair<std::string, double>{"yes", 1.0}, {"no", -1.0}}) {
    const auto s = lm.state(text, 3);
    const auto b = ref_base(9, text, 3, 32);
    std::vector<double> delta(32);
    for (std::size_t j = 0; j < 32; ++j) delta[j] = s[j] - b[j];
    CHECK(dot(delta, dir) == doctest::Approx(sign * 2.0).epsilon(1e-5));
    // Unplanted layers are untouched.
    const auto u = lm.state(text, 2);
    const auto ub = ref_base(9, text, 2, 32);
    for (std::size_t j = 0; j < 32; ++j) CHECK(u[j] == static_cast<float>(ub[j]));
  }
  CHECK_THROWS_AS(lm.state("unknown", 3), Error);
  CHECK_NOTHROW(lm.state("unknown", 2));
}

TEST_CASE("multi-class mocks use one direction per class") {
  MockLmConfig cfg;
  cfg.dim = 24;
  cfg.num_classes = 4;
  cfg.planted_layers = {2};
  MockLM lm(cfg, [](std::string_view t) { return static_cast<std::int32_t>(t.size() % 4); });
  for (std::size_t c = 0; c < 4; ++c) {
    CHECK(dot(lm.direction(c), lm.direction(c)) == doctest::Approx(1.0));
    const std::string text(c + 8, 'x');
    const auto s = lm.state(text, 2);
    const auto b = ref_base(0, text, 2, 24);
    std::vector<double> delta(24);
    for (std::size_t j = 0; j < 24; ++j) delta[j] = s[j] - b[j];
    for (std::size_t j = 0; j < 24; ++j) CHECK(delta[j] == doctest::Approx(lm.direction((c + 8) % 4)[j]).epsilon(1e-5).scale(1));
  }
}

TEST_CASE("mock configuration is validated") {
  auto make = [](MockLmConfig c) { MockLM lm(c, [](std::string_view) { return 0; }); };
  MockLmConfig c;
  c.dim = 0;
  CHECK_THROWS_AS(make(c), Error);
  c = {};
  c.num_layers = 1;
  CHECK_THROWS_AS(make(c), Error);
  c = {};
  c.num_classes = 1;
  CHECK_THROWS_AS(make(c), Error);
  c = {};
  c.planted_layers = {8};
  CHECK_THROWS_AS(make(c), Error);
  c.planted_layers = {0};
  CHECK_THROWS_AS(make(c), Error);
  MockLM lm({}, [](std::string_view) { return 0; });
  CHECK_THROWS_AS(lm.state("x", 0), Error);
  CHECK_THROWS_AS(lm.state("x", 8), Error);
}

TEST_CASE("layer specs") {
  CHECK(parse_layer_spec("3", 8) == std::vector<int>{3});
  CHECK(parse_layer_spec("5,1,4,4", 8) == std::vector<int>{1, 4, 5});
  CHECK(parse_layer_spec("2..4", 8) == std::vector<int>{2, 3, 4});
  CHECK(parse_layer_spec("all", 4) == std::vector<int>{1, 2, 3});
  CHECK(parse_layer_spec("1,30", 0) == std::vector<int>{1, 30});
  for (const char* bad : {"0", "8", "x", "4..2", "", "1,,2", "all"}) {
    CHECK_THROWS_AS(parse_layer_spec(bad, std::string(bad) == "all" ? 0 : 8), Error);
  }
  const std::vector<int> unsorted{3, 2};
  CHECK_THROWS_AS(check_interior_layers(unsorted, 8), Error);
}

TEST_CASE("extraction output does not depend on batch size") {
  MockLmConfig cfg;
  cfg.dim = 8;
  cfg.planted_layers = {2};
  const auto texts = texts_n(23);
  std::unordered_map<std::string, std::int32_t> table;
  std::vector<std::int32_t> labels;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    labels.push_back(static_cast<std::int32_t>(i % 2));
    table[texts[i]] = labels.back();
  }
  MockLM lm(cfg, table_oracle(table));
  const std::vector<int> layers{1, 2, 6};
  ExtractOptions a;
  a.batch_size = 1;
  ExtractOptions b;
  b.batch_size = 7;
  ExtractOptions c;
  c.batch_size = 100;
  const auto sa = extract_dataset(lm, texts, labels, layers, a);
  const auto sb = extract_dataset(lm, texts, labels, layers, b);
  const auto sc = extract_dataset(lm, texts, labels, layers, c);
  REQUIRE(sa.size() == 23);
  for (std::size_t i = 0; i < 23; ++i) {
    CHECK(sa.record(i) == sb.record(i));
    CHECK(sa.record(i) == sc.record(i));
    CHECK(sa.record(i).example_id == i);
  }
  CHECK(sa.header().model == "mock-lm");
  CHECK(sa.header().layers == layers);

  std::vector<std::uint64_t> custom(23);
  std::iota(custom.begin(), custom.end(), 100);
  CHECK(extract_dataset(lm, texts, labels, layers, a, custom).record(4).example_id == 104);
  CHECK_THROWS_AS(extract_dataset(lm, texts, labels, std::vector<int>{0}, a), Error);
  CHECK_THROWS_AS(extract_dataset(lm, texts, std::vector<std::int32_t>{0}, layers, a), Error);
}

TEST_CASE("transient failures are retried") {
  MockLM lm({}, [](std::string_view) { return 0; });
  const auto texts = texts_n(4);
  const std::vector<std::int32_t> labels(4, 0);
  const std::vector<int> layers{1};
  ExtractOptions opt;
  opt.batch_size = 4;
  FlakyBackend flaky(lm, 2);
  const auto s = extract_dataset(flaky, texts, labels, layers, opt);
  CHECK(s.size() == 4);
  CHECK(flaky.calls == 3);

  opt.max_retries = 0;
  FlakyBackend dead(lm, 100);
  try {
    extract_dataset(dead, texts, labels, layers, opt);
    FAIL("expected failure");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::backend);
    CHECK(std::string(e.what()).find("example 0") != std::string::npos);
  }
}

TEST_CASE("HttpBackend speaks the hidden-state protocol") {
  FakeServer fake;
  std::mutex mu;
  std::vector<std::size_t> batch_sizes;
  std::atomic<int> dim{3};
  fake.server().Post("/v1/hidden_states", [&](const httplib::Request& req, httplib::Response& res) {
    const auto body = nlohmann::json::parse(req.body);
    const auto texts = body.at("texts").get<std::vector<std::string>>();
    const auto layers = body.at("layers").get<std::vector<int>>();
    {
      std::lock_guard lock(mu);
      batch_sizes.push_back(texts.size());
    }
    if (texts.size() > 2) {
      res.status = 413;
      return;
    }
    if (!body.at("last_token_only").get<bool>()) {
      res.status = 400;
      return;
    }
    const int d = dim.load();
    nlohmann::json states = nlohmann::json::array();
    for (const auto& t : texts) {
      nlohmann::json per = nlohmann::json::array();
      for (int l : layers) {
        std::vector<float> v(static_cast<std::size_t>(d));
        for (int j = 0; j < d; ++j) v[static_cast<std::size_t>(j)] = static_cast<float>(t.size() * 100 + l * 10 + j);
        per.push_back(v);
      }
      states.push_back(per);
    }
    res.set_content(nlohmann::json{{"model", "remote"}, {"dim", d}, {"layers", layers}, {"states", states}}.dump(),
                    "application/json");
  });
  fake.server().Post("/bad/v1/hidden_states", [](const httplib::Request&, httplib::Response& res) {
    res.status = 400;
    res.set_content("no", "text/plain");
  });
  fake.server().Post("/down/v1/hidden_states", [](const httplib::Request&, httplib::Response& res) {
    res.status = 500;
  });
  const auto url = fake.start();

  HttpBackend http(url, 8);
  const std::vector<std::string> texts{"a", "bb", "ccc", "dddd", "eeeee"};
  const std::vector<int> layers{2, 5};
  const auto out = http.extract(texts, layers);
  REQUIRE(out.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    REQUIRE(out[i].size() == 6);
    CHECK(out[i][0] == static_cast<float>((i + 1) * 100 + 20));
    CHECK(out[i][4] == static_cast<float>((i + 1) * 100 + 50 + 1));
  }
  CHECK(http.dim() == 3);
  CHECK(http.model_name() == "remote");
  // 5 -> 413, then halves 2 and 3; the 3 is rejected and split again.
  CHECK(batch_sizes.front() == 5);
  for (std::size_t i = 1; i < batch_sizes.size(); ++i) CHECK(batch_sizes[i] < 5);

  dim = 4;
  try {
    http.extract(texts, layers);
    FAIL("expected dimension mismatch");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::dimension_mismatch);
  }

  HttpBackend bad(url + "/bad");
  try {
    bad.extract(texts, layers);
    FAIL("expected invalid_argument");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::invalid_argument);
  }
  HttpBackend down(url + "/down");
  try {
    down.extract(texts, layers);
    FAIL("expected backend error");
  } catch (const Error& e) {
    CHECK(e.code() == Errc::backend);
  }

  // Full driver over HTTP produces a store tagged with the remote model.
  dim = 3;
  HttpBackend fresh(url, 8);
  ExtractOptions opt;
  opt.batch_size = 4;
  const std::vector<std::int32_t> labels{1, 0, 1, 0, 1};
  const auto store = extract_dataset(fresh, texts, labels, layers, opt);
  CHECK(store.header().model == "remote");
  CHECK(store.dim() == 3);
  CHECK(store.state(3, 5)[2] == 452.f);
}

TEST_CASE("StoreBackend replays an existing store") {
  MockLmConfig cfg;
  cfg.dim = 6;
  MockLM lm(cfg, [](std::string_view) { return 0; });
  const auto texts = texts_n(5);
  const std::vector<std::int32_t> labels{0, 1, 0, 1, 0};
  const std::vector<std::uint64_t> ids{10, 11, 12, 13, 14};
  const std::vector<int> layers{1, 2, 3};
  const auto src = extract_dataset(lm, texts, labels, layers, {}, ids);

  std::unordered_map<std::string, std::uint64_t> text_ids;
  for (std::size_t i = 0; i < texts.size(); ++i) text_ids[texts[i]] = ids[i];
  StoreBackend sb(src, text_ids);
  const std::vector<int> sub{2};
  const auto replay = extract_dataset(sb, texts, labels, sub, {}, ids);
  for (std::size_t i = 0; i < 5; ++i) {
    const auto want = src.state(i, 2);
    const auto got = replay.state(i, 2);
    CHECK(std::equal(want.begin(), want.end(), got.begin(), got.end()));
  }
  CHECK_THROWS_AS(sb.extract(texts, std::vector<int>{4}), Error);
  CHECK_THROWS_AS(sb.extract(std::vector<std::string>{"stranger"}, sub), Error);
}

}  // TEST_SUITE
