#include <doctest.h>

#include <cmath>
#include <random>

#include "kgprobe/error.hpp"
#include "kgprobe/probe.hpp"
#include "test_util.hpp"

using namespace kgprobe;
using namespace kgprobe::testing;

namespace {

// Gaussian clusters: class c centred at `sep` * e_c in a dim-dimensional space.
HiddenStateStore clusters(std::size_t n, std::size_t dim, std::size_t classes, double sep,
                          std::vector<int> layers, unsigned seed, std::vector<int> signal_layers = {}) {
  StoreHeader h;
  h.model = "synthetic";
  h.dim = static_cast<std::uint32_t>(dim);
  h.layers = layers;
  h.task = classes == 2 ? TaskTag::tc : TaskTag::rp;
  h.labels.clear();
  for (std::size_t c = 0; c < classes; ++c) h.labels.push_back("c" + std::to_string(c));
  HiddenStateStore s(h);
  std::mt19937 gen(seed);
  std::normal_distribution<float> nd;
  for (std::size_t i = 0; i < n; ++i) {
    HiddenStateRecord r;
    r.example_id = i;
    r.label = static_cast<std::int32_t>(i % classes);
    for (int l : layers) {
      const bool signal = signal_layers.empty() ||
                          std::find(signal_layers.begin(), signal_layers.end(), l) != signal_layers.end();
      for (std::size_t j = 0; j < dim; ++j) {
        float v = nd(gen);
        if (signal && j == static_cast<std::size_t>(r.label) % dim) v += static_cast<float>(sep);
        r.states.push_back(v);
      }
    }
    s.add(std::move(r));
  }
  return s;
}

}  // namespace

TEST_SUITE("probe") {

TEST_CASE("analytic gradients match finite differences") {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    CHECK(gradient_check(ProbeKind::logreg, 6, 2, seed) < 1e-4);
    CHECK(gradient_check(ProbeKind::logreg, 5, 4, seed) < 1e-4);
    CHECK(gradient_check(ProbeKind::mlp, 5, 2, seed, 4) < 1e-3);
    CHECK(gradient_check(ProbeKind::mlp, 4, 3, seed, 6) < 1e-3);
  }
}

TEST_CASE("binary logistic loss matches a hand computation") {
  ProbeModel m(ProbeKind::logreg, 1, 2, 2);
  auto p = m.params();
  p[0] = 0.5;
  p[1] = -1.0;
  p[2] = 0.25;
  const std::vector<double> x{1.0, 2.0, -1.0, 0.0};
  const std::vector<std::int32_t> y{1, 0};
  // scores: 0.5 - 2 + 0.25 = -1.25 ; -0.5 + 0.25 = -0.25
  const double want = (std::log1p(std::exp(1.25)) + std::log1p(std::exp(-0.25))) / 2.0;
  std::vector<double> grad(3);
  CHECK(loss_and_gradient(m, x, y, grad) == doctest::Approx(want).epsilon(1e-12));
  const double s1 = 1.0 / (1.0 + std::exp(1.25));
  const double s2 = 1.0 / (1.0 + std::exp(0.25));
  CHECK(grad[2] == doctest::Approx(((s1 - 1.0) + s2) / 2.0));
  CHECK(grad[0] == doctest::Approx(((s1 - 1.0) * 1.0 + s2 * -1.0) / 2.0));
}

TEST_CASE("probabilities are distributions and predict is their argmax") {
  for (std::size_t classes : {2u, 3u, 7u}) {
    ProbeModel m(ProbeKind::mlp, 1, 4, classes, 5);
    std::mt19937 gen(static_cast<unsigned>(classes));
    std::normal_distribution<double> nd;
    for (auto& w : m.params()) w = nd(gen);
    for (int i = 0; i < 50; ++i) {
      std::vector<double> x(4);
      for (auto& v : x) v = 3.0 * nd(gen);
      const auto p = m.predict_proba(std::span<const double>(x));
      REQUIRE(p.size() == classes);
      double sum = 0.0;
      std::size_t best = 0;
      for (std::size_t c = 0; c < classes; ++c) {
        CHECK(p[c] >= 0.0);
        sum += p[c];
        if (p[c] > p[best]) best = c;
      }
      CHECK(std::abs(sum - 1.0) < 1e-9);
      CHECK(m.predict(std::span<const double>(x)) == static_cast<std::int32_t>(best));
    }
  }
}

TEST_CASE("training reduces the loss and separates clusters") {
  const auto train = clusters(600, 8, 2, 3.0, {1}, 1);
  const auto test = clusters(400, 8, 2, 3.0, {1}, 2);
  TrainConfig cfg;
  cfg.learning_rate = 1e-2;
  cfg.epochs = 20;
  for (auto kind : {ProbeKind::logreg, ProbeKind::mlp, ProbeKind::svm}) {
    cfg.kind = kind;
    cfg.hidden_width = 16;
    const auto res = train_probe(layer_data(train, 1), 1, cfg);
    CHECK(res.epoch_loss.size() == 20);
    CHECK(res.epoch_loss.back() < res.epoch_loss.front());
    CHECK(evaluate_accuracy(res.model, layer_data(test, 1)) > 0.9);
  }
}

TEST_CASE("default hyperparameters learn a clear signal") {
  const auto train_store = clusters(2000, 16, 2, 3.0, {1}, 3);
  const auto test = clusters(500, 16, 2, 3.0, {1}, 4);
  for (auto kind : {ProbeKind::logreg, ProbeKind::mlp}) {
    TrainConfig cfg;
    cfg.kind = kind;
    const auto m = train(train_store, 1, cfg);
    CHECK(evaluate_accuracy(m, layer_data(test, 1)) > 0.9);
  }
  const auto mc_train = clusters(2000, 16, 5, 4.0, {1}, 5);
  const auto mc_test = clusters(500, 16, 5, 4.0, {1}, 6);
  TrainConfig cfg;
  const auto m = train(mc_train, 1, cfg);
  CHECK(m.num_classes() == 5);
  CHECK(evaluate_accuracy(m, layer_data(mc_test, 1)) > 0.9);
}

TEST_CASE("training is deterministic for a seed") {
  const auto data = layer_data(clusters(200, 4, 2, 1.0, {1}, 8), 1);
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.seed = 17;
  const auto a = train_probe(data, 1, cfg).model;
  const auto b = train_probe(data, 1, cfg).model;
  CHECK(a.checksum() == b.checksum());
  cfg.seed = 18;
  CHECK(train_probe(data, 1, cfg).model.checksum() != a.checksum());
}

TEST_CASE("standardization statistics") {
  LayerData d;
  d.dim = 2;
  d.features = {1, 5, 3, 5, 5, 5};
  d.labels = {0, 1, 0};
  const auto [mean, scale] = fit_standardization(d);
  CHECK(mean[0] == doctest::Approx(3.0));
  CHECK(mean[1] == doctest::Approx(5.0));
  CHECK(scale[0] == doctest::Approx(std::sqrt(8.0 / 3.0)));
  CHECK(scale[1] == 1.0);
}

TEST_CASE("model files round trip bit-for-bit") {
  TempDir dir("model");
  const auto data = layer_data(clusters(100, 5, 3, 2.0, {4}, 9), 4);
  TrainConfig cfg;
  cfg.kind = ProbeKind::mlp;
  cfg.hidden_width = 7;
  cfg.epochs = 2;
  const auto m = train_probe(data, 4, cfg).model;
  write_model(m, dir / "m.kgpm");
  const auto back = read_model(dir / "m.kgpm");
  CHECK(back.checksum() == m.checksum());
  CHECK(back.kind() == ProbeKind::mlp);
  CHECK(back.layer() == 4);
  CHECK(back.hidden_width() == 7);
  CHECK(back.num_classes() == 3);
  CHECK(predict_all(back, data) == predict_all(m, data));

  auto bytes = read_file(dir / "m.kgpm");
  write_file(dir / "short.kgpm", bytes.substr(0, bytes.size() - 2));
  CHECK_THROWS_AS(read_model(dir / "short.kgpm"), Error);
  bytes[0] = 'Z';
  write_file(dir / "magic.kgpm", bytes);
  CHECK_THROWS_AS(read_model(dir / "magic.kgpm"), Error);
}

TEST_CASE("sweep selects the informative layer") {
  const std::vector<int> layers{1, 2, 3, 4};
  const auto train = clusters(600, 8, 2, 3.0, layers, 10, {3});
  const auto valid = clusters(300, 8, 2, 3.0, layers, 11, {3});
  const auto test = clusters(300, 8, 2, 3.0, layers, 12, {3});
  TrainConfig cfg;
  cfg.learning_rate = 1e-2;
  cfg.epochs = 10;
  SweepOptions opt;
  opt.test_all_layers = true;
  opt.threads = 2;
  const auto res = sweep_layers(train, valid, &test, cfg, opt);
  CHECK(res.report.selected_layer == 3);
  CHECK(res.selected_model.layer() == 3);
  REQUIRE(res.report.layers.size() == 4);
  for (const auto& l : res.report.layers) {
    REQUIRE(l.test_accuracy);
    if (l.layer == 3) CHECK(*l.test_accuracy > 0.9);
    else CHECK(*l.test_accuracy < 0.65);
  }
  opt.threads = 1;
  const auto serial = sweep_layers(train, valid, &test, cfg, opt);
  for (std::size_t i = 0; i < 4; ++i) CHECK(serial.report.layers[i].checksum == res.report.layers[i].checksum);

  opt.test_all_layers = false;
  const auto only = sweep_layers(train, valid, &test, cfg, opt);
  for (const auto& l : only.report.layers) CHECK(l.test_accuracy.has_value() == (l.layer == 3));
}

TEST_CASE("sweep ties go to the lowest layer") {
  // Every layer carries the same perfect signal.
  const std::vector<int> layers{2, 5, 6};
  const auto train = clusters(200, 4, 2, 20.0, layers, 13);
  const auto valid = clusters(100, 4, 2, 20.0, layers, 14);
  TrainConfig cfg;
  cfg.learning_rate = 1e-2;
  cfg.epochs = 5;
  const auto res = sweep_layers(train, valid, nullptr, cfg);
  for (const auto& l : res.report.layers) CHECK(l.valid_accuracy == 1.0);
  CHECK(res.report.selected_layer == 2);
}

TEST_CASE("train config validation") {
  TrainConfig c;
  c.learning_rate = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.batch_size = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  c = {};
  c.epochs = 0;
  CHECK_THROWS_AS(c.validate(), Error);
  CHECK(parse_probe_kind("mlp") == ProbeKind::mlp);
  CHECK_THROWS_AS(parse_probe_kind("tree"), Error);
}

}  // TEST_SUITE
