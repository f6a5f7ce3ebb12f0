#include "kgprobe/probe.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>
#include <set>

#include "kgprobe/error.hpp"
#include "kgprobe/random.hpp"

namespace kgprobe {

std::string_view probe_kind_name(ProbeKind k) noexcept {
  switch (k) {
    case ProbeKind::logreg: return "logreg";
    case ProbeKind::mlp: return "mlp";
    case ProbeKind::svm: return "svm";
  }
  return "logreg";
}

ProbeKind parse_probe_kind(std::string_view s) {
  if (s == "logreg") return ProbeKind::logreg;
  if (s == "mlp") return ProbeKind::mlp;
  if (s == "svm") return ProbeKind::svm;
  throw Error(Errc::invalid_argument, "unknown model kind '" + std::string(s) + "'");
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw Error(Errc::invalid_argument, "batch_size must be positive");
  if (epochs == 0) throw Error(Errc::invalid_argument, "epochs must be positive");
  if (!(learning_rate > 0.0)) throw Error(Errc::invalid_argument, "learning_rate must be positive");
  if (weight_decay < 0.0) throw Error(Errc::invalid_argument, "weight_decay must be non-negative");
  if (kind == ProbeKind::mlp && hidden_width == 0) {
    throw Error(Errc::invalid_argument, "hidden_width must be positive for mlp");
  }
}

LayerData layer_data(const HiddenStateStore& store, int layer) {
  LayerData data;
  data.dim = store.dim();
  data.num_classes = std::max<std::size_t>(store.num_classes(), 2);
  data.features.reserve(store.size() * data.dim);
  data.labels.reserve(store.size());
  const auto slot = store.layer_slot(layer);
  for (const auto& r : store.records()) {
    const auto s = std::span<const float>(r.states).subspan(slot * data.dim, data.dim);
    data.features.insert(data.features.end(), s.begin(), s.end());
    data.labels.push_back(r.label);
  }
  return data;
}

ProbeModel::ProbeModel(ProbeKind kind, int layer, std::size_t dim, std::size_t num_classes,
                       std::size_t hidden_width)
    : kind_(kind), layer_(layer), dim_(dim), classes_(num_classes),
      hidden_(kind == ProbeKind::mlp ? hidden_width : 0) {
  if (dim == 0) throw Error(Errc::invalid_argument, "probe dim must be positive");
  if (num_classes < 2) throw Error(Errc::invalid_argument, "probe needs at least 2 classes");
  if (kind == ProbeKind::mlp && hidden_ == 0) {
    throw Error(Errc::invalid_argument, "mlp probe needs a hidden width");
  }
  mean_.assign(dim, 0.0);
  scale_.assign(dim, 1.0);
  params_.assign(param_count(), 0.0);
  config_.kind = kind;
  if (kind == ProbeKind::mlp) config_.hidden_width = hidden_;
}

std::size_t ProbeModel::param_count() const noexcept {
  const auto o = num_outputs();
  if (kind_ == ProbeKind::mlp) return hidden_ * dim_ + hidden_ + o * hidden_ + o;
  return o * dim_ + o;
}

void ProbeModel::set_standardization(std::vector<double> mean, std::vector<double> scale) {
  if (mean.size() != dim_ || scale.size() != dim_) {
    throw Error(Errc::dimension_mismatch, "standardization statistics have wrong size");
  }
  for (double s : scale) {
    if (!(s > 0.0) || !std::isfinite(s)) {
      throw Error(Errc::invalid_argument, "standardization scales must be positive and finite");
    }
  }
  mean_ = std::move(mean);
  scale_ = std::move(scale);
}

std::vector<double> ProbeModel::standardized(std::span<const double> x) const {
  if (x.size() != dim_) {
    throw Error(Errc::dimension_mismatch, "input has " + std::to_string(x.size()) +
                                              " dims, model expects " + std::to_string(dim_));
  }
  std::vector<double> out(dim_);
  for (std::size_t j = 0; j < dim_; ++j) out[j] = (x[j] - mean_[j]) / scale_[j];
  return out;
}

void ProbeModel::scores(std::span<const double> x_std, std::span<double> out) const {
  const auto o = num_outputs();
  const double* p = params_.data();
  if (kind_ != ProbeKind::mlp) {
    const double* b = p + o * dim_;
    for (std::size_t k = 0; k < o; ++k) {
      double s = b[k];
      for (std::size_t j = 0; j < dim_; ++j) s += p[k * dim_ + j] * x_std[j];
      out[k] = s;
    }
    return;
  }
  const double* W1 = p;
  const double* b1 = W1 + hidden_ * dim_;
  const double* W2 = b1 + hidden_;
  const double* b2 = W2 + o * hidden_;
  std::vector<double> act(hidden_);
  for (std::size_t u = 0; u < hidden_; ++u) {
    double s = b1[u];
    for (std::size_t j = 0; j < dim_; ++j) s += W1[u * dim_ + j] * x_std[j];
    act[u] = s > 0.0 ? s : 0.0;
  }
  for (std::size_t k = 0; k < o; ++k) {
    double s = b2[k];
    for (std::size_t u = 0; u < hidden_; ++u) s += W2[k * hidden_ + u] * act[u];
    out[k] = s;
  }
}

std::vector<double> ProbeModel::predict_proba(std::span<const double> x) const {
  const auto xs = standardized(x);
  std::vector<double> z(num_outputs());
  scores(xs, z);
  if (classes_ == 2) {
    double p = z[0] >= 0 ? 1.0 / (1.0 + std::exp(-z[0])) : std::exp(z[0]) / (1.0 + std::exp(z[0]));
    // Keep both probabilities strictly inside (0, 1).
    p = std::clamp(p, std::numeric_limits<double>::denorm_min(), std::nextafter(1.0, 0.0));
    return {1.0 - p, p};
  }
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (auto& v : z) {
    v = std::exp(v - zmax);
    sum += v;
  }
  for (auto& v : z) v /= sum;
  return z;
}

std::vector<double> ProbeModel::predict_proba(std::span<const float> x) const {
  std::vector<double> xd(x.begin(), x.end());
  return predict_proba(std::span<const double>(xd));
}

std::int32_t ProbeModel::predict(std::span<const double> x) const {
  const auto xs = standardized(x);
  std::vector<double> z(num_outputs());
  scores(xs, z);
  if (classes_ == 2) return z[0] > 0.0 ? 1 : 0;
  return static_cast<std::int32_t>(std::max_element(z.begin(), z.end()) - z.begin());
}

std::int32_t ProbeModel::predict(std::span<const float> x) const {
  std::vector<double> xd(x.begin(), x.end());
  return predict(std::span<const double>(xd));
}

std::uint64_t ProbeModel::checksum() const {
  std::uint64_t h = fnv1a64(probe_kind_name(kind_));
  auto mix = [&h](const void* data, std::size_t n) {
    h = fnv1a64(std::string_view(static_cast<const char*>(data), n), h);
  };
  for (double v : params_) {
    const float f = static_cast<float>(v);
    mix(&f, sizeof f);
  }
  for (double v : mean_) mix(&v, sizeof v);
  for (double v : scale_) mix(&v, sizeof v);
  return h;
}

std::pair<std::vector<double>, std::vector<double>> fit_standardization(const LayerData& data) {
  const auto n = data.size();
  const auto d = data.dim;
  std::vector<double> mean(d, 0.0), scale(d, 0.0);
  if (n == 0) return {mean, std::vector<double>(d, 1.0)};
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = data.row(i);
    for (std::size_t j = 0; j < d; ++j) mean[j] += r[j];
  }
  for (auto& m : mean) m /= static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto r = data.row(i);
    for (std::size_t j = 0; j < d; ++j) {
      const double c = r[j] - mean[j];
      scale[j] += c * c;
    }
  }
  for (auto& s : scale) {
    s = std::sqrt(s / static_cast<double>(n));
    if (!(s > 0.0)) s = 1.0;
  }
  return {mean, scale};
}

TrainResult train_probe(const LayerData& data, int layer, const TrainConfig& cfg) {
  cfg.validate();
  const auto n = data.size();
  const auto d = data.dim;
  std::set<std::int32_t> seen;
  for (auto y : data.labels) {
    if (y < 0 || static_cast<std::size_t>(y) >= data.num_classes) {
      throw Error(Errc::invalid_argument, "label " + std::to_string(y) + " outside the label space");
    }
    seen.insert(y);
  }
  if (seen.size() < 2) {
    throw Error(Errc::invalid_argument, "training data must contain at least two classes");
  }

  TrainResult result{ProbeModel(cfg.kind, layer, d, data.num_classes, cfg.hidden_width), {}};
  ProbeModel& model = result.model;
  model.config() = cfg;

  if (cfg.standardize) {
    auto [mean, scale] = fit_standardization(data);
    model.set_standardization(std::move(mean), std::move(scale));
  }
  std::vector<double> x(data.features.size());
  {
    const auto mean = model.mean();
    const auto scale = model.scale();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < d; ++j) x[i * d + j] = (data.features[i * d + j] - mean[j]) / scale[j];
    }
  }

  auto params = model.params();
  if (cfg.kind == ProbeKind::mlp) {
    // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every layer's weights and biases.
    HashStream init(derive_seed(cfg.seed, 0x1A17ULL));
    const auto h = model.hidden_width();
    const double a1 = 1.0 / std::sqrt(static_cast<double>(d));
    const double a2 = 1.0 / std::sqrt(static_cast<double>(h));
    const std::size_t first = h * d + h;
    for (std::size_t i = 0; i < params.size(); ++i) {
      const double a = i < first ? a1 : a2;
      params[i] = (2.0 * init.next_open01() - 1.0) * a;
    }
  }

  const auto P = params.size();
  std::vector<double> grad(P), m(P, 0.0), v(P, 0.0);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::vector<double> bx;
  std::vector<std::int32_t> by;
  const double b1 = cfg.beta1, b2 = cfg.beta2;
  double b1t = 1.0, b2t = 1.0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    Rng rng(derive_seed(cfg.seed, epoch));
    shuffle(std::span<std::size_t>(order), rng);
    double epoch_total = 0.0;
    for (std::size_t start = 0; start < n; start += cfg.batch_size) {
      const auto bs = std::min(cfg.batch_size, n - start);
      bx.resize(bs * d);
      by.resize(bs);
      for (std::size_t i = 0; i < bs; ++i) {
        const auto src = order[start + i];
        std::copy_n(x.begin() + static_cast<std::ptrdiff_t>(src * d), d,
                    bx.begin() + static_cast<std::ptrdiff_t>(i * d));
        by[i] = data.labels[src];
      }
      const double loss = loss_and_gradient(model, bx, by, grad);
      if (!std::isfinite(loss)) {
        throw Error(Errc::numerical, "non-finite loss at epoch " + std::to_string(epoch) +
                                         ", batch offset " + std::to_string(start) +
                                         " (lr " + std::to_string(cfg.learning_rate) + ")");
      }
      epoch_total += loss * static_cast<double>(bs);

      b1t *= b1;
      b2t *= b2;
      const double lr = cfg.learning_rate;
      for (std::size_t i = 0; i < P; ++i) {
        params[i] -= lr * cfg.weight_decay * params[i];
        m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
        v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
        const double mhat = m[i] / (1.0 - b1t);
        const double vhat = v[i] / (1.0 - b2t);
        params[i] -= lr * mhat / (std::sqrt(vhat) + cfg.epsilon);
      }
    }
    result.epoch_loss.push_back(epoch_total / static_cast<double>(n));
  }

  for (auto& p : params) {
    if (!std::isfinite(p)) throw Error(Errc::numerical, "training produced non-finite parameters");
    p = static_cast<double>(static_cast<float>(p));
  }
  return result;
}

ProbeModel train(const HiddenStateStore& store, int layer, const TrainConfig& cfg) {
  return train_probe(layer_data(store, layer), layer, cfg).model;
}

std::vector<std::int32_t> predict_all(const ProbeModel& model, const LayerData& data) {
  if (data.dim != model.dim()) throw Error(Errc::dimension_mismatch, "data and model dims differ");
  std::vector<std::int32_t> out(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) out[i] = model.predict(data.row(i));
  return out;
}

double evaluate_accuracy(const ProbeModel& model, const LayerData& data) {
  if (data.size() == 0) throw Error(Errc::invalid_argument, "cannot score an empty dataset");
  const auto pred = predict_all(model, data);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == data.labels[i];
  return static_cast<double>(hits) / static_cast<double>(pred.size());
}

}  // namespace kgprobe
