#include <algorithm>
#include <cmath>

#include "kgprobe/error.hpp"
#include "kgprobe/probe.hpp"
#include "kgprobe/random.hpp"

namespace kgprobe {
namespace {

// log(1 + exp(z)) without overflow.
double softplus(double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); }

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// Loss for one example given raw scores; writes dLoss/dScore into dz.
double output_loss(ProbeKind kind, std::span<const double> z, std::int32_t y, std::span<double> dz) {
  const auto outputs = z.size();
  if (kind == ProbeKind::svm) {
    std::fill(dz.begin(), dz.end(), 0.0);
    if (outputs == 1) {
      const double sign = y == 1 ? 1.0 : -1.0;
      const double margin = 1.0 - sign * z[0];
      if (margin <= 0.0) return 0.0;
      dz[0] = -sign;
      return margin;
    }
    // Crammer-Singer: max(0, 1 + max_{j != y} z_j - z_y).
    std::size_t rival = y == 0 ? 1 : 0;
    for (std::size_t j = 0; j < outputs; ++j) {
      if (j != static_cast<std::size_t>(y) && z[j] > z[rival]) rival = j;
    }
    const double margin = 1.0 + z[rival] - z[static_cast<std::size_t>(y)];
    if (margin <= 0.0) return 0.0;
    dz[rival] = 1.0;
    dz[static_cast<std::size_t>(y)] = -1.0;
    return margin;
  }
  if (outputs == 1) {
    dz[0] = sigmoid(z[0]) - static_cast<double>(y);
    return softplus(z[0]) - static_cast<double>(y) * z[0];
  }
  const double zmax = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (std::size_t k = 0; k < outputs; ++k) {
    dz[k] = std::exp(z[k] - zmax);
    sum += dz[k];
  }
  for (auto& v : dz) v /= sum;
  const double log_p = z[static_cast<std::size_t>(y)] - zmax - std::log(sum);
  dz[static_cast<std::size_t>(y)] -= 1.0;
  return -log_p;
}

}  // namespace

double loss_and_gradient(const ProbeModel& model, std::span<const double> x_std,
                         std::span<const std::int32_t> labels, std::span<double> grad) {
  const auto d = model.dim();
  const auto n = labels.size();
  const auto outputs = model.num_outputs();
  if (x_std.size() != n * d) throw Error(Errc::dimension_mismatch, "feature block has wrong size");
  if (!grad.empty() && grad.size() != model.param_count()) {
    throw Error(Errc::dimension_mismatch, "gradient buffer has wrong size");
  }
  if (n == 0) throw Error(Errc::invalid_argument, "empty batch");
  const bool want_grad = !grad.empty();
  if (want_grad) std::fill(grad.begin(), grad.end(), 0.0);

  const auto p = model.params();
  std::vector<double> z(outputs), dz(outputs);
  double total = 0.0;

  if (model.kind() != ProbeKind::mlp) {
    const double* W = p.data();
    const double* b = W + outputs * d;
    for (std::size_t i = 0; i < n; ++i) {
      const double* x = x_std.data() + i * d;
      for (std::size_t k = 0; k < outputs; ++k) {
        double s = b[k];
        const double* w = W + k * d;
        for (std::size_t j = 0; j < d; ++j) s += w[j] * x[j];
        z[k] = s;
      }
      total += output_loss(model.kind(), z, labels[i], dz);
      if (!want_grad) continue;
      double* gW = grad.data();
      double* gb = gW + outputs * d;
      for (std::size_t k = 0; k < outputs; ++k) {
        if (dz[k] == 0.0) continue;
        double* gw = gW + k * d;
        for (std::size_t j = 0; j < d; ++j) gw[j] += dz[k] * x[j];
        gb[k] += dz[k];
      }
    }
  } else {
    const auto h = model.hidden_width();
    const double* W1 = p.data();
    const double* b1 = W1 + h * d;
    const double* W2 = b1 + h;
    const double* b2 = W2 + outputs * h;
    std::vector<double> act(h), dact(h);
    for (std::size_t i = 0; i < n; ++i) {
      const double* x = x_std.data() + i * d;
      for (std::size_t u = 0; u < h; ++u) {
        double s = b1[u];
        const double* w = W1 + u * d;
        for (std::size_t j = 0; j < d; ++j) s += w[j] * x[j];
        act[u] = s > 0.0 ? s : 0.0;
      }
      for (std::size_t k = 0; k < outputs; ++k) {
        double s = b2[k];
        const double* w = W2 + k * h;
        for (std::size_t u = 0; u < h; ++u) s += w[u] * act[u];
        z[k] = s;
      }
      total += output_loss(ProbeKind::mlp, z, labels[i], dz);
      if (!want_grad) continue;
      double* gW1 = grad.data();
      double* gb1 = gW1 + h * d;
      double* gW2 = gb1 + h;
      double* gb2 = gW2 + outputs * h;
      std::fill(dact.begin(), dact.end(), 0.0);
      for (std::size_t k = 0; k < outputs; ++k) {
        double* gw = gW2 + k * h;
        const double* w = W2 + k * h;
        for (std::size_t u = 0; u < h; ++u) {
          gw[u] += dz[k] * act[u];
          dact[u] += dz[k] * w[u];
        }
        gb2[k] += dz[k];
      }
      for (std::size_t u = 0; u < h; ++u) {
        if (act[u] <= 0.0) continue;
        double* gw = gW1 + u * d;
        for (std::size_t j = 0; j < d; ++j) gw[j] += dact[u] * x[j];
        gb1[u] += dact[u];
      }
    }
  }

  const double inv_n = 1.0 / static_cast<double>(n);
  if (want_grad) {
    for (auto& g : grad) g *= inv_n;
  }
  return total * inv_n;
}

double gradient_check(ProbeKind kind, std::size_t dim, std::size_t num_classes, std::uint64_t seed,
                      std::size_t hidden_width) {
  if (dim == 0 || dim > 16) throw Error(Errc::invalid_argument, "gradient_check expects 1 <= dim <= 16");
  if (num_classes < 2) throw Error(Errc::invalid_argument, "gradient_check needs >= 2 classes");
  ProbeModel model(kind, 1, dim, num_classes, kind == ProbeKind::mlp ? hidden_width : 0);
  HashStream stream(derive_seed(seed, 0x67C4ECULL));
  for (auto& v : model.params()) v = 0.5 * stream.next_gaussian();

  constexpr std::size_t kBatch = 8;
  std::vector<double> x(kBatch * dim);
  for (auto& v : x) v = stream.next_gaussian();
  std::vector<std::int32_t> y(kBatch);
  for (auto& v : y) v = static_cast<std::int32_t>(stream.next() % num_classes);

  std::vector<double> analytic(model.param_count());
  loss_and_gradient(model, x, y, analytic);

  constexpr double kStep = 1e-5;
  double worst = 0.0;
  auto params = model.params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = params[i];
    params[i] = saved + kStep;
    const double up = loss_and_gradient(model, x, y, {});
    params[i] = saved - kStep;
    const double down = loss_and_gradient(model, x, y, {});
    params[i] = saved;
    const double numeric = (up - down) / (2.0 * kStep);
    const double denom = std::max({std::abs(analytic[i]), std::abs(numeric), 1e-7});
    worst = std::max(worst, std::abs(analytic[i] - numeric) / denom);
  }
  return worst;
}

}  // namespace kgprobe
