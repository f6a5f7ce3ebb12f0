#include <Eigen/Dense>

#include <algorithm>
#include <cmath>

#include "kgprobe/error.hpp"
#include "kgprobe/eval.hpp"

namespace kgprobe {

std::vector<double> PcaResult::explained_ratio() const {
  std::vector<double> out(explained_variance.size(), 0.0);
  if (total_variance <= 0.0) return out;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = explained_variance[i] / total_variance;
  return out;
}

PcaResult pca_project(std::span<const double> rows, std::size_t n, std::size_t dim, std::size_t k) {
  if (rows.size() != n * dim) throw Error(Errc::dimension_mismatch, "pca: data has wrong size");
  if (k == 0 || k > std::min(n, dim)) {
    throw Error(Errc::invalid_argument, "pca: k must lie in 1..min(n, dim)");
  }
  using RowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  const Eigen::Map<const RowMajor> data(rows.data(), static_cast<Eigen::Index>(n),
                                        static_cast<Eigen::Index>(dim));
  const Eigen::RowVectorXd mean = data.colwise().mean();
  const Eigen::MatrixXd centered = data.rowwise() - mean;

  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const auto& sv = svd.singularValues();
  Eigen::MatrixXd V = svd.matrixV().leftCols(static_cast<Eigen::Index>(k));
  for (Eigen::Index c = 0; c < V.cols(); ++c) {
    for (Eigen::Index r = 0; r < V.rows(); ++r) {
      if (std::abs(V(r, c)) > 1e-12) {
        if (V(r, c) < 0) V.col(c) *= -1.0;
        break;
      }
    }
  }
  const Eigen::MatrixXd proj = centered * V;

  const double denom = n > 1 ? static_cast<double>(n - 1) : 1.0;
  PcaResult out;
  out.n = n;
  out.dim = dim;
  out.k = k;
  out.mean.assign(mean.data(), mean.data() + dim);
  out.coords.resize(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t c = 0; c < k; ++c) {
      out.coords[i * k + c] = proj(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(c));
    }
  }
  out.components.resize(k * dim);
  for (std::size_t c = 0; c < k; ++c) {
    for (std::size_t j = 0; j < dim; ++j) {
      out.components[c * dim + j] = V(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(c));
    }
  }
  for (std::size_t c = 0; c < k; ++c) {
    const double s = sv(static_cast<Eigen::Index>(c));
    out.explained_variance.push_back(s * s / denom);
  }
  out.total_variance = centered.squaredNorm() / denom;
  return out;
}

}  // namespace kgprobe
