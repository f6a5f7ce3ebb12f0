#pragma once

#include <chrono>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace kgprobe {

/// Fraction of exact matches. Throws on length mismatch or empty input.
double accuracy(std::span<const std::int32_t> predictions, std::span<const std::int32_t> labels);

/// Top-1 hit rate for single-gold relation prediction; identical to
/// accuracy() but rejects class ids outside [0, num_classes).
double hits_at_1(std::span<const std::int32_t> predicted, std::span<const std::int32_t> gold,
                 std::size_t num_classes);

struct PcaResult {
  std::size_t n = 0;
  std::size_t dim = 0;
  std::size_t k = 0;
  std::vector<double> mean;
  /// n x k, row-major.
  std::vector<double> coords;
  /// k x dim, row-major; unit rows, first nonzero entry positive.
  std::vector<double> components;
  /// Variance along each component, non-increasing.
  std::vector<double> explained_variance;
  double total_variance = 0.0;

  std::vector<double> explained_ratio() const;
};

/// Mean-centered projection of n row-major vectors onto the top-k principal
/// directions. Variances use the n - 1 normalizer.
PcaResult pca_project(std::span<const double> rows, std::size_t n, std::size_t dim, std::size_t k = 3);

/// Wall-clock per named stage, in the order stages were first recorded.
class StageTimer {
 public:
  class Scope {
   public:
    Scope(StageTimer& owner, std::string name)
        : owner_(owner), name_(std::move(name)), start_(std::chrono::steady_clock::now()) {}
    ~Scope() {
      owner_.add(name_, std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count());
    }
    Scope(const Scope&) = delete;
    Scope& operator=(const Scope&) = delete;

   private:
    StageTimer& owner_;
    std::string name_;
    std::chrono::steady_clock::time_point start_;
  };

  Scope scope(std::string name) { return Scope(*this, std::move(name)); }
  void add(const std::string& name, double seconds);
  const std::vector<std::pair<std::string, double>>& stages() const noexcept { return stages_; }

 private:
  std::vector<std::pair<std::string, double>> stages_;
};

/// Process resident-set high-water mark in bytes, when the platform reports it.
std::optional<std::uint64_t> peak_rss_bytes();

}  // namespace kgprobe
