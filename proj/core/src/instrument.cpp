#include <sys/resource.h>

#include "kgprobe/eval.hpp"

namespace kgprobe {

void StageTimer::add(const std::string& name, double seconds) {
  for (auto& [stage, total] : stages_) {
    if (stage == name) {
      total += seconds;
      return;
    }
  }
  stages_.emplace_back(name, seconds);
}

std::optional<std::uint64_t> peak_rss_bytes() {
  rusage usage{};
  if (getrusage(RUSAGE_SELF, &usage) != 0) return std::nullopt;
  // Linux reports ru_maxrss in KiB.
  return static_cast<std::uint64_t>(usage.ru_maxrss) * 1024u;
}

}  // namespace kgprobe
