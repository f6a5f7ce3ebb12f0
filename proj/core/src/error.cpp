#include "kgprobe/error.hpp"

namespace kgprobe {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::io: return "io";
    case Errc::parse: return "parse";
    case Errc::bad_magic: return "bad_magic";
    case Errc::version_mismatch: return "version_mismatch";
    case Errc::truncated: return "truncated";
    case Errc::count_mismatch: return "count_mismatch";
    case Errc::bad_header: return "bad_header";
    case Errc::sampling_exhausted: return "sampling_exhausted";
    case Errc::dimension_mismatch: return "dimension_mismatch";
    case Errc::numerical: return "numerical";
    case Errc::backend: return "backend";
    case Errc::generation: return "generation";
  }
  return "unknown";
}

}  // namespace kgprobe
