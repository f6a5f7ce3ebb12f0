#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace kgprobe {

/// Error categories surfaced by the library. Each value maps to a stable
/// machine-readable name (see `errc_name`) used by the CLI's JSON errors.
enum class Errc {
  invalid_argument,
  io,
  parse,
  bad_magic,
  version_mismatch,
  truncated,
  count_mismatch,
  bad_header,
  sampling_exhausted,
  dimension_mismatch,
  numerical,
  backend,
  generation,
};

std::string_view errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace kgprobe
