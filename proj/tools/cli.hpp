#pragma once

#include <iosfwd>

namespace kgprobe::cli {

/// Runs one `kgprobe` invocation. Returns the process exit code: 0 on
/// success, 1 on any error (including an invalid store in validate-store),
/// 2 on a usage error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace kgprobe::cli
