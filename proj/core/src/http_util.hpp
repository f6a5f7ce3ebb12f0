#pragma once

#include <string>
#include <string_view>

#include "kgprobe/error.hpp"

namespace kgprobe::detail {

/// Splits "http://host:port/prefix" into the scheme+authority understood by
/// httplib::Client and a path prefix ("" or "/prefix").
struct UrlParts {
  std::string origin;
  std::string prefix;
};

inline UrlParts split_url(std::string_view url) {
  const auto scheme = url.find("://");
  if (scheme == std::string_view::npos) {
    throw Error(Errc::invalid_argument, "URL must include a scheme: " + std::string(url));
  }
  const auto slash = url.find('/', scheme + 3);
  UrlParts parts;
  if (slash == std::string_view::npos) {
    parts.origin = std::string(url);
  } else {
    parts.origin = std::string(url.substr(0, slash));
    parts.prefix = std::string(url.substr(slash));
    while (!parts.prefix.empty() && parts.prefix.back() == '/') parts.prefix.pop_back();
  }
  return parts;
}

}  // namespace kgprobe::detail
