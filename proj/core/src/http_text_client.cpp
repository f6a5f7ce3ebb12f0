#include <httplib.h>

#include <json.hpp>

#include "http_util.hpp"
#include "kgprobe/descgen.hpp"

namespace kgprobe {

HttpTextClient::HttpTextClient(std::string base_url, std::string model, int max_tokens)
    : base_url_(std::move(base_url)), model_(std::move(model)), max_tokens_(max_tokens) {
  detail::split_url(base_url_);
}

std::string HttpTextClient::generate(std::string_view prompt) {
  const auto url = detail::split_url(base_url_);
  httplib::Client cli(url.origin);
  cli.set_read_timeout(120, 0);
  const nlohmann::json body = {{"model", model_},
                               {"prompt", std::string(prompt)},
                               {"max_tokens", max_tokens_},
                               {"temperature", 0}};
  auto res = cli.Post(url.prefix + "/v1/completions", body.dump(), "application/json");
  if (!res) {
    throw Error(Errc::generation, "completion request failed: " + httplib::to_string(res.error()));
  }
  if (res->status != 200) {
    throw Error(Errc::generation, "completion endpoint returned HTTP " + std::to_string(res->status));
  }
  try {
    const auto doc = nlohmann::json::parse(res->body);
    return doc.at("choices").at(0).at("text").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::generation, std::string("malformed completion response: ") + e.what());
  }
}

}  // namespace kgprobe
