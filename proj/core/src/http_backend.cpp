#include <httplib.h>

#include <json.hpp>

#include "http_util.hpp"
#include "kgprobe/extraction.hpp"

namespace kgprobe {

HttpBackend::HttpBackend(std::string base_url, int num_layers)
    : base_url_(std::move(base_url)), num_layers_(num_layers) {
  detail::split_url(base_url_);
}

std::vector<std::vector<float>> HttpBackend::extract(std::span<const std::string> texts,
                                                     std::span<const int> layers) {
  if (texts.empty()) return {};
  const auto url = detail::split_url(base_url_);
  httplib::Client cli(url.origin);
  cli.set_read_timeout(600, 0);

  const nlohmann::json body = {{"texts", std::vector<std::string>(texts.begin(), texts.end())},
                               {"layers", std::vector<int>(layers.begin(), layers.end())},
                               {"last_token_only", true}};
  auto res = cli.Post(url.prefix + "/v1/hidden_states", body.dump(), "application/json");
  if (!res) throw Error(Errc::backend, "hidden-state request failed: " + httplib::to_string(res.error()));

  if (res->status == 413 && texts.size() > 1) {
    const auto half = texts.size() / 2;
    auto out = extract(texts.first(half), layers);
    auto rest = extract(texts.subspan(half), layers);
    for (auto& v : rest) out.push_back(std::move(v));
    return out;
  }
  if (res->status == 400) {
    throw Error(Errc::invalid_argument, "hidden-state server rejected the request (400): " + res->body);
  }
  if (res->status != 200) {
    throw Error(Errc::backend, "hidden-state server returned HTTP " + std::to_string(res->status));
  }

  std::vector<std::vector<float>> out;
  try {
    const auto doc = nlohmann::json::parse(res->body);
    const auto dim = doc.at("dim").get<std::size_t>();
    if (doc.at("layers").get<std::vector<int>>() != std::vector<int>(layers.begin(), layers.end())) {
      throw Error(Errc::backend, "server answered for different layers");
    }
    if (dim_ != 0 && dim != dim_) {
      throw Error(Errc::dimension_mismatch, "server dimension changed from " + std::to_string(dim_) +
                                                " to " + std::to_string(dim));
    }
    dim_ = dim;
    model_ = doc.at("model").get<std::string>();
    const auto& states = doc.at("states");
    if (states.size() != texts.size()) throw Error(Errc::backend, "server returned wrong state count");
    for (const auto& per_text : states) {
      if (per_text.size() != layers.size()) throw Error(Errc::backend, "server returned wrong layer count");
      std::vector<float> flat;
      flat.reserve(layers.size() * dim);
      for (const auto& vec : per_text) {
        if (vec.size() != dim) throw Error(Errc::dimension_mismatch, "state vector has wrong length");
        for (const auto& x : vec) flat.push_back(x.get<float>());
      }
      out.push_back(std::move(flat));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::backend, std::string("malformed hidden-state response: ") + e.what());
  }
  return out;
}

}  // namespace kgprobe
