#include <fstream>

#include <json.hpp>

#include "binary_io.hpp"
#include "kgprobe/probe.hpp"

namespace kgprobe {
namespace {

constexpr std::string_view kModelMagic = "KGPM";
constexpr std::uint32_t kModelVersion = 1;

}  // namespace

void write_model(const ProbeModel& model, const std::filesystem::path& path) {
  const auto& c = model.config();
  const nlohmann::json header = {
      {"kind", std::string(probe_kind_name(model.kind()))},
      {"dim", model.dim()},
      {"classes", model.num_classes()},
      {"layer", model.layer()},
      {"hidden", model.hidden_width()},
      {"mean", std::vector<double>(model.mean().begin(), model.mean().end())},
      {"scale", std::vector<double>(model.scale().begin(), model.scale().end())},
      {"seed", c.seed},
      {"param_count", model.param_count()},
      {"config",
       {{"batch_size", c.batch_size},
        {"learning_rate", c.learning_rate},
        {"epochs", c.epochs},
        {"weight_decay", c.weight_decay},
        {"hidden_width", c.hidden_width},
        {"standardize", c.standardize},
        {"beta1", c.beta1},
        {"beta2", c.beta2},
        {"epsilon", c.epsilon}}},
  };
  const auto text = header.dump();
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot write " + path.string());
  detail::put_bytes(out, kModelMagic);
  detail::put<std::uint32_t>(out, kModelVersion);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(text.size()));
  detail::put_bytes(out, text);
  for (double p : model.params()) detail::put<float>(out, static_cast<float>(p));
  if (!out) throw Error(Errc::io, "write failed for " + path.string());
}

ProbeModel read_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  if (detail::get_bytes(in, 4, "magic") != kModelMagic) {
    throw Error(Errc::bad_magic, path.string() + ": not a probe model");
  }
  const auto version = detail::get<std::uint32_t>(in, "model version");
  if (version != kModelVersion) {
    throw Error(Errc::version_mismatch, "unsupported model version " + std::to_string(version));
  }
  const auto len = detail::get<std::uint32_t>(in, "header length");
  const auto text = detail::get_bytes(in, len, "model header");
  ProbeModel model;
  try {
    const auto h = nlohmann::json::parse(text);
    model = ProbeModel(parse_probe_kind(h.at("kind").get<std::string>()), h.at("layer").get<int>(),
                       h.at("dim").get<std::size_t>(), h.at("classes").get<std::size_t>(),
                       h.at("hidden").get<std::size_t>());
    model.set_standardization(h.at("mean").get<std::vector<double>>(),
                              h.at("scale").get<std::vector<double>>());
    if (h.at("param_count").get<std::size_t>() != model.param_count()) {
      throw Error(Errc::bad_header, "param_count does not match the model shape");
    }
    auto& c = model.config();
    const auto& cj = h.at("config");
    c.kind = model.kind();
    c.seed = h.at("seed").get<std::uint64_t>();
    c.batch_size = cj.at("batch_size").get<std::size_t>();
    c.learning_rate = cj.at("learning_rate").get<double>();
    c.epochs = cj.at("epochs").get<std::size_t>();
    c.weight_decay = cj.at("weight_decay").get<double>();
    c.hidden_width = cj.at("hidden_width").get<std::size_t>();
    c.standardize = cj.at("standardize").get<bool>();
    c.beta1 = cj.at("beta1").get<double>();
    c.beta2 = cj.at("beta2").get<double>();
    c.epsilon = cj.at("epsilon").get<double>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::bad_header, std::string("model header: ") + e.what());
  }
  for (auto& p : model.params()) p = static_cast<double>(detail::get<float>(in, "model parameters"));
  if (in.peek() != std::char_traits<char>::eof()) {
    throw Error(Errc::count_mismatch, path.string() + ": trailing bytes after parameters");
  }
  return model;
}

}  // namespace kgprobe
