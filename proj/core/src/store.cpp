#include "kgprobe/store.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "binary_io.hpp"

namespace kgprobe {
namespace {

constexpr std::string_view kStoreMagic = "KGPH";

std::string header_json(const StoreHeader& h) {
  nlohmann::json j = {
      {"model", h.model},     {"dim", h.dim},     {"layers", h.layers}, {"count", h.count},
      {"dtype", h.dtype},     {"task", std::string(task_tag_name(h.task))},
      {"labels", h.labels},
  };
  return j.dump();
}

StoreHeader parse_header(std::string_view text) {
  StoreHeader h;
  try {
    const auto j = nlohmann::json::parse(text);
    h.model = j.at("model").get<std::string>();
    h.dim = j.at("dim").get<std::uint32_t>();
    h.layers = j.at("layers").get<std::vector<int>>();
    h.count = j.at("count").get<std::uint64_t>();
    h.dtype = j.at("dtype").get<std::string>();
    h.task = parse_task_tag(j.at("task").get<std::string>());
    h.labels = j.at("labels").get<std::vector<std::string>>();
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::bad_header, std::string("store header: ") + e.what());
  } catch (const Error& e) {
    throw Error(Errc::bad_header, std::string("store header: ") + e.what());
  }
  h.validate();
  return h;
}

void decode_record(const char* bytes, const StoreHeader& h, HiddenStateRecord& rec) {
  std::uint64_t id;
  std::int32_t label;
  std::memcpy(&id, bytes, sizeof id);
  std::memcpy(&label, bytes + 8, sizeof label);
  rec.example_id = detail::to_little(id);
  rec.label = detail::to_little(label);
  rec.states.resize(h.layers.size() * h.dim);
  std::memcpy(rec.states.data(), bytes + 12, rec.states.size() * sizeof(float));
  for (auto& v : rec.states) v = detail::to_little(v);
}

// Reads magic, version and header; returns header and bytes consumed.
std::pair<StoreHeader, std::uint64_t> read_preamble(std::istream& in) {
  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4) throw Error(Errc::truncated, "store shorter than its magic number");
  if (std::string_view(magic, 4) != kStoreMagic) {
    throw Error(Errc::bad_magic, "not a hidden-state store (bad magic)");
  }
  const auto version = detail::get<std::uint32_t>(in, "store version");
  if (version != kStoreVersion) {
    throw Error(Errc::version_mismatch, "unsupported store version " + std::to_string(version));
  }
  const auto len = detail::get<std::uint32_t>(in, "header length");
  const auto text = detail::get_bytes(in, len, "store header");
  return {parse_header(text), 12ull + len};
}

}  // namespace

std::string_view task_tag_name(TaskTag t) noexcept { return t == TaskTag::tc ? "tc" : "rp"; }

TaskTag parse_task_tag(std::string_view s) {
  if (s == "tc") return TaskTag::tc;
  if (s == "rp") return TaskTag::rp;
  throw Error(Errc::invalid_argument, "task must be \"tc\" or \"rp\", got '" + std::string(s) + "'");
}

void StoreHeader::validate() const {
  if (dtype != "f32") throw Error(Errc::bad_header, "unsupported dtype '" + dtype + "'");
  if (dim == 0) throw Error(Errc::bad_header, "dim must be positive");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    if (layers[i] < 1) throw Error(Errc::bad_header, "layer indices must be >= 1");
    if (i > 0 && layers[i] <= layers[i - 1]) {
      throw Error(Errc::bad_header, "layer list must be strictly increasing");
    }
  }
}

bool operator==(const StoreHeader& a, const StoreHeader& b) {
  return a.model == b.model && a.dim == b.dim && a.layers == b.layers && a.count == b.count &&
         a.dtype == b.dtype && a.task == b.task && a.labels == b.labels;
}

HiddenStateStore::HiddenStateStore(StoreHeader header) : header_(std::move(header)) {
  header_.validate();
  header_.count = 0;
}

void HiddenStateStore::add(HiddenStateRecord record) {
  if (record.states.size() != header_.layers.size() * header_.dim) {
    throw Error(Errc::dimension_mismatch,
                "record " + std::to_string(record.example_id) + " has " +
                    std::to_string(record.states.size()) + " values, expected " +
                    std::to_string(header_.layers.size() * header_.dim));
  }
  for (float v : record.states) {
    if (!std::isfinite(v)) {
      throw Error(Errc::numerical,
                  "record " + std::to_string(record.example_id) + " holds a non-finite value");
    }
  }
  if (!header_.labels.empty() &&
      (record.label < 0 || static_cast<std::size_t>(record.label) >= header_.labels.size())) {
    throw Error(Errc::invalid_argument, "record " + std::to_string(record.example_id) +
                                            " label " + std::to_string(record.label) +
                                            " outside the label space");
  }
  records_.push_back(std::move(record));
  header_.count = records_.size();
}

bool HiddenStateStore::has_layer(int layer) const noexcept {
  for (int l : header_.layers) {
    if (l == layer) return true;
  }
  return false;
}

std::size_t HiddenStateStore::layer_slot(int layer) const {
  for (std::size_t i = 0; i < header_.layers.size(); ++i) {
    if (header_.layers[i] == layer) return i;
  }
  throw Error(Errc::invalid_argument, "layer " + std::to_string(layer) + " not in store");
}

std::span<const float> HiddenStateStore::state(std::size_t record, int layer) const {
  const auto slot = layer_slot(layer);
  return std::span<const float>(records_.at(record).states).subspan(slot * header_.dim, header_.dim);
}

std::vector<std::int32_t> HiddenStateStore::labels() const {
  std::vector<std::int32_t> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(r.label);
  return out;
}

HiddenStateStore HiddenStateStore::subset(std::span<const std::size_t> indices) const {
  HiddenStateStore out(header_);
  out.records_.reserve(indices.size());
  for (auto i : indices) out.records_.push_back(records_.at(i));
  out.header_.count = out.records_.size();
  return out;
}

void write_store(const HiddenStateStore& store, std::ostream& out) {
  const auto& h = store.header();
  const auto header = header_json(h);
  detail::put_bytes(out, kStoreMagic);
  detail::put<std::uint32_t>(out, kStoreVersion);
  detail::put<std::uint32_t>(out, static_cast<std::uint32_t>(header.size()));
  detail::put_bytes(out, header);
  for (const auto& r : store.records()) {
    detail::put<std::uint64_t>(out, r.example_id);
    detail::put<std::int32_t>(out, r.label);
    if constexpr (std::endian::native == std::endian::little) {
      out.write(reinterpret_cast<const char*>(r.states.data()),
                static_cast<std::streamsize>(r.states.size() * sizeof(float)));
    } else {
      for (float v : r.states) detail::put<float>(out, v);
    }
  }
  if (!out) throw Error(Errc::io, "store write failed");
}

void write_store(const HiddenStateStore& store, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::io, "cannot write " + path.string());
  write_store(store, out);
}

HiddenStateStore read_store(std::istream& in) {
  auto [header, _] = read_preamble(in);
  const auto expected = header.count;
  HiddenStateStore store(header);
  const auto stride = header.record_stride();
  std::vector<char> buf(stride);
  for (std::uint64_t i = 0; i < expected; ++i) {
    in.read(buf.data(), static_cast<std::streamsize>(stride));
    const auto got = static_cast<std::size_t>(in.gcount());
    if (got == 0) {
      throw Error(Errc::count_mismatch, "header declares " + std::to_string(expected) +
                                            " records but the file holds " + std::to_string(i));
    }
    if (got != stride) {
      throw Error(Errc::truncated, "record " + std::to_string(i) + " is truncated (" +
                                       std::to_string(got) + " of " + std::to_string(stride) +
                                       " bytes)");
    }
    HiddenStateRecord rec;
    decode_record(buf.data(), header, rec);
    store.add(std::move(rec));
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw Error(Errc::count_mismatch,
                "bytes remain after the " + std::to_string(expected) + " declared records");
  }
  return store;
}

HiddenStateStore read_store(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  return read_store(in);
}

StoreReader::StoreReader(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::io, "cannot open " + path.string());
  auto [header, offset] = read_preamble(in);
  header_ = std::move(header);
  payload_offset_ = offset;
  const auto size = std::filesystem::file_size(path);
  const auto want = payload_offset_ + header_.count * header_.record_stride();
  if (size < want) {
    const auto have = (size - payload_offset_) / header_.record_stride();
    const bool partial = (size - payload_offset_) % header_.record_stride() != 0;
    throw Error(partial ? Errc::truncated : Errc::count_mismatch,
                path.string() + ": holds " + std::to_string(have) + " complete records, header declares " +
                    std::to_string(header_.count));
  }
  if (size > want) throw Error(Errc::count_mismatch, path.string() + ": trailing bytes after records");
  fd_ = ::open(path.c_str(), O_RDONLY);
  if (fd_ < 0) throw Error(Errc::io, "cannot open " + path.string());
}

StoreReader::~StoreReader() {
  if (fd_ >= 0) ::close(fd_);
}

HiddenStateRecord StoreReader::read(std::size_t index) const {
  if (index >= header_.count) throw Error(Errc::invalid_argument, "record index out of range");
  const auto stride = header_.record_stride();
  std::vector<char> buf(stride);
  const auto offset = static_cast<off_t>(payload_offset_ + index * stride);
  std::size_t done = 0;
  while (done < stride) {
    const auto n = ::pread(fd_, buf.data() + done, stride - done, offset + static_cast<off_t>(done));
    if (n <= 0) throw Error(Errc::truncated, "short read at record " + std::to_string(index));
    done += static_cast<std::size_t>(n);
  }
  HiddenStateRecord rec;
  decode_record(buf.data(), header_, rec);
  return rec;
}

StoreValidation validate_store(const std::filesystem::path& path) {
  StoreValidation v;
  try {
    const auto store = read_store(path);
    v.header = store.header();
    v.ok = true;
    v.message = "ok: " + std::to_string(store.size()) + " records, " +
                std::to_string(v.header.layers.size()) + " layers, dim " +
                std::to_string(v.header.dim);
  } catch (const Error& e) {
    v.code = e.code();
    v.message = e.what();
  } catch (const std::exception& e) {
    v.code = Errc::io;
    v.message = e.what();
  }
  return v;
}

}  // namespace kgprobe
