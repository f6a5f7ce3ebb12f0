#pragma once

/**
 * @file store.hpp
 * Hidden-state store (.kgph), little-endian:
 *
 *   bytes 0-3   magic "KGPH"
 *   u32         version (1)
 *   u32         header_length
 *   header_length bytes of UTF-8 JSON:
 *               {model, dim, layers:[..], count, dtype:"f32", task:"tc"|"rp", labels:[..]}
 *   count records, each:
 *               u64 example_id, i32 label, then per header layer in order: dim x f32
 *
 * Records have a fixed stride, so readers can seek to any record directly.
 */

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "kgprobe/error.hpp"

namespace kgprobe {

enum class TaskTag { tc, rp };

std::string_view task_tag_name(TaskTag t) noexcept;
TaskTag parse_task_tag(std::string_view s);

inline constexpr std::uint32_t kStoreVersion = 1;

struct StoreHeader {
  std::string model;
  std::uint32_t dim = 0;
  std::vector<int> layers;
  std::uint64_t count = 0;
  std::string dtype = "f32";
  TaskTag task = TaskTag::tc;
  /// Label space; label k of a record names labels[k].
  std::vector<std::string> labels;

  /// Layers strictly increasing and >= 1, dim > 0, dtype f32.
  void validate() const;
  std::size_t record_stride() const noexcept {
    return sizeof(std::uint64_t) + sizeof(std::int32_t) + layers.size() * dim * sizeof(float);
  }
};

bool operator==(const StoreHeader& a, const StoreHeader& b);

struct HiddenStateRecord {
  std::uint64_t example_id = 0;
  std::int32_t label = 0;
  /// Layer-major: states for header.layers[0], then layers[1], ...
  std::vector<float> states;

  friend bool operator==(const HiddenStateRecord&, const HiddenStateRecord&) = default;
};

class HiddenStateStore {
 public:
  HiddenStateStore() = default;
  /// `header.count` is ignored and tracks the number of added records.
  explicit HiddenStateStore(StoreHeader header);

  const StoreHeader& header() const noexcept { return header_; }
  std::span<const HiddenStateRecord> records() const noexcept { return records_; }
  const HiddenStateRecord& record(std::size_t i) const { return records_.at(i); }
  std::size_t size() const noexcept { return records_.size(); }
  std::size_t dim() const noexcept { return header_.dim; }
  std::size_t num_classes() const noexcept { return header_.labels.size(); }

  /// Rejects wrong sizes, non-finite values, and labels outside the label space.
  void add(HiddenStateRecord record);

  bool has_layer(int layer) const noexcept;
  std::size_t layer_slot(int layer) const;
  std::span<const float> state(std::size_t record, int layer) const;
  std::vector<std::int32_t> labels() const;

  HiddenStateStore subset(std::span<const std::size_t> indices) const;

 private:
  StoreHeader header_;
  std::vector<HiddenStateRecord> records_;
};

void write_store(const HiddenStateStore& store, std::ostream& out);
void write_store(const HiddenStateStore& store, const std::filesystem::path& path);

/// Throws Error with Errc::bad_magic, version_mismatch, bad_header,
/// truncated or count_mismatch. Never returns a partial record.
HiddenStateStore read_store(std::istream& in);
HiddenStateStore read_store(const std::filesystem::path& path);

/// Random access by record index via positional reads; safe to call
/// `read` from several threads at once.
class StoreReader {
 public:
  explicit StoreReader(const std::filesystem::path& path);
  ~StoreReader();
  StoreReader(const StoreReader&) = delete;
  StoreReader& operator=(const StoreReader&) = delete;

  const StoreHeader& header() const noexcept { return header_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(header_.count); }
  HiddenStateRecord read(std::size_t index) const;

 private:
  int fd_ = -1;
  StoreHeader header_;
  std::uint64_t payload_offset_ = 0;
};

struct StoreValidation {
  bool ok = false;
  Errc code = Errc::io;
  std::string message;
  StoreHeader header;
};

/// Full read plus finiteness checks; never throws.
StoreValidation validate_store(const std::filesystem::path& path);

}  // namespace kgprobe
