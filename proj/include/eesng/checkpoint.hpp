#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "eesng/supernet.hpp"
#include "eesng/trainer.hpp"

namespace eesng {

// Binary layout (all integers little-endian):
//   "EESN" | u32 version | u32 record count | records... | u64 FNV-1a of all
//   preceding bytes
// record: u32 name length | name | u8 dtype | u32 rank | u64 dims[rank] |
//         u64 payload bytes | payload
enum class DType : std::uint8_t { kText = 0, kF64 = 1, kI64 = 2 };

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Record {
  std::string name;
  DType dtype = DType::kText;
  std::vector<std::uint64_t> shape;
  std::string payload;  // raw little-endian bytes
};

class RecordSet {
 public:
  void add_text(std::string name, std::string_view text);
  void add_f64(std::string name, std::vector<std::uint64_t> shape,
               const std::vector<double>& values);
  void add_i64(std::string name, std::vector<std::uint64_t> shape,
               const std::vector<std::int64_t>& values);

  // Lookups throw kCorruptCheckpoint when the record is missing or has the
  // wrong dtype or element count.
  bool has(std::string_view name) const;
  const Record& get(std::string_view name) const;
  std::string text(std::string_view name) const;
  std::vector<double> f64(std::string_view name, std::size_t count) const;
  std::vector<std::int64_t> i64(std::string_view name, std::size_t count) const;
  std::vector<std::int64_t> i64(std::string_view name) const;

  const std::vector<Record>& records() const { return records_; }

  std::string encode() const;
  // Throws kCorruptCheckpoint on bad magic, unknown version, truncation,
  // checksum mismatch or duplicate names.
  static RecordSet decode(std::string_view bytes);

 private:
  std::vector<Record> records_;
};

// Everything needed to continue training or to search without retraining.
struct Checkpoint {
  // Experiment settings used to rebuild the backend (landscape or task),
  // as key = value text owned by the caller.
  std::string settings;
  SupernetConfig net;
  TrainState state;
  // Neural backend only.
  std::optional<SupernetWeights> weights;
  std::optional<AdamState> adam;

  bool operator==(const Checkpoint& other) const;
};

std::string encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(std::string_view bytes);

// Writes to a sibling temporary file, then renames over `path`.
void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
// kIo when unreadable, kCorruptCheckpoint when malformed.
Checkpoint load_checkpoint(const std::string& path);

// Whole-file helpers shared with the command layer.
std::string read_file(const std::string& path);
void write_file_atomic(const std::string& path, std::string_view contents);

}  // namespace eesng
