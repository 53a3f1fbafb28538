#pragma once

// Binary checkpoint, all integers and floats little-endian:
//
//   "TSEG"  u32 version
//   u32 input_size  u32 layer_count  { u8 kind u32 filters u32 kh u32 kw u32 in u32 factor }*
//   u32 param_layers { u64 n_weights f32[n_weights] u64 n_bias f32[n_bias] }*
//   u32 epoch  f64 best_test_iou  u64 seed  u32 config_len  char[config_len]
//
// Nothing may follow the config echo.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "triseg/error.hpp"
#include "triseg/model.hpp"

namespace triseg {

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class CheckpointErrc {
  io,
  bad_magic,
  unsupported_version,
  truncated,
  fingerprint_mismatch,
  corrupt,
};

const char* to_string(CheckpointErrc c);

class CheckpointError : public DataError {
 public:
  CheckpointError(CheckpointErrc code, const std::string& what)
      : DataError(std::string(to_string(code)) + ": " + what), code_(code) {}
  CheckpointErrc code() const { return code_; }

 private:
  CheckpointErrc code_;
};

struct CheckpointMeta {
  std::uint32_t epoch = 0;
  double best_test_iou = 0.0;
  std::uint64_t seed = 0;
  std::string config_json;  // resolved training configuration echo

  friend bool operator==(const CheckpointMeta&, const CheckpointMeta&) = default;
};

struct Checkpoint {
  TriChannelNet<float> net;
  CheckpointMeta meta;
};

std::vector<std::uint8_t> encode_checkpoint(const TriChannelNet<float>& net, const CheckpointMeta& meta);
/// Validates against `expected` (default: the production 100x100 architecture).
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes,
                             const std::optional<Fingerprint>& expected = std::nullopt);

void save_checkpoint(const TriChannelNet<float>& net, const CheckpointMeta& meta,
                     const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::optional<Fingerprint>& expected = std::nullopt);

}  // namespace triseg
