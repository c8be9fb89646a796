#pragma once

// Binary checkpoint, little-endian throughout:
//   "LAPW" | u32 version | u32 tensor count
//   per tensor: u16 name length, name bytes, u8 dtype (0 = f32), u8 ndim,
//               ndim x u32 dims, f32 payload
//   u32 config length, config text
// The config text is the network config followed by `epoch` and `seed` lines.

#include "lap/network.hpp"

#include <cstdint>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace lap {

enum class CheckpointErrorCode { Io, BadMagic, BadVersion, Truncated, CountMismatch, BadRecord, ShapeMismatch };

std::string_view to_string(CheckpointErrorCode code);

class CheckpointError : public std::runtime_error {
 public:
  CheckpointError(CheckpointErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}
  CheckpointErrorCode code() const { return code_; }

 private:
  CheckpointErrorCode code_;
};

struct NamedTensor {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  friend bool operator==(const NamedTensor&, const NamedTensor&) = default;
};

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  std::vector<NamedTensor> tensors;
  NetworkConfig config;
  std::int64_t epoch = 0;
  std::uint64_t seed = 0;

  const NamedTensor* find(const std::string& name) const;
};

/// Every parameter and buffer of the network, narrowed to f32.
Checkpoint capture(LapNet& net, std::int64_t epoch, std::uint64_t seed);
/// Copies tensors into `net`; names and shapes must match exactly.
void restore(const Checkpoint& ckpt, LapNet& net);
/// Builds a network from the embedded config and restores it.
std::unique_ptr<LapNet> instantiate(const Checkpoint& ckpt);

std::vector<std::uint8_t> serialize(const Checkpoint& ckpt);
Checkpoint deserialize(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace lap
