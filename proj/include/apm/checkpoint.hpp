#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "apm/mask.hpp"
#include "apm/unet.hpp"

namespace apm {

// Distinct failure modes of checkpoint loading; tests and callers can match
// on the concrete type.
class CheckpointError : public Error {
 public:
  using Error::Error;
};
class TruncatedFileError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class BadMagicError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class BadVersionError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class DigestMismatchError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class PopcountError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};
class SizeCapError : public CheckpointError {
 public:
  using CheckpointError::CheckpointError;
};

// SHA-256 of the canonical config string; stored in the file header so a
// checkpoint refuses to load against a different model configuration.
std::array<std::uint8_t, 32> config_digest(const UNetConfig& cfg);

// Byte layout (all little-endian, no padding):
//   "APMK" | version u32 (=1) | digest 32B | total_len u64 |
//   base f64[total_len] | task_count u8 |
//   per task: id u8 | popcount u64 | bitset ceil(total_len/8)B (LSB-first) |
//             overrides f64[popcount] | gamma f64
std::vector<std::uint8_t> serialize_checkpoint(const ParameterStore& store,
                                               const UNetConfig& cfg);

// Parses and validates magic, version, digest, lengths, and popcounts.
// Length fields are checked against max_bytes before any allocation.
ParameterStore parse_checkpoint(const std::vector<std::uint8_t>& bytes,
                                const UNetConfig& cfg,
                                std::size_t max_bytes = std::size_t(1) << 30);

void save_checkpoint(const ParameterStore& store, const UNetConfig& cfg,
                     const std::string& path);

ParameterStore load_checkpoint(const std::string& path, const UNetConfig& cfg,
                               std::size_t max_bytes = std::size_t(1) << 30);

}  // namespace apm
