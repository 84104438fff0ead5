#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "cdu/nn.hpp"

namespace cdu {

/// Versioned binary container for named real-valued layers.
///
/// Layout (all integers and floats little-endian):
///
///   bytes  0..7   magic "CDUCKPT\0"
///   u32           format version (currently 1)
///   u32 + bytes   tag: content kind, e.g. "decoupled", "neuralcdm", "importance:fim"
///   u32 + bytes   metadata: free-form UTF-8 text (JSON for models)
///   u64           rng seed
///   u32           layer count
///   per layer:
///     u32 + bytes id
///     u32         rank
///     u64 x rank  dimensions
///     f64 x prod(dimensions) values (IEEE-754 binary64)
///
/// Encoding is a pure function of the contents, so equal checkpoints are
/// byte-identical and decode(encode(c)) == c bit-for-bit.
struct Checkpoint {
  std::string tag;
  std::string metadata;
  std::uint64_t seed = 0;
  LayeredArray layers;

  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
/// Throws ParseError on a truncated or foreign buffer.
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace cdu
