#pragma once

#include <cstdint>
#include <string>

#include "dualran/model.hpp"

namespace dualran {

// Checkpoint container, all integers little-endian:
//
//   "DRANCKPT"            8-byte magic
//   u32  version          currently 1
//   u64  config hash      FNV-1a 64 of the canonical config text
//   u32  config length, then that many bytes of canonical config text
//   u32  array count
//   per array:
//     u32 name length, name bytes
//     u8  dtype           1 = f32, 2 = f64
//     u32 rank, then rank x u64 extents
//     raw values, row-major
//
// Arrays are written in parameter-registration order.

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointHeader {
  std::uint32_t version = 0;
  std::uint64_t config_hash = 0;
  ModelConfig config;
};

template <typename T>
void save_params(const ModelParams<T>& params, const std::string& path);

/// Reads only the header and embedded config. Raises FormatError on a bad
/// magic, unsupported version, truncation or a config text whose hash does
/// not match the stored one.
CheckpointHeader read_checkpoint_header(const std::string& path);

/// Rebuilds the model from the embedded config. Values stored as the other
/// precision are converted. Nothing is returned unless every array loads.
template <typename T>
ModelParams<T> load_params(const std::string& path);

/// Loads and refuses with a FormatError quoting both hashes unless the stored
/// config hash equals expected.hash().
template <typename T>
ModelParams<T> load_params(const std::string& path, const ModelConfig& expected);

}  // namespace dualran
