#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hfsda/tensor.hpp"

// Versioned binary tensor container used for model checkpoints and for
// externally supplied encoder weights. All integers and floats are
// little-endian.
//
//   offset  size  field
//   0       8     magic "HFSDACKP"
//   8       4     u32 format_version (= 1)
//   12      8     u64 model config hash (FNV-1a 64 of the canonical model config)
//   20      8     u64 epoch
//   28      8     u64 optimizer step
//   36      4     u32 config text length L
//   40      L     run config text (UTF-8, key = value lines; informational)
//   ..      4     u32 tensor count N
//   then N records:
//           4     u32 name length, then name bytes
//           4     u32 rank R, then R x u64 dimensions
//           8*n   f64 values, row-major
//   last    8     u64 FNV-1a 64 checksum of every preceding byte
namespace hfsda::checkpoint {

inline constexpr std::uint32_t kFormatVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor value;
};

struct Checkpoint {
  std::uint64_t config_hash = 0;
  std::uint64_t epoch = 0;
  std::uint64_t step = 0;
  std::string config_text;
  std::vector<NamedTensor> tensors;

  const Tensor* find(const std::string& name) const;
};

std::uint64_t fnv1a64(const void* data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::uint64_t fnv1a64(const std::string& s);

// Writes to a temporary sibling and renames over `path`.
void save(const std::filesystem::path& path, const Checkpoint& ckpt);

// Throws CorruptCheckpoint on truncation, bad magic or checksum mismatch.
Checkpoint load(const std::filesystem::path& path);

// load() followed by a config-hash comparison; throws IncompatibleCheckpoint.
Checkpoint load(const std::filesystem::path& path, std::uint64_t expected_config_hash);

}  // namespace hfsda::checkpoint
