#pragma once

// Binary checkpoint, all integers and floats little-endian:
//
//   "PVDCKPT\0"            8 bytes
//   u32 version            currently 1
//   u64 payload_bytes
//   payload:
//     u32 n, n bytes       architecture descriptor (JSON)
//     u32 tensor_count
//     per tensor: u32 name_len, name, u32 rows, u32 cols, rows*cols f32 (row-major)
//     u8 schedule kind (0 linear, 1 warmup), f64 beta_start, f64 beta_end,
//     f64 warmup_frac, u32 T, T x f64 betas
//     u64 training step
//   u32 crc32(payload)
//
// Tensor names and order follow describe_parameters(); see docs/checkpoint.md.

#include <cstdint>
#include <filesystem>

#include "pvd/pvnet.hpp"
#include "pvd/schedule.hpp"

namespace pvd {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ArchConfig arch;
  ParamStore<float> params;
  NoiseSchedule schedule;
  std::uint64_t step = 0;
};

/// Writes to a temporary file beside `path`, then renames it into place.
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

/// Throws CorruptFileError (magic, length, checksum, layout) or VersionError.
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace pvd
