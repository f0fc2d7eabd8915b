#pragma once

#include "pipo/training.hpp"

#include <filesystem>
#include <string>

// Checkpoint container. All integers little-endian:
//
//   "PIPOCKPT"            8-byte magic
//   u32 version           currently 1
//   u32 entry_count
//   entry_count times:
//     u16 name_len, name bytes (UTF-8)
//     u8  dtype           0 = f64, 1 = i64, 2 = text
//     u8  ndim
//     u64 dims[ndim]
//     payload             row-major values (8 bytes each) or dims[0] text bytes
//
// Entries appear in a fixed order (metadata, sampling operator, IRM, modules,
// optimizer moments sorted by parameter name), so save -> load -> save is
// byte-identical.

namespace pipo::training {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace pipo::training
