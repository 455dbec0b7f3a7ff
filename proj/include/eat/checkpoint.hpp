#pragma once

// Model persistence. Little-endian binary layout, bit-exact:
//   magic "EATCKPT1"
//   u32 format_version (currently 1)
//   u32 config byte count, followed by the key=value config text
//   parameter table, one record per parameter in model order:
//     u32 name byte count, name bytes, u32 ndims, u32 dims..., f32 data
//   u32 crc32 of every preceding byte
// A load reproduces every parameter bitwise and always validates the crc.

#include <filesystem>

#include "eat/model.hpp"

namespace eat {

inline constexpr char kCheckpointMagic[9] = "EATCKPT1";
inline constexpr std::uint32_t kCheckpointVersion = 1;

std::string checkpoint_bytes(const EatModel& model);
EatModel checkpoint_from_bytes(const std::string& bytes);

void save_checkpoint(const EatModel& model, const std::filesystem::path& path);
EatModel load_checkpoint(const std::filesystem::path& path);

}  // namespace eat
