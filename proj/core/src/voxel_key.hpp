#pragma once

#include <cstdint>

#include <fmt/format.h>

#include "maskprobe/errors.hpp"

namespace maskprobe::detail {

// Integer voxel coordinates packed 21 bits per axis into one sortable key.
inline constexpr std::int64_t kKeyOffset = std::int64_t{1} << 20;
inline constexpr std::uint64_t kKeyMask = (std::uint64_t{1} << 21) - 1;

struct VoxelIndex {
  std::int64_t x, y, z;
};

inline std::uint64_t pack(const VoxelIndex& v) {
  const auto field = [](std::int64_t i) {
    const std::int64_t shifted = i + kKeyOffset;
    if (shifted < 0 || shifted > static_cast<std::int64_t>(kKeyMask)) {
      throw InvalidArgument(fmt::format("voxel index {} outside the representable grid", i));
    }
    return static_cast<std::uint64_t>(shifted);
  };
  return (field(v.x) << 42) | (field(v.y) << 21) | field(v.z);
}

inline VoxelIndex unpack(std::uint64_t key) {
  return {static_cast<std::int64_t>((key >> 42) & kKeyMask) - kKeyOffset,
          static_cast<std::int64_t>((key >> 21) & kKeyMask) - kKeyOffset,
          static_cast<std::int64_t>(key & kKeyMask) - kKeyOffset};
}

}  // namespace maskprobe::detail
