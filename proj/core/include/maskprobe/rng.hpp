#pragma once

#include <cstdint>
#include <random>

namespace maskprobe {

/// Named random streams so unrelated consumers of one master seed never overlap.
enum class StreamTag : std::uint64_t {
  kMask = 1,
  kDropOrder = 2,
  kScene = 3,
};

/// Independent generator for (master seed, stream, index). Results depend only
/// on the triple, never on which thread asks or in which order.
std::mt19937_64 substream(std::uint64_t master_seed, StreamTag tag, std::uint64_t index);

/// Uniform double in [0, 1) from 53 random bits; identical on every standard library.
inline double uniform01(std::mt19937_64& gen) {
  return static_cast<double>(gen() >> 11) * 0x1.0p-53;
}

}  // namespace maskprobe
