#include "maskprobe/rng.hpp"

namespace maskprobe {

std::mt19937_64 substream(std::uint64_t master_seed, StreamTag tag, std::uint64_t index) {
  const auto lo = [](std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); };
  const auto hi = [](std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); };
  const auto t = static_cast<std::uint64_t>(tag);
  std::seed_seq seq{lo(master_seed), hi(master_seed), lo(t), hi(t), lo(index), hi(index)};
  return std::mt19937_64(seq);
}

}  // namespace maskprobe
