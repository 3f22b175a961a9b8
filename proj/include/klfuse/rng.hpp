#pragma once

#include <cstdint>
#include <random>

namespace klfuse {

// splitmix64 finalizer; good avalanche, used only for seed derivation.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Purposes for substream derivation. Every random decision in the library
// draws from a stream keyed by (root seed, purpose, index) so that results
// are reproducible and independent of evaluation order.
enum class Stream : std::uint64_t {
  synth_global = 1,
  synth_local = 2,
  synth_data = 3,
  vi_init = 4,
  fusion_init = 5,
  mc_oracle = 6,
};

inline std::mt19937_64 make_stream(std::uint64_t root, Stream purpose,
                                   std::uint64_t index = 0) {
  std::uint64_t s = splitmix64(root ^ splitmix64(static_cast<std::uint64_t>(purpose)));
  s = splitmix64(s ^ splitmix64(index));
  return std::mt19937_64(s);
}

// Per-item root seeds for callers that fan out over datasets or grid cells.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t index) {
  return splitmix64(root ^ splitmix64(index + 0x51ed270b214f4bc5ULL));
}

}  // namespace klfuse
