#pragma once

#include <cstdint>
#include <random>

namespace beamtrack {

using Rng = std::mt19937_64;

// Independent random streams inside one run.
enum class Stream : std::uint64_t {
  initial_state = 1,
  truth_noise = 2,
  power = 3,
  events = 4,
  pdmp = 5,
  property = 6,
};

inline constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for (master seed, station, run index, stream purpose). The controller
/// is deliberately not an input, so every controller sees common random numbers.
inline constexpr std::uint64_t derive_seed(std::uint64_t master, int station, std::uint64_t run,
                                           Stream purpose) {
  std::uint64_t h = splitmix64(master);
  h = splitmix64(h ^ static_cast<std::uint64_t>(station + 1));
  h = splitmix64(h ^ run);
  h = splitmix64(h ^ static_cast<std::uint64_t>(purpose));
  return h;
}

inline Rng make_rng(std::uint64_t master, int station, std::uint64_t run, Stream purpose) {
  return Rng(derive_seed(master, station, run, purpose));
}

}  // namespace beamtrack
