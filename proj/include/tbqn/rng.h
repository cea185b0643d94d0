#pragma once

#include <cstdint>

namespace tbqn {

// Splitmix64 finalizer. Used to derive independent stream seeds from a master
// seed plus a stream label, so every component (init, dropout, exploration,
// replay sampling, each env) gets its own deterministic sequence.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

// PCG32 generator. Same seed and stream => bit-identical draw sequence on
// every platform; all distribution code below is hand-rolled so no libstdc++
// distribution variance leaks in.
class Rng {
 public:
  explicit Rng(std::uint64_t seed, std::uint64_t stream = 0);

  std::uint32_t next_u32();
  std::uint64_t next_u64();

  // uniform in [0,1), 53-bit resolution
  double uniform();
  double uniform(double lo, double hi);
  // inclusive integer range
  long long uniform_int(long long lo, long long hi);
  // standard normal, Box-Muller with cached spare
  double normal();

 private:
  std::uint64_t state_;
  std::uint64_t inc_;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace tbqn
