#include "nerforge/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace nerforge {

double Rng::log_uniform(double lo, double hi) {
  if (lo <= 0.0 || hi < lo) throw std::invalid_argument("log_uniform: need 0 < lo <= hi");
  return std::exp(uniform(std::log(lo), std::log(hi)));
}

Rng derive_rng(uint64_t seed, std::string_view stream_name) {
  // FNV-1a over the stream name, folded into the seed via splitmix.
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : stream_name) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  uint64_t sm = seed ^ h;
  uint64_t derived = splitmix64(sm);
  return Rng(derived);
}

}  // namespace nerforge
