#include "fedq/rng.hpp"

namespace fedq {

namespace {

constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_stream_key(std::uint64_t master_seed, const StreamPath& path) noexcept {
  std::uint64_t h = splitmix64(master_seed);
  h = splitmix64(h ^ static_cast<std::uint64_t>(path.purpose));
  h = splitmix64(h ^ path.agent);
  h = splitmix64(h ^ path.round);
  h = splitmix64(h ^ path.epoch);
  return h;
}

RngStream::RngStream(std::uint64_t master_seed, const StreamPath& path)
    : key_(derive_stream_key(master_seed, path)), engine_(key_) {}

RngStream::RngStream(std::uint64_t seed) : key_(splitmix64(seed)), engine_(key_) {}

// Top 53 bits scaled to [0, 1). std::generate_canonical can round up to 1.0
// on some standard libraries.
double RngStream::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

double RngStream::gaussian() { return normal_(engine_); }

}  // namespace fedq
