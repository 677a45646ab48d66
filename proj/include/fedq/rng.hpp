#pragma once

#include <cstdint>
#include <random>

namespace fedq {

/// What a stream is used for. Part of the derivation key so that the
/// environment samples and the compressor coin flips of one agent/round never
/// share a sequence.
enum class StreamPurpose : std::uint32_t {
  Environment = 1,
  Compressor = 2,
  Test = 3,
};

struct StreamPath {
  StreamPurpose purpose = StreamPurpose::Environment;
  std::uint64_t agent = 0;
  std::uint64_t round = 0;
  std::uint64_t epoch = 0;

  friend bool operator==(const StreamPath&, const StreamPath&) = default;
};

/// Hash of (master seed, path) used to seed one stream. Every coordinate of
/// the path goes through a full SplitMix64 finalizer, so neighbouring paths
/// give unrelated keys.
std::uint64_t derive_stream_key(std::uint64_t master_seed, const StreamPath& path) noexcept;

/// A random stream owned by exactly one worker. Identical (seed, path) pairs
/// always reproduce identical sequences, independent of which thread or in
/// which order streams are created.
class RngStream {
 public:
  RngStream(std::uint64_t master_seed, const StreamPath& path);

  /// Plain seeded stream, for tests and one-off sampling.
  explicit RngStream(std::uint64_t seed);

  /// Uniform on [0, 1).
  double uniform();

  /// Standard normal draw.
  double gaussian();

  std::uint64_t key() const noexcept { return key_; }

 private:
  std::uint64_t key_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace fedq
