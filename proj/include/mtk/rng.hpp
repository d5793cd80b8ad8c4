#pragma once

#include <array>
#include <cstdint>

namespace mtk {

/// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
///
/// A stream is identified by (seed, purpose, substream); the block counter
/// enumerates 128-bit outputs within it. Counter layout:
///   word 0,1 : block index (low, high)
///   word 2   : substream (e.g. task index, policy slot)
///   word 3   : purpose tag
/// Key layout: (seed low 32 bits, seed high 32 bits).
/// Any implementation of Philox4x32-10 reproduces these streams bit for bit.
using PhiloxBlock = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

PhiloxBlock philox4x32_10(PhiloxBlock counter, PhiloxKey key);

enum class StreamPurpose : std::uint32_t {
  kEnvironment = 1,  // task weights and candidate pool
  kTaskSequence = 2,  // nature-revealed tasks (online mode)
  kNoise = 3,         // observation noise
  kQuery = 4,         // randomized query rules (uniform-al)
  kTest = 99,         // test fixtures
};

class Stream {
 public:
  Stream(std::uint64_t seed, StreamPurpose purpose, std::uint32_t substream = 0);

  std::uint32_t next_u32();
  std::uint64_t next_u64();
  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  /// Uniform on (0, 1]; safe as a log argument.
  double uniform_pos();
  /// Standard normal via Box-Muller; consumes exactly two uniforms (no caching).
  double normal();
  /// Uniform integer in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n);

  std::uint64_t blocks_consumed() const { return block_; }

 private:
  void refill();

  PhiloxKey key_;
  std::uint32_t substream_;
  std::uint32_t purpose_;
  std::uint64_t block_ = 0;
  PhiloxBlock buffer_{};
  int pos_ = 4;
};

}  // namespace mtk
