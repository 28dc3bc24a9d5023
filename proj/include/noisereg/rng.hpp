#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>

#include "core.hpp"

namespace noisereg {

/// Philox4x32-10 block function (Salmon et al., Random123).
class Philox4x32 {
 public:
  using counter_type = std::array<std::uint32_t, 4>;
  using key_type = std::array<std::uint32_t, 2>;

  static counter_type block(counter_type ctr, key_type key) {
    ctr = round(ctr, key);
    for (int i = 1; i < 10; ++i) {
      key[0] += kWeyl0;
      key[1] += kWeyl1;
      ctr = round(ctr, key);
    }
    return ctr;
  }

 private:
  static constexpr std::uint32_t kMul0 = 0xD2511F53u;
  static constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
  static constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
  static constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

  static counter_type round(const counter_type& c, const key_type& k) {
    const std::uint64_t p0 = std::uint64_t{kMul0} * c[0];
    const std::uint64_t p1 = std::uint64_t{kMul1} * c[2];
    const auto hi0 = static_cast<std::uint32_t>(p0 >> 32), lo0 = static_cast<std::uint32_t>(p0);
    const auto hi1 = static_cast<std::uint32_t>(p1 >> 32), lo1 = static_cast<std::uint32_t>(p1);
    return {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
  }
};

/// Sequential view of one Philox stream. The stream for (seed, mode, path)
/// is the sequence of blocks with counter (n_lo, n_hi, path, mode), n = 0,1,...
/// and key = seed, so distinct index pairs never share a counter.
///
/// Normals use the Marsaglia polar method on 53-bit uniforms.
class RandomStream {
 public:
  RandomStream(const SeedPolicy& policy, std::uint64_t mode_index, std::uint64_t path_index)
      : key_{static_cast<std::uint32_t>(policy.master_seed),
             static_cast<std::uint32_t>(policy.master_seed >> 32)},
        path_(checked_index(path_index, "path_index")),
        mode_(checked_index(mode_index, "mode_index")) {}

  std::uint32_t next_u32() {
    if (pos_ == 4) refill();
    return buffer_[pos_++];
  }

  std::uint64_t next_u64() {
    const std::uint64_t hi = next_u32();
    return (hi << 32) | next_u32();
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double x, y, s;
    do {
      x = 2.0 * uniform() - 1.0;
      y = 2.0 * uniform() - 1.0;
      s = x * x + y * y;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = y * f;
    has_spare_ = true;
    return x * f;
  }

 private:
  static std::uint32_t checked_index(std::uint64_t index, const char* name) {
    if (index > std::numeric_limits<std::uint32_t>::max())
      throw error(errc::invalid_argument, std::string(name) + " exceeds 2^32 - 1");
    return static_cast<std::uint32_t>(index);
  }

  void refill() {
    buffer_ = Philox4x32::block({static_cast<std::uint32_t>(block_), static_cast<std::uint32_t>(block_ >> 32),
                                 path_, mode_},
                                key_);
    ++block_;
    pos_ = 0;
  }

  Philox4x32::key_type key_;
  std::uint32_t path_;
  std::uint32_t mode_;
  std::uint64_t block_ = 0;
  Philox4x32::counter_type buffer_{};
  int pos_ = 4;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

inline RandomStream derive_stream(const SeedPolicy& policy, std::uint64_t mode_index, std::uint64_t path_index) {
  return RandomStream(policy, mode_index, path_index);
}

}  // namespace noisereg
