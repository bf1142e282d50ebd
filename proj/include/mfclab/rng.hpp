#pragma once

#include <array>
#include <cmath>
#include <cstdint>

namespace mfclab {

// Counter-based generator (Philox-4x32-10, Salmon et al. 2011). Every draw is
// addressed by (seed, stream, index), so parallel batches reproduce the same
// numbers regardless of scheduling.
namespace philox {

constexpr std::uint32_t kW32A = 0x9E3779B9u;
constexpr std::uint32_t kW32B = 0xBB67AE85u;
constexpr std::uint32_t kM4x32A = 0xD2511F53u;
constexpr std::uint32_t kM4x32B = 0xCD9E8D57u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi,
                    std::uint32_t& lo) {
  const std::uint64_t p = static_cast<std::uint64_t>(a) * b;
  hi = static_cast<std::uint32_t>(p >> 32);
  lo = static_cast<std::uint32_t>(p);
}

inline std::array<std::uint32_t, 4> block(std::uint64_t key,
                                          std::uint64_t stream,
                                          std::uint64_t index) {
  std::array<std::uint32_t, 4> c = {
      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32),
      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32)};
  std::uint32_t k0 = static_cast<std::uint32_t>(key);
  std::uint32_t k1 = static_cast<std::uint32_t>(key >> 32);
  for (int round = 0; round < 10; ++round) {
    std::uint32_t hi0, lo0, hi1, lo1;
    mulhilo(kM4x32A, c[0], hi0, lo0);
    mulhilo(kM4x32B, c[2], hi1, lo1);
    c = {hi1 ^ c[1] ^ k0, lo1, hi0 ^ c[3] ^ k1, lo0};
    k0 += kW32A;
    k1 += kW32B;
  }
  return c;
}

}  // namespace philox

/// Indexed access to i.i.d. draws: uniform(stream, i) and normal(stream, i)
/// are pure functions of (seed, stream, i).
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t seed) : seed_(seed) {}

  double uniform(std::uint64_t stream, std::uint64_t index) const {
    const auto c = philox::block(seed_, stream, index);
    const std::uint64_t u =
        (static_cast<std::uint64_t>(c[0]) << 32) | c[1];
    // (0,1): top 53 bits, offset half an ulp away from zero
    return static_cast<double>(u >> 11) * 0x1p-53 + 0x1p-54;
  }

  /// Box-Muller pair; each counter block yields normals 2k and 2k+1.
  double normal(std::uint64_t stream, std::uint64_t index) const {
    const std::uint64_t blk = index >> 1;
    const auto c = philox::block(seed_, stream, blk);
    const std::uint64_t ua = (static_cast<std::uint64_t>(c[0]) << 32) | c[1];
    const std::uint64_t ub = (static_cast<std::uint64_t>(c[2]) << 32) | c[3];
    const double u1 = static_cast<double>(ua >> 11) * 0x1p-53 + 0x1p-54;
    const double u2 = static_cast<double>(ub >> 11) * 0x1p-53 + 0x1p-54;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double ang = 6.283185307179586476925286766559 * u2;
    return (index & 1) ? r * std::sin(ang) : r * std::cos(ang);
  }

  std::uint64_t seed() const { return seed_; }

 private:
  std::uint64_t seed_;
};

/// Stream-id layout shared by the solvers. Kinds separate independent noise
/// sources so e.g. a pinned particle never reuses flow increments.
enum class StreamKind : std::uint64_t {
  idiosyncratic = 0,
  common = 1,
  pinned = 2,
  auxiliary = 3,
};

inline std::uint64_t stream_id(StreamKind kind, std::uint64_t path,
                               std::uint64_t particle = 0) {
  return (static_cast<std::uint64_t>(kind) << 58) ^ (path << 24) ^ particle;
}

}  // namespace mfclab
