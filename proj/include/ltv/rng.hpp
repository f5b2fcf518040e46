#pragma once

#include <array>
#include <cstdint>

namespace ltv {

// Philox4x32-10 block function: (counter, key) -> four 32-bit words.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

// Counter-based random stream. The key is the seed and the stream id occupies
// the upper counter words, so (seed, stream_id) pairs are independent and any
// stream can be created without touching the others.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id);

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream_id() const noexcept { return stream_id_; }

  std::uint64_t next_u64();
  // Uniform on the open interval (0, 1) with 53 bits of resolution.
  double uniform();
  // Integer in [0, n).
  std::uint64_t below(std::uint64_t n);
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }
  double lognormal(double mu, double sigma);
  double exponential(double rate);
  // Gamma with the given shape and scale (mean shape*scale).
  double gamma(double shape, double scale);
  double beta(double a, double b);

  // Derives a child stream keyed on this stream's seed and a tag.
  RngStream substream(std::uint64_t tag) const;

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::uint64_t block_ = 0;
  std::uint64_t spare_ = 0;
  bool has_spare_ = false;
};

// Mixes two 64-bit values into one (splitmix64 finaliser over a combination).
std::uint64_t mix64(std::uint64_t a, std::uint64_t b);

}  // namespace ltv
