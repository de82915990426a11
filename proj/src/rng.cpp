#include "dsmc/rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dsmc {

namespace rng_detail {

namespace {

constexpr std::uint64_t kM0 = 0xD2E7470EE14C6C93ull;
constexpr std::uint64_t kM1 = 0xCA5A826395121157ull;
constexpr std::uint64_t kW0 = 0x9E3779B97F4A7C15ull;
constexpr std::uint64_t kW1 = 0xBB67AE8584CAA73Bull;

inline void mulhilo(std::uint64_t a, std::uint64_t b, std::uint64_t& lo,
                    std::uint64_t& hi) {
  const unsigned __int128 p = static_cast<unsigned __int128>(a) * b;
  lo = static_cast<std::uint64_t>(p);
  hi = static_cast<std::uint64_t>(p >> 64);
}

}  // namespace

std::array<std::uint64_t, 4> philox4x64_10(
    const std::array<std::uint64_t, 4>& ctr,
    const std::array<std::uint64_t, 2>& key) {
  std::array<std::uint64_t, 4> x = ctr;
  std::uint64_t k0 = key[0], k1 = key[1];
  for (int round = 0; round < 10; ++round) {
    std::uint64_t lo0, hi0, lo1, hi1;
    mulhilo(kM0, x[0], lo0, hi0);
    mulhilo(kM1, x[2], lo1, hi1);
    x = {hi1 ^ x[1] ^ k0, lo1, hi0 ^ x[3] ^ k1, lo0};
    k0 += kW0;
    k1 += kW1;
  }
  return x;
}

}  // namespace rng_detail

RngStream::RngStream(const StreamKey& key, std::uint64_t substream) {
  // ctr[0] is the running block counter; the rest pin the stream identity.
  ctr_ = {0,
          key.node,
          (static_cast<std::uint64_t>(key.level) << 16) |
              static_cast<std::uint64_t>(key.role),
          substream};
  key_ = {key.seed, 0x243F6A8885A308D3ull};
}

void RngStream::refill() {
  buf_ = rng_detail::philox4x64_10(ctr_, key_);
  ++ctr_[0];
  pos_ = 0;
}

std::uint64_t RngStream::next_u64() {
  if (pos_ == 4) refill();
  return buf_[pos_++];
}

double RngStream::uniform() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngStream::uniform_pos() {
  return (static_cast<double>(next_u64() >> 12) + 0.5) * 0x1.0p-52;
}

double RngStream::normal() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_normal_;
  }
  const double u1 = uniform_pos();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  cached_normal_ = r * std::sin(theta);
  has_cached_ = true;
  return r * std::cos(theta);
}

std::uint64_t RngStream::uniform_index(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("uniform_index: n must be >= 1");
  const unsigned __int128 p =
      static_cast<unsigned __int128>(next_u64()) * n;
  return static_cast<std::uint64_t>(p >> 64);
}

void RngStream::fill_uniform(double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = uniform();
}

void RngStream::fill_normal(double* out, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) out[i] = normal();
}

}  // namespace dsmc
