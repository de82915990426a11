#pragma once

#include <array>
#include <cstddef>
#include <cstdint>

// Counter-based random streams (Philox4x64-10). A stream is addressed by a
// structural key (seed, tree level, node id, role) plus an optional substream
// index; any stream can be constructed independently on any worker, and draw
// counts in one stream never perturb another. This is what makes runs
// bit-reproducible for a fixed seed regardless of worker count or of how many
// draws a rejection loop consumes elsewhere.

namespace dsmc {

enum class StreamRole : std::uint16_t {
  leaf_proposal = 1,
  pair_resample = 2,
  star_select = 3,
  gibbs_param = 4,
  data_sim = 5,
  filter_step = 6,
  backward_sample = 7,
};

struct StreamKey {
  std::uint64_t seed = 0;
  std::uint32_t level = 0;
  std::uint64_t node = 0;
  StreamRole role = StreamRole::leaf_proposal;
};

namespace rng_detail {
// One Philox4x64-10 block (pure function of counter and key).
std::array<std::uint64_t, 4> philox4x64_10(
    const std::array<std::uint64_t, 4>& ctr,
    const std::array<std::uint64_t, 2>& key);
}  // namespace rng_detail

class RngStream {
 public:
  explicit RngStream(const StreamKey& key, std::uint64_t substream = 0);

  std::uint64_t next_u64();
  double uniform();       // [0, 1)
  double uniform_pos();   // (0, 1)
  double normal();        // standard normal, Box-Muller
  std::uint64_t uniform_index(std::uint64_t n);  // uniform on {0..n-1}, n >= 1

  void fill_uniform(double* out, std::size_t n);
  void fill_normal(double* out, std::size_t n);

 private:
  void refill();

  std::array<std::uint64_t, 4> ctr_;
  std::array<std::uint64_t, 2> key_;
  std::array<std::uint64_t, 4> buf_{};
  int pos_ = 4;
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace dsmc
