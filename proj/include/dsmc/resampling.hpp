#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include "dsmc/rng.hpp"

// Pair resampling over a virtual n x n table of log pair weights. Dense
// variants (multinomial, systematic) materialize the table once, exp-normalize
// it in a single pass, and sample by inversion; lazy variants (MH chain,
// rejection) probe O(n_out) entries and never allocate the table. All variants
// draw from counter-based streams keyed per output slot, so the number of
// evaluations one slot consumes never shifts another slot's draws.

namespace dsmc {

struct PairWeightSource {
  std::size_t n = 0;
  // Writes row i (n entries, may contain -inf, never NaN) into out. Used by
  // the dense variants. Optional if log_weight_at is set.
  std::function<void(std::size_t i, double* out)> fill_row;
  // Single-entry probe, used by the lazy variants (and as a fill_row
  // fallback). Optional if fill_row is set and no lazy variant is used.
  std::function<double(std::size_t i, std::size_t j)> log_weight_at;
  // sup over all n^2 entries of the log weight; required by rejection_lazy.
  std::optional<double> log_upper_bound;
};

struct PairSample {
  std::vector<std::uint32_t> left;   // per output slot, index into left block
  std::vector<std::uint32_t> right;  // per output slot, index into right block
  // log of sum_{i,j} exp(logw[i][j]); a log mean pair weight when the inputs
  // fold normalized block weights in. Dense variants only.
  std::optional<double> log_mean_weight;
  std::uint64_t weight_evals = 0;
  bool biased = false;  // MH chain variant: finite chain length leaves bias
};

// i.i.d. draws from the normalized table; slots are exchangeable.
PairSample multinomial_pairs(const PairWeightSource& src, std::size_t n_out,
                             const StreamKey& key);

// One shared offset, stratified inversion; lower variance, ordered output.
PairSample systematic_pairs(const PairWeightSource& src, std::size_t n_out,
                            const StreamKey& key);

// Per slot m: a Metropolis chain of mh_steps uniform-pair proposals started at
// the identity pair (m % n, m % n). mh_steps == 0 returns the identity pairs
// with zero evaluations. At most n_out * (mh_steps + 1) evaluations.
PairSample mh_lazy_pairs(const PairWeightSource& src, std::size_t n_out,
                         std::size_t mh_steps, const StreamKey& key);

// Per slot: uniform pair proposals accepted with prob exp(logw - bound); exact
// draws from the normalized table. Throws if log_upper_bound is missing or the
// trial cap is exceeded.
PairSample rejection_lazy_pairs(const PairWeightSource& src, std::size_t n_out,
                                const StreamKey& key);

enum class Resampler { multinomial, systematic, mh_lazy, rejection_lazy };

struct IndexSample {
  std::vector<std::uint32_t> idx;  // per output slot, index into the weights
  double log_mean_weight = 0.0;    // log((1/n) sum_i exp(logw[i]))
};

// Single-population counterparts of the pair samplers, for sequential filters:
// n_out draws from the categorical given by unnormalized log weights.
// Throws std::runtime_error when every weight is zero, std::domain_error on
// NaN. Only the dense schemes exist here.
IndexSample multinomial_indices(const double* log_w, std::size_t n,
                                std::size_t n_out, const StreamKey& key);
IndexSample systematic_indices(const double* log_w, std::size_t n,
                               std::size_t n_out, const StreamKey& key);
IndexSample resample_indices(Resampler r, const double* log_w, std::size_t n,
                             std::size_t n_out, const StreamKey& key);

std::optional<Resampler> parse_resampler(std::string_view name);
std::string_view resampler_name(Resampler r);
bool resampler_is_lazy(Resampler r);

PairSample resample_pairs(Resampler r, const PairWeightSource& src,
                          std::size_t n_out, std::size_t mh_steps,
                          const StreamKey& key);

// Raises glibc's mmap/trim thresholds once so the recycled dense buffers stay
// on the heap instead of being unmapped and re-faulted every combine.
void tune_allocator_once();

}  // namespace dsmc
