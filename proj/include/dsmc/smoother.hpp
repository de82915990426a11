#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dsmc/fk_model.hpp"
#include "dsmc/resampling.hpp"
#include "dsmc/rng.hpp"

// Divide-and-conquer particle smoother. Every time t gets a leaf population
// drawn from q_t and weighted toward its auxiliary target; adjacent blocks are
// then stitched pairwise, level by level, until one block covers 0..T. Each
// stitch resamples n pairs from the n x n product of block weights and stitch
// weights, so the tree has depth ceil(log2(T+1)) and T combines in total, and
// every combine at a level is independent of its siblings (they can run on
// different workers; streams are keyed by (level, node), so the result is
// bit-identical for a fixed seed regardless of worker count).

namespace dsmc {

// A population of weighted partial paths covering times a..b. Paths are
// stored time-major: slab t is n contiguous state vectors, so the columns a
// stitch needs (last time of the left block, first time of the right block)
// are contiguous.
struct BlockEstimate {
  int a = 0, b = 0;
  std::size_t n = 0;
  int dim = 1;
  std::vector<double> paths;   // (b-a+1) * n * dim, slab-major by time
  std::vector<double> log_w;   // n normalized log weights (logsumexp == 0)
  bool weights_uniform = false;
  // Running log normalizing-constant estimate for this block; unavailable
  // after any lazy combine (lazy resamplers never see the full pair table).
  std::optional<double> log_norm_const;
  bool biased = false;  // some combine below used the MH chain resampler
  std::uint64_t weight_evals = 0;  // stitch evaluations in this subtree

  int len() const { return b - a + 1; }
  const double* time_slab(int t) const {
    return paths.data() + static_cast<std::size_t>(t - a) * n * dim;
  }
  double* time_slab(int t) {
    return paths.data() + static_cast<std::size_t>(t - a) * n * dim;
  }
};

struct SmootherOptions {
  std::size_t n_particles = 256;
  Resampler resampler = Resampler::multinomial;
  std::size_t mh_steps = 16;   // MH chain length per slot (mh-lazy only)
  std::uint64_t seed = 0;
  int n_threads = 1;           // workers per combine level
};

struct RunMetadata {
  int horizon = 0;
  std::size_t n_particles = 0;
  std::string resampler;
  int levels = 0;
  std::uint64_t weight_evals = 0;  // stitch-weight evaluations, all combines
  double wall_time_ms = 0.0;
  std::optional<double> log_norm_const;
  std::uint64_t seed = 0;
  bool biased = false;
};

struct RunResult {
  BlockEstimate root;
  RunMetadata meta;
};

// The level-synchronous combine plan. Blocks are the leaves 0..T packed left;
// at each level adjacent blocks pair up and an odd tail block carries over.
// pairs[k] with level l combines the blocks covering [left_a, left_b] and
// [left_b+1, right_b]; node is the pair's index within its level (the RNG
// address).
struct SchedulePair {
  int level = 0;
  int node = 0;
  int left_a = 0, left_b = 0, right_b = 0;
};

struct CombineSchedule {
  int horizon = 0;
  int levels = 0;
  std::vector<SchedulePair> pairs;  // in execution order, level-major
};

CombineSchedule build_schedule(int horizon);

// Reference depth of the balanced recursive splitting of 0..T; the packed
// schedule must agree with it (both are ceil(log2(T+1))).
int reference_tree_depth(int horizon);

// Leaf population for time t: n proposal draws, normalized log weights, and
// the block's own normalizing-constant estimate (the mean raw weight).
// Throws std::runtime_error if every draw lands on zero weight.
BlockEstimate make_leaf(const FeynmanKacModel& model, int t, std::size_t n,
                        std::uint64_t seed);

// The virtual pair-weight table for stitching L and R at cut c = R.a:
//   logw[i][j] = log omega_c(x_L_i, x_R_j) + log_w_L[i] + log_w_R[j],
// with uniform block weights folded into log_shift instead of the table (the
// sampler is shift-invariant; the shift re-enters the normalizing constant).
// The returned source borrows the blocks and the model: combine-scoped.
struct PairSourceBundle {
  PairWeightSource source;
  double log_shift = 0.0;
};

PairSourceBundle make_pair_source(const FeynmanKacModel& model,
                                  const BlockEstimate& left,
                                  const BlockEstimate& right);

// Stitch two adjacent blocks: resample n pairs and concatenate the selected
// paths. Output weights are uniform. (level, node) address the resampling
// stream; options pick the resampler.
BlockEstimate combine_blocks(const FeynmanKacModel& model,
                             const BlockEstimate& left,
                             const BlockEstimate& right,
                             const SmootherOptions& options, int level,
                             int node);

// The full smoother: leaves, then the packed combine schedule.
RunResult run_smoother(const FeynmanKacModel& model,
                       const SmootherOptions& options);

// Weighted mean of the state at time t under the block's weights.
std::vector<double> weighted_time_mean(const BlockEstimate& block, int t);

// Copy particle p's path (len * dim doubles, time-major for that particle).
void copy_path(const BlockEstimate& block, std::size_t p, double* out);

}  // namespace dsmc
