#pragma once

#include <cstdint>
#include <vector>

#include "dsmc/fk_model.hpp"
#include "dsmc/smoother.hpp"

// Conditional variant of the tree smoother, the path-update kernel of a
// particle Gibbs sampler. A retained reference path occupies slot 0 of every
// leaf and survives every combine (slot 0 is always the pair (0, 0)); the
// other n-1 slots are fresh i.i.d. draws from the full n x n pair table. The
// output path is then selected from the root block by weight. Because the
// fresh slots must be exchangeable, unbiased draws, only the multinomial and
// rejection resamplers are allowed here; systematic (ordered, coupled slots)
// and the MH chain (biased) are rejected at configuration time.

namespace dsmc {

struct ConditionalOptions {
  std::size_t n_particles = 256;  // >= 2: the reference plus fresh draws
  Resampler resampler = Resampler::multinomial;
  std::uint64_t seed = 0;
};

// Leaf population for time t with the reference state in slot 0. Throws
// std::invalid_argument if the reference has zero leaf weight there.
BlockEstimate conditional_leaf(const FeynmanKacModel& model, int t,
                               std::size_t n, std::uint64_t seed,
                               std::uint32_t sweep, const double* star);

// Stitch with slot 0 pinned to the reference pair. Throws
// std::invalid_argument if the reference pair has zero stitch weight.
BlockEstimate conditional_combine(const FeynmanKacModel& model,
                                  const BlockEstimate& left,
                                  const BlockEstimate& right,
                                  const ConditionalOptions& options, int level,
                                  int node, std::uint32_t sweep);

struct ConditionalResult {
  std::vector<double> path;  // (T+1) * dim, the newly selected path
  RunMetadata meta;
};

// One conditional sweep: rebuild the tree around `ref` and select a path from
// the root by weight. Hands back a path distributed per the smoothing
// posterior when `ref` already is (posterior invariance).
ConditionalResult run_conditional(const FeynmanKacModel& model,
                                  const double* ref,
                                  const ConditionalOptions& options,
                                  std::uint32_t sweep);

// Per-time change mask between two paths of the same shape.
std::vector<char> path_changed_times(const double* a, const double* b, int len,
                                     int dim);

}  // namespace dsmc
