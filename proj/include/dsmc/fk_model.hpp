#pragma once

#include <cstddef>
#include <functional>
#include <optional>

#include "dsmc/rng.hpp"

// Feynman-Kac path model with independent per-time proposals. The smoothing
// target is P_0(dx_0) h_0(x_0) prod_t P_t(dx_t|x_{t-1}) h_t(x_t), normalized.
// Each time t also carries an auxiliary density nu_t (the block-level target
// that leaf t is importance-weighted toward) and a proposal density q_t that
// leaf particles are drawn from. Blocks are later stitched at their cut time c
// with the weight p_c(x_c|x_{c-1}) h_c(x_c) / nu_c(x_c).
//
// States are flat double arrays of length state_dim; densities are log-scale
// and may return -inf (dead point). NaN anywhere is invalid input and raises.

namespace dsmc {

// Fills one dense row of stitch weights:
//   out[j] = log omega_c(x_prev, X_c^j) + extra_base[j] + log_add
// for the j-th right-hand particle (extra_base bound at factory time, both
// optional additive log-weight corrections), returning max_j out[j]. The max
// rides along for free in the fill pass and is exactly the shift the dense
// table needs, so combines avoid a second scan of every row. A row of all
// -inf returns -inf; a NaN entry raises std::domain_error after the row is
// written.
using StitchRowFn =
    std::function<double(const double* x_prev, double log_add, double* out)>;

// Fills one dense row of transition log-densities against a fixed slab of
// previous-time particles: out[j] = log p_t(x_cur | prev_j). The backward pass
// of sequential smoothers runs on rows of this shape.
using TransitionRowFn = std::function<void(const double* x_cur, double* out)>;

struct FeynmanKacModel {
  int state_dim = 1;
  int horizon = 0;  // T; times run 0..T

  // q_t: batch sampler of `count` draws (out has count*state_dim doubles) and
  // pointwise log-density.
  std::function<void(int t, std::size_t count, RngStream& stream, double* out)>
      proposal_sampler;
  std::function<double(int t, const double* x)> proposal_logdensity;

  // nu_t for t >= 1 (t = 0 never queries it: the leaf-0 target is h_0 * P_0).
  std::function<double(int t, const double* x)> aux_logdensity;

  // log h_t, t = 0..T.
  std::function<double(int t, const double* x)> log_potential;

  // log p_t(x_cur | x_prev), t = 1..T.
  std::function<double(int t, const double* x_prev, const double* x_cur)>
      transition_logdensity;

  // log dP_0.
  std::function<double(const double* x)> init_logdensity;

  // Optional conditional sampler (bootstrap filtering, data simulation).
  std::function<void(int t, const double* x_prev, RngStream& stream,
                     double* out)>
      transition_sampler;

  // Optional fast paths. stitch_row_factory binds the right-hand particle
  // slab once per combine (precomputing per-particle terms, folding in
  // extra_base when non-null) and returns a per-row filler; absent, the
  // combine falls back to the scalar callbacks.
  std::function<StitchRowFn(int c, const double* right_particles,
                            std::size_t n, const double* extra_base)>
      stitch_row_factory;
  std::function<void(int t, const double* particles, std::size_t n,
                     double* out)>
      init_weight_batch;

  // Optional sup over (x_prev, x_cur) of log omega_c; required by the
  // rejection-lazy resampler.
  std::function<double(int c)> log_stitch_bound;

  // Optional batched backward evaluator: binds the time-(t-1) particle slab
  // once and returns a row filler over it; absent, callers fall back to the
  // scalar transition density.
  std::function<TransitionRowFn(int t, const double* prev_particles,
                                std::size_t n)>
      transition_row_factory;
};

// Throws std::invalid_argument when required callables are missing or
// dimensions are nonsensical.
void validate_model(const FeynmanKacModel& model);

// Leaf importance weight at time t for a draw from q_t:
//   t == 0:  log h_0(x) + log dP_0(x) - log q_0(x)
//   t >= 1:  log nu_t(x) - log q_t(x)
// -inf is a dead particle; NaN raises std::invalid_argument.
double log_init_weight(const FeynmanKacModel& model, int t, const double* x);

// Stitch weight log omega_c = log p_c(x_cur|x_prev) + log h_c(x_cur)
//                             - log nu_c(x_cur), c in 1..T.
double log_stitch_weight(const FeynmanKacModel& model, int c,
                         const double* x_prev, const double* x_cur);

// Row filler for a dense combine at cut c against a fixed right-hand slab;
// uses the model's factory when present, otherwise the scalar fallback.
StitchRowFn make_stitch_row(const FeynmanKacModel& model, int c,
                            const double* right_particles, std::size_t n);

// Batch leaf weights (model fast path or scalar fallback).
void leaf_weights(const FeynmanKacModel& model, int t, const double* particles,
                  std::size_t n, double* out);

// Row filler of log p_t(x_cur | prev_j) over a fixed previous-time slab;
// uses the model's factory when present, otherwise the scalar fallback.
TransitionRowFn make_transition_row(const FeynmanKacModel& model, int t,
                                    const double* prev_particles,
                                    std::size_t n);

}  // namespace dsmc
