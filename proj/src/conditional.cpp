#include "dsmc/conditional.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "dsmc/kernels.hpp"

namespace dsmc {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

// Sweep index rides in the upper half of the node id, so every sweep draws
// from fresh streams while (level, node, role) keep their structural meaning.
std::uint64_t sweep_node(int node, std::uint32_t sweep) {
  return static_cast<std::uint64_t>(static_cast<std::uint32_t>(node)) |
         (static_cast<std::uint64_t>(sweep) << 32);
}

void check_resampler(Resampler r) {
  if (r != Resampler::multinomial && r != Resampler::rejection_lazy)
    throw std::invalid_argument(
        "conditional sweeps need exchangeable unbiased slot draws: use the "
        "multinomial or rejection-lazy resampler");
}

// Categorical draw from normalized log weights by inverse CDF.
std::size_t select_by_weight(const BlockEstimate& block, RngStream& stream) {
  if (block.weights_uniform) return stream.uniform_index(block.n);
  std::vector<double> w(block.n);
  kernels::vec_exp(block.log_w.data(), block.n, w.data());
  const double u = stream.uniform();
  double cum = 0.0;
  std::size_t last_live = 0;
  for (std::size_t p = 0; p < block.n; ++p) {
    if (w[p] > 0.0) last_live = p;
    cum += w[p];
    if (u < cum) return p;
  }
  return last_live;  // u ~ 1 and rounding: clamp to the last positive weight
}

}  // namespace

BlockEstimate conditional_leaf(const FeynmanKacModel& model, int t,
                               std::size_t n, std::uint64_t seed,
                               std::uint32_t sweep, const double* star) {
  if (n < 2)
    throw std::invalid_argument("conditional_leaf: need n >= 2 slots");
  if (t < 0 || t > model.horizon)
    throw std::invalid_argument("conditional_leaf: time outside 0..horizon");

  BlockEstimate blk;
  blk.a = blk.b = t;
  blk.n = n;
  blk.dim = model.state_dim;
  const auto dim = static_cast<std::size_t>(blk.dim);
  blk.paths.resize(n * dim);
  std::memcpy(blk.paths.data(), star, sizeof(double) * dim);
  RngStream stream(
      {seed, 0, sweep_node(t, sweep), StreamRole::leaf_proposal});
  model.proposal_sampler(t, n - 1, stream, blk.paths.data() + dim);

  blk.log_w.resize(n);
  leaf_weights(model, t, blk.paths.data(), n, blk.log_w.data());
  if (blk.log_w[0] == kNegInf)
    throw std::invalid_argument("conditional_leaf: the reference path has "
                                "zero weight at time " +
                                std::to_string(t));
  const double lse = kernels::log_sum_exp(blk.log_w.data(), n);
  double lo = blk.log_w[0], hi = blk.log_w[0];
  for (std::size_t p = 1; p < n; ++p) {
    lo = std::min(lo, blk.log_w[p]);
    hi = std::max(hi, blk.log_w[p]);
  }
  kernels::add_vec_scalar(blk.log_w.data(), n, -lse, nullptr);
  blk.weights_uniform = (lo == hi);
  blk.log_norm_const = lse - std::log(static_cast<double>(n));
  return blk;
}

BlockEstimate conditional_combine(const FeynmanKacModel& model,
                                  const BlockEstimate& left,
                                  const BlockEstimate& right,
                                  const ConditionalOptions& options, int level,
                                  int node, std::uint32_t sweep) {
  check_resampler(options.resampler);
  auto bundle = make_pair_source(model, left, right);
  const std::size_t n = left.n;
  if (n < 2)
    throw std::invalid_argument("conditional_combine: need n >= 2 slots");
  if (!std::isfinite(bundle.source.log_weight_at(0, 0)))
    throw std::invalid_argument(
        "conditional_combine: the reference pair has zero stitch weight at "
        "cut " +
        std::to_string(right.a));

  const StreamKey key{options.seed, static_cast<std::uint32_t>(level),
                      sweep_node(node, sweep), StreamRole::pair_resample};
  PairSample ps;
  try {
    ps = options.resampler == Resampler::multinomial
             ? multinomial_pairs(bundle.source, n - 1, key)
             : rejection_lazy_pairs(bundle.source, n - 1, key);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(
        "conditional combine at cut " + std::to_string(right.a) + " (times " +
        std::to_string(left.a) + ".." + std::to_string(right.b) +
        "): " + e.what());
  }

  std::vector<std::uint32_t> li(n), ri(n);
  li[0] = 0;
  ri[0] = 0;
  std::memcpy(li.data() + 1, ps.left.data(), sizeof(std::uint32_t) * (n - 1));
  std::memcpy(ri.data() + 1, ps.right.data(), sizeof(std::uint32_t) * (n - 1));

  BlockEstimate out;
  out.a = left.a;
  out.b = right.b;
  out.n = n;
  out.dim = left.dim;
  const auto dim = static_cast<std::size_t>(out.dim);
  out.paths.resize(static_cast<std::size_t>(out.len()) * n * dim);
  for (int t = left.a; t <= left.b; ++t) {
    const double* src = left.time_slab(t);
    double* dst = out.time_slab(t);
    for (std::size_t p = 0; p < n; ++p)
      std::memcpy(dst + p * dim, src + li[p] * dim, sizeof(double) * dim);
  }
  for (int t = right.a; t <= right.b; ++t) {
    const double* src = right.time_slab(t);
    double* dst = out.time_slab(t);
    for (std::size_t p = 0; p < n; ++p)
      std::memcpy(dst + p * dim, src + ri[p] * dim, sizeof(double) * dim);
  }

  out.log_w.assign(n, -std::log(static_cast<double>(n)));
  out.weights_uniform = true;
  out.biased = left.biased || right.biased;
  out.weight_evals =
      left.weight_evals + right.weight_evals + ps.weight_evals + 1;
  if (left.log_norm_const && right.log_norm_const && ps.log_mean_weight)
    out.log_norm_const = *left.log_norm_const + *right.log_norm_const +
                         *ps.log_mean_weight + bundle.log_shift;
  return out;
}

ConditionalResult run_conditional(const FeynmanKacModel& model,
                                  const double* ref,
                                  const ConditionalOptions& options,
                                  std::uint32_t sweep) {
  validate_model(model);
  check_resampler(options.resampler);
  const auto t_start = std::chrono::steady_clock::now();
  const int T = model.horizon;
  const auto dim = static_cast<std::size_t>(model.state_dim);
  const auto schedule = build_schedule(T);

  std::vector<BlockEstimate> cur(T + 1);
  for (std::size_t t = 0; t <= static_cast<std::size_t>(T); ++t)
    cur[t] = conditional_leaf(model, static_cast<int>(t), options.n_particles,
                              options.seed, sweep, ref + t * dim);

  int level = 0;
  std::size_t cursor = 0;
  while (cur.size() > 1) {
    ++level;
    const std::size_t n_pairs = cur.size() / 2;
    const bool odd = cur.size() % 2 != 0;
    std::vector<BlockEstimate> next(n_pairs + (odd ? 1 : 0));
    for (std::size_t k = 0; k < n_pairs; ++k) {
      const SchedulePair& sp = schedule.pairs[cursor + k];
      const BlockEstimate& L = cur[2 * k];
      const BlockEstimate& R = cur[2 * k + 1];
      if (sp.level != level || sp.node != static_cast<int>(k) ||
          sp.left_a != L.a || sp.left_b != L.b || sp.right_b != R.b)
        throw std::logic_error("combine plan and execution diverged");
      next[k] = conditional_combine(model, L, R, options, level,
                                    static_cast<int>(k), sweep);
    }
    if (odd) next.back() = std::move(cur.back());
    cursor += n_pairs;
    cur = std::move(next);
  }

  BlockEstimate root = std::move(cur.front());
  RngStream select_stream({options.seed,
                           static_cast<std::uint32_t>(schedule.levels + 1),
                           static_cast<std::uint64_t>(sweep),
                           StreamRole::star_select});
  const std::size_t chosen = select_by_weight(root, select_stream);

  ConditionalResult out;
  out.path.resize(static_cast<std::size_t>(T + 1) * dim);
  copy_path(root, chosen, out.path.data());
  const auto t_end = std::chrono::steady_clock::now();
  out.meta.horizon = T;
  out.meta.n_particles = options.n_particles;
  out.meta.resampler = std::string(resampler_name(options.resampler));
  out.meta.levels = schedule.levels;
  out.meta.weight_evals = root.weight_evals;
  out.meta.wall_time_ms =
      std::chrono::duration<double, std::milli>(t_end - t_start).count();
  out.meta.log_norm_const = root.log_norm_const;
  out.meta.seed = options.seed;
  out.meta.biased = root.biased;
  return out;
}

std::vector<char> path_changed_times(const double* a, const double* b, int len,
                                     int dim) {
  std::vector<char> changed(len, 0);
  for (int t = 0; t < len; ++t) {
    for (int d = 0; d < dim; ++d) {
      if (a[t * dim + d] != b[t * dim + d]) {
        changed[t] = 1;
        break;
      }
    }
  }
  return changed;
}

}  // namespace dsmc
