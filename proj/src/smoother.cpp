#include "dsmc/smoother.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstring>
#include <exception>
#include <limits>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "dsmc/kernels.hpp"

namespace dsmc {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void parallel_for(std::size_t count, int threads,
                  const std::function<void(std::size_t)>& fn) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  const std::size_t workers =
      std::min<std::size_t>(static_cast<std::size_t>(threads), count);
  std::atomic<std::size_t> cursor{0};
  std::mutex err_mutex;
  std::exception_ptr first_error;
  auto body = [&] {
    for (;;) {
      const std::size_t i = cursor.fetch_add(1, std::memory_order_relaxed);
      if (i >= count) return;
      try {
        fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(body);
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

void gather_slab(const double* src, const std::uint32_t* idx, std::size_t n,
                 int dim, double* dst) {
  if (dim == 1) {
    for (std::size_t p = 0; p < n; ++p) dst[p] = src[idx[p]];
    return;
  }
  for (std::size_t p = 0; p < n; ++p)
    std::memcpy(dst + p * dim, src + static_cast<std::size_t>(idx[p]) * dim,
                sizeof(double) * dim);
}

}  // namespace

CombineSchedule build_schedule(int horizon) {
  if (horizon < 0)
    throw std::invalid_argument("build_schedule: horizon must be >= 0");
  CombineSchedule s;
  s.horizon = horizon;
  std::vector<std::pair<int, int>> blocks(horizon + 1);
  for (int t = 0; t <= horizon; ++t) blocks[t] = {t, t};
  while (blocks.size() > 1) {
    ++s.levels;
    std::vector<std::pair<int, int>> next;
    next.reserve((blocks.size() + 1) / 2);
    int node = 0;
    for (std::size_t i = 0; i + 1 < blocks.size(); i += 2) {
      s.pairs.push_back({s.levels, node++, blocks[i].first, blocks[i].second,
                         blocks[i + 1].second});
      next.emplace_back(blocks[i].first, blocks[i + 1].second);
    }
    if (blocks.size() % 2) next.push_back(blocks.back());
    blocks.swap(next);
  }
  return s;
}

int reference_tree_depth(int horizon) {
  if (horizon < 0)
    throw std::invalid_argument("reference_tree_depth: horizon must be >= 0");
  // Balanced recursion splitting k leaves into ceil(k/2) and floor(k/2).
  const std::function<int(int)> depth = [&](int k) {
    if (k <= 1) return 0;
    return 1 + std::max(depth((k + 1) / 2), depth(k / 2));
  };
  return depth(horizon + 1);
}

BlockEstimate make_leaf(const FeynmanKacModel& model, int t, std::size_t n,
                        std::uint64_t seed) {
  if (n == 0) throw std::invalid_argument("make_leaf: n must be >= 1");
  if (n > 0xffffffffu)
    throw std::invalid_argument("make_leaf: n exceeds the 32-bit index range");
  if (t < 0 || t > model.horizon)
    throw std::invalid_argument("make_leaf: time outside 0..horizon");

  BlockEstimate blk;
  blk.a = blk.b = t;
  blk.n = n;
  blk.dim = model.state_dim;
  blk.paths.resize(n * static_cast<std::size_t>(blk.dim));
  RngStream stream({seed, 0, static_cast<std::uint64_t>(t),
                    StreamRole::leaf_proposal});
  model.proposal_sampler(t, n, stream, blk.paths.data());

  blk.log_w.resize(n);
  leaf_weights(model, t, blk.paths.data(), n, blk.log_w.data());
  const double lse = kernels::log_sum_exp(blk.log_w.data(), n);
  if (lse == kNegInf)
    throw std::runtime_error("leaf " + std::to_string(t) +
                             ": every proposal draw has zero weight");
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

PairSourceBundle make_pair_source(const FeynmanKacModel& model,
                                  const BlockEstimate& left,
                                  const BlockEstimate& right) {
  if (left.b + 1 != right.a)
    throw std::invalid_argument("make_pair_source: blocks are not adjacent");
  if (left.n != right.n || left.n == 0)
    throw std::invalid_argument("make_pair_source: block sizes differ");
  if (left.dim != right.dim)
    throw std::invalid_argument("make_pair_source: block dims differ");

  const int c = right.a;
  const std::size_t n = left.n;
  const int dim = left.dim;
  const double* xl = left.time_slab(left.b);
  const double* xr = right.time_slab(right.a);
  const double* lw_l = left.weights_uniform ? nullptr : left.log_w.data();
  const double* lw_r = right.weights_uniform ? nullptr : right.log_w.data();

  PairSourceBundle bundle;
  bundle.source.n = n;
  StitchRowFn row = make_stitch_row(model, c, xr, n);
  bundle.source.fill_row = [row, xl, lw_l, lw_r, n, dim](std::size_t i,
                                                         double* out) {
    row(xl + i * dim, out);
    const double s = lw_l ? lw_l[i] : 0.0;
    if (lw_r)
      kernels::add_vec_scalar(out, n, s, lw_r);
    else if (s != 0.0)
      kernels::add_vec_scalar(out, n, s, nullptr);
  };
  const FeynmanKacModel* mp = &model;
  bundle.source.log_weight_at = [mp, c, xl, xr, lw_l, lw_r, dim](
                                    std::size_t i, std::size_t j) {
    double v = log_stitch_weight(*mp, c, xl + i * dim, xr + j * dim);
    if (lw_l) v += lw_l[i];
    if (lw_r) v += lw_r[j];
    return v;
  };
  if (model.log_stitch_bound) {
    double b = model.log_stitch_bound(c);
    if (lw_l) b += kernels::reduce_max(lw_l, n);
    if (lw_r) b += kernels::reduce_max(lw_r, n);
    bundle.source.log_upper_bound = b;
  }
  const double logn = std::log(static_cast<double>(n));
  bundle.log_shift = (left.weights_uniform ? -logn : 0.0) +
                     (right.weights_uniform ? -logn : 0.0);
  return bundle;
}

BlockEstimate combine_blocks(const FeynmanKacModel& model,
                             const BlockEstimate& left,
                             const BlockEstimate& right,
                             const SmootherOptions& options, int level,
                             int node) {
  auto bundle = make_pair_source(model, left, right);
  const std::size_t n = left.n;
  const StreamKey key{options.seed, static_cast<std::uint32_t>(level),
                      static_cast<std::uint64_t>(node),
                      StreamRole::pair_resample};
  PairSample ps;
  try {
    ps = resample_pairs(options.resampler, bundle.source, n, options.mh_steps,
                        key);
  } catch (const std::runtime_error& e) {
    throw std::runtime_error(
        "combine at cut " + std::to_string(right.a) + " (times " +
        std::to_string(left.a) + ".." + std::to_string(right.b) +
        "): " + e.what());
  }

  BlockEstimate out;
  out.a = left.a;
  out.b = right.b;
  out.n = n;
  out.dim = left.dim;
  out.paths.resize(static_cast<std::size_t>(out.len()) * n * out.dim);
  for (int t = left.a; t <= left.b; ++t)
    gather_slab(left.time_slab(t), ps.left.data(), n, out.dim,
                out.time_slab(t));
  for (int t = right.a; t <= right.b; ++t)
    gather_slab(right.time_slab(t), ps.right.data(), n, out.dim,
                out.time_slab(t));

  out.log_w.assign(n, -std::log(static_cast<double>(n)));
  out.weights_uniform = true;
  out.biased = left.biased || right.biased || ps.biased;
  out.weight_evals = left.weight_evals + right.weight_evals + ps.weight_evals;
  if (left.log_norm_const && right.log_norm_const && ps.log_mean_weight)
    out.log_norm_const = *left.log_norm_const + *right.log_norm_const +
                         *ps.log_mean_weight + bundle.log_shift;
  return out;
}

RunResult run_smoother(const FeynmanKacModel& model,
                       const SmootherOptions& options) {
  validate_model(model);
  const auto t_start = std::chrono::steady_clock::now();
  const int T = model.horizon;
  const auto schedule = build_schedule(T);

  std::vector<BlockEstimate> cur(T + 1);
  parallel_for(static_cast<std::size_t>(T) + 1, options.n_threads,
               [&](std::size_t t) {
                 cur[t] = make_leaf(model, static_cast<int>(t),
                                    options.n_particles, options.seed);
               });

  int level = 0;
  std::size_t cursor = 0;  // into schedule.pairs, which are level-major
  while (cur.size() > 1) {
    ++level;
    const std::size_t n_pairs = cur.size() / 2;
    const bool odd = cur.size() % 2 != 0;
    std::vector<BlockEstimate> next(n_pairs + (odd ? 1 : 0));
    parallel_for(n_pairs, options.n_threads, [&](std::size_t k) {
      const SchedulePair& sp = schedule.pairs[cursor + k];
      const BlockEstimate& L = cur[2 * k];
      const BlockEstimate& R = cur[2 * k + 1];
      if (sp.level != level || sp.node != static_cast<int>(k) ||
          sp.left_a != L.a || sp.left_b != L.b || sp.right_b != R.b)
        throw std::logic_error("combine plan and execution diverged");
      next[k] = combine_blocks(model, L, R, options, level, static_cast<int>(k));
    });
    if (odd) next.back() = std::move(cur.back());
    cursor += n_pairs;
    cur = std::move(next);
  }
  if (level != schedule.levels || cursor != schedule.pairs.size())
    throw std::logic_error("combine plan and execution diverged");

  RunResult out;
  out.root = std::move(cur.front());
  const auto t_end = std::chrono::steady_clock::now();
  out.meta.horizon = T;
  out.meta.n_particles = options.n_particles;
  out.meta.resampler = std::string(resampler_name(options.resampler));
  out.meta.levels = schedule.levels;
  out.meta.weight_evals = out.root.weight_evals;
  out.meta.wall_time_ms =
      std::chrono::duration<double, std::milli>(t_end - t_start).count();
  out.meta.log_norm_const = out.root.log_norm_const;
  out.meta.seed = options.seed;
  out.meta.biased = out.root.biased;
  return out;
}

std::vector<double> weighted_time_mean(const BlockEstimate& block, int t) {
  if (t < block.a || t > block.b)
    throw std::invalid_argument("weighted_time_mean: time outside the block");
  const double* slab = block.time_slab(t);
  const std::size_t n = block.n;
  const int dim = block.dim;
  std::vector<double> mean(dim, 0.0);
  if (block.weights_uniform) {
    if (dim == 1) {
      mean[0] = kernels::reduce_sum(slab, n) / static_cast<double>(n);
    } else {
      for (std::size_t p = 0; p < n; ++p)
        for (int d = 0; d < dim; ++d) mean[d] += slab[p * dim + d];
      for (int d = 0; d < dim; ++d) mean[d] /= static_cast<double>(n);
    }
    return mean;
  }
  std::vector<double> w(n);
  kernels::vec_exp(block.log_w.data(), n, w.data());  // normalized: sums to 1
  for (std::size_t p = 0; p < n; ++p)
    for (int d = 0; d < dim; ++d) mean[d] += w[p] * slab[p * dim + d];
  return mean;
}

void copy_path(const BlockEstimate& block, std::size_t p, double* out) {
  if (p >= block.n) throw std::invalid_argument("copy_path: index out of range");
  const int dim = block.dim;
  for (int t = block.a; t <= block.b; ++t)
    std::memcpy(out + static_cast<std::size_t>(t - block.a) * dim,
                block.time_slab(t) + p * dim, sizeof(double) * dim);
}

}  // namespace dsmc
