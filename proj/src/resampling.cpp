#include "dsmc/resampling.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <memory>
#include <mutex>
#include <new>
#include <stdexcept>

#ifdef __GLIBC__
#include <malloc.h>
#endif

#include "dsmc/kernels.hpp"
#include "dsmc/metrics.hpp"

namespace dsmc {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr std::uint64_t kRejectionTrialCap = 1u << 24;

using RowFiller = std::function<void(std::size_t, double*)>;

RowFiller row_filler(const PairWeightSource& src) {
  if (src.fill_row) return src.fill_row;
  if (!src.log_weight_at)
    throw std::invalid_argument(
        "pair weight source provides neither fill_row nor log_weight_at");
  auto probe = src.log_weight_at;
  const std::size_t n = src.n;
  return [probe, n](std::size_t i, double* out) {
    for (std::size_t j = 0; j < n; ++j) out[j] = probe(i, j);
  };
}

// The dense table with row i stored as exp(logw[i][j] - m_i), where m_i is the
// row max. Cross-row scales exp(m_i - g) (g = max_i m_i) fold the rows back to
// a common scale without ever exponentiating far from zero. Dead rows
// (m_i = -inf) leave their storage untouched and carry zero total, so the
// selection walk never enters them.
struct FreeDeleter {
  void operator()(double* p) const noexcept { std::free(p); }
};

struct DenseTable {
  std::size_t n = 0;
  std::size_t nsub = 0;
  std::unique_ptr<double[], FreeDeleter> w;  // n*n, row-locally scaled
  std::vector<double> sub;         // n * nsub row-local sub-block sums
  std::vector<double> row_scale;   // exp(m_i - g)
  std::vector<double> row_total;   // row_scale[i] * sum_j w[i*n+j]
  double grand = 0.0;              // sum_i row_total[i], >= 1 by construction
  double log_sum = kNegInf;        // g + log(grand)
};

DenseTable build_dense(const PairWeightSource& src) {
  tune_allocator_once();
  const std::size_t n = src.n;
  if (n == 0) throw std::invalid_argument("pair weight source has n == 0");
  auto fill = row_filler(src);

  DenseTable t;
  t.n = n;
  t.nsub = (n + kernels::kSubBlock - 1) / kernels::kSubBlock;
  // One uninitialized allocation, 64-byte aligned so the store kernels can use
  // cache-bypassing writes on rows (the table is written once and far exceeds
  // the cache, so keeping it out of the hierarchy is pure win).
  const std::size_t bytes = (n * n * sizeof(double) + 63) & ~std::size_t(63);
  t.w.reset(static_cast<double*>(std::aligned_alloc(64, bytes)));
  if (!t.w) throw std::bad_alloc();
  metrics::count_dense_alloc(n * n);
  t.sub.assign(n * t.nsub, 0.0);
  t.row_scale.assign(n, 0.0);
  t.row_total.assign(n, 0.0);

  std::vector<double> scratch(n);
  std::vector<double> row_max(n);
  std::vector<double> raw_total(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    fill(i, scratch.data());
    const double mi = kernels::reduce_max(scratch.data(), n);
    row_max[i] = mi;
    if (mi == kNegInf) continue;
    raw_total[i] = kernels::exp_row_store(scratch.data(), n, mi,
                                          t.w.get() + i * n,
                                          t.sub.data() + i * t.nsub);
  }
  metrics::add_weight_evals(static_cast<std::uint64_t>(n) * n);

  const double g = kernels::reduce_max(row_max.data(), n);
  if (g == kNegInf)
    throw std::runtime_error("all pair weights are zero; the blocks share no "
                             "support under the model");
  for (std::size_t i = 0; i < n; ++i) {
    t.row_scale[i] = kernels::exp_w(row_max[i] - g);
    t.row_total[i] = t.row_scale[i] * raw_total[i];
  }
  t.grand = kernels::reduce_sum(t.row_total.data(), n);
  t.log_sum = g + std::log(t.grand);
  return t;
}

// Inversion walk for nondecreasing points in [0, grand). Writes the selected
// (row, col) per point. Floating-point spill past a cumulative boundary is
// clamped to the nearest preceding positive entry, never across the table.
void select_sorted(const DenseTable& t, const double* pts, std::size_t k,
                   std::uint32_t* rows, std::uint32_t* cols) {
  const std::size_t n = t.n;
  std::size_t i = 0;
  double cum_before = 0.0;
  double cum = t.row_total[0];
  for (std::size_t p = 0; p < k; ++p) {
    const double pt = pts[p];
    while (!(pt < cum) && i + 1 < n) {
      cum_before = cum;
      ++i;
      cum += t.row_total[i];
    }
    std::size_t row = i;
    while (row > 0 && t.row_total[row] <= 0.0) --row;  // spill past last row

    const double* wrow = t.w.get() + row * n;
    const double* srow = t.sub.data() + row * t.nsub;
    double local = (pt - cum_before) / t.row_scale[row];
    if (!(local >= 0.0)) local = 0.0;

    std::size_t s = 0;
    double c2_before = 0.0;
    double c2 = srow[0];
    while (!(local < c2) && s + 1 < t.nsub) {
      c2_before = c2;
      ++s;
      c2 += srow[s];
    }
    const std::size_t j0 = s * kernels::kSubBlock;
    const std::size_t j1 = std::min(j0 + kernels::kSubBlock, n);
    double c3 = c2_before;
    std::size_t j = j0;
    for (; j < j1; ++j) {
      c3 += wrow[j];
      if (local < c3) break;
    }
    if (j == j1) {  // spill within the row: clamp to last positive entry
      j = j1 - 1;
      while (j > 0 && !(wrow[j] > 0.0)) --j;
    }
    rows[p] = static_cast<std::uint32_t>(row);
    cols[p] = static_cast<std::uint32_t>(j);
  }
}

std::function<double(std::size_t, std::size_t)> entry_probe(
    const PairWeightSource& src) {
  if (src.log_weight_at) return src.log_weight_at;
  throw std::invalid_argument(
      "lazy resampling requires a log_weight_at entry probe");
}

double checked_entry(double lw, std::size_t i, std::size_t j) {
  if (std::isnan(lw))
    throw std::invalid_argument("pair weight (" + std::to_string(i) + ", " +
                                std::to_string(j) + ") is NaN");
  return lw;
}

}  // namespace

void tune_allocator_once() {
#ifdef __GLIBC__
  static std::once_flag flag;
  std::call_once(flag, [] {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
  });
#endif
}

PairSample multinomial_pairs(const PairWeightSource& src, std::size_t n_out,
                             const StreamKey& key) {
  DenseTable t = build_dense(src);
  PairSample out;
  out.left.resize(n_out);
  out.right.resize(n_out);
  out.log_mean_weight = t.log_sum;
  out.weight_evals = static_cast<std::uint64_t>(src.n) * src.n;
  if (n_out == 0) return out;

  RngStream stream(key);
  struct Draw {
    double u;
    std::uint32_t slot;
  };
  std::vector<Draw> draws(n_out);
  for (std::size_t k = 0; k < n_out; ++k)
    draws[k] = {stream.uniform(), static_cast<std::uint32_t>(k)};
  std::sort(draws.begin(), draws.end(),
            [](const Draw& a, const Draw& b) { return a.u < b.u; });

  std::vector<double> pts(n_out);
  for (std::size_t k = 0; k < n_out; ++k) pts[k] = draws[k].u * t.grand;
  std::vector<std::uint32_t> rows(n_out), cols(n_out);
  select_sorted(t, pts.data(), n_out, rows.data(), cols.data());
  for (std::size_t k = 0; k < n_out; ++k) {  // back to i.i.d. slot order
    out.left[draws[k].slot] = rows[k];
    out.right[draws[k].slot] = cols[k];
  }
  return out;
}

PairSample systematic_pairs(const PairWeightSource& src, std::size_t n_out,
                            const StreamKey& key) {
  DenseTable t = build_dense(src);
  PairSample out;
  out.left.resize(n_out);
  out.right.resize(n_out);
  out.log_mean_weight = t.log_sum;
  out.weight_evals = static_cast<std::uint64_t>(src.n) * src.n;
  if (n_out == 0) return out;

  RngStream stream(key);
  const double u = stream.uniform();
  const double step = t.grand / static_cast<double>(n_out);
  std::vector<double> pts(n_out);
  for (std::size_t k = 0; k < n_out; ++k)
    pts[k] = (u + static_cast<double>(k)) * step;
  select_sorted(t, pts.data(), n_out, out.left.data(), out.right.data());
  return out;
}

PairSample mh_lazy_pairs(const PairWeightSource& src, std::size_t n_out,
                         std::size_t mh_steps, const StreamKey& key) {
  const std::size_t n = src.n;
  if (n == 0) throw std::invalid_argument("pair weight source has n == 0");
  PairSample out;
  out.left.resize(n_out);
  out.right.resize(n_out);
  out.biased = true;
  metrics::note_lazy_alloc(2 * n_out);
  if (mh_steps == 0) {  // identity coupling, no evaluations at all
    for (std::size_t m = 0; m < n_out; ++m) {
      out.left[m] = static_cast<std::uint32_t>(m % n);
      out.right[m] = static_cast<std::uint32_t>(m % n);
    }
    return out;
  }

  auto lw = entry_probe(src);
  std::uint64_t evals = 0;
  for (std::size_t m = 0; m < n_out; ++m) {
    RngStream stream(key, m + 1);
    std::uint32_t i = static_cast<std::uint32_t>(m % n);
    std::uint32_t j = i;
    double cur = 0.0;
    bool have_cur = false;
    for (std::size_t b = 0; b < mh_steps; ++b) {
      const auto pi = static_cast<std::uint32_t>(stream.uniform_index(n));
      const auto pj = static_cast<std::uint32_t>(stream.uniform_index(n));
      const double lu = std::log(stream.uniform_pos());
      if (!have_cur) {
        cur = checked_entry(lw(i, j), i, j);
        ++evals;
        have_cur = true;
      }
      const double prop = checked_entry(lw(pi, pj), pi, pj);
      ++evals;
      // -inf - -inf is NaN and compares false: stay put when both are dead.
      if (lu < prop - cur) {
        i = pi;
        j = pj;
        cur = prop;
      }
    }
    out.left[m] = i;
    out.right[m] = j;
  }
  out.weight_evals = evals;
  metrics::add_weight_evals(evals);
  return out;
}

PairSample rejection_lazy_pairs(const PairWeightSource& src, std::size_t n_out,
                                const StreamKey& key) {
  const std::size_t n = src.n;
  if (n == 0) throw std::invalid_argument("pair weight source has n == 0");
  if (!src.log_upper_bound || !std::isfinite(*src.log_upper_bound))
    throw std::invalid_argument(
        "rejection resampling requires a finite log_upper_bound");
  const double bound = *src.log_upper_bound;
  auto lw = entry_probe(src);

  PairSample out;
  out.left.resize(n_out);
  out.right.resize(n_out);
  metrics::note_lazy_alloc(2 * n_out);
  std::uint64_t evals = 0;
  for (std::size_t m = 0; m < n_out; ++m) {
    RngStream stream(key, m + 1);
    bool accepted = false;
    for (std::uint64_t trial = 0; trial < kRejectionTrialCap; ++trial) {
      const auto i = static_cast<std::uint32_t>(stream.uniform_index(n));
      const auto j = static_cast<std::uint32_t>(stream.uniform_index(n));
      const double lwij = checked_entry(lw(i, j), i, j);
      ++evals;
      if (lwij - bound > 1e-9)
        throw std::invalid_argument("pair weight exceeds its stated upper bound");
      if (std::log(stream.uniform_pos()) <= lwij - bound) {
        out.left[m] = i;
        out.right[m] = j;
        accepted = true;
        break;
      }
    }
    if (!accepted)
      throw std::runtime_error(
          "rejection resampling exceeded the trial cap; the bound is far too "
          "loose or the weights are degenerate");
  }
  out.weight_evals = evals;
  metrics::add_weight_evals(evals);
  return out;
}

std::optional<Resampler> parse_resampler(std::string_view name) {
  if (name == "multinomial") return Resampler::multinomial;
  if (name == "systematic") return Resampler::systematic;
  if (name == "mh-lazy") return Resampler::mh_lazy;
  if (name == "rejection-lazy") return Resampler::rejection_lazy;
  return std::nullopt;
}

std::string_view resampler_name(Resampler r) {
  switch (r) {
    case Resampler::multinomial: return "multinomial";
    case Resampler::systematic: return "systematic";
    case Resampler::mh_lazy: return "mh-lazy";
    case Resampler::rejection_lazy: return "rejection-lazy";
  }
  return "unknown";
}

bool resampler_is_lazy(Resampler r) {
  return r == Resampler::mh_lazy || r == Resampler::rejection_lazy;
}

PairSample resample_pairs(Resampler r, const PairWeightSource& src,
                          std::size_t n_out, std::size_t mh_steps,
                          const StreamKey& key) {
  switch (r) {
    case Resampler::multinomial: return multinomial_pairs(src, n_out, key);
    case Resampler::systematic: return systematic_pairs(src, n_out, key);
    case Resampler::mh_lazy: return mh_lazy_pairs(src, n_out, mh_steps, key);
    case Resampler::rejection_lazy:
      return rejection_lazy_pairs(src, n_out, key);
  }
  throw std::invalid_argument("unknown resampler");
}

namespace {

// Exp-normalized single population plus its inverse-CDF walk. `pts` must be
// ascending in [0, total); clamps to the last positive weight on FP spill.
struct DenseRowWeights {
  std::vector<double> w;
  double total = 0.0;
  double log_mean = 0.0;
};

DenseRowWeights build_row_weights(const double* log_w, std::size_t n) {
  if (n == 0) throw std::invalid_argument("weight vector has n == 0");
  const double m = kernels::reduce_max(log_w, n);
  if (m == -std::numeric_limits<double>::infinity())
    throw std::runtime_error("all weights are zero");
  DenseRowWeights r;
  r.w.resize(n);
  std::vector<double> sub((n + kernels::kSubBlock - 1) / kernels::kSubBlock);
  r.total = kernels::exp_row_store(log_w, n, m, r.w.data(), sub.data());
  r.log_mean = m + std::log(r.total) - std::log(static_cast<double>(n));
  return r;
}

void select_row_sorted(const DenseRowWeights& r, const double* pts,
                       std::size_t k, std::uint32_t* idx) {
  const std::size_t n = r.w.size();
  std::size_t i = 0;
  double cum = r.w[0];
  for (std::size_t s = 0; s < k; ++s) {
    while (pts[s] >= cum && i + 1 < n) {
      ++i;
      cum += r.w[i];
    }
    // The walk only ever stops on a live entry (cum grows nowhere else), so a
    // dead pick means the point spilled past the total mass by rounding:
    // clamp back to the last live entry.
    std::size_t pick = i;
    while (pick > 0 && !(r.w[pick] > 0.0)) --pick;
    idx[s] = static_cast<std::uint32_t>(pick);
  }
}

}  // namespace

IndexSample multinomial_indices(const double* log_w, std::size_t n,
                                std::size_t n_out, const StreamKey& key) {
  const DenseRowWeights r = build_row_weights(log_w, n);
  IndexSample out;
  out.idx.resize(n_out);
  out.log_mean_weight = r.log_mean;
  if (n_out == 0) return out;

  RngStream stream(key);
  struct Draw {
    double u;
    std::uint32_t slot;
  };
  std::vector<Draw> draws(n_out);
  for (std::size_t k = 0; k < n_out; ++k)
    draws[k] = {stream.uniform(), static_cast<std::uint32_t>(k)};
  std::sort(draws.begin(), draws.end(),
            [](const Draw& a, const Draw& b) { return a.u < b.u; });

  std::vector<double> pts(n_out);
  for (std::size_t k = 0; k < n_out; ++k) pts[k] = draws[k].u * r.total;
  std::vector<std::uint32_t> picks(n_out);
  select_row_sorted(r, pts.data(), n_out, picks.data());
  for (std::size_t k = 0; k < n_out; ++k) out.idx[draws[k].slot] = picks[k];
  return out;
}

IndexSample systematic_indices(const double* log_w, std::size_t n,
                               std::size_t n_out, const StreamKey& key) {
  const DenseRowWeights r = build_row_weights(log_w, n);
  IndexSample out;
  out.idx.resize(n_out);
  out.log_mean_weight = r.log_mean;
  if (n_out == 0) return out;

  RngStream stream(key);
  const double u = stream.uniform();
  std::vector<double> pts(n_out);
  for (std::size_t k = 0; k < n_out; ++k)
    pts[k] = (u + static_cast<double>(k)) * r.total /
             static_cast<double>(n_out);
  select_row_sorted(r, pts.data(), n_out, out.idx.data());
  return out;
}

IndexSample resample_indices(Resampler r, const double* log_w, std::size_t n,
                             std::size_t n_out, const StreamKey& key) {
  switch (r) {
    case Resampler::multinomial:
      return multinomial_indices(log_w, n, n_out, key);
    case Resampler::systematic:
      return systematic_indices(log_w, n, n_out, key);
    default:
      throw std::invalid_argument(
          "index resampling is dense only: use multinomial or systematic");
  }
}

}  // namespace dsmc
