#include <immintrin.h>

#include <cmath>
#include <limits>
#include <stdexcept>

#include "dsmc/kernels.hpp"
#include "exp_poly.hpp"

// AVX2 backend. Mirrors the scalar reference exactly: same 8-lane accumulator
// layout (two 4-wide registers, lanes 0..3 and 4..7), same polynomial exp,
// same sequential tails, so outputs are bit-identical to the scalar backend.

namespace dsmc::kernels {

namespace {

using detail::combine8;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline __m256d exp_w_pd(__m256d x) {
  const __m256d nan_mask = _mm256_cmp_pd(x, x, _CMP_UNORD_Q);
  const __m256d zero_mask =
      _mm256_cmp_pd(x, _mm256_set1_pd(detail::kExpLo), _CMP_LE_OQ);
  const __m256d xc = _mm256_min_pd(x, _mm256_set1_pd(detail::kExpHi));
  const __m256d k = _mm256_round_pd(
      _mm256_mul_pd(xc, _mm256_set1_pd(detail::kLog2E)),
      _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m256d r = _mm256_fmadd_pd(k, _mm256_set1_pd(-detail::kLn2Hi), xc);
  r = _mm256_fmadd_pd(k, _mm256_set1_pd(-detail::kLn2Lo), r);
  __m256d p = _mm256_set1_pd(detail::kExpC[13]);
  for (int i = 12; i >= 0; --i)
    p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(detail::kExpC[i]));
  const __m128i k32 = _mm256_cvtpd_epi32(k);
  const __m256i k64 = _mm256_cvtepi32_epi64(k32);
  const __m256i bits =
      _mm256_slli_epi64(_mm256_add_epi64(k64, _mm256_set1_epi64x(1023)), 52);
  __m256d res = _mm256_mul_pd(p, _mm256_castsi256_pd(bits));
  res = _mm256_andnot_pd(zero_mask, res);
  return _mm256_blendv_pd(res, x, nan_mask);
}

// Lanes 0..3 in a, 4..7 in b: v[l] = a[l] + b[l]; (v0+v2) + (v1+v3).
inline double combine8_pd(__m256d a, __m256d b) {
  const __m256d v = _mm256_add_pd(a, b);
  const __m128d lo = _mm256_castpd256_pd128(v);
  const __m128d hi = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(lo, hi);            // (v0+v2, v1+v3)
  return _mm_cvtsd_f64(s) + _mm_cvtsd_f64(_mm_unpackhi_pd(s, s));
}

void vec_exp_avx2(const double* x, std::size_t n, double* out) {
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4)
    _mm256_storeu_pd(out + i, exp_w_pd(_mm256_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = detail::exp_w_scalar(x[i]);
}

double reduce_max_avx2(const double* x, std::size_t n) {
  __m256d m = _mm256_set1_pd(kNegInf);
  __m256d nan = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d v = _mm256_loadu_pd(x + i);
    nan = _mm256_or_pd(nan, _mm256_cmp_pd(v, v, _CMP_UNORD_Q));
    m = _mm256_max_pd(m, v);
  }
  double out = kNegInf;
  bool saw_nan = _mm256_movemask_pd(nan) != 0;
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, m);
  for (double v : lanes)
    if (v > out) out = v;
  for (; i < n; ++i) {
    const double v = x[i];
    saw_nan |= std::isnan(v);
    if (v > out) out = v;
  }
  if (saw_nan) throw std::domain_error("reduce_max: NaN entry");
  return out;
}

double reduce_sum_avx2(const double* x, std::size_t n) {
  __m256d a = _mm256_setzero_pd();
  __m256d b = _mm256_setzero_pd();
  const std::size_t n8 = n & ~std::size_t(7);
  for (std::size_t i = 0; i < n8; i += 8) {
    a = _mm256_add_pd(a, _mm256_loadu_pd(x + i));
    b = _mm256_add_pd(b, _mm256_loadu_pd(x + i + 4));
  }
  return detail::tail_sum(x, n8, n, combine8_pd(a, b));
}

double log_sum_exp_avx2(const double* x, std::size_t n) {
  const double m = reduce_max_avx2(x, n);
  if (m == kNegInf) return kNegInf;
  const __m256d shift = _mm256_set1_pd(m);
  __m256d a = _mm256_setzero_pd();
  __m256d b = _mm256_setzero_pd();
  const std::size_t n8 = n & ~std::size_t(7);
  for (std::size_t i = 0; i < n8; i += 8) {
    a = _mm256_add_pd(a, exp_w_pd(_mm256_sub_pd(_mm256_loadu_pd(x + i), shift)));
    b = _mm256_add_pd(
        b, exp_w_pd(_mm256_sub_pd(_mm256_loadu_pd(x + i + 4), shift)));
  }
  const double total = detail::tail_exp_sum(x, n8, n, m, combine8_pd(a, b));
  return m + std::log(total);
}

void gaussian_row_avx2(const double* x, std::size_t n, double mean,
                       double neg_half_inv_var, const double* base,
                       double* out) {
  const __m256d mu = _mm256_set1_pd(mean);
  const __m256d c = _mm256_set1_pd(neg_half_inv_var);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d t = _mm256_sub_pd(_mm256_loadu_pd(x + i), mu);
    const __m256d b = base ? _mm256_loadu_pd(base + i) : _mm256_setzero_pd();
    _mm256_storeu_pd(out + i, _mm256_fmadd_pd(c, _mm256_mul_pd(t, t), b));
  }
  for (; i < n; ++i) {
    const double t = x[i] - mean;
    const double b = base ? base[i] : 0.0;
    out[i] = std::fma(neg_half_inv_var, t * t, b);
  }
}

double gaussian_row_max_avx2(const double* x, std::size_t n, double mean,
                             double neg_half_inv_var, const double* base,
                             double add, double* out) {
  const __m256d mu = _mm256_set1_pd(mean);
  const __m256d c = _mm256_set1_pd(neg_half_inv_var);
  const __m256d av = _mm256_set1_pd(add);
  __m256d mx = _mm256_set1_pd(kNegInf);
  __m256d nan = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d t = _mm256_sub_pd(_mm256_loadu_pd(x + i), mu);
    const __m256d b = base ? _mm256_loadu_pd(base + i) : _mm256_setzero_pd();
    const __m256d z =
        _mm256_add_pd(_mm256_fmadd_pd(c, _mm256_mul_pd(t, t), b), av);
    _mm256_storeu_pd(out + i, z);
    nan = _mm256_or_pd(nan, _mm256_cmp_pd(z, z, _CMP_UNORD_Q));
    mx = _mm256_max_pd(mx, z);
  }
  double m = kNegInf;
  bool saw_nan = _mm256_movemask_pd(nan) != 0;
  alignas(32) double lanes[4];
  _mm256_store_pd(lanes, mx);
  for (double v : lanes)
    if (v > m) m = v;
  for (; i < n; ++i) {
    const double t = x[i] - mean;
    const double b = base ? base[i] : 0.0;
    const double z = std::fma(neg_half_inv_var, t * t, b) + add;
    out[i] = z;
    saw_nan |= std::isnan(z);
    if (z > m) m = z;
  }
  if (saw_nan) throw std::domain_error("gaussian_row_max: NaN entry");
  return m;
}

void add_vec_scalar_avx2(double* io, std::size_t n, double s, const double* v) {
  const __m256d sv = _mm256_set1_pd(s);
  std::size_t i = 0;
  if (v) {
    for (; i + 4 <= n; i += 4) {
      const __m256d t = _mm256_add_pd(_mm256_loadu_pd(io + i), sv);
      _mm256_storeu_pd(io + i, _mm256_add_pd(t, _mm256_loadu_pd(v + i)));
    }
    for (; i < n; ++i) io[i] = (io[i] + s) + v[i];
  } else {
    for (; i + 4 <= n; i += 4)
      _mm256_storeu_pd(io + i, _mm256_add_pd(_mm256_loadu_pd(io + i), sv));
    for (; i < n; ++i) io[i] += s;
  }
}

double exp_row_store_avx2(const double* logw, std::size_t n, double shift,
                          double* w, double* sub_sums) {
  // Cache-bypassing stores on 64-byte-aligned rows; see the AVX-512 backend.
  const bool stream = (reinterpret_cast<std::uintptr_t>(w) & 63u) == 0;
  const __m256d sh = _mm256_set1_pd(shift);
  double total = 0.0;
  std::size_t blk = 0;
  for (std::size_t start = 0; start < n; start += kSubBlock, ++blk) {
    const std::size_t len = std::min(kSubBlock, n - start);
    const double* xi = logw + start;
    double* wi = w + start;
    __m256d a = _mm256_setzero_pd();
    __m256d b = _mm256_setzero_pd();
    const std::size_t len8 = len & ~std::size_t(7);
    if (stream) {
      for (std::size_t i = 0; i < len8; i += 8) {
        const __m256d za =
            exp_w_pd(_mm256_sub_pd(_mm256_loadu_pd(xi + i), sh));
        const __m256d zb =
            exp_w_pd(_mm256_sub_pd(_mm256_loadu_pd(xi + i + 4), sh));
        _mm256_stream_pd(wi + i, za);
        _mm256_stream_pd(wi + i + 4, zb);
        a = _mm256_add_pd(a, za);
        b = _mm256_add_pd(b, zb);
      }
    } else {
      for (std::size_t i = 0; i < len8; i += 8) {
        const __m256d za =
            exp_w_pd(_mm256_sub_pd(_mm256_loadu_pd(xi + i), sh));
        const __m256d zb =
            exp_w_pd(_mm256_sub_pd(_mm256_loadu_pd(xi + i + 4), sh));
        _mm256_storeu_pd(wi + i, za);
        _mm256_storeu_pd(wi + i + 4, zb);
        a = _mm256_add_pd(a, za);
        b = _mm256_add_pd(b, zb);
      }
    }
    const double bs = detail::tail_exp_store_sum(xi, len8, len, shift, wi,
                                                 combine8_pd(a, b));
    sub_sums[blk] = bs;
    total += bs;
  }
  if (stream) _mm_sfence();
  return total;
}

constexpr KernelOps kAvx2Ops = {
    &vec_exp_avx2,       &reduce_max_avx2,   &reduce_sum_avx2,
    &log_sum_exp_avx2,   &gaussian_row_avx2, &gaussian_row_max_avx2,
    &add_vec_scalar_avx2, &exp_row_store_avx2,
};

}  // namespace

const KernelOps& avx2_ops() { return kAvx2Ops; }

}  // namespace dsmc::kernels
