#include <immintrin.h>

#include <cmath>
#include <limits>
#include <stdexcept>

#include "dsmc/kernels.hpp"
#include "exp_poly.hpp"

// AVX-512F backend. One 8-wide register holds the virtual lanes 0..7 directly;
// combine and tails match the scalar reference bit for bit.

namespace dsmc::kernels {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

inline __m512d exp_w_pd(__m512d x) {
  const __mmask8 nan_mask = _mm512_cmp_pd_mask(x, x, _CMP_UNORD_Q);
  const __mmask8 zero_mask =
      _mm512_cmp_pd_mask(x, _mm512_set1_pd(detail::kExpLo), _CMP_LE_OQ);
  const __m512d xc = _mm512_min_pd(x, _mm512_set1_pd(detail::kExpHi));
  const __m512d k = _mm512_roundscale_pd(
      _mm512_mul_pd(xc, _mm512_set1_pd(detail::kLog2E)),
      _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  __m512d r = _mm512_fmadd_pd(k, _mm512_set1_pd(-detail::kLn2Hi), xc);
  r = _mm512_fmadd_pd(k, _mm512_set1_pd(-detail::kLn2Lo), r);
  __m512d p = _mm512_set1_pd(detail::kExpC[13]);
  for (int i = 12; i >= 0; --i)
    p = _mm512_fmadd_pd(p, r, _mm512_set1_pd(detail::kExpC[i]));
  const __m256i k32 = _mm512_cvtpd_epi32(k);
  const __m512i k64 = _mm512_cvtepi32_epi64(k32);
  const __m512i bits =
      _mm512_slli_epi64(_mm512_add_epi64(k64, _mm512_set1_epi64(1023)), 52);
  __m512d res = _mm512_mul_pd(p, _mm512_castsi512_pd(bits));
  res = _mm512_maskz_mov_pd(~zero_mask, res);
  return _mm512_mask_blend_pd(nan_mask, res, x);
}

inline double combine8_pd(__m512d acc) {
  const __m256d lo = _mm512_castpd512_pd256(acc);
  const __m256d hi = _mm512_extractf64x4_pd(acc, 1);
  const __m256d v = _mm256_add_pd(lo, hi);          // b[l] = acc[l] + acc[l+4]
  const __m128d l2 = _mm256_castpd256_pd128(v);
  const __m128d h2 = _mm256_extractf128_pd(v, 1);
  const __m128d s = _mm_add_pd(l2, h2);             // (b0+b2, b1+b3)
  return _mm_cvtsd_f64(s) + _mm_cvtsd_f64(_mm_unpackhi_pd(s, s));
}

void vec_exp_avx512(const double* x, std::size_t n, double* out) {
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8)
    _mm512_storeu_pd(out + i, exp_w_pd(_mm512_loadu_pd(x + i)));
  for (; i < n; ++i) out[i] = detail::exp_w_scalar(x[i]);
}

double reduce_max_avx512(const double* x, std::size_t n) {
  __m512d m = _mm512_set1_pd(kNegInf);
  __mmask8 nan = 0;
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m512d v = _mm512_loadu_pd(x + i);
    nan |= _mm512_cmp_pd_mask(v, v, _CMP_UNORD_Q);
    m = _mm512_max_pd(m, v);
  }
  double out = _mm512_reduce_max_pd(m);
  bool saw_nan = nan != 0;
  for (; i < n; ++i) {
    const double v = x[i];
    saw_nan |= std::isnan(v);
    if (v > out) out = v;
  }
  if (saw_nan) throw std::domain_error("reduce_max: NaN entry");
  return out;
}

double reduce_sum_avx512(const double* x, std::size_t n) {
  __m512d acc = _mm512_setzero_pd();
  const std::size_t n8 = n & ~std::size_t(7);
  for (std::size_t i = 0; i < n8; i += 8)
    acc = _mm512_add_pd(acc, _mm512_loadu_pd(x + i));
  return detail::tail_sum(x, n8, n, combine8_pd(acc));
}

double log_sum_exp_avx512(const double* x, std::size_t n) {
  const double m = reduce_max_avx512(x, n);
  if (m == kNegInf) return kNegInf;
  const __m512d shift = _mm512_set1_pd(m);
  __m512d acc = _mm512_setzero_pd();
  const std::size_t n8 = n & ~std::size_t(7);
  for (std::size_t i = 0; i < n8; i += 8)
    acc = _mm512_add_pd(
        acc, exp_w_pd(_mm512_sub_pd(_mm512_loadu_pd(x + i), shift)));
  const double total = detail::tail_exp_sum(x, n8, n, m, combine8_pd(acc));
  return m + std::log(total);
}

void gaussian_row_avx512(const double* x, std::size_t n, double mean,
                         double neg_half_inv_var, const double* base,
                         double* out) {
  const __m512d mu = _mm512_set1_pd(mean);
  const __m512d c = _mm512_set1_pd(neg_half_inv_var);
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m512d t = _mm512_sub_pd(_mm512_loadu_pd(x + i), mu);
    const __m512d b = base ? _mm512_loadu_pd(base + i) : _mm512_setzero_pd();
    _mm512_storeu_pd(out + i, _mm512_fmadd_pd(c, _mm512_mul_pd(t, t), b));
  }
  for (; i < n; ++i) {
    const double t = x[i] - mean;
    const double b = base ? base[i] : 0.0;
    out[i] = std::fma(neg_half_inv_var, t * t, b);
  }
}

double gaussian_row_max_avx512(const double* x, std::size_t n, double mean,
                               double neg_half_inv_var, const double* base,
                               double add, double* out) {
  const __m512d mu = _mm512_set1_pd(mean);
  const __m512d c = _mm512_set1_pd(neg_half_inv_var);
  const __m512d av = _mm512_set1_pd(add);
  __m512d mx = _mm512_set1_pd(kNegInf);
  __mmask8 nan = 0;
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    const __m512d t = _mm512_sub_pd(_mm512_loadu_pd(x + i), mu);
    const __m512d b = base ? _mm512_loadu_pd(base + i) : _mm512_setzero_pd();
    const __m512d z =
        _mm512_add_pd(_mm512_fmadd_pd(c, _mm512_mul_pd(t, t), b), av);
    _mm512_storeu_pd(out + i, z);
    nan |= _mm512_cmp_pd_mask(z, z, _CMP_UNORD_Q);
    mx = _mm512_max_pd(mx, z);
  }
  double m = _mm512_reduce_max_pd(mx);
  bool saw_nan = nan != 0;
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

void add_vec_scalar_avx512(double* io, std::size_t n, double s,
                           const double* v) {
  const __m512d sv = _mm512_set1_pd(s);
  std::size_t i = 0;
  if (v) {
    for (; i + 8 <= n; i += 8) {
      const __m512d t = _mm512_add_pd(_mm512_loadu_pd(io + i), sv);
      _mm512_storeu_pd(io + i, _mm512_add_pd(t, _mm512_loadu_pd(v + i)));
    }
    for (; i < n; ++i) io[i] = (io[i] + s) + v[i];
  } else {
    for (; i + 8 <= n; i += 8)
      _mm512_storeu_pd(io + i, _mm512_add_pd(_mm512_loadu_pd(io + i), sv));
    for (; i < n; ++i) io[i] += s;
  }
}

double exp_row_store_avx512(const double* logw, std::size_t n, double shift,
                            double* w, double* sub_sums) {
  // Rows of the dense table are written once and read back only sparsely, so
  // when the destination is 64-byte aligned the stores bypass the cache.
  const bool stream = (reinterpret_cast<std::uintptr_t>(w) & 63u) == 0;
  const __m512d sh = _mm512_set1_pd(shift);
  double total = 0.0;
  std::size_t blk = 0;
  for (std::size_t start = 0; start < n; start += kSubBlock, ++blk) {
    const std::size_t len = std::min(kSubBlock, n - start);
    const double* xi = logw + start;
    double* wi = w + start;
    __m512d acc = _mm512_setzero_pd();
    const std::size_t len8 = len & ~std::size_t(7);
    if (stream) {
      for (std::size_t i = 0; i < len8; i += 8) {
        const __m512d z = exp_w_pd(_mm512_sub_pd(_mm512_loadu_pd(xi + i), sh));
        _mm512_stream_pd(wi + i, z);
        acc = _mm512_add_pd(acc, z);
      }
    } else {
      for (std::size_t i = 0; i < len8; i += 8) {
        const __m512d z = exp_w_pd(_mm512_sub_pd(_mm512_loadu_pd(xi + i), sh));
        _mm512_storeu_pd(wi + i, z);
        acc = _mm512_add_pd(acc, z);
      }
    }
    const double bs = detail::tail_exp_store_sum(xi, len8, len, shift, wi,
                                                 combine8_pd(acc));
    sub_sums[blk] = bs;
    total += bs;
  }
  if (stream) _mm_sfence();
  return total;
}

constexpr KernelOps kAvx512Ops = {
    &vec_exp_avx512,     &reduce_max_avx512,   &reduce_sum_avx512,
    &log_sum_exp_avx512, &gaussian_row_avx512, &gaussian_row_max_avx512,
    &add_vec_scalar_avx512, &exp_row_store_avx512,
};

}  // namespace

const KernelOps& avx512_ops() { return kAvx512Ops; }

}  // namespace dsmc::kernels
