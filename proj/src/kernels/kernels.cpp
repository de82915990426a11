#include "dsmc/kernels.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <cstring>
#include <limits>
#include <stdexcept>
#include <string>

#include "exp_poly.hpp"

namespace dsmc::kernels {

namespace {

using detail::combine8;
using detail::exp_w_scalar;

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

void vec_exp_scalar(const double* x, std::size_t n, double* out) {
  for (std::size_t i = 0; i < n; ++i) out[i] = exp_w_scalar(x[i]);
}

double reduce_max_scalar(const double* x, std::size_t n) {
  double m = kNegInf;
  bool saw_nan = false;
  for (std::size_t i = 0; i < n; ++i) {
    const double v = x[i];
    saw_nan |= std::isnan(v);
    if (v > m) m = v;
  }
  if (saw_nan) throw std::domain_error("reduce_max: NaN entry");
  return m;
}

double reduce_sum_scalar(const double* x, std::size_t n) {
  double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  const std::size_t n8 = n & ~std::size_t(7);
  for (std::size_t i = 0; i < n8; i += 8)
    for (std::size_t l = 0; l < 8; ++l) acc[l] += x[i + l];
  return detail::tail_sum(x, n8, n, combine8(acc));
}

double log_sum_exp_scalar(const double* x, std::size_t n) {
  const double m = reduce_max_scalar(x, n);
  if (m == kNegInf) return kNegInf;
  double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
  const std::size_t n8 = n & ~std::size_t(7);
  for (std::size_t i = 0; i < n8; i += 8)
    for (std::size_t l = 0; l < 8; ++l) acc[l] += exp_w_scalar(x[i + l] - m);
  const double total = detail::tail_exp_sum(x, n8, n, m, combine8(acc));
  return m + std::log(total);
}

void gaussian_row_scalar(const double* x, std::size_t n, double mean,
                         double neg_half_inv_var, const double* base,
                         double* out) {
  for (std::size_t i = 0; i < n; ++i) {
    const double t = x[i] - mean;
    const double b = base ? base[i] : 0.0;
    out[i] = std::fma(neg_half_inv_var, t * t, b);
  }
}

double gaussian_row_max_scalar(const double* x, std::size_t n, double mean,
                               double neg_half_inv_var, const double* base,
                               double add, double* out) {
  double m = kNegInf;
  bool saw_nan = false;
  for (std::size_t i = 0; i < n; ++i) {
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

void add_vec_scalar_scalar(double* io, std::size_t n, double s,
                           const double* v) {
  if (v) {
    for (std::size_t i = 0; i < n; ++i) io[i] = (io[i] + s) + v[i];
  } else {
    for (std::size_t i = 0; i < n; ++i) io[i] += s;
  }
}

double exp_row_store_scalar(const double* logw, std::size_t n, double shift,
                            double* w, double* sub_sums) {
  double total = 0.0;
  std::size_t b = 0;
  for (std::size_t start = 0; start < n; start += kSubBlock, ++b) {
    const std::size_t len = std::min(kSubBlock, n - start);
    const double* xi = logw + start;
    double* wi = w + start;
    double acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
    const std::size_t len8 = len & ~std::size_t(7);
    for (std::size_t i = 0; i < len8; i += 8)
      for (std::size_t l = 0; l < 8; ++l) {
        const double z = exp_w_scalar(xi[i + l] - shift);
        wi[i + l] = z;
        acc[l] += z;
      }
    const double bs =
        detail::tail_exp_store_sum(xi, len8, len, shift, wi, combine8(acc));
    sub_sums[b] = bs;
    total += bs;
  }
  if (n == 0) total = 0.0;
  return total;
}

constexpr KernelOps kScalarOps = {
    &vec_exp_scalar,    &reduce_max_scalar,     &reduce_sum_scalar,
    &log_sum_exp_scalar, &gaussian_row_scalar,  &gaussian_row_max_scalar,
    &add_vec_scalar_scalar, &exp_row_store_scalar,
};

Backend detect_best() {
#if defined(__x86_64__) || defined(_M_X64)
#if DSMC_HAVE_AVX512
  if (__builtin_cpu_supports("avx512f")) return Backend::avx512;
#endif
#if DSMC_HAVE_AVX2
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
    return Backend::avx2;
#endif
#endif
  return Backend::scalar;
}

Backend initial_backend() {
  const char* env = std::getenv("DSMC_KERNELS");
  if (env) {
    const std::string s(env);
    Backend want = Backend::scalar;
    if (s == "scalar") want = Backend::scalar;
    else if (s == "avx2") want = Backend::avx2;
    else if (s == "avx512") want = Backend::avx512;
    else return detect_best();
    if (has_backend(want)) return want;
  }
  return detect_best();
}

std::atomic<const KernelOps*>& active_ops() {
  static std::atomic<const KernelOps*> ptr{&ops(initial_backend())};
  return ptr;
}

std::atomic<Backend>& active_id() {
  static std::atomic<Backend> id{initial_backend()};
  return id;
}

}  // namespace

#if DSMC_HAVE_AVX2
const KernelOps& avx2_ops();
#endif
#if DSMC_HAVE_AVX512
const KernelOps& avx512_ops();
#endif

Backend best_available() { return detect_best(); }

bool has_backend(Backend b) {
  switch (b) {
    case Backend::scalar:
      return true;
    case Backend::avx2:
#if DSMC_HAVE_AVX2
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Backend::avx512:
#if DSMC_HAVE_AVX512
      return __builtin_cpu_supports("avx512f");
#else
      return false;
#endif
  }
  return false;
}

const KernelOps& ops(Backend b) {
  switch (b) {
    case Backend::scalar:
      return kScalarOps;
    case Backend::avx2:
#if DSMC_HAVE_AVX2
      if (has_backend(Backend::avx2)) return avx2_ops();
#endif
      break;
    case Backend::avx512:
#if DSMC_HAVE_AVX512
      if (has_backend(Backend::avx512)) return avx512_ops();
#endif
      break;
  }
  throw std::invalid_argument("kernel backend not available on this host");
}

Backend active() { return active_id().load(std::memory_order_relaxed); }

void set_active(Backend b) {
  const KernelOps& table = ops(b);  // validates availability
  active_ops().store(&table, std::memory_order_relaxed);
  active_id().store(b, std::memory_order_relaxed);
}

const char* name(Backend b) {
  switch (b) {
    case Backend::scalar: return "scalar";
    case Backend::avx2: return "avx2";
    case Backend::avx512: return "avx512";
  }
  return "?";
}

double exp_w(double x) { return exp_w_scalar(x); }

void vec_exp(const double* x, std::size_t n, double* out) {
  active_ops().load(std::memory_order_relaxed)->vec_exp(x, n, out);
}
double reduce_max(const double* x, std::size_t n) {
  return active_ops().load(std::memory_order_relaxed)->reduce_max(x, n);
}
double reduce_sum(const double* x, std::size_t n) {
  return active_ops().load(std::memory_order_relaxed)->reduce_sum(x, n);
}
double log_sum_exp(const double* x, std::size_t n) {
  return active_ops().load(std::memory_order_relaxed)->log_sum_exp(x, n);
}
void gaussian_row(const double* x, std::size_t n, double mean,
                  double neg_half_inv_var, const double* base, double* out) {
  active_ops().load(std::memory_order_relaxed)
      ->gaussian_row(x, n, mean, neg_half_inv_var, base, out);
}
double gaussian_row_max(const double* x, std::size_t n, double mean,
                        double neg_half_inv_var, const double* base,
                        double add, double* out) {
  return active_ops().load(std::memory_order_relaxed)
      ->gaussian_row_max(x, n, mean, neg_half_inv_var, base, add, out);
}
void add_vec_scalar(double* io, std::size_t n, double s, const double* v) {
  active_ops().load(std::memory_order_relaxed)->add_vec_scalar(io, n, s, v);
}
double exp_row_store(const double* logw, std::size_t n, double shift,
                     double* w, double* sub_sums) {
  return active_ops().load(std::memory_order_relaxed)
      ->exp_row_store(logw, n, shift, w, sub_sums);
}

}  // namespace dsmc::kernels
