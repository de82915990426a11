#pragma once

#include <cstddef>
#include <cstdint>

// Runtime-dispatched numeric kernels used by the hot loops (dense pair-weight
// matrices, exp-normalization, batched Gaussian log-densities). Three backends:
// a scalar reference, AVX2, and AVX-512F. All backends follow the same virtual
// 8-lane accumulator layout and evaluate the same polynomial exp, so reductions
// and transforms are bit-identical across backends; the equivalence tests assert
// exact equality.
//
// Reduction order contract: the main body is processed in groups of 8 entries
// accumulated into 8 independent lanes acc[0..7]; lanes combine as
//   b[l] = acc[l] + acc[l+4],  total = (b[0] + b[2]) + (b[1] + b[3]),
// and any tail (< 8 entries) is added sequentially afterwards. exp_row_store
// applies this per kSubBlock-entry sub-block and sums sub-blocks sequentially.
//
// exp domain contract: x <= -708 maps to 0, x >= 710 to +inf, NaN propagates.
// Inputs are clamped, never subnormal on output.

namespace dsmc::kernels {

enum class Backend { scalar = 0, avx2 = 1, avx512 = 2 };

// Highest backend supported by this CPU and build.
Backend best_available();
bool has_backend(Backend b);

// Active backend. First call honors DSMC_KERNELS=scalar|avx2|avx512 when set,
// otherwise best_available(). set_active throws std::invalid_argument for a
// backend this host cannot run.
Backend active();
void set_active(Backend b);
const char* name(Backend b);

// Scalar exp with the kernel domain contract; identical bit pattern to the
// batch kernels' per-element results.
double exp_w(double x);

// out[i] = exp_w(x[i])
void vec_exp(const double* x, std::size_t n, double* out);

// Maximum entry; -inf for n == 0 or all--inf input. Throws std::domain_error
// on NaN (weights upstream must never be NaN).
double reduce_max(const double* x, std::size_t n);

// Fixed-order sum per the reduction contract above.
double reduce_sum(const double* x, std::size_t n);

// log(sum_i exp(x[i])), max-shifted; -inf for empty/all--inf input.
double log_sum_exp(const double* x, std::size_t n);

// out[j] = (base ? base[j] : 0) + neg_half_inv_var * (x[j] - mean)^2
void gaussian_row(const double* x, std::size_t n, double mean,
                  double neg_half_inv_var, const double* base, double* out);

// out[j] = (base ? base[j] : 0) + neg_half_inv_var * (x[j] - mean)^2 + add,
// returning max_j out[j] (-inf for n == 0) so a caller that needs the row
// maximum as an exp shift avoids a second pass. Throws std::domain_error if
// any entry is NaN, after the row has been fully written.
double gaussian_row_max(const double* x, std::size_t n, double mean,
                        double neg_half_inv_var, const double* base,
                        double add, double* out);

// io[j] = io[j] + s + (v ? v[j] : 0)
void add_vec_scalar(double* io, std::size_t n, double s, const double* v);

// w[j] = exp_w(logw[j] - shift); sub_sums[b] = sum of w over sub-block b
// (kSubBlock entries each, ceil(n/kSubBlock) blocks); returns the sequential
// sum of the sub-block sums. The block size balances the extra sub-sum
// bookkeeping against the length of the linear scan a sampler needs inside
// one block: 64 keeps the scan within a few cache lines.
double exp_row_store(const double* logw, std::size_t n, double shift,
                     double* w, double* sub_sums);

inline constexpr std::size_t kSubBlock = 64;

// Per-backend entry points, used by the dispatcher and the equivalence tests.
struct KernelOps {
  void (*vec_exp)(const double*, std::size_t, double*);
  double (*reduce_max)(const double*, std::size_t);
  double (*reduce_sum)(const double*, std::size_t);
  double (*log_sum_exp)(const double*, std::size_t);
  void (*gaussian_row)(const double*, std::size_t, double, double,
                       const double*, double*);
  double (*gaussian_row_max)(const double*, std::size_t, double, double,
                             const double*, double, double*);
  void (*add_vec_scalar)(double*, std::size_t, double, const double*);
  double (*exp_row_store)(const double*, std::size_t, double, double*, double*);
};

const KernelOps& ops(Backend b);  // throws if unsupported

}  // namespace dsmc::kernels
