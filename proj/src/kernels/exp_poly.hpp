#pragma once

#include <bit>
#include <cmath>
#include <cstdint>

// Shared pieces of the kernel backends: the exp polynomial, its domain
// constants, and the scalar tail helpers every backend reuses so that tails
// are literally the same code path.

namespace dsmc::kernels::detail {

inline constexpr double kLog2E = 1.4426950408889634074;
// Cody-Waite split of ln 2.
inline constexpr double kLn2Hi = 6.93147180369123816490e-01;
inline constexpr double kLn2Lo = 1.90821492927058770002e-10;
inline constexpr double kExpLo = -708.0;
inline constexpr double kExpHi = 710.0;

// Taylor coefficients 1/k!, Horner-evaluated over |r| <= ln2/2. The degree-13
// tail term is ~4e-18 relative, below one ulp of the result.
inline constexpr double kExpC[14] = {
    1.0,
    1.0,
    1.0 / 2,
    1.0 / 6,
    1.0 / 24,
    1.0 / 120,
    1.0 / 720,
    1.0 / 5040,
    1.0 / 40320,
    1.0 / 362880,
    1.0 / 3628800,
    1.0 / 39916800,
    1.0 / 479001600,
    1.0 / 6227020800.0,
};

inline double exp_w_scalar(double x) {
  if (std::isnan(x)) return x;
  if (x <= kExpLo) return 0.0;
  const double xc = x > kExpHi ? kExpHi : x;
  const double k = std::nearbyint(xc * kLog2E);
  double r = std::fma(k, -kLn2Hi, xc);
  r = std::fma(k, -kLn2Lo, r);
  double p = kExpC[13];
  for (int i = 12; i >= 0; --i) p = std::fma(p, r, kExpC[i]);
  const auto ki = static_cast<std::int64_t>(k);
  const auto bits = static_cast<std::uint64_t>(ki + 1023) << 52;
  return p * std::bit_cast<double>(bits);
}

// Sequential tail pieces (< 8 entries), shared verbatim by all backends.

inline double tail_sum(const double* x, std::size_t i, std::size_t n, double acc) {
  for (; i < n; ++i) acc += x[i];
  return acc;
}

inline double tail_exp_sum(const double* x, std::size_t i, std::size_t n,
                           double shift, double acc) {
  for (; i < n; ++i) acc += exp_w_scalar(x[i] - shift);
  return acc;
}

inline double tail_exp_store_sum(const double* x, std::size_t i, std::size_t n,
                                 double shift, double* w, double acc) {
  for (; i < n; ++i) {
    const double z = exp_w_scalar(x[i] - shift);
    w[i] = z;
    acc += z;
  }
  return acc;
}

// Lane-combine shared by every backend: b[l] = acc[l] + acc[l+4], then
// (b0 + b2) + (b1 + b3).
inline double combine8(const double acc[8]) {
  const double b0 = acc[0] + acc[4];
  const double b1 = acc[1] + acc[5];
  const double b2 = acc[2] + acc[6];
  const double b3 = acc[3] + acc[7];
  return (b0 + b2) + (b1 + b3);
}

}  // namespace dsmc::kernels::detail
