#pragma once

// Dense-grid forward-backward oracle for scalar Feynman-Kac models: the
// continuous integrals become Riemann sums on a wide uniform grid, giving
// brute-force smoothing marginals, pairwise expectations, and the normalizer.
// Slow and exact-ish; the grid must cover all non-negligible posterior mass.

#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "dsmc/fk_model.hpp"

namespace testsupport {

struct GridTruth {
  double log_z = 0.0;
  std::vector<double> smooth_mean;
  std::vector<double> smooth_var;

  // Normalized forward/backward tables and the grid itself, kept so callers
  // can take expectations of arbitrary functionals afterwards.
  std::vector<double> xs;
  std::vector<std::vector<double>> alpha;  // alpha[t] sums to 1
  std::vector<std::vector<double>> beta;   // arbitrary per-t scale
  const dsmc::FeynmanKacModel* model = nullptr;

  // E[f(x_t) | y]
  double marginal_expectation(int t,
                              const std::function<double(double)>& f) const {
    const std::size_t tt = static_cast<std::size_t>(t);
    double num = 0.0, den = 0.0;
    for (std::size_t k = 0; k < xs.size(); ++k) {
      const double g = alpha[tt][k] * beta[tt][k];
      num += g * f(xs[k]);
      den += g;
    }
    return num / den;
  }

  // E[g(x_{t-1}, x_t) | y], t >= 1
  double pair_expectation(
      int t, const std::function<double(double, double)>& g) const {
    const std::size_t tt = static_cast<std::size_t>(t);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      if (alpha[tt - 1][i] == 0.0) continue;
      for (std::size_t k = 0; k < xs.size(); ++k) {
        const double w =
            alpha[tt - 1][i] *
            std::exp(model->transition_logdensity(t, &xs[i], &xs[k]) +
                     model->log_potential(t, &xs[k])) *
            beta[tt][k];
        num += w * g(xs[i], xs[k]);
        den += w;
      }
    }
    return num / den;
  }
};

inline GridTruth grid_truth(const dsmc::FeynmanKacModel& m, double lo,
                            double hi, int cells) {
  const int G = cells + 1;
  const double step = (hi - lo) / cells;
  GridTruth out;
  out.model = &m;
  out.xs.resize(G);
  for (int k = 0; k < G; ++k) out.xs[k] = lo + k * step;
  const auto& xs = out.xs;
  const int T = m.horizon;

  auto& alpha = out.alpha;
  alpha.assign(T + 1, std::vector<double>(G));
  double log_scale = 0.0;
  for (int k = 0; k < G; ++k)
    alpha[0][k] =
        std::exp(m.init_logdensity(&xs[k]) + m.log_potential(0, &xs[k])) *
        step;
  for (int t = 1; t <= T; ++t) {
    double total_prev = 0.0;
    for (int k = 0; k < G; ++k) total_prev += alpha[t - 1][k];
    log_scale += std::log(total_prev);
    for (int k = 0; k < G; ++k) alpha[t - 1][k] /= total_prev;
    for (int k = 0; k < G; ++k) {
      double acc = 0.0;
      for (int i = 0; i < G; ++i)
        acc += alpha[t - 1][i] *
               std::exp(m.transition_logdensity(t, &xs[i], &xs[k]));
      alpha[t][k] = acc * std::exp(m.log_potential(t, &xs[k])) * step;
    }
  }
  double total_T = 0.0;
  for (int k = 0; k < G; ++k) total_T += alpha[T][k];
  out.log_z = log_scale + std::log(total_T);
  for (int k = 0; k < G; ++k) alpha[T][k] /= total_T;

  auto& beta = out.beta;
  beta.assign(T + 1, std::vector<double>(G, 1.0));
  for (int t = T - 1; t >= 0; --t) {
    double scale = 0.0;
    for (int i = 0; i < G; ++i) {
      double acc = 0.0;
      for (int k = 0; k < G; ++k)
        acc += std::exp(m.transition_logdensity(t + 1, &xs[i], &xs[k]) +
                        m.log_potential(t + 1, &xs[k])) *
               beta[t + 1][k] * step;
      beta[t][i] = acc;
      scale += acc;
    }
    for (int i = 0; i < G; ++i) beta[t][i] /= scale;
  }

  out.smooth_mean.resize(T + 1);
  out.smooth_var.resize(T + 1);
  for (int t = 0; t <= T; ++t) {
    double num = 0.0, num2 = 0.0, den = 0.0;
    for (int k = 0; k < G; ++k) {
      const double g = alpha[t][k] * beta[t][k];
      num += g * xs[k];
      num2 += g * xs[k] * xs[k];
      den += g;
    }
    out.smooth_mean[t] = num / den;
    out.smooth_var[t] = num2 / den - (num / den) * (num / den);
  }
  return out;
}

}  // namespace testsupport
