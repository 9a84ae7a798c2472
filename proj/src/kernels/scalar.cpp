// SPDX-License-Identifier: Apache-2.0
#include <cmath>

#include "aipo/kernels.hpp"

namespace aipo::kernels::detail {
namespace {

void matvec(const double* w, std::size_t rows, std::size_t cols, const double* x, double* y) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = w + r * cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < cols; ++c) acc = acc + row[c] * x[c];
    y[r] = acc;
  }
}

void matvec_t_acc(const double* w, std::size_t rows, std::size_t cols, const double* g,
                  double* out) {
  for (std::size_t r = 0; r < rows; ++r) {
    const double* row = w + r * cols;
    const double gr = g[r];
    for (std::size_t c = 0; c < cols; ++c) out[c] = out[c] + row[c] * gr;
  }
}

void outer_acc(const double* g, std::size_t rows, const double* x, std::size_t cols,
               double* out) {
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = out + r * cols;
    const double gr = g[r];
    for (std::size_t c = 0; c < cols; ++c) row[c] = row[c] + gr * x[c];
  }
}

void axpy(double a, const double* x, std::size_t n, double* y) {
  for (std::size_t i = 0; i < n; ++i) y[i] = y[i] + a * x[i];
}

void adam_update(double* p, const double* g, double* m, double* v, std::size_t n,
                 const AdamCoefficients& c) {
  const double one_minus_b1 = 1.0 - c.beta1;
  const double one_minus_b2 = 1.0 - c.beta2;
  for (std::size_t i = 0; i < n; ++i) {
    m[i] = c.beta1 * m[i] + one_minus_b1 * g[i];
    v[i] = c.beta2 * v[i] + one_minus_b2 * (g[i] * g[i]);
    const double m_hat = m[i] / c.bias1;
    const double v_hat = v[i] / c.bias2;
    p[i] = p[i] - c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
  }
}

}  // namespace

const KernelTable scalar_table{&matvec, &matvec_t_acc, &outer_acc, &axpy, &adam_update};

}  // namespace aipo::kernels::detail
