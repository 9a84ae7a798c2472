// SPDX-License-Identifier: Apache-2.0
//
// AVX2 variants. Compiled with -mavx2 only (no FMA) so that every lane
// performs the same multiply-then-add sequence as the scalar reference.
#include <immintrin.h>

#include <cmath>

#include "aipo/kernels.hpp"

namespace aipo::kernels::detail {
namespace {

inline void transpose4(__m256d a0, __m256d a1, __m256d a2, __m256d a3, __m256d& c0, __m256d& c1,
                       __m256d& c2, __m256d& c3) {
  const __m256d t0 = _mm256_unpacklo_pd(a0, a1);
  const __m256d t1 = _mm256_unpackhi_pd(a0, a1);
  const __m256d t2 = _mm256_unpacklo_pd(a2, a3);
  const __m256d t3 = _mm256_unpackhi_pd(a2, a3);
  c0 = _mm256_permute2f128_pd(t0, t2, 0x20);
  c1 = _mm256_permute2f128_pd(t1, t3, 0x20);
  c2 = _mm256_permute2f128_pd(t0, t2, 0x31);
  c3 = _mm256_permute2f128_pd(t1, t3, 0x31);
}

void matvec(const double* w, std::size_t rows, std::size_t cols, const double* x, double* y) {
  std::size_t r = 0;
  for (; r + 4 <= rows; r += 4) {
    const double* w0 = w + r * cols;
    const double* w1 = w0 + cols;
    const double* w2 = w1 + cols;
    const double* w3 = w2 + cols;
    __m256d acc = _mm256_setzero_pd();
    std::size_t c = 0;
    for (; c + 4 <= cols; c += 4) {
      __m256d c0, c1, c2, c3;
      transpose4(_mm256_loadu_pd(w0 + c), _mm256_loadu_pd(w1 + c), _mm256_loadu_pd(w2 + c),
                 _mm256_loadu_pd(w3 + c), c0, c1, c2, c3);
      acc = _mm256_add_pd(acc, _mm256_mul_pd(c0, _mm256_set1_pd(x[c])));
      acc = _mm256_add_pd(acc, _mm256_mul_pd(c1, _mm256_set1_pd(x[c + 1])));
      acc = _mm256_add_pd(acc, _mm256_mul_pd(c2, _mm256_set1_pd(x[c + 2])));
      acc = _mm256_add_pd(acc, _mm256_mul_pd(c3, _mm256_set1_pd(x[c + 3])));
    }
    for (; c < cols; ++c) {
      const __m256d col = _mm256_set_pd(w3[c], w2[c], w1[c], w0[c]);
      acc = _mm256_add_pd(acc, _mm256_mul_pd(col, _mm256_set1_pd(x[c])));
    }
    _mm256_storeu_pd(y + r, acc);
  }
  for (; r < rows; ++r) {
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
    const __m256d gv = _mm256_set1_pd(gr);
    std::size_t c = 0;
    for (; c + 4 <= cols; c += 4) {
      const __m256d o = _mm256_loadu_pd(out + c);
      _mm256_storeu_pd(out + c, _mm256_add_pd(o, _mm256_mul_pd(_mm256_loadu_pd(row + c), gv)));
    }
    for (; c < cols; ++c) out[c] = out[c] + row[c] * gr;
  }
}

void outer_acc(const double* g, std::size_t rows, const double* x, std::size_t cols,
               double* out) {
  for (std::size_t r = 0; r < rows; ++r) {
    double* row = out + r * cols;
    const double gr = g[r];
    const __m256d gv = _mm256_set1_pd(gr);
    std::size_t c = 0;
    for (; c + 4 <= cols; c += 4) {
      const __m256d o = _mm256_loadu_pd(row + c);
      _mm256_storeu_pd(row + c, _mm256_add_pd(o, _mm256_mul_pd(gv, _mm256_loadu_pd(x + c))));
    }
    for (; c < cols; ++c) row[c] = row[c] + gr * x[c];
  }
}

void axpy(double a, const double* x, std::size_t n, double* y) {
  const __m256d av = _mm256_set1_pd(a);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d yv = _mm256_loadu_pd(y + i);
    _mm256_storeu_pd(y + i, _mm256_add_pd(yv, _mm256_mul_pd(av, _mm256_loadu_pd(x + i))));
  }
  for (; i < n; ++i) y[i] = y[i] + a * x[i];
}

void adam_update(double* p, const double* g, double* m, double* v, std::size_t n,
                 const AdamCoefficients& c) {
  const double one_minus_b1 = 1.0 - c.beta1;
  const double one_minus_b2 = 1.0 - c.beta2;
  const __m256d b1 = _mm256_set1_pd(c.beta1);
  const __m256d b2 = _mm256_set1_pd(c.beta2);
  const __m256d nb1 = _mm256_set1_pd(one_minus_b1);
  const __m256d nb2 = _mm256_set1_pd(one_minus_b2);
  const __m256d bc1 = _mm256_set1_pd(c.bias1);
  const __m256d bc2 = _mm256_set1_pd(c.bias2);
  const __m256d lr = _mm256_set1_pd(c.lr);
  const __m256d eps = _mm256_set1_pd(c.eps);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    const __m256d gv = _mm256_loadu_pd(g + i);
    const __m256d mv = _mm256_add_pd(_mm256_mul_pd(b1, _mm256_loadu_pd(m + i)),
                                     _mm256_mul_pd(nb1, gv));
    const __m256d vv = _mm256_add_pd(_mm256_mul_pd(b2, _mm256_loadu_pd(v + i)),
                                     _mm256_mul_pd(nb2, _mm256_mul_pd(gv, gv)));
    _mm256_storeu_pd(m + i, mv);
    _mm256_storeu_pd(v + i, vv);
    const __m256d m_hat = _mm256_div_pd(mv, bc1);
    const __m256d v_hat = _mm256_div_pd(vv, bc2);
    const __m256d step =
        _mm256_div_pd(_mm256_mul_pd(lr, m_hat), _mm256_add_pd(_mm256_sqrt_pd(v_hat), eps));
    _mm256_storeu_pd(p + i, _mm256_sub_pd(_mm256_loadu_pd(p + i), step));
  }
  for (; i < n; ++i) {
    m[i] = c.beta1 * m[i] + one_minus_b1 * g[i];
    v[i] = c.beta2 * v[i] + one_minus_b2 * (g[i] * g[i]);
    const double m_hat = m[i] / c.bias1;
    const double v_hat = v[i] / c.bias2;
    p[i] = p[i] - c.lr * m_hat / (std::sqrt(v_hat) + c.eps);
  }
}

}  // namespace

const KernelTable avx2_table{&matvec, &matvec_t_acc, &outer_acc, &axpy, &adam_update};

}  // namespace aipo::kernels::detail
