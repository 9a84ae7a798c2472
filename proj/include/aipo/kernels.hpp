// SPDX-License-Identifier: Apache-2.0
//
// Dense inner loops used by the network code. Each kernel has a scalar
// reference implementation and, where the CPU supports it, an AVX2 variant
// chosen at runtime. Variants vectorize across independent outputs only,
// so every output element sees the same operations in the same order and
// results are bit-identical across variants.
#pragma once

#include <cstddef>
#include <span>
#include <string_view>
#include <vector>

namespace aipo::kernels {

enum class Isa { scalar, avx2 };

std::string_view isa_name(Isa isa);

/// ISA used by the dispatching entry points below. Defaults to the best
/// supported variant; the environment variable AIPO_ISA=scalar overrides.
Isa active_isa();
/// Force a variant (tests). Throws if the variant is unavailable.
void set_active_isa(Isa isa);
/// Variants compiled in and supported by this CPU.
std::vector<Isa> available_isas();

/// y = W x, W row-major rows x cols.
void matvec(std::span<const double> w, std::size_t rows, std::size_t cols,
            std::span<const double> x, std::span<double> y);
/// out += W^T g, W row-major rows x cols, g of length rows.
void matvec_t_acc(std::span<const double> w, std::size_t rows, std::size_t cols,
                  std::span<const double> g, std::span<double> out);
/// out += g x^T, out row-major rows x cols.
void outer_acc(std::span<const double> g, std::span<const double> x, std::span<double> out);
/// y += a * x.
void axpy(double a, std::span<const double> x, std::span<double> y);

struct AdamCoefficients {
  double lr;
  double beta1;
  double beta2;
  double eps;
  double bias1;  // 1 - beta1^t
  double bias2;  // 1 - beta2^t
};
/// Elementwise Adam update of params with moment buffers m and v.
void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                 std::span<double> v, const AdamCoefficients& c);

/// Per-variant entry points, for equivalence tests and benchmarks.
struct KernelTable {
  void (*matvec)(const double* w, std::size_t rows, std::size_t cols, const double* x, double* y);
  void (*matvec_t_acc)(const double* w, std::size_t rows, std::size_t cols, const double* g,
                       double* out);
  void (*outer_acc)(const double* g, std::size_t rows, const double* x, std::size_t cols,
                    double* out);
  void (*axpy)(double a, const double* x, std::size_t n, double* y);
  void (*adam_update)(double* p, const double* g, double* m, double* v, std::size_t n,
                      const AdamCoefficients& c);
};

const KernelTable& table(Isa isa);

namespace detail {
extern const KernelTable scalar_table;
#if defined(AIPO_BUILD_AVX2)
extern const KernelTable avx2_table;
#endif
}  // namespace detail

}  // namespace aipo::kernels
