// SPDX-License-Identifier: Apache-2.0
#include <atomic>
#include <cstdlib>
#include <string>

#include "aipo/error.hpp"
#include "aipo/kernels.hpp"

namespace aipo::kernels {
namespace {

bool cpu_has_avx2() {
#if defined(AIPO_BUILD_AVX2) && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

Isa detect() {
  if (const char* env = std::getenv("AIPO_ISA"); env != nullptr && std::string(env) == "scalar") {
    return Isa::scalar;
  }
  return cpu_has_avx2() ? Isa::avx2 : Isa::scalar;
}

std::atomic<Isa>& active() {
  static std::atomic<Isa> isa{detect()};
  return isa;
}

void check_size(bool ok, const char* op) {
  if (!ok) throw numeric_error("shape_mismatch", std::string("kernel ") + op + ": span size mismatch");
}

}  // namespace

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

Isa active_isa() { return active().load(std::memory_order_relaxed); }

void set_active_isa(Isa isa) {
  if (isa == Isa::avx2 && !cpu_has_avx2()) {
    throw config_error("isa_unavailable", "avx2 kernels not available on this CPU/build");
  }
  active().store(isa, std::memory_order_relaxed);
}

std::vector<Isa> available_isas() {
  std::vector<Isa> out{Isa::scalar};
  if (cpu_has_avx2()) out.push_back(Isa::avx2);
  return out;
}

const KernelTable& table(Isa isa) {
#if defined(AIPO_BUILD_AVX2)
  if (isa == Isa::avx2) return detail::avx2_table;
#endif
  (void)isa;
  return detail::scalar_table;
}

void matvec(std::span<const double> w, std::size_t rows, std::size_t cols,
            std::span<const double> x, std::span<double> y) {
  check_size(w.size() == rows * cols && x.size() == cols && y.size() == rows, "matvec");
  table(active_isa()).matvec(w.data(), rows, cols, x.data(), y.data());
}

void matvec_t_acc(std::span<const double> w, std::size_t rows, std::size_t cols,
                  std::span<const double> g, std::span<double> out) {
  check_size(w.size() == rows * cols && g.size() == rows && out.size() == cols, "matvec_t_acc");
  table(active_isa()).matvec_t_acc(w.data(), rows, cols, g.data(), out.data());
}

void outer_acc(std::span<const double> g, std::span<const double> x, std::span<double> out) {
  check_size(out.size() == g.size() * x.size(), "outer_acc");
  table(active_isa()).outer_acc(g.data(), g.size(), x.data(), x.size(), out.data());
}

void axpy(double a, std::span<const double> x, std::span<double> y) {
  check_size(x.size() == y.size(), "axpy");
  table(active_isa()).axpy(a, x.data(), x.size(), y.data());
}

void adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m,
                 std::span<double> v, const AdamCoefficients& c) {
  check_size(grads.size() == params.size() && m.size() == params.size() &&
                 v.size() == params.size(),
             "adam_update");
  table(active_isa()).adam_update(params.data(), grads.data(), m.data(), v.data(), params.size(),
                                  c);
}

}  // namespace aipo::kernels
