// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <cstring>
#include <string>

#include "aipo/kernels.hpp"
#include "aipo/rng.hpp"

using namespace aipo;
using namespace aipo::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (double& x : v) x = rng.normal() * std::exp(3.0 * rng.normal());
  return v;
}

bool same_bits(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("every ISA variant is bitwise identical to the scalar reference") {
  const KernelTable& ref = table(Isa::scalar);
  Rng rng(17);
  for (Isa isa : available_isas()) {
    INFO("isa " << isa_name(isa));
    const KernelTable& k = table(isa);
    for (int trial = 0; trial < 300; ++trial) {
      const std::size_t rows = 1 + rng.below(37), cols = 1 + rng.below(37);
      const auto w = random_vec(rows * cols, rng);
      const auto x = random_vec(cols, rng);
      const auto g = random_vec(rows, rng);

      std::vector<double> y1(rows), y2(rows);
      ref.matvec(w.data(), rows, cols, x.data(), y1.data());
      k.matvec(w.data(), rows, cols, x.data(), y2.data());
      CHECK(same_bits(y1, y2));

      auto o1 = random_vec(cols, rng);
      auto o2 = o1;
      ref.matvec_t_acc(w.data(), rows, cols, g.data(), o1.data());
      k.matvec_t_acc(w.data(), rows, cols, g.data(), o2.data());
      CHECK(same_bits(o1, o2));

      auto p1 = random_vec(rows * cols, rng);
      auto p2 = p1;
      ref.outer_acc(g.data(), rows, x.data(), cols, p1.data());
      k.outer_acc(g.data(), rows, x.data(), cols, p2.data());
      CHECK(same_bits(p1, p2));

      auto a1 = random_vec(cols, rng);
      auto a2 = a1;
      const double a = rng.normal();
      ref.axpy(a, x.data(), cols, a1.data());
      k.axpy(a, x.data(), cols, a2.data());
      CHECK(same_bits(a1, a2));

      auto q1 = random_vec(cols, rng);
      auto q2 = q1;
      auto m1 = random_vec(cols, rng), v1 = random_vec(cols, rng);
      for (double& v : v1) v = std::abs(v);
      auto m2 = m1, v2 = v1;
      const AdamCoefficients c{1e-3, 0.9, 0.999, 1e-8, 1 - std::pow(0.9, 3), 1 - std::pow(0.999, 3)};
      ref.adam_update(q1.data(), x.data(), m1.data(), v1.data(), cols, c);
      k.adam_update(q2.data(), x.data(), m2.data(), v2.data(), cols, c);
      CHECK(same_bits(q1, q2));
      CHECK(same_bits(m1, m2));
      CHECK(same_bits(v1, v2));
    }
  }
}

TEST_CASE("dispatch follows the selected ISA") {
  const Isa before = active_isa();
  for (Isa isa : available_isas()) {
    set_active_isa(isa);
    CHECK(active_isa() == isa);
    std::vector<double> y(2);
    matvec(std::vector<double>{1, 2, 3, 4}, 2, 2, std::vector<double>{1, 1}, y);
    CHECK(y == std::vector<double>{3, 7});
  }
  set_active_isa(before);
}

TEST_CASE("AIPO_ISA=scalar selects the scalar kernels") {
  const char* env = std::getenv("AIPO_ISA");
  if (env != nullptr && std::string(env) == "scalar") CHECK(active_isa() == Isa::scalar);
  if (env == nullptr && available_isas().size() > 1) CHECK(active_isa() == Isa::avx2);
}

TEST_CASE("span size mismatches are rejected") {
  std::vector<double> y(3);
  CHECK_THROWS(matvec(std::vector<double>{1, 2, 3, 4}, 2, 2, std::vector<double>{1, 1}, y));
}

}  // TEST_SUITE
