// SPDX-License-Identifier: Apache-2.0
#include <doctest.h>

#include <cmath>

#include "aipo/error.hpp"
#include "aipo/tape.hpp"
#include "gradcheck.hpp"

using namespace aipo;

TEST_SUITE("ndmath") {

TEST_CASE("forward values of elementary ops") {
  Tape t(false);
  CHECK(tanh(t.constant(NumArray::scalar(0.0))).value().item() == 0.0);
  CHECK(sigmoid(t.constant(NumArray::scalar(0.0))).value().item() == 0.5);

  const NumArray w = NumArray::matrix(2, 2, {1, 2, 3, 4});
  const NumArray x = NumArray::vector({1, 1});
  const NumArray y = matvec(t.constant(w), t.constant(x)).value();
  // naive double loop
  for (std::size_t r = 0; r < 2; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < 2; ++c) acc += w.at(r, c) * x[c];
    CHECK(y[r] == acc);
  }
  CHECK(y == NumArray::vector({3, 7}));
}

TEST_CASE("backward of x^2 at 3 is 6") {
  Tape t;
  const NumArray x = NumArray::scalar(3.0);
  Var v = t.param("x", x);
  const GradMap g = t.backward(mul(v, v));
  CHECK(g.at("x").item() == doctest::Approx(6.0).epsilon(1e-15));
}

TEST_CASE("sum(tanh(Wx)) matches central differences") {
  Rng rng(5);
  NumArray w = NumArray::zeros({3, 4});
  for (double& v : w.mutable_data()) v = rng.normal();
  const NumArray x = NumArray::vector({0.3, -1.2, 0.8, 0.1});
  auto f = [&](const NumArray& wv) {
    Tape t(false);
    return sum(tanh(matvec(t.constant(wv), t.constant(x)))).value().item();
  };
  Tape t;
  const GradMap g = t.backward(sum(tanh(matvec(t.param("W", w), t.constant(x)))));
  std::vector<double> numeric(w.size());
  for (std::size_t k = 0; k < w.size(); ++k) {
    NumArray up = w, down = w;
    up[k] += 1e-5;
    down[k] -= 1e-5;
    numeric[k] = (f(up) - f(down)) / 2e-5;
  }
  CHECK(testing::relative_error(g.at("W").values(), numeric) < 1e-6);
}

TEST_CASE("unused parameter has zero gradient") {
  Tape t;
  const NumArray a = NumArray::vector({1, 2});
  const NumArray p = NumArray::vector({5, 6});
  Var va = t.param("a", a);
  t.param("p", p);
  const GradMap g = t.backward(sum(va));
  CHECK(g.at("p") == NumArray::vector({0, 0}));
}

TEST_CASE("gaussian_reparam") {
  Tape t(false);
  const auto mu = t.constant(NumArray::vector({0.5, -1.0}));
  const auto ls = t.constant(NumArray::vector({0.3, -0.2}));
  CHECK(gaussian_reparam(mu, ls, t.constant(NumArray::vector({0, 0}))).value() == NumArray::vector({0.5, -1.0}));
  const auto e = NumArray::vector({0.7, -1.9});
  const auto zero = t.constant(NumArray::vector({0, 0}));
  CHECK(gaussian_reparam(zero, zero, t.constant(e)).value() == e);

  // d/d(log_sigma) of sum(output) at log_sigma = 0 is eps.
  Tape g;
  const NumArray ls0 = NumArray::vector({0, 0});
  const GradMap grads = g.backward(sum(gaussian_reparam(g.constant(NumArray::vector({1, 2})), g.param("ls", ls0), g.constant(e))));
  auto f = [&](const NumArray& l) {
    Tape u(false);
    return sum(gaussian_reparam(u.constant(NumArray::vector({1, 2})), u.constant(l), u.constant(e))).value().item();
  };
  for (std::size_t k = 0; k < 2; ++k) {
    NumArray up = ls0, down = ls0;
    up[k] += 1e-5;
    down[k] -= 1e-5;
    CHECK(grads.at("ls")[k] == doctest::Approx((f(up) - f(down)) / 2e-5).epsilon(1e-8));
    CHECK(grads.at("ls")[k] == doctest::Approx(e[k]).epsilon(1e-12));
  }
}

TEST_CASE("every op matches finite differences on 100 random instances") {
  for (const auto& r : testing::check_ops(100, 7)) {
    INFO(r.name << " worst at " << r.worst);
    CHECK(r.instances == 100);
    CHECK(r.max_rel_error < 1e-6);
  }
}

TEST_CASE("tape is consumed by backward") {
  Tape t;
  const NumArray x = NumArray::scalar(2.0);
  Var v = t.param("x", x);
  Var loss = mul(v, v);
  t.backward(loss);
  CHECK_THROWS_AS(t.backward(loss), Error);
}

TEST_CASE("non-scalar loss and unrecorded tapes are rejected") {
  Tape t;
  const NumArray x = NumArray::vector({1, 2});
  Var v = t.param("x", x);
  CHECK_THROWS_WITH_AS(t.backward(v), doctest::Contains("not_scalar"), Error);
  Tape off(false);
  Var c = off.constant(NumArray::scalar(1.0));
  CHECK_THROWS_AS(off.backward(c), Error);
}

TEST_CASE("shape mismatch names the op and both shapes") {
  Tape t(false);
  Var a = t.constant(NumArray::vector({1, 2}));
  Var b = t.constant(NumArray::vector({1, 2, 3}));
  try {
    add(a, b);
    FAIL("expected a shape error");
  } catch (const Error& e) {
    const std::string what = e.what();
    CHECK(e.kind() == ErrorKind::numeric);
    CHECK(what.find("add") != std::string::npos);
    CHECK(what.find("[2]") != std::string::npos);
    CHECK(what.find("[3]") != std::string::npos);
  }
  Var w = t.constant(NumArray::matrix(2, 3, {1, 2, 3, 4, 5, 6}));
  CHECK_THROWS_WITH_AS(matvec(w, a), doctest::Contains("matvec"), Error);
}

TEST_CASE("non-finite results are rejected") {
  Tape t(false);
  CHECK_THROWS_WITH_AS(exp(t.constant(NumArray::scalar(1000.0))), doctest::Contains("non_finite"), Error);
  CHECK_THROWS_AS(log(t.constant(NumArray::scalar(-1.0))), Error);
}

TEST_CASE("frozen parameters receive no gradient") {
  Tape t;
  t.set_frozen([](const std::string& n) { return n == "b"; });
  const NumArray a = NumArray::scalar(2.0), b = NumArray::scalar(3.0);
  const GradMap g = t.backward(mul(t.param("a", a), t.param("b", b)));
  CHECK(g.count("a") == 1);
  CHECK(g.count("b") == 0);
  CHECK(g.at("a").item() == 3.0);
}

TEST_CASE("forward evaluation is bit-reproducible") {
  Rng rng(9);
  NumArray w = NumArray::zeros({7, 5});
  for (double& v : w.mutable_data()) v = rng.normal();
  NumArray x = NumArray::zeros({5});
  for (double& v : x.mutable_data()) v = rng.normal();
  auto run = [&] {
    Tape t(false);
    return log_softmax(tanh(matvec(t.constant(w), t.constant(x)))).value();
  };
  CHECK(run() == run());
}

TEST_CASE("NumArray invariants") {
  CHECK_THROWS_AS(NumArray({2, 2}, {1, 2, 3}), Error);
  CHECK_THROWS_AS(NumArray::zeros({0}), Error);
  CHECK(NumArray::zeros({2, 3}).size() == 6);
  CHECK_THROWS_AS(NumArray::vector({1, 2}).item(), Error);
}

}  // TEST_SUITE
