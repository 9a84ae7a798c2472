// SPDX-License-Identifier: Apache-2.0
//
// Reverse-mode differentiation over NumArray values. A Tape records every
// operation as a node; Var is a lightweight handle to a node. Nodes are
// appended after their inputs, so reverse id order is a valid topological
// order for the backward sweep.
#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "aipo/ndarray.hpp"

namespace aipo {

class Tape;

enum class Op : std::uint8_t {
  param,
  constant,
  add,
  sub,
  mul,
  matvec,
  tanh,
  sigmoid,
  exp,
  log,
  sum,
  mean,
  scale,
  shift,
  concat,
  slice,
  clamp,
  softplus,
  log_softmax,
};

std::string_view op_name(Op op);

struct Var {
  Tape* tape = nullptr;
  std::uint32_t id = 0;

  const NumArray& value() const;
  std::size_t size() const { return value().size(); }
};

struct TapeNode {
  Op op = Op::constant;
  std::vector<std::uint32_t> inputs;
  NumArray owned;
  const NumArray* borrowed = nullptr;  // parameter leaves point into the caller's store
  std::vector<double> adjoint;
  double arg0 = 0.0;
  double arg1 = 0.0;
  std::size_t offset = 0;
  std::string name;  // parameter name for leaves
  bool requires_grad = false;

  const NumArray& value() const { return borrowed != nullptr ? *borrowed : owned; }
};

using GradMap = std::map<std::string, NumArray>;

class Tape {
 public:
  /// With recording off, values are computed but backward() is rejected.
  explicit Tape(bool recording = true) : recording_(recording) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const noexcept { return recording_; }

  /// Leaf for a named parameter. The array must outlive the tape. Repeated
  /// calls with the same name return the same node.
  Var param(const std::string& name, const NumArray& value);
  Var constant(NumArray value);
  Var constant(std::span<const double> values);

  /// Parameters for which no gradient is wanted. Must be set before the
  /// corresponding param() call.
  void set_frozen(std::function<bool(const std::string&)> is_frozen) {
    is_frozen_ = std::move(is_frozen);
  }

  const NumArray& value(Var v) const { return nodes_.at(v.id).value(); }
  const TapeNode& node(std::uint32_t id) const { return nodes_.at(id); }
  std::size_t size() const noexcept { return nodes_.size(); }
  bool consumed() const noexcept { return consumed_; }

  /// Gradient of a scalar node with respect to every non-frozen parameter
  /// recorded on this tape. Consumes the tape.
  GradMap backward(Var loss);

  // Used by the op functions.
  Var push(TapeNode node);

 private:
  std::vector<TapeNode> nodes_;
  std::map<std::string, std::uint32_t, std::less<>> params_;
  std::function<bool(const std::string&)> is_frozen_;
  bool recording_;
  bool consumed_ = false;
};

Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
/// Matrix [r, c] times vector [c].
Var matvec(Var w, Var x);
Var tanh(Var a);
Var sigmoid(Var a);
Var exp(Var a);
Var log(Var a);
Var sum(Var a);
Var mean(Var a);
Var scale(Var a, double c);
Var shift(Var a, double c);
Var concat(std::span<const Var> parts);
Var concat(std::initializer_list<Var> parts);
Var slice(Var a, std::size_t offset, std::size_t length);
Var clamp(Var a, double lo, double hi);
Var softplus(Var a);
Var log_softmax(Var a);

/// mu + exp(log_sigma) * eps.
Var gaussian_reparam(Var mu, Var log_sigma, Var eps);

}  // namespace aipo
