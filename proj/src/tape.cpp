// SPDX-License-Identifier: Apache-2.0
#include "aipo/tape.hpp"

#include <cmath>

#include "aipo/error.hpp"
#include "aipo/kernels.hpp"

namespace aipo {
namespace {

Tape& tape_of(Var a) {
  if (a.tape == nullptr) throw numeric_error("bad_var", "variable is not attached to a tape");
  return *a.tape;
}

Tape& common_tape(Var a, Var b, Op op) {
  if (a.tape != b.tape || a.tape == nullptr) {
    throw numeric_error("bad_var", std::string(op_name(op)) + ": operands live on different tapes");
  }
  return *a.tape;
}

void require_same_shape(const NumArray& a, const NumArray& b, Op op) {
  if (a.shape() != b.shape()) {
    throw numeric_error("shape_mismatch", std::string(op_name(op)) + ": " + a.shape_string() +
                                              " vs " + b.shape_string());
  }
}

TapeNode make_node(Op op, std::vector<std::uint32_t> inputs, NumArray value, const Tape& t) {
  TapeNode n;
  n.op = op;
  n.inputs = std::move(inputs);
  n.owned = std::move(value);
  for (auto id : n.inputs) n.requires_grad = n.requires_grad || t.node(id).requires_grad;
  return n;
}

Var unary(Var a, Op op, double (*f)(double)) {
  Tape& t = tape_of(a);
  const NumArray& x = a.value();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(x[i]);
  return t.push(make_node(op, {a.id}, NumArray(x.shape(), std::move(out)), t));
}

double logistic(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double softplus_value(double x) {
  return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

}  // namespace

std::string_view op_name(Op op) {
  switch (op) {
    case Op::param: return "param";
    case Op::constant: return "constant";
    case Op::add: return "add";
    case Op::sub: return "subtract";
    case Op::mul: return "multiply";
    case Op::matvec: return "matvec";
    case Op::tanh: return "tanh";
    case Op::sigmoid: return "sigmoid";
    case Op::exp: return "exp";
    case Op::log: return "log";
    case Op::sum: return "sum";
    case Op::mean: return "mean";
    case Op::scale: return "scale";
    case Op::shift: return "shift";
    case Op::concat: return "concat";
    case Op::slice: return "slice";
    case Op::clamp: return "clamp";
    case Op::softplus: return "softplus";
    case Op::log_softmax: return "log_softmax";
  }
  return "unknown";
}

const NumArray& Var::value() const { return tape_of(*this).value(*this); }

Var Tape::push(TapeNode node) {
  if (consumed_) throw numeric_error("tape_consumed", "cannot record on a consumed tape");
  if (!node.value().all_finite()) {
    throw numeric_error("non_finite", std::string(op_name(node.op)) + " produced a non-finite value");
  }
  if (!recording_) node.requires_grad = false;
  nodes_.push_back(std::move(node));
  return Var{this, static_cast<std::uint32_t>(nodes_.size() - 1)};
}

Var Tape::param(const std::string& name, const NumArray& value) {
  if (auto it = params_.find(name); it != params_.end()) return Var{this, it->second};
  TapeNode n;
  n.op = Op::param;
  n.borrowed = &value;
  n.name = name;
  n.requires_grad = recording_ && !(is_frozen_ && is_frozen_(name));
  Var v = push(std::move(n));
  params_.emplace(name, v.id);
  return v;
}

Var Tape::constant(NumArray value) {
  TapeNode n;
  n.op = Op::constant;
  n.owned = std::move(value);
  return push(std::move(n));
}

Var Tape::constant(std::span<const double> values) {
  return constant(NumArray::vector(std::vector<double>(values.begin(), values.end())));
}

GradMap Tape::backward(Var loss) {
  if (!recording_) throw numeric_error("not_recording", "backward on a non-recording tape");
  if (consumed_) throw numeric_error("tape_consumed", "backward called twice on the same tape");
  if (loss.tape != this) throw numeric_error("bad_var", "loss belongs to another tape");
  if (value(loss).size() != 1) {
    throw numeric_error("not_scalar", "backward needs a scalar loss, got shape " +
                                          value(loss).shape_string());
  }
  consumed_ = true;

  auto adj = [&](std::uint32_t id) -> std::vector<double>& {
    auto& a = nodes_[id].adjoint;
    if (a.empty()) a.assign(nodes_[id].value().size(), 0.0);
    return a;
  };
  adj(loss.id)[0] = 1.0;

  for (std::int64_t i = loss.id; i >= 0; --i) {
    TapeNode& n = nodes_[static_cast<std::size_t>(i)];
    if (n.adjoint.empty() || !n.requires_grad) continue;
    const std::vector<double>& g = n.adjoint;
    const NumArray& y = n.value();
    switch (n.op) {
      case Op::param:
      case Op::constant:
        break;
      case Op::add:
      case Op::sub: {
        const double sign_b = n.op == Op::add ? 1.0 : -1.0;
        if (nodes_[n.inputs[0]].requires_grad) kernels::axpy(1.0, g, adj(n.inputs[0]));
        if (nodes_[n.inputs[1]].requires_grad) kernels::axpy(sign_b, g, adj(n.inputs[1]));
        break;
      }
      case Op::mul: {
        const auto a_id = n.inputs[0], b_id = n.inputs[1];
        const NumArray& a = nodes_[a_id].value();
        const NumArray& b = nodes_[b_id].value();
        if (nodes_[a_id].requires_grad) {
          auto& ga = adj(a_id);
          for (std::size_t k = 0; k < g.size(); ++k) ga[k] = ga[k] + g[k] * b[k];
        }
        if (nodes_[b_id].requires_grad) {
          auto& gb = adj(b_id);
          for (std::size_t k = 0; k < g.size(); ++k) gb[k] = gb[k] + g[k] * a[k];
        }
        break;
      }
      case Op::matvec: {
        const auto w_id = n.inputs[0], x_id = n.inputs[1];
        const NumArray& w = nodes_[w_id].value();
        const NumArray& x = nodes_[x_id].value();
        if (nodes_[w_id].requires_grad) kernels::outer_acc(g, x.data(), adj(w_id));
        if (nodes_[x_id].requires_grad) {
          kernels::matvec_t_acc(w.data(), w.rows(), w.cols(), g, adj(x_id));
        }
        break;
      }
      case Op::tanh: {
        auto& ga = adj(n.inputs[0]);
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] = ga[k] + g[k] * (1.0 - y[k] * y[k]);
        break;
      }
      case Op::sigmoid: {
        auto& ga = adj(n.inputs[0]);
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] = ga[k] + g[k] * y[k] * (1.0 - y[k]);
        break;
      }
      case Op::exp: {
        auto& ga = adj(n.inputs[0]);
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] = ga[k] + g[k] * y[k];
        break;
      }
      case Op::log: {
        const NumArray& a = nodes_[n.inputs[0]].value();
        auto& ga = adj(n.inputs[0]);
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] = ga[k] + g[k] / a[k];
        break;
      }
      case Op::sum:
      case Op::mean: {
        auto& ga = adj(n.inputs[0]);
        const double s = n.op == Op::sum ? g[0] : g[0] / static_cast<double>(ga.size());
        for (double& v : ga) v = v + s;
        break;
      }
      case Op::scale:
        kernels::axpy(n.arg0, g, adj(n.inputs[0]));
        break;
      case Op::shift:
        kernels::axpy(1.0, g, adj(n.inputs[0]));
        break;
      case Op::concat: {
        std::size_t off = 0;
        for (auto id : n.inputs) {
          const std::size_t len = nodes_[id].value().size();
          if (nodes_[id].requires_grad) {
            auto& ga = adj(id);
            for (std::size_t k = 0; k < len; ++k) ga[k] = ga[k] + g[off + k];
          }
          off += len;
        }
        break;
      }
      case Op::slice: {
        auto& ga = adj(n.inputs[0]);
        for (std::size_t k = 0; k < g.size(); ++k) ga[n.offset + k] = ga[n.offset + k] + g[k];
        break;
      }
      case Op::clamp: {
        const NumArray& a = nodes_[n.inputs[0]].value();
        auto& ga = adj(n.inputs[0]);
        for (std::size_t k = 0; k < g.size(); ++k) {
          if (a[k] >= n.arg0 && a[k] <= n.arg1) ga[k] = ga[k] + g[k];
        }
        break;
      }
      case Op::softplus: {
        const NumArray& a = nodes_[n.inputs[0]].value();
        auto& ga = adj(n.inputs[0]);
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] = ga[k] + g[k] * logistic(a[k]);
        break;
      }
      case Op::log_softmax: {
        double gsum = 0.0;
        for (double v : g) gsum += v;
        auto& ga = adj(n.inputs[0]);
        for (std::size_t k = 0; k < g.size(); ++k) ga[k] = ga[k] + g[k] - std::exp(y[k]) * gsum;
        break;
      }
    }
  }

  GradMap grads;
  for (const auto& [name, id] : params_) {
    const TapeNode& n = nodes_[id];
    if (!n.requires_grad) continue;
    std::vector<double> g = n.adjoint.empty() ? std::vector<double>(n.value().size(), 0.0)
                                              : std::move(nodes_[id].adjoint);
    grads.emplace(name, NumArray(n.value().shape(), std::move(g)));
  }
  return grads;
}

Var add(Var a, Var b) {
  Tape& t = common_tape(a, b, Op::add);
  const NumArray& x = a.value();
  const NumArray& y = b.value();
  require_same_shape(x, y, Op::add);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return t.push(make_node(Op::add, {a.id, b.id}, NumArray(x.shape(), std::move(out)), t));
}

Var sub(Var a, Var b) {
  Tape& t = common_tape(a, b, Op::sub);
  const NumArray& x = a.value();
  const NumArray& y = b.value();
  require_same_shape(x, y, Op::sub);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return t.push(make_node(Op::sub, {a.id, b.id}, NumArray(x.shape(), std::move(out)), t));
}

Var mul(Var a, Var b) {
  Tape& t = common_tape(a, b, Op::mul);
  const NumArray& x = a.value();
  const NumArray& y = b.value();
  require_same_shape(x, y, Op::mul);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return t.push(make_node(Op::mul, {a.id, b.id}, NumArray(x.shape(), std::move(out)), t));
}

Var matvec(Var w, Var x) {
  Tape& t = common_tape(w, x, Op::matvec);
  const NumArray& m = w.value();
  const NumArray& v = x.value();
  if (m.rank() != 2 || v.rank() != 1 || m.cols() != v.size()) {
    throw numeric_error("shape_mismatch",
                        "matvec: " + m.shape_string() + " vs " + v.shape_string());
  }
  std::vector<double> out(m.rows());
  kernels::matvec(m.data(), m.rows(), m.cols(), v.data(), out);
  return t.push(make_node(Op::matvec, {w.id, x.id}, NumArray::vector(std::move(out)), t));
}

Var tanh(Var a) { return unary(a, Op::tanh, [](double v) { return std::tanh(v); }); }
Var sigmoid(Var a) { return unary(a, Op::sigmoid, &logistic); }
Var exp(Var a) { return unary(a, Op::exp, [](double v) { return std::exp(v); }); }
Var log(Var a) {
  for (double v : a.value().data()) {
    if (!(v > 0.0)) throw numeric_error("non_finite", "log of a non-positive value");
  }
  return unary(a, Op::log, [](double v) { return std::log(v); });
}
Var softplus(Var a) { return unary(a, Op::softplus, &softplus_value); }

Var sum(Var a) {
  Tape& t = tape_of(a);
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return t.push(make_node(Op::sum, {a.id}, NumArray::scalar(s), t));
}

Var mean(Var a) {
  Tape& t = tape_of(a);
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  return t.push(make_node(Op::mean, {a.id}, NumArray::scalar(s / static_cast<double>(a.size())), t));
}

Var scale(Var a, double c) {
  Tape& t = tape_of(a);
  const NumArray& x = a.value();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = c * x[i];
  TapeNode n = make_node(Op::scale, {a.id}, NumArray(x.shape(), std::move(out)), t);
  n.arg0 = c;
  return t.push(std::move(n));
}

Var shift(Var a, double c) {
  Tape& t = tape_of(a);
  const NumArray& x = a.value();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + c;
  TapeNode n = make_node(Op::shift, {a.id}, NumArray(x.shape(), std::move(out)), t);
  n.arg0 = c;
  return t.push(std::move(n));
}

Var concat(std::span<const Var> parts) {
  if (parts.empty()) throw numeric_error("shape_mismatch", "concat: no operands");
  Tape& t = tape_of(parts[0]);
  std::vector<double> out;
  std::vector<std::uint32_t> ids;
  for (const Var& p : parts) {
    if (p.tape != &t) throw numeric_error("bad_var", "concat: operands live on different tapes");
    const NumArray& v = p.value();
    if (v.rank() != 1) {
      throw numeric_error("shape_mismatch", "concat: operand of shape " + v.shape_string() +
                                                " is not a vector");
    }
    out.insert(out.end(), v.data().begin(), v.data().end());
    ids.push_back(p.id);
  }
  return t.push(make_node(Op::concat, std::move(ids), NumArray::vector(std::move(out)), t));
}

Var concat(std::initializer_list<Var> parts) {
  return concat(std::span<const Var>(parts.begin(), parts.size()));
}

Var slice(Var a, std::size_t offset, std::size_t length) {
  Tape& t = tape_of(a);
  const NumArray& x = a.value();
  if (length == 0 || offset + length > x.size()) {
    throw numeric_error("shape_mismatch", "slice [" + std::to_string(offset) + ", " +
                                              std::to_string(offset + length) + ") of " +
                                              x.shape_string());
  }
  std::vector<double> out(x.data().begin() + static_cast<std::ptrdiff_t>(offset),
                          x.data().begin() + static_cast<std::ptrdiff_t>(offset + length));
  TapeNode n = make_node(Op::slice, {a.id}, NumArray::vector(std::move(out)), t);
  n.offset = offset;
  return t.push(std::move(n));
}

Var clamp(Var a, double lo, double hi) {
  Tape& t = tape_of(a);
  const NumArray& x = a.value();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::min(hi, std::max(lo, x[i]));
  TapeNode n = make_node(Op::clamp, {a.id}, NumArray(x.shape(), std::move(out)), t);
  n.arg0 = lo;
  n.arg1 = hi;
  return t.push(std::move(n));
}

Var log_softmax(Var a) {
  Tape& t = tape_of(a);
  const NumArray& x = a.value();
  double mx = x[0];
  for (double v : x.data()) mx = std::max(mx, v);
  double s = 0.0;
  for (double v : x.data()) s += std::exp(v - mx);
  const double lse = mx + std::log(s);
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - lse;
  return t.push(make_node(Op::log_softmax, {a.id}, NumArray(x.shape(), std::move(out)), t));
}

Var gaussian_reparam(Var mu, Var log_sigma, Var eps) {
  require_same_shape(mu.value(), log_sigma.value(), Op::mul);
  require_same_shape(mu.value(), eps.value(), Op::mul);
  return add(mu, mul(exp(log_sigma), eps));
}

}  // namespace aipo
