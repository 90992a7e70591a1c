#include "warpdetect/autodiff.hpp"

#include "warpdetect/errors.hpp"

namespace wd {

Var Tape::input(Tensor value, bool requires_grad) {
  Node n;
  n.owned = std::move(value);
  n.requires_grad = grad_enabled_ && requires_grad;
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

Var Tape::parameter(const Tensor& value) {
  if (auto it = params_.find(&value); it != params_.end()) return Var{it->second};
  Node n;
  n.external = &value;
  n.requires_grad = grad_enabled_;
  nodes_.push_back(std::move(n));
  params_.emplace(&value, nodes_.size() - 1);
  return Var{nodes_.size() - 1};
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, Backward backward) {
  bool needs = false;
  if (grad_enabled_) {
    for (Var in : inputs) {
      if (in.valid() && nodes_.at(in.id).requires_grad) needs = true;
    }
  }
  Node n;
  n.owned = std::move(value);
  n.requires_grad = needs;
  if (needs) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var{nodes_.size() - 1};
}

const Tensor& Tape::value(Var v) const {
  const Node& n = nodes_.at(v.id);
  return n.external ? *n.external : n.owned;
}

Tensor Tape::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  if (!n.grad.empty()) return n.grad;
  return Tensor(value(v).shape(), 0.0);
}

std::span<double> Tape::grad_buffer(Var v) {
  Node& n = nodes_.at(v.id);
  if (n.grad.empty()) {
    const Tensor& val = n.external ? *n.external : n.owned;
    n.grad = Tensor(val.shape(), 0.0);
  }
  return n.grad.data();
}

void Tape::accumulate(Var v, std::span<const double> g) {
  if (!nodes_.at(v.id).requires_grad) return;
  auto buf = grad_buffer(v);
  if (buf.size() != g.size()) throw DimensionError("gradient size mismatch on tape");
  for (std::size_t i = 0; i < g.size(); ++i) buf[i] += g[i];
}

void Tape::backward(Var out, double seed) {
  if (value(out).size() != 1) {
    throw DimensionError("backward needs a single-element output, got " +
                         shape_string(value(out).shape()));
  }
  if (!nodes_.at(out.id).requires_grad) return;
  grad_buffer(out)[0] += seed;
  for (std::size_t i = out.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.backward && !n.grad.empty()) n.backward(*this, Var{i});
  }
}

const Tensor* Tape::parameter_grad(const Tensor& param) const {
  auto it = params_.find(&param);
  if (it == params_.end()) return nullptr;
  const Node& n = nodes_[it->second];
  return n.grad.empty() ? nullptr : &n.grad;
}

}  // namespace wd
