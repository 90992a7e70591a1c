#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <limits>
#include <span>
#include <unordered_map>
#include <vector>

#include "warpdetect/tensor.hpp"

namespace wd {

/// Handle to a value recorded on a Tape.
struct Var {
  static constexpr std::size_t kNone = std::numeric_limits<std::size_t>::max();
  std::size_t id = kNone;
  bool valid() const { return id != kNone; }
};

/// Recorded computation sequence for reverse-mode differentiation.
///
/// Each operation appends its output value and, when any input needs a
/// gradient, a backward closure that reads the output gradient and
/// accumulates into the inputs. backward() replays closures in reverse
/// order. Parameters are referenced, not copied, and must outlive the tape.
class Tape {
 public:
  using Backward = std::function<void(Tape&, Var out)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  /// Owned leaf value.
  Var input(Tensor value, bool requires_grad = false);
  /// Leaf referencing an external tensor; registering the same tensor twice
  /// returns the same Var.
  Var parameter(const Tensor& value);
  /// Output of an operation. `backward` is dropped when no input requires grad.
  Var record(Tensor value, std::initializer_list<Var> inputs, Backward backward);

  const Tensor& value(Var v) const;
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  bool has_grad(Var v) const { return !nodes_.at(v.id).grad.empty(); }
  /// Gradient of v; zeros when nothing flowed into it.
  Tensor grad(Var v) const;
  /// Gradient storage of v, allocated on first use. Only valid for nodes
  /// that require grad.
  std::span<double> grad_buffer(Var v);
  void accumulate(Var v, std::span<const double> g);

  /// Seeds d(out)/d(out) = seed for a single-element output and propagates.
  void backward(Var out, double seed = 1.0);

  /// Gradient accumulated for a registered parameter, or nullptr.
  const Tensor* parameter_grad(const Tensor& param) const;

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor owned;
    const Tensor* external = nullptr;
    Tensor grad;
    bool requires_grad = false;
    Backward backward;
  };

  bool grad_enabled_;
  std::vector<Node> nodes_;
  std::unordered_map<const Tensor*, std::size_t> params_;
};

}  // namespace wd
