#pragma once

// Reverse-mode automatic differentiation over Tensor.
//
// A Tape records primitive operations in execution order. Each recorded node
// owns its forward value and, when gradients are tracked, a closure that
// propagates the node's output gradient into its inputs. backward() walks the
// nodes in exact reverse order and accumulates gradients additively, so a
// value consumed by several ops receives the sum of their contributions.

#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mret/tensor.hpp"

namespace mret {

class Tape;

/// Handle to a value recorded on a Tape. Cheap to copy; valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
  Tape& tape() const { return *tape_; }
  std::size_t id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

using GradMap = std::map<std::string, Tensor>;

class Tape {
 public:
  /// Receives the node's output gradient and writable gradient buffers for its
  /// inputs; a buffer is null when that input does not require a gradient.
  using BackwardFn =
      std::function<void(const Tensor& grad_out, std::vector<Tensor*>& input_grads)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) {}
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool grad_enabled() const { return grad_enabled_; }

  Var constant(Tensor value);
  /// Leaf whose gradient is reported by backward() under `param_id`.
  Var parameter(Tensor value, std::string param_id);

  /// Appends an op result. Rounds to the active precision and rejects
  /// non-finite values. `backward` may be empty when no input needs a gradient.
  Var record(std::string_view op, Tensor value, std::vector<Var> inputs, BackwardFn backward);

  /// Gradients of a single-element `loss` with respect to every parameter
  /// leaf on this tape. Parameters with no path to the loss get zeros.
  GradMap backward(const Var& loss);

  std::size_t size() const { return nodes_.size(); }
  const Tensor& value(std::size_t id) const { return nodes_.at(id).value; }
  const std::string& op_name(std::size_t id) const { return nodes_.at(id).op; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }

 private:
  struct Node {
    std::string op;
    Tensor value;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    bool requires_grad = false;
    std::string param_id;
  };

  bool grad_enabled_;
  std::vector<Node> nodes_;
};

namespace ops {

inline constexpr double kLayerNormEps = 1e-6;

Var matmul(const Var& a, const Var& b);     // [m,k] x [k,n]
Var matmul_bt(const Var& a, const Var& b);  // [m,k] x [n,k]^T
/// Elementwise sum; `b` may also be a rank-1 tensor matching a's last dim (row broadcast).
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var gelu(const Var& a);
Var softmax(const Var& a);  // over the last axis
/// Normalizes each row over the last axis, then applies gamma * x + beta.
Var layernorm(const Var& x, const Var& gamma, const Var& beta);
Var reshape(const Var& a, Shape shape);
Var transpose(const Var& a);  // rank 2
Var concat(const std::vector<Var>& parts, std::size_t axis);  // rank 2, axis 0 or 1
Var slice(const Var& a, std::size_t axis, std::size_t begin, std::size_t end);  // rank 2
Var sum(const Var& a);
Var mean(const Var& a);

}  // namespace ops

/// Name-dispatched entry point over the primitive set. `attrs` carries op
/// parameters: "shape" (reshape), "axis"/"begin"/"end" (slice, concat), "factor" (scale).
Var forward_op(std::string_view name, const std::vector<Var>& inputs,
               const nlohmann::json& attrs = nlohmann::json::object());

/// Largest relative discrepancy between backward() and central differences of
/// `f` at `x`. Relative error uses max(|a|, |b|, 1e-8) as denominator.
/// Must run in f64 mode.
using ScalarFn = std::function<Var(Tape&, const Var&)>;
double grad_check(const ScalarFn& f, const Tensor& x, double eps = 1e-5);

}  // namespace mret
