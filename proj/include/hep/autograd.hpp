#pragma once

// Minimal reverse-mode automatic differentiation over Tensor.
//
// A Var is a handle to a graph node. Ops build the graph eagerly while grad
// mode is on and at least one input requires a gradient; backward() on a
// scalar Var accumulates d(out)/d(leaf) into every leaf that requires grad.
// Graphs are rebuilt on every forward pass; parameters are long-lived leaves.

#include <functional>
#include <memory>
#include <span>
#include <vector>

#include "hep/tensor.hpp"

namespace hep {

struct Node {
  Tensor value;
  Tensor grad;  // empty until something flows back
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> inputs;
  std::function<void(Node&)> backward;

  void accumulate(const Tensor& g);
  Tensor& grad_buffer();  // allocates zeros on first use
};

class Var {
 public:
  Var() = default;
  explicit Var(Tensor value, bool requires_grad = false);

  static Var constant(Tensor value) { return Var(std::move(value), false); }
  static Var parameter(Tensor value) { return Var(std::move(value), true); }

  bool defined() const { return node_ != nullptr; }
  const Tensor& value() const { return node_->value; }
  Tensor& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  // Gradient accumulated so far; empty tensor if none.
  const Tensor& grad() const { return node_->grad; }
  void zero_grad();

  // Seeds d(this)/d(this) = 1 for a scalar and propagates.
  void backward() const;
  // Seeds an arbitrary upstream gradient of the same shape.
  void backward(const Tensor& seed) const;

  // Same value, cut from the graph.
  Var detach() const { return Var(node_->value, false); }

  double item() const { return node_->value.item(); }
  Node* node() const { return node_.get(); }
  const std::shared_ptr<Node>& shared() const { return node_; }

  // Builds an op output. `backward` receives the output node; it reads
  // out.grad and pushes into inputs. Skips graph recording when no input
  // requires a gradient or grad mode is off.
  static Var make(Tensor value, std::vector<Var> inputs, std::function<void(Node&)> backward);

 private:
  std::shared_ptr<Node> node_;
};

bool grad_enabled();

// RAII: disables graph recording on this thread for its lifetime.
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

namespace ops {

// Elementwise, shapes must match exactly.
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var div(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var abs(const Var& a);
Var square(const Var& a);
Var exp(const Var& a);
Var relu(const Var& a);
Var leaky_relu(const Var& a, double slope);
Var sigmoid(const Var& a);
// Gradient is zero where the input lies outside [lo, hi].
Var clamp(const Var& a, double lo, double hi);

// (N, C, H, W) * (N, 1, H, W) with the second broadcast over channels.
Var mul_channel_broadcast(const Var& a, const Var& b);
// Per-channel affine x*scale[c] + shift[c] with constant coefficients.
Var channel_affine(const Var& a, std::span<const double> scale, std::span<const double> shift);

// Reductions to a (1,1,1,1) scalar.
Var sum(const Var& a);
Var mean(const Var& a);
// Weighted sum of scalar Vars.
Var weighted_sum(std::span<const Var> terms, std::span<const double> weights);

// (N, C, H, W) -> (N, 1, H, W), gradient routed to the first maximal channel.
Var channel_max(const Var& a);
// (N, C, H, W) -> (N, C, 1, 1)
Var spatial_mean(const Var& a);
Var concat_channels(std::span<const Var> parts);
Var slice_channels(const Var& a, int begin, int end);
Var reshape(const Var& a, Shape shape);
// (N, D, 1, 1) -> (N, D, H, W)
Var broadcast_spatial(const Var& a, int h, int w);

// weight: (Cout, Cin, K, K); bias: (1, Cout, 1, 1) or undefined. Zero padding.
Var conv2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad);
// weight: (Cin, Cout, K, K). Output size (H-1)*stride - 2*pad + K + output_pad.
Var conv_transpose2d(const Var& x, const Var& weight, const Var& bias, int stride, int pad,
                     int output_pad);
// x: (N, F, 1, 1), weight: (Out, F, 1, 1), bias: (1, Out, 1, 1)
Var linear(const Var& x, const Var& weight, const Var& bias);
Var max_pool2x2(const Var& x);
Var global_avg_pool(const Var& x);

// Forward differences along W (horizontal) or H (vertical); the last
// column/row is zero.
Var diff_horizontal(const Var& x);
Var diff_vertical(const Var& x);
// Separable filtering of every channel with `taps` (odd length) in both
// directions using half-sample symmetric reflection at the borders.
Var separable_filter_reflect(const Var& x, std::span<const double> taps);
// Separable filtering without padding ("valid"); output shrinks by len-1.
Var separable_filter_valid(const Var& x, std::span<const double> taps);

}  // namespace ops
}  // namespace hep
