#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "hfsda/random.hpp"
#include "hfsda/tensor.hpp"

// Minimal tape-free reverse-mode autodiff. Every op builds a node holding its
// value and a closure that pushes the output gradient into its parents.
// Graphs are per forward pass; nothing is shared between threads.
namespace hfsda::ag {

struct Node {
  Tensor value;
  Tensor grad;
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;

  Tensor& ensure_grad();
};

class Var {
 public:
  Var() = default;
  explicit Var(std::shared_ptr<Node> node) : node_(std::move(node)) {}

  static Var constant(Tensor value);
  static Var leaf(Tensor value);

  bool defined() const { return static_cast<bool>(node_); }
  const Tensor& value() const { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_ && node_->requires_grad; }

  // Gradient accumulated by the last backward(); zeros if none reached it.
  Tensor grad() const;

  // Runs reverse accumulation from this scalar node.
  void backward() const;

  const std::shared_ptr<Node>& node() const { return node_; }

 private:
  std::shared_ptr<Node> node_;
};

// Builds a node from a computed value. `backward` receives the output node
// (whose grad is populated) and must accumulate into parents that require
// gradients. Skipped entirely when no parent requires a gradient.
Var make_result(Tensor value, std::vector<Var> parents, std::function<void(Node&)> backward);

// Adds g into the parent's gradient if the parent tracks one.
void accumulate(const Var& parent, const Tensor& g);

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
// x (rows x in) * w (in x out) + b (out); b may be undefined.
Var linear(const Var& x, const Var& w, const Var& b);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
Var scale(const Var& a, double s);
// Broadcasts a length-C row over every row of a (rows x C).
Var add_row(const Var& a, const Var& row);
Var mul_row(const Var& a, const Var& row);

Var sigmoid(const Var& x);
Var relu(const Var& x);
Var silu(const Var& x);
Var gelu(const Var& x);
Var softmax_rows(const Var& x);
Var layer_norm(const Var& x, const Var& gamma, const Var& beta, double eps = 1e-5);
Var glu_cols(const Var& x);

// Column statistics over the row (time) axis: (rows x C) -> (1 x C). Both are
// bitwise invariant under any permutation of the rows.
Var mean_rows(const Var& x);
Var max_rows(const Var& x);

Var concat_cols(const std::vector<Var>& parts);
Var slice_cols(const Var& x, int start, int len);
Var reshape(const Var& x, Shape shape);

Var sum(const Var& x);
Var mean(const Var& x);
Var smooth_l1(const Var& pred, const Tensor& target, double beta);
Var dropout(const Var& x, double p, Rng& rng);

// Feature maps are (channels x T x F).
Var conv2d(const Var& x, const Var& kernel, int stride_t, int stride_f, int pad_t, int pad_f);
Var global_avg_pool(const Var& x);
// (C x T x F) -> (T x C*F), channel-major within each frame.
Var frames_from_channels(const Var& x);
// Depthwise 1-D convolution along rows of x (T x D), kernel (k x D), same padding.
Var depthwise_conv_time(const Var& x, const Var& kernel, const Var& bias);
// sum_l weights[l] * xs[l]; weights is (1 x L).
Var weighted_sum(const Var& weights, const std::vector<Var>& xs);

}  // namespace hfsda::ag
