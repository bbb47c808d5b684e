#pragma once

#include <string>
#include <vector>

#include "hfsda/autograd.hpp"
#include "hfsda/params.hpp"

namespace hfsda::dda {

// ---------------------------------------------------------------------------
// FreqLite attention (FA)
//
// Pools the (T x F) input over time with mean and max, maps each statistic
// through its own bias-free F x F matrix, sums, and squashes with a sigmoid:
//
//   u = sigmoid(mean_t(x) W1 + max_t(x) W2)          (1 x F)
//   out[t, f] = u[f] * x[t, f]
// ---------------------------------------------------------------------------

Tensor fa_weights(const Tensor& x, const Tensor& w1, const Tensor& w2);
Tensor fa_apply(const Tensor& x, const Tensor& u);

class FreqLiteAttention {
 public:
  FreqLiteAttention(std::string name, int dim) : name_(std::move(name)), dim_(dim) {}

  void init(ParamStore& ps, Rng& rng) const;
  ag::Var weights(Context& ctx, const ag::Var& x) const;
  ag::Var operator()(Context& ctx, const ag::Var& x) const;

 private:
  std::string name_;
  int dim_;
};

ag::Var fa_weights(const ag::Var& x, const ag::Var& w1, const ag::Var& w2);
ag::Var fa_apply(const ag::Var& x, const ag::Var& u);

// Scaled dot-product multi-head self-attention over the time axis.
class MultiHeadSelfAttention {
 public:
  MultiHeadSelfAttention(std::string name, int dim, int heads, double dropout = 0.0);

  void init(ParamStore& ps, Rng& rng) const;
  // When `attention` is given, the per-head (T x T) attention matrices
  // (post-softmax, pre-dropout) are appended to it.
  ag::Var operator()(Context& ctx, const ag::Var& x, std::vector<Tensor>* attention = nullptr) const;

 private:
  std::string name_;
  int dim_;
  int heads_;
  double dropout_;
};

// Conformer convolution module with LayerNorm standing in for BatchNorm:
// LN -> pointwise (D -> 2D) -> GLU -> depthwise(k) -> LN -> SiLU -> pointwise -> dropout.
class ConvModule {
 public:
  ConvModule(std::string name, int dim, int kernel, double dropout);
  void init(ParamStore& ps, Rng& rng) const;
  ag::Var operator()(Context& ctx, const ag::Var& x) const;

 private:
  std::string name_;
  int dim_;
  int kernel_;
  double dropout_;
};

enum class BlockKind {
  dda,           // FF/2 -> MHSA -> FA -> FF/2 -> LN
  conformer,     // FF/2 -> MHSA -> Conv -> FF/2 -> LN
  conformer_fa,  // FF/2 -> MHSA -> FA -> Conv -> FF/2 -> LN
};

const char* to_string(BlockKind kind);
BlockKind block_kind_from_string(const std::string& s);

struct BlockShape {
  int dim = 256;
  int heads = 4;
  int ff_mult = 4;
  double dropout = 0.1;
  int conv_kernel = 31;
  BlockKind kind = BlockKind::dda;

  void validate() const;
};

// Intermediate residual states recorded by Block::forward for inspection.
struct BlockTrace {
  Tensor after_ff1;
  Tensor after_mhsa;
  Tensor after_fa;
  Tensor after_conv;
  Tensor pre_norm;
  std::vector<Tensor> attention;
};

class Block {
 public:
  Block(std::string name, BlockShape shape);

  const BlockShape& shape() const { return shape_; }
  void init(ParamStore& ps, Rng& rng) const;
  ag::Var operator()(Context& ctx, const ag::Var& x, BlockTrace* trace = nullptr) const;

 private:
  std::string name_;
  BlockShape shape_;
};

// Sinusoidal absolute position table (T x D).
Tensor sinusoidal_positions(int frames, int dim);

}  // namespace hfsda::dda
