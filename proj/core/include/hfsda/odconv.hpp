#pragma once

#include <string>

#include "hfsda/autograd.hpp"
#include "hfsda/params.hpp"

// Omni-dimensional dynamic convolution over (channels x T x F) feature maps.
//
// A bank of n kernels W_i is reweighted per input sample along four axes
// before a single convolution:
//
//   y = (sum_i  a_w[i] * a_f[i] (.) a_c[i] (.) a_s[i] (.) W_i) * x
//
// where a_s spans the kernel's temporal taps, a_c its frequency taps, a_f the
// output channels and a_w the kernel index. The attention vectors come from
// a squeeze-style network: global average pool -> bottleneck FC -> ReLU ->
// four heads (sigmoid for s/c/f, softmax across kernels for w).
namespace hfsda::odconv {

struct OdconvShape {
  int c_in = 1;
  int c_out = 8;
  int kernel_t = 3;
  int kernel_f = 3;
  int n_kernels = 4;
  int reduction = 4;
  int stride = 1;
  // Negative means "same" padding (kernel/2 on each axis).
  int padding = -1;

  void validate() const;
  int bottleneck() const;
  int pad_t() const { return padding < 0 ? kernel_t / 2 : padding; }
  int pad_f() const { return padding < 0 ? kernel_f / 2 : padding; }
};

// Attention values for one input sample. alpha_s is (n x k_t), alpha_c is
// (n x k_f), alpha_f is (n x c_out) and alpha_w has n entries.
struct OmniAttention {
  Tensor alpha_s;
  Tensor alpha_c;
  Tensor alpha_f;
  Tensor alpha_w;
};

struct OmniAttentionVars {
  ag::Var alpha_s;
  ag::Var alpha_c;
  ag::Var alpha_f;
  ag::Var alpha_w;

  OmniAttention value() const;
  static OmniAttentionVars constant(const OmniAttention& a);
  // All four axes fixed to 1 (alpha_w included), the degenerate weighting.
  static OmniAttentionVars unit(const OdconvShape& shape);
};

// Differentiable aggregation of the kernel bank
// (n x c_out x c_in x k_t x k_f) into one (c_out x c_in x k_t x k_f) kernel.
ag::Var assemble_kernel(const ag::Var& kernels, const OmniAttentionVars& attn);

class OdconvLayer {
 public:
  OdconvLayer(std::string name, OdconvShape shape);

  const std::string& name() const { return name_; }
  const OdconvShape& shape() const { return shape_; }

  void init(ParamStore& ps, Rng& rng) const;

  OmniAttentionVars compute_attention(Context& ctx, const ag::Var& input) const;
  ag::Var assemble_kernel(Context& ctx, const OmniAttentionVars& attn) const;
  ag::Var forward(Context& ctx, const ag::Var& input) const;
  // Convolution with caller-supplied attention (e.g. forced to identity).
  ag::Var forward_with(Context& ctx, const ag::Var& input, const OmniAttentionVars& attn) const;

 private:
  std::string name_;
  OdconvShape shape_;
};

// Static convolution with the same kernel shape; the ablation stand-in for
// an ODConv layer.
class StaticConvLayer {
 public:
  StaticConvLayer(std::string name, OdconvShape shape);
  void init(ParamStore& ps, Rng& rng) const;
  ag::Var forward(Context& ctx, const ag::Var& input) const;

 private:
  std::string name_;
  OdconvShape shape_;
};

// Plain-value conveniences evaluated in inference mode.
OmniAttention compute_attention(const Tensor& input, const OdconvLayer& layer, const ParamStore& ps);
Tensor assemble_kernel(const OdconvLayer& layer, const ParamStore& ps, const OmniAttention& attn);
Tensor odconv_forward(const Tensor& input, const OdconvLayer& layer, const ParamStore& ps);

}  // namespace hfsda::odconv
