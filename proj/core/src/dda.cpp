#include "hfsda/dda.hpp"

#include <cmath>

#include "hfsda/errors.hpp"
#include "hfsda/nn.hpp"

namespace hfsda::dda {

namespace {

void check_width(const ag::Var& x, int dim, const char* what) {
  if (x.value().ndim() != 2 || x.value().cols() != dim) {
    throw DimensionError(std::string(what) + ": expected (T x " + std::to_string(dim) +
                         ") input, got " + shape_string(x.shape()));
  }
  if (x.value().rows() < 1) throw InvalidInput(std::string(what) + ": empty sequence");
}

}  // namespace

ag::Var fa_weights(const ag::Var& x, const ag::Var& w1, const ag::Var& w2) {
  const int f = x.value().ndim() == 2 ? x.value().cols() : -1;
  if (f < 0 || w1.value().ndim() != 2 || w1.value().rows() != f || w1.value().cols() != f ||
      w2.shape() != w1.shape()) {
    throw DimensionError("fa_weights: input " + shape_string(x.shape()) + " vs weights " +
                         shape_string(w1.shape()) + ", " + shape_string(w2.shape()));
  }
  ag::Var avg = ag::mean_rows(x);
  ag::Var mx = ag::max_rows(x);
  return ag::sigmoid(ag::add(ag::matmul(avg, w1), ag::matmul(mx, w2)));
}

ag::Var fa_apply(const ag::Var& x, const ag::Var& u) {
  if (x.value().ndim() != 2 || u.value().size() != static_cast<std::size_t>(x.value().cols())) {
    throw DimensionError("fa_apply: weights " + shape_string(u.shape()) + " vs input " +
                         shape_string(x.shape()));
  }
  return ag::mul_row(x, u);
}

Tensor fa_weights(const Tensor& x, const Tensor& w1, const Tensor& w2) {
  return fa_weights(ag::Var::constant(x), ag::Var::constant(w1), ag::Var::constant(w2)).value();
}

Tensor fa_apply(const Tensor& x, const Tensor& u) {
  return fa_apply(ag::Var::constant(x), ag::Var::constant(u)).value();
}

void FreqLiteAttention::init(ParamStore& ps, Rng& rng) const {
  ps.add(name_ + ".w1", init::xavier_uniform(dim_, dim_, {dim_, dim_}, rng));
  ps.add(name_ + ".w2", init::xavier_uniform(dim_, dim_, {dim_, dim_}, rng));
}

ag::Var FreqLiteAttention::weights(Context& ctx, const ag::Var& x) const {
  check_width(x, dim_, "freqlite attention");
  return fa_weights(x, ctx.param(name_ + ".w1"), ctx.param(name_ + ".w2"));
}

ag::Var FreqLiteAttention::operator()(Context& ctx, const ag::Var& x) const {
  return fa_apply(x, weights(ctx, x));
}

MultiHeadSelfAttention::MultiHeadSelfAttention(std::string name, int dim, int heads, double dropout)
    : name_(std::move(name)), dim_(dim), heads_(heads), dropout_(dropout) {
  if (heads_ < 1 || dim_ % heads_ != 0) {
    throw ConfigError("model width " + std::to_string(dim_) + " is not divisible by head count " +
                      std::to_string(heads_));
  }
}

void MultiHeadSelfAttention::init(ParamStore& ps, Rng& rng) const {
  // A key bias adds the same logit to every key of a query row, which the
  // softmax cancels; the key projection is therefore bias-free.
  nn::Linear{name_ + ".query", dim_, dim_}.init(ps, rng);
  nn::Linear{name_ + ".key", dim_, dim_, false}.init(ps, rng);
  nn::Linear{name_ + ".value", dim_, dim_}.init(ps, rng);
  nn::Linear{name_ + ".out", dim_, dim_}.init(ps, rng);
}

ag::Var MultiHeadSelfAttention::operator()(Context& ctx, const ag::Var& x,
                                           std::vector<Tensor>* attention) const {
  check_width(x, dim_, "multi-head self-attention");
  const int head_dim = dim_ / heads_;
  const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));
  ag::Var q = nn::Linear{name_ + ".query", dim_, dim_}(ctx, x);
  ag::Var k = nn::Linear{name_ + ".key", dim_, dim_, false}(ctx, x);
  ag::Var v = nn::Linear{name_ + ".value", dim_, dim_}(ctx, x);
  std::vector<ag::Var> heads;
  heads.reserve(static_cast<std::size_t>(heads_));
  for (int h = 0; h < heads_; ++h) {
    ag::Var qh = ag::slice_cols(q, h * head_dim, head_dim);
    ag::Var kh = ag::slice_cols(k, h * head_dim, head_dim);
    ag::Var vh = ag::slice_cols(v, h * head_dim, head_dim);
    ag::Var probs = ag::softmax_rows(ag::scale(ag::matmul(qh, ag::transpose(kh)), scale));
    if (attention) attention->push_back(probs.value());
    if (ctx.training()) probs = ag::dropout(probs, dropout_, ctx.rng());
    heads.push_back(ag::matmul(probs, vh));
  }
  ag::Var merged = heads_ == 1 ? heads.front() : ag::concat_cols(heads);
  return nn::Linear{name_ + ".out", dim_, dim_}(ctx, merged);
}

ConvModule::ConvModule(std::string name, int dim, int kernel, double dropout)
    : name_(std::move(name)), dim_(dim), kernel_(kernel), dropout_(dropout) {
  if (kernel_ < 1 || kernel_ % 2 == 0) throw ConfigError("conformer conv kernel must be odd");
}

void ConvModule::init(ParamStore& ps, Rng& rng) const {
  nn::LayerNorm{name_ + ".norm", dim_}.init(ps);
  nn::Linear{name_ + ".pointwise1", dim_, 2 * dim_}.init(ps, rng);
  ps.add(name_ + ".depthwise.weight", init::xavier_uniform(kernel_, 1, {kernel_, dim_}, rng));
  ps.add(name_ + ".depthwise.bias", Tensor({dim_}));
  nn::LayerNorm{name_ + ".depthwise_norm", dim_}.init(ps);
  nn::Linear{name_ + ".pointwise2", dim_, dim_}.init(ps, rng);
}

ag::Var ConvModule::operator()(Context& ctx, const ag::Var& x) const {
  ag::Var h = nn::LayerNorm{name_ + ".norm", dim_}(ctx, x);
  h = ag::glu_cols(nn::Linear{name_ + ".pointwise1", dim_, 2 * dim_}(ctx, h));
  h = ag::depthwise_conv_time(h, ctx.param(name_ + ".depthwise.weight"),
                              ctx.param(name_ + ".depthwise.bias"));
  h = ag::silu(nn::LayerNorm{name_ + ".depthwise_norm", dim_}(ctx, h));
  h = nn::Linear{name_ + ".pointwise2", dim_, dim_}(ctx, h);
  if (ctx.training()) h = ag::dropout(h, dropout_, ctx.rng());
  return h;
}

const char* to_string(BlockKind kind) {
  switch (kind) {
    case BlockKind::dda:
      return "dda";
    case BlockKind::conformer:
      return "conformer";
    case BlockKind::conformer_fa:
      return "conformer_fa";
  }
  return "?";
}

BlockKind block_kind_from_string(const std::string& s) {
  if (s == "dda") return BlockKind::dda;
  if (s == "conformer") return BlockKind::conformer;
  if (s == "conformer_fa") return BlockKind::conformer_fa;
  throw ConfigError("unknown block kind '" + s + "' (expected dda, conformer, conformer_fa)");
}

void BlockShape::validate() const {
  if (dim < 1) throw ConfigError("model.dim must be >= 1");
  if (heads < 1 || dim % heads != 0)
    throw ConfigError("model.dim " + std::to_string(dim) + " is not divisible by model.heads " +
                      std::to_string(heads));
  if (ff_mult < 1) throw ConfigError("model.ff_mult must be >= 1");
  if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model.dropout must lie in [0, 1)");
  if (conv_kernel < 1 || conv_kernel % 2 == 0) throw ConfigError("model.conv_kernel must be odd");
}

Block::Block(std::string name, BlockShape shape) : name_(std::move(name)), shape_(shape) {
  shape_.validate();
}

void Block::init(ParamStore& ps, Rng& rng) const {
  const auto& s = shape_;
  nn::FeedForward{name_ + ".ff1", s.dim, s.ff_mult, s.dropout}.init(ps, rng);
  nn::LayerNorm{name_ + ".mhsa_norm", s.dim}.init(ps);
  MultiHeadSelfAttention(name_ + ".mhsa", s.dim, s.heads, s.dropout).init(ps, rng);
  if (s.kind != BlockKind::conformer) FreqLiteAttention(name_ + ".fa", s.dim).init(ps, rng);
  if (s.kind != BlockKind::dda) ConvModule(name_ + ".conv", s.dim, s.conv_kernel, s.dropout).init(ps, rng);
  nn::FeedForward{name_ + ".ff2", s.dim, s.ff_mult, s.dropout}.init(ps, rng);
  nn::LayerNorm{name_ + ".final_norm", s.dim}.init(ps);
}

ag::Var Block::operator()(Context& ctx, const ag::Var& x, BlockTrace* trace) const {
  const auto& s = shape_;
  check_width(x, s.dim, "block");
  ag::Var a = ag::add(x, ag::scale(nn::FeedForward{name_ + ".ff1", s.dim, s.ff_mult, s.dropout}(ctx, x), 0.5));
  if (trace) trace->after_ff1 = a.value();

  ag::Var attn_in = nn::LayerNorm{name_ + ".mhsa_norm", s.dim}(ctx, a);
  ag::Var attn = MultiHeadSelfAttention(name_ + ".mhsa", s.dim, s.heads, s.dropout)(
      ctx, attn_in, trace ? &trace->attention : nullptr);
  if (ctx.training()) attn = ag::dropout(attn, s.dropout, ctx.rng());
  ag::Var m = ag::add(a, attn);
  if (trace) trace->after_mhsa = m.value();

  ag::Var z = m;
  if (s.kind != BlockKind::conformer) {
    z = ag::add(z, FreqLiteAttention(name_ + ".fa", s.dim)(ctx, z));
    if (trace) trace->after_fa = z.value();
  }
  if (s.kind != BlockKind::dda) {
    z = ag::add(z, ConvModule(name_ + ".conv", s.dim, s.conv_kernel, s.dropout)(ctx, z));
    if (trace) trace->after_conv = z.value();
  }

  ag::Var pre = ag::add(z, ag::scale(nn::FeedForward{name_ + ".ff2", s.dim, s.ff_mult, s.dropout}(ctx, z), 0.5));
  if (trace) trace->pre_norm = pre.value();
  return nn::LayerNorm{name_ + ".final_norm", s.dim}(ctx, pre);
}

Tensor sinusoidal_positions(int frames, int dim) {
  Tensor pe({frames, dim});
  for (int t = 0; t < frames; ++t)
    for (int i = 0; i < dim; ++i) {
      const double rate = std::pow(10000.0, -static_cast<double>(2 * (i / 2)) / dim);
      pe.at(t, i) = (i % 2 == 0) ? std::sin(t * rate) : std::cos(t * rate);
    }
  return pe;
}

}  // namespace hfsda::dda
