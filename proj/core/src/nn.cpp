#include "hfsda/nn.hpp"

namespace hfsda::nn {

void Linear::init(ParamStore& ps, Rng& rng) const {
  ps.add(name + ".weight", init::xavier_uniform(in, out, {in, out}, rng));
  if (bias) ps.add(name + ".bias", Tensor({out}));
}

ag::Var Linear::operator()(Context& ctx, const ag::Var& x) const {
  return ag::linear(x, ctx.param(name + ".weight"),
                    bias ? ctx.param(name + ".bias") : ag::Var());
}

void LayerNorm::init(ParamStore& ps) const {
  ps.add(name + ".gamma", Tensor({dim}, 1.0));
  ps.add(name + ".beta", Tensor({dim}));
}

ag::Var LayerNorm::operator()(Context& ctx, const ag::Var& x) const {
  return ag::layer_norm(x, ctx.param(name + ".gamma"), ctx.param(name + ".beta"));
}

void FeedForward::init(ParamStore& ps, Rng& rng) const {
  LayerNorm{name + ".norm", dim}.init(ps);
  Linear{name + ".fc1", dim, mult * dim}.init(ps, rng);
  Linear{name + ".fc2", mult * dim, dim}.init(ps, rng);
}

ag::Var FeedForward::operator()(Context& ctx, const ag::Var& x) const {
  ag::Var h = LayerNorm{name + ".norm", dim}(ctx, x);
  h = ag::silu(Linear{name + ".fc1", dim, mult * dim}(ctx, h));
  if (ctx.training()) h = ag::dropout(h, dropout, ctx.rng());
  h = Linear{name + ".fc2", mult * dim, dim}(ctx, h);
  if (ctx.training()) h = ag::dropout(h, dropout, ctx.rng());
  return h;
}

}  // namespace hfsda::nn
