#pragma once

#include <string>

#include "hfsda/autograd.hpp"
#include "hfsda/params.hpp"

namespace hfsda::nn {

// Affine map y = x W + b with W stored (in x out).
struct Linear {
  std::string name;
  int in = 0;
  int out = 0;
  bool bias = true;

  void init(ParamStore& ps, Rng& rng) const;
  ag::Var operator()(Context& ctx, const ag::Var& x) const;
};

struct LayerNorm {
  std::string name;
  int dim = 0;

  void init(ParamStore& ps) const;
  ag::Var operator()(Context& ctx, const ag::Var& x) const;
};

// Macaron feed-forward: LayerNorm -> Linear(D, mult*D) -> SiLU -> dropout ->
// Linear(mult*D, D) -> dropout. The caller applies the half-step residual.
struct FeedForward {
  std::string name;
  int dim = 0;
  int mult = 4;
  double dropout = 0.0;

  void init(ParamStore& ps, Rng& rng) const;
  ag::Var operator()(Context& ctx, const ag::Var& x) const;
};

}  // namespace hfsda::nn
