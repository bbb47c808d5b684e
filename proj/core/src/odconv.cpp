#include "hfsda/odconv.hpp"

#include <algorithm>
#include <cmath>

#include "hfsda/errors.hpp"
#include "hfsda/nn.hpp"

namespace hfsda::odconv {

namespace {

void check_finite(const ag::Var& input) {
  if (!input.value().all_finite()) throw InvalidInput("odconv: non-finite input");
}

void check_input(const ag::Var& input, const OdconvShape& shape) {
  if (input.value().ndim() != 3 || input.value().dim(0) != shape.c_in) {
    throw DimensionError("odconv: expected (" + std::to_string(shape.c_in) +
                         " x T x F) input, got " + shape_string(input.shape()));
  }
  check_finite(input);
}

}  // namespace

void OdconvShape::validate() const {
  if (c_in < 1 || c_out < 1) throw ConfigError("odconv channel counts must be >= 1");
  if (kernel_t < 1 || kernel_f < 1) throw ConfigError("odconv kernel sizes must be >= 1");
  if (n_kernels < 1) throw ConfigError("odconv.n_kernels must be >= 1");
  if (reduction < 1) throw ConfigError("odconv.reduction must be >= 1");
  if (stride < 1) throw ConfigError("odconv stride must be >= 1");
}

int OdconvShape::bottleneck() const {
  return std::max((c_in + reduction - 1) / reduction, 4);
}

OmniAttention OmniAttentionVars::value() const {
  return {alpha_s.value(), alpha_c.value(), alpha_f.value(), alpha_w.value()};
}

OmniAttentionVars OmniAttentionVars::constant(const OmniAttention& a) {
  return {ag::Var::constant(a.alpha_s), ag::Var::constant(a.alpha_c),
          ag::Var::constant(a.alpha_f), ag::Var::constant(a.alpha_w)};
}

OmniAttentionVars OmniAttentionVars::unit(const OdconvShape& s) {
  return constant({Tensor({s.n_kernels, s.kernel_t}, 1.0), Tensor({s.n_kernels, s.kernel_f}, 1.0),
                   Tensor({s.n_kernels, s.c_out}, 1.0), Tensor({s.n_kernels}, 1.0)});
}

ag::Var assemble_kernel(const ag::Var& kernels, const OmniAttentionVars& attn) {
  const Tensor& w = kernels.value();
  if (w.ndim() != 5) throw DimensionError("assemble_kernel: kernel bank must be rank 5");
  const int n = w.dim(0);
  const int co = w.dim(1);
  const int ci = w.dim(2);
  const int kt = w.dim(3);
  const int kf = w.dim(4);
  const Tensor& as = attn.alpha_s.value();
  const Tensor& ac = attn.alpha_c.value();
  const Tensor& af = attn.alpha_f.value();
  const Tensor& aw = attn.alpha_w.value();
  if (as.size() != static_cast<std::size_t>(n) * kt || ac.size() != static_cast<std::size_t>(n) * kf ||
      af.size() != static_cast<std::size_t>(n) * co || aw.size() != static_cast<std::size_t>(n)) {
    throw DimensionError("assemble_kernel: attention sizes do not match kernel bank " +
                         shape_string(w.shape()));
  }

  Tensor out({co, ci, kt, kf});
  std::size_t idx = 0;
  for (int i = 0; i < n; ++i)
    for (int o = 0; o < co; ++o) {
      const double wf = aw[static_cast<std::size_t>(i)] * af[static_cast<std::size_t>(i * co + o)];
      for (int c = 0; c < ci; ++c)
        for (int a = 0; a < kt; ++a) {
          const double wfs = wf * as[static_cast<std::size_t>(i * kt + a)];
          for (int b = 0; b < kf; ++b, ++idx) {
            out[(static_cast<std::size_t>(o * ci + c) * kt + a) * kf + b] +=
                wfs * ac[static_cast<std::size_t>(i * kf + b)] * w[idx];
          }
        }
    }

  return ag::make_result(
      std::move(out), {kernels, attn.alpha_s, attn.alpha_c, attn.alpha_f, attn.alpha_w},
      [kernels, attn, n, co, ci, kt, kf](ag::Node& self) {
        const Tensor& w = kernels.value();
        const Tensor& as = attn.alpha_s.value();
        const Tensor& ac = attn.alpha_c.value();
        const Tensor& af = attn.alpha_f.value();
        const Tensor& aw = attn.alpha_w.value();
        const Tensor& g = self.grad;
        Tensor gw(w.shape());
        Tensor gs(as.shape());
        Tensor gc(ac.shape());
        Tensor gf(af.shape());
        Tensor gwt(aw.shape());
        std::size_t idx = 0;
        for (int i = 0; i < n; ++i)
          for (int o = 0; o < co; ++o) {
            const double awi = aw[static_cast<std::size_t>(i)];
            const double afo = af[static_cast<std::size_t>(i * co + o)];
            double sum_o = 0.0;  // sum over (c, a, b) of g * as * ac * W
            for (int c = 0; c < ci; ++c)
              for (int a = 0; a < kt; ++a) {
                const double asa = as[static_cast<std::size_t>(i * kt + a)];
                for (int b = 0; b < kf; ++b, ++idx) {
                  const double acb = ac[static_cast<std::size_t>(i * kf + b)];
                  const double gv = g[(static_cast<std::size_t>(o * ci + c) * kt + a) * kf + b];
                  const double wv = w[idx];
                  gw[idx] = gv * awi * afo * asa * acb;
                  const double gwv = gv * wv;
                  gs[static_cast<std::size_t>(i * kt + a)] += gwv * awi * afo * acb;
                  gc[static_cast<std::size_t>(i * kf + b)] += gwv * awi * afo * asa;
                  sum_o += gwv * asa * acb;
                }
              }
            gf[static_cast<std::size_t>(i * co + o)] += sum_o * awi;
            gwt[static_cast<std::size_t>(i)] += sum_o * afo;
          }
        ag::accumulate(kernels, gw);
        ag::accumulate(attn.alpha_s, gs);
        ag::accumulate(attn.alpha_c, gc);
        ag::accumulate(attn.alpha_f, gf);
        ag::accumulate(attn.alpha_w, gwt);
      });
}

OdconvLayer::OdconvLayer(std::string name, OdconvShape shape)
    : name_(std::move(name)), shape_(shape) {
  shape_.validate();
}

void OdconvLayer::init(ParamStore& ps, Rng& rng) const {
  const auto& s = shape_;
  const double stddev = std::sqrt(2.0 / (s.c_in * s.kernel_t * s.kernel_f));
  ps.add(name_ + ".kernels",
         init::normal({s.n_kernels, s.c_out, s.c_in, s.kernel_t, s.kernel_f}, stddev, rng));
  const int b = s.bottleneck();
  nn::Linear{name_ + ".attn.fc", s.c_in, b}.init(ps, rng);
  nn::Linear{name_ + ".attn.temporal", b, s.n_kernels * s.kernel_t}.init(ps, rng);
  nn::Linear{name_ + ".attn.frequency", b, s.n_kernels * s.kernel_f}.init(ps, rng);
  nn::Linear{name_ + ".attn.filter", b, s.n_kernels * s.c_out}.init(ps, rng);
  nn::Linear{name_ + ".attn.kernel", b, s.n_kernels}.init(ps, rng);
}

OmniAttentionVars OdconvLayer::compute_attention(Context& ctx, const ag::Var& input) const {
  check_input(input, shape_);
  const auto& s = shape_;
  const int b = s.bottleneck();
  ag::Var pooled = ag::global_avg_pool(input);
  ag::Var hidden = ag::relu(nn::Linear{name_ + ".attn.fc", s.c_in, b}(ctx, pooled));
  auto head = [&](const char* suffix, int width) {
    return nn::Linear{name_ + ".attn." + suffix, b, width}(ctx, hidden);
  };
  OmniAttentionVars attn;
  attn.alpha_s = ag::reshape(ag::sigmoid(head("temporal", s.n_kernels * s.kernel_t)),
                             {s.n_kernels, s.kernel_t});
  attn.alpha_c = ag::reshape(ag::sigmoid(head("frequency", s.n_kernels * s.kernel_f)),
                             {s.n_kernels, s.kernel_f});
  attn.alpha_f = ag::reshape(ag::sigmoid(head("filter", s.n_kernels * s.c_out)),
                             {s.n_kernels, s.c_out});
  attn.alpha_w = ag::reshape(ag::softmax_rows(head("kernel", s.n_kernels)), {s.n_kernels});
  return attn;
}

ag::Var OdconvLayer::assemble_kernel(Context& ctx, const OmniAttentionVars& attn) const {
  return odconv::assemble_kernel(ctx.param(name_ + ".kernels"), attn);
}

ag::Var OdconvLayer::forward(Context& ctx, const ag::Var& input) const {
  return forward_with(ctx, input, compute_attention(ctx, input));
}

ag::Var OdconvLayer::forward_with(Context& ctx, const ag::Var& input,
                                  const OmniAttentionVars& attn) const {
  check_input(input, shape_);
  ag::Var kernel = assemble_kernel(ctx, attn);
  return ag::conv2d(input, kernel, shape_.stride, shape_.stride, shape_.pad_t(), shape_.pad_f());
}

StaticConvLayer::StaticConvLayer(std::string name, OdconvShape shape)
    : name_(std::move(name)), shape_(shape) {
  shape_.validate();
}

void StaticConvLayer::init(ParamStore& ps, Rng& rng) const {
  const auto& s = shape_;
  const double stddev = std::sqrt(2.0 / (s.c_in * s.kernel_t * s.kernel_f));
  ps.add(name_ + ".weight", init::normal({s.c_out, s.c_in, s.kernel_t, s.kernel_f}, stddev, rng));
}

ag::Var StaticConvLayer::forward(Context& ctx, const ag::Var& input) const {
  check_input(input, shape_);
  return ag::conv2d(input, ctx.param(name_ + ".weight"), shape_.stride, shape_.stride,
                    shape_.pad_t(), shape_.pad_f());
}

OmniAttention compute_attention(const Tensor& input, const OdconvLayer& layer, const ParamStore& ps) {
  Context ctx(ps, false);
  return layer.compute_attention(ctx, ag::Var::constant(input)).value();
}

Tensor assemble_kernel(const OdconvLayer& layer, const ParamStore& ps, const OmniAttention& attn) {
  Context ctx(ps, false);
  return layer.assemble_kernel(ctx, OmniAttentionVars::constant(attn)).value();
}

Tensor odconv_forward(const Tensor& input, const OdconvLayer& layer, const ParamStore& ps) {
  Context ctx(ps, false);
  return layer.forward(ctx, ag::Var::constant(input)).value();
}

}  // namespace hfsda::odconv
