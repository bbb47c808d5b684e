#include "testkit.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <iterator>
#include <limits>

#include <unistd.h>

#include "hfsda/random.hpp"

namespace hfsda::testkit {

namespace {

double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

double norm(const Tensor& t) {
  double s = 0.0;
  for (double v : t.values()) s += v * v;
  return std::sqrt(s);
}

double scalar_of(const ag::Var& v) {
  if (v.value().size() != 1) throw OracleError("loss is not a scalar");
  return v.value()[0];
}

// x W + b for a row vector x against a Linear stored (in x out).
std::vector<double> affine(const std::vector<double>& x, const ParamStore& ps, const std::string& name) {
  const Tensor& w = ps.get(name + ".weight");
  const Tensor& b = ps.get(name + ".bias");
  const int in = w.dim(0), out = w.dim(1);
  if (static_cast<int>(x.size()) != in) throw OracleError("affine: width mismatch for " + name);
  std::vector<double> y(static_cast<std::size_t>(out));
  for (int j = 0; j < out; ++j) {
    double s = b[static_cast<std::size_t>(j)];
    for (int i = 0; i < in; ++i) s += x[static_cast<std::size_t>(i)] * w.at(i, j);
    y[static_cast<std::size_t>(j)] = s;
  }
  return y;
}

}  // namespace

void GradCheckSpec::validate() const {
  if (!(step > 0.0)) throw OracleError("grad check step must be positive");
  if (!(tolerance > 0.0)) throw OracleError("grad check tolerance must be positive");
}

Tensor finite_diff_grad(const std::function<double(const Tensor&)>& fn, const Tensor& point, double step) {
  if (!(step > 0.0)) throw OracleError("finite difference step must be positive");
  Tensor x = point;
  Tensor g(point.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double x0 = x[i];
    x[i] = x0 + step;
    const double fp = fn(x);
    x[i] = x0 - step;
    const double fm = fn(x);
    x[i] = x0;
    if (!std::isfinite(fp) || !std::isfinite(fm))
      throw OracleError("non-finite function value at coordinate " + std::to_string(i));
    g[i] = (fp - fm) / (2.0 * step);
  }
  return g;
}

double relative_error(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw OracleError("relative_error: shape mismatch");
  double diff = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) diff += (a[i] - b[i]) * (a[i] - b[i]);
  const double scale = std::max(norm(a), norm(b));
  if (scale == 0.0) return 0.0;
  return std::sqrt(diff) / scale;
}

std::vector<GradCheckResult> check_param_grads(ParamStore& params,
                                               const std::function<ag::Var(Context&)>& loss,
                                               const GradCheckSpec& spec) {
  spec.validate();
  std::vector<Tensor> analytic;
  {
    Context ctx(params, false);
    ag::Var l = loss(ctx);
    scalar_of(l);
    l.backward();
    analytic = ctx.gradients();
  }
  std::vector<GradCheckResult> results;
  for (std::size_t k = 0; k < params.size(); ++k) {
    const std::string& name = params.names()[k];
    if (name.rfind(spec.prefix, 0) != 0) continue;
    Tensor& slot = params.tensors()[k];
    const Tensor saved = slot;
    auto fn = [&](const Tensor& value) {
      slot = value;
      Context ctx(params, false);
      return scalar_of(loss(ctx));
    };
    const Tensor numeric = finite_diff_grad(fn, saved, spec.step);
    slot = saved;
    GradCheckResult r;
    r.name = name;
    r.rel_error = relative_error(analytic[k], numeric);
    r.analytic_norm = norm(analytic[k]);
    r.ok = r.rel_error < spec.tolerance;
    results.push_back(r);
  }
  return results;
}

GradCheckResult check_input_grad(const Tensor& input, const ParamStore& params,
                                 const std::function<ag::Var(Context&, const ag::Var&)>& loss,
                                 const GradCheckSpec& spec) {
  spec.validate();
  Context ctx(params, false);
  ag::Var x = ag::Var::leaf(input);
  ag::Var l = loss(ctx, x);
  scalar_of(l);
  l.backward();
  const Tensor analytic = x.grad();
  auto fn = [&](const Tensor& value) {
    Context c(params, false);
    return scalar_of(loss(c, ag::Var::constant(value)));
  };
  const Tensor numeric = finite_diff_grad(fn, input, spec.step);
  GradCheckResult r;
  r.name = "input";
  r.rel_error = relative_error(analytic, numeric);
  r.analytic_norm = norm(analytic);
  r.ok = r.rel_error < spec.tolerance;
  return r;
}

Tensor bruteforce_eq1(const Tensor& kernels, const odconv::OmniAttention& attn, const Tensor& input,
                      int stride, int pad_t, int pad_f) {
  if (kernels.ndim() != 5 || input.ndim() != 3) throw OracleError("bruteforce_eq1: bad ranks");
  const int n = kernels.dim(0), co = kernels.dim(1), ci = kernels.dim(2);
  const int kt = kernels.dim(3), kf = kernels.dim(4);
  if (input.dim(0) != ci) throw OracleError("bruteforce_eq1: input channels do not match kernels");
  if (attn.alpha_w.size() != static_cast<std::size_t>(n) ||
      attn.alpha_s.size() != static_cast<std::size_t>(n * kt) ||
      attn.alpha_c.size() != static_cast<std::size_t>(n * kf) ||
      attn.alpha_f.size() != static_cast<std::size_t>(n * co))
    throw OracleError("bruteforce_eq1: attention sizes do not match kernels");
  if (pad_t < 0) pad_t = kt / 2;
  if (pad_f < 0) pad_f = kf / 2;
  const int t = input.dim(1), f = input.dim(2);
  const int ot = (t + 2 * pad_t - kt) / stride + 1;
  const int of = (f + 2 * pad_f - kf) / stride + 1;
  const double work = 1.0 * co * ot * of * ci * kt * kf * n;
  if (work > 1e5) throw OracleError("bruteforce_eq1: instance too large for the oracle");

  auto W = [&](int i, int o, int c, int a, int b) {
    return kernels[(((static_cast<std::size_t>(i) * co + o) * ci + c) * kt + a) * kf + b];
  };
  auto X = [&](int c, int tt, int ff) {
    if (tt < 0 || tt >= t || ff < 0 || ff >= f) return 0.0;
    return input[(static_cast<std::size_t>(c) * t + tt) * f + ff];
  };
  Tensor out({co, ot, of});
  for (int o = 0; o < co; ++o)
    for (int y = 0; y < ot; ++y)
      for (int z = 0; z < of; ++z) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i)
          for (int c = 0; c < ci; ++c)
            for (int a = 0; a < kt; ++a)
              for (int b = 0; b < kf; ++b) {
                const double weight = attn.alpha_w[static_cast<std::size_t>(i)] *
                                      attn.alpha_f[static_cast<std::size_t>(i * co + o)] *
                                      attn.alpha_s[static_cast<std::size_t>(i * kt + a)] *
                                      attn.alpha_c[static_cast<std::size_t>(i * kf + b)] * W(i, o, c, a, b);
                acc += weight * X(c, y * stride + a - pad_t, z * stride + b - pad_f);
              }
        out[(static_cast<std::size_t>(o) * ot + y) * of + z] = acc;
      }
  return out;
}

odconv::OmniAttention hand_omni_attention(const Tensor& input, const ParamStore& params,
                                          const std::string& name, const odconv::OdconvShape& shape) {
  const int ci = input.dim(0);
  const std::size_t area = input.size() / static_cast<std::size_t>(ci);
  std::vector<double> pooled(static_cast<std::size_t>(ci));
  for (int c = 0; c < ci; ++c) {
    double s = 0.0;
    for (std::size_t k = 0; k < area; ++k) s += input[static_cast<std::size_t>(c) * area + k];
    pooled[static_cast<std::size_t>(c)] = s / static_cast<double>(area);
  }
  std::vector<double> hidden = affine(pooled, params, name + ".attn.fc");
  for (double& h : hidden) h = std::max(h, 0.0);

  const int n = shape.n_kernels;
  auto squash = [&](const char* head, int width) {
    std::vector<double> z = affine(hidden, params, name + ".attn." + head);
    Tensor out({n, width});
    for (std::size_t k = 0; k < z.size(); ++k) out[k] = sigmoid(z[k]);
    return out;
  };
  odconv::OmniAttention a;
  a.alpha_s = squash("temporal", shape.kernel_t);
  a.alpha_c = squash("frequency", shape.kernel_f);
  a.alpha_f = squash("filter", shape.c_out);
  std::vector<double> logits = affine(hidden, params, name + ".attn.kernel");
  const double top = *std::max_element(logits.begin(), logits.end());
  double total = 0.0;
  for (double& v : logits) total += (v = std::exp(v - top));
  a.alpha_w = Tensor({n});
  for (int i = 0; i < n; ++i) a.alpha_w[static_cast<std::size_t>(i)] = logits[static_cast<std::size_t>(i)] / total;
  return a;
}

odconv::OmniAttention unit_attention(const odconv::OdconvShape& shape) {
  const int n = shape.n_kernels;
  return {Tensor({n, shape.kernel_t}, 1.0), Tensor({n, shape.kernel_f}, 1.0), Tensor({n, shape.c_out}, 1.0),
          Tensor({n}, 1.0)};
}

std::vector<double> hand_fa_weights(const Tensor& x, const Tensor& w1, const Tensor& w2) {
  const int t = x.dim(0), d = x.dim(1);
  if (w1.dim(0) != d || w1.dim(1) != d || w2.dim(0) != d || w2.dim(1) != d)
    throw OracleError("hand_fa_weights: weight shape mismatch");
  std::vector<double> mean(static_cast<std::size_t>(d), 0.0);
  std::vector<double> peak(static_cast<std::size_t>(d), -std::numeric_limits<double>::infinity());
  for (int r = 0; r < t; ++r)
    for (int c = 0; c < d; ++c) {
      mean[static_cast<std::size_t>(c)] += x.at(r, c) / t;
      peak[static_cast<std::size_t>(c)] = std::max(peak[static_cast<std::size_t>(c)], x.at(r, c));
    }
  std::vector<double> u(static_cast<std::size_t>(d));
  for (int f = 0; f < d; ++f) {
    double z = 0.0;
    for (int g = 0; g < d; ++g)
      z += mean[static_cast<std::size_t>(g)] * w1.at(g, f) + peak[static_cast<std::size_t>(g)] * w2.at(g, f);
    u[static_cast<std::size_t>(f)] = sigmoid(z);
  }
  return u;
}

Tensor random_tensor(const Shape& shape, std::uint64_t seed, double scale) {
  Rng rng(seed);
  Tensor t(shape);
  for (double& v : t.storage()) v = scale * rng.normal();
  return t;
}

std::vector<double> random_signal(std::size_t samples, std::uint64_t seed, double scale) {
  Rng rng(seed);
  std::vector<double> x(samples);
  for (double& v : x) v = scale * rng.uniform(-1.0, 1.0);
  return x;
}

std::vector<minicorpus::PairInfo> make_mini_corpus(const std::filesystem::path& dir, std::uint64_t seed) {
  return minicorpus::make(dir, seed, 10);
}

double measured_snr_db(const std::vector<double>& clean, const std::vector<double>& noisy) {
  if (clean.size() != noisy.size()) throw OracleError("measured_snr_db: length mismatch");
  double s = 0.0, e = 0.0;
  for (std::size_t i = 0; i < clean.size(); ++i) {
    s += clean[i] * clean[i];
    e += (noisy[i] - clean[i]) * (noisy[i] - clean[i]);
  }
  return 10.0 * std::log10(s / e);
}

ModelConfig tiny_model_config() {
  ModelConfig c;
  c.odconv_channels = 2;
  c.odconv_kernels = 2;
  c.spec_dim = 16;
  c.ssl.output_dim = 16;
  c.ssl.heads = 2;
  c.model_dim = 16;
  c.heads = 2;
  c.n_blocks = 1;
  c.ff_mult = 2;
  c.conv_kernel = 5;
  return c;
}

std::filesystem::path scratch_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  auto dir = std::filesystem::temp_directory_path() /
             ("hfsda_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

bool files_identical(const std::filesystem::path& a, const std::filesystem::path& b) {
  std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
  if (!fa || !fb) return false;
  std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
  return sa == sb;
}

}  // namespace hfsda::testkit
