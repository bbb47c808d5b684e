#include "hfsda/model.hpp"

#include <cmath>
#include <cstdio>

#include "hfsda/errors.hpp"
#include "hfsda/nn.hpp"

namespace hfsda {

const char* to_string(Branches b) {
  switch (b) {
    case Branches::both:
      return "both";
    case Branches::ssl_only:
      return "ssl";
    case Branches::spec_only:
      return "spec";
  }
  return "?";
}

const char* to_string(InputCompression c) {
  return c == InputCompression::log1p ? "log1p" : "none";
}

void ModelConfig::validate() const {
  stft.validate();
  if (odconv_layers < 1) throw ConfigError("odconv.layers must be >= 1");
  for (int l = 0; l < odconv_layers; ++l) odconv_shape(l).validate();
  if (spec_dim < 1) throw ConfigError("model.spec_dim must be >= 1");
  ssl.validate();
  if (n_blocks < 1) throw ConfigError("model.n_blocks must be >= 1");
  block_shape().validate();
  if (!(loss_beta > 0)) throw ConfigError("loss.beta must be positive");
  if (waveform_loss_weight < 0) throw ConfigError("loss.waveform_weight must be >= 0");
}

odconv::OdconvShape ModelConfig::odconv_shape(int layer) const {
  odconv::OdconvShape s;
  s.c_in = layer == 0 ? 1 : odconv_channels;
  s.c_out = odconv_channels;
  s.kernel_t = odconv_kernel_t;
  s.kernel_f = odconv_kernel_f;
  s.n_kernels = odconv_kernels;
  s.reduction = odconv_reduction;
  return s;
}

dda::BlockShape ModelConfig::block_shape() const {
  dda::BlockShape s;
  s.dim = model_dim;
  s.heads = heads;
  s.ff_mult = ff_mult;
  s.dropout = dropout;
  s.conv_kernel = conv_kernel;
  s.kind = block;
  return s;
}

std::string ModelConfig::canonical_text() const {
  std::string out;
  auto line = [&out](const char* key, const std::string& value) {
    out += key;
    out += " = ";
    out += value;
    out += '\n';
  };
  auto real = [](double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return std::string(buf);
  };
  auto flag = [](bool b) { return std::string(b ? "true" : "false"); };
  using std::to_string;
  line("stft.sample_rate", to_string(stft.sample_rate_hz));
  line("stft.win_length", to_string(stft.win_length));
  line("stft.fft_size", to_string(stft.fft_size));
  line("stft.hop_length", to_string(stft.hop_length));
  line("odconv.layers", to_string(odconv_layers));
  line("odconv.channels", to_string(odconv_channels));
  line("odconv.n_kernels", to_string(odconv_kernels));
  line("odconv.kernel_t", to_string(odconv_kernel_t));
  line("odconv.kernel_f", to_string(odconv_kernel_f));
  line("odconv.reduction", to_string(odconv_reduction));
  line("odconv.enabled", flag(odconv_enabled));
  line("model.spec_dim", to_string(spec_dim));
  line("model.input_compression", hfsda::to_string(input_compression));
  line("ssl.kind", ssl.kind == ssl::EncoderKind::standin ? "standin" : "external_pretrained");
  line("ssl.identifier", ssl.identifier);
  line("ssl.layer_policy",
       ssl.layer_policy == ssl::LayerPolicy::last_layer ? "last_layer" : "weighted_sum_all_layers");
  line("ssl.output_dim", to_string(ssl.output_dim));
  line("ssl.frame_hop_ms", real(ssl.frame_hop_ms));
  line("ssl.standin_seed", to_string(ssl.standin_seed));
  line("ssl.heads", to_string(ssl.heads));
  line("ssl.fallback_to_standin", flag(ssl_fallback_to_standin));
  line("model.branches", hfsda::to_string(branches));
  line("model.dim", to_string(model_dim));
  line("model.n_blocks", to_string(n_blocks));
  line("model.heads", to_string(heads));
  line("model.ff_mult", to_string(ff_mult));
  line("model.conv_kernel", to_string(conv_kernel));
  line("model.block", dda::to_string(block));
  line("model.dropout", real(dropout));
  line("loss.beta", real(loss_beta));
  line("loss.waveform_weight", real(waveform_loss_weight));
  return out;
}

double smooth_l1_loss(const Tensor& enhanced, const Tensor& clean, double beta) {
  return ag::smooth_l1(ag::Var::constant(enhanced), clean, beta).value()[0];
}

ag::Var masked_istft(const ag::Var& mask, const dsp::ComplexSpectrogram& noisy) {
  if (mask.value().ndim() != 2 || mask.value().rows() != noisy.frames ||
      mask.value().cols() != noisy.bins) {
    throw DimensionError("masked_istft: mask " + shape_string(mask.shape()) +
                         " does not match spectrogram");
  }
  dsp::ComplexSpectrogram masked = noisy;
  for (std::size_t i = 0; i < masked.data.size(); ++i) masked.data[i] *= mask.value()[i];
  std::vector<double> wave = dsp::istft(masked);
  const auto n = static_cast<int>(wave.size());
  return ag::make_result(Tensor({n}, std::move(wave)), {mask}, [mask, noisy](ag::Node& self) {
    const dsp::ComplexSpectrogram g =
        dsp::istft_adjoint(self.grad.values(), noisy.config, noisy.frames, *noisy.source_length);
    Tensor gm(mask.shape());
    for (std::size_t i = 0; i < gm.size(); ++i)
      gm[i] = g.data[i].real() * noisy.data[i].real() + g.data[i].imag() * noisy.data[i].imag();
    ag::accumulate(mask, gm);
  });
}

HfsdaModel::HfsdaModel(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  if (config_.branches == Branches::spec_only) return;
  const int sr = config_.stft.sample_rate_hz;
  if (config_.ssl.kind == ssl::EncoderKind::standin) {
    encoder_ = ssl::Encoder::standin(config_.ssl, sr);
    return;
  }
  try {
    encoder_ = ssl::Encoder::load(config_.ssl, sr);
  } catch (const EncoderUnavailable& e) {
    if (!config_.ssl_fallback_to_standin) throw;
    encoder_warning_ = std::string(e.what()) + "; falling back to stand-in encoder (seed " +
                       std::to_string(config_.ssl.standin_seed) + ")";
    encoder_ = ssl::Encoder::standin(config_.ssl, sr);
  }
}

ParamStore HfsdaModel::init_params(std::uint64_t seed) const {
  const auto& c = config_;
  ParamStore ps;
  Rng rng(seed);
  const int bins = c.stft.bins();
  if (c.branches != Branches::ssl_only) {
    for (int l = 0; l < c.odconv_layers; ++l) {
      if (c.odconv_enabled)
        odconv::OdconvLayer("spec.odconv" + std::to_string(l), c.odconv_shape(l)).init(ps, rng);
      else
        odconv::StaticConvLayer("spec.conv" + std::to_string(l), c.odconv_shape(l)).init(ps, rng);
    }
    nn::Linear{"spec.proj", c.odconv_channels * bins, c.spec_dim}.init(ps, rng);
  }
  if (c.branches != Branches::spec_only && c.ssl.layer_policy == ssl::LayerPolicy::weighted_sum_all_layers)
    ps.add("ssl.layer_logits", Tensor({encoder_->num_layers()}));
  switch (c.branches) {
    case Branches::both:
      ssl::Fusion("fusion", encoder_->output_dim(), c.spec_dim, c.model_dim).init(ps, rng);
      break;
    case Branches::ssl_only:
      if (encoder_->output_dim() != c.model_dim)
        nn::Linear{"fusion.proj", encoder_->output_dim(), c.model_dim}.init(ps, rng);
      break;
    case Branches::spec_only:
      if (c.spec_dim != c.model_dim) nn::Linear{"fusion.proj", c.spec_dim, c.model_dim}.init(ps, rng);
      break;
  }
  for (int b = 0; b < c.n_blocks; ++b)
    dda::Block("blocks." + std::to_string(b), c.block_shape()).init(ps, rng);
  nn::LayerNorm{"head.norm", c.model_dim}.init(ps);
  nn::Linear{"head.proj", c.model_dim, bins}.init(ps, rng);
  return ps;
}

HfsdaModel::Prepared HfsdaModel::prepare(std::span<const double> noisy) const {
  if (noisy.size() < static_cast<std::size_t>(config_.stft.win_length)) {
    throw InvalidInput("input of " + std::to_string(noisy.size()) + " samples is shorter than one " +
                       std::to_string(config_.stft.win_length) + "-sample frame");
  }
  Prepared p;
  p.noisy = dsp::stft(noisy, config_.stft);
  p.noisy_magnitude = dsp::magnitude(p.noisy);
  if (config_.branches != Branches::ssl_only) {
    Tensor in = p.noisy_magnitude;
    if (config_.input_compression == InputCompression::log1p)
      for (double& v : in.values()) v = std::log1p(v);
    p.spectral_input = in.reshaped({1, p.noisy.frames, p.noisy.bins});
  }
  if (encoder_) p.ssl_hidden = encoder_->hidden_states(noisy);
  return p;
}

ag::Var HfsdaModel::fused_features(Context& ctx, const Prepared& in) const {
  const auto& c = config_;
  const int frames = in.noisy.frames;
  ag::Var spec;
  if (c.branches != Branches::ssl_only) {
    ag::Var x = ag::Var::constant(in.spectral_input);
    for (int l = 0; l < c.odconv_layers; ++l) {
      if (c.odconv_enabled)
        x = odconv::OdconvLayer("spec.odconv" + std::to_string(l), c.odconv_shape(l)).forward(ctx, x);
      else
        x = odconv::StaticConvLayer("spec.conv" + std::to_string(l), c.odconv_shape(l)).forward(ctx, x);
      if (l + 1 < c.odconv_layers) x = ag::relu(x);
    }
    spec = nn::Linear{"spec.proj", c.odconv_channels * in.noisy.bins, c.spec_dim}(
        ctx, ag::frames_from_channels(x));
  }
  ag::Var ssl_feats;
  if (c.branches != Branches::spec_only) {
    ag::Var logits = c.ssl.layer_policy == ssl::LayerPolicy::weighted_sum_all_layers
                         ? ctx.param("ssl.layer_logits")
                         : ag::Var();
    ssl_feats = ssl::align(ssl::combine_layers(in.ssl_hidden, c.ssl.layer_policy, logits), frames);
  }
  switch (c.branches) {
    case Branches::both:
      return ssl::Fusion("fusion", encoder_->output_dim(), c.spec_dim, c.model_dim)(ctx, ssl_feats, spec);
    case Branches::ssl_only:
      if (encoder_->output_dim() == c.model_dim) return ssl_feats;
      return nn::Linear{"fusion.proj", encoder_->output_dim(), c.model_dim}(ctx, ssl_feats);
    case Branches::spec_only:
      if (c.spec_dim == c.model_dim) return spec;
      return nn::Linear{"fusion.proj", c.spec_dim, c.model_dim}(ctx, spec);
  }
  return {};
}

ag::Var HfsdaModel::mask_logits(Context& ctx, const Prepared& in) const {
  const auto& c = config_;
  ag::Var h = fused_features(ctx, in);
  h = ag::add(h, ag::Var::constant(dda::sinusoidal_positions(in.noisy.frames, c.model_dim)));
  for (int b = 0; b < c.n_blocks; ++b) h = dda::Block("blocks." + std::to_string(b), c.block_shape())(ctx, h);
  h = nn::LayerNorm{"head.norm", c.model_dim}(ctx, h);
  return nn::Linear{"head.proj", c.model_dim, in.noisy.bins}(ctx, h);
}

ag::Var HfsdaModel::mask(Context& ctx, const Prepared& in) const {
  return ag::sigmoid(mask_logits(ctx, in));
}

ag::Var HfsdaModel::loss(Context& ctx, const Prepared& in, const Tensor& clean_magnitude,
                         std::span<const double> clean_waveform) const {
  ag::Var m = mask(ctx, in);
  ag::Var enhanced = ag::mul(m, ag::Var::constant(in.noisy_magnitude));
  ag::Var total = ag::smooth_l1(enhanced, clean_magnitude, config_.loss_beta);
  if (config_.waveform_loss_weight > 0.0) {
    if (clean_waveform.size() != *in.noisy.source_length)
      throw DimensionError("loss: clean waveform length differs from the noisy input");
    Tensor target({static_cast<int>(clean_waveform.size())},
                  std::vector<double>(clean_waveform.begin(), clean_waveform.end()));
    ag::Var wave_term = ag::smooth_l1(masked_istft(m, in.noisy), target, config_.loss_beta);
    total = ag::add(total, ag::scale(wave_term, config_.waveform_loss_weight));
  }
  return total;
}

EnhancementOutput HfsdaModel::forward(std::span<const double> noisy, const ParamStore& params) const {
  const Prepared in = prepare(noisy);
  Context ctx(params, false);
  dsp::Mask m(mask(ctx, in).value());
  dsp::ComplexSpectrogram enhanced = dsp::apply_mask(in.noisy, m);
  std::vector<double> wave = dsp::istft(enhanced);
  return {std::move(m), std::move(enhanced), std::move(wave)};
}

std::vector<double> HfsdaModel::enhance(std::span<const double> noisy, const ParamStore& params) const {
  return forward(noisy, params).enhanced_waveform;
}

}  // namespace hfsda
