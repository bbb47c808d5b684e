#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "hfsda/autograd.hpp"
#include "hfsda/dda.hpp"
#include "hfsda/dsp.hpp"
#include "hfsda/odconv.hpp"
#include "hfsda/params.hpp"
#include "hfsda/ssl.hpp"

namespace hfsda {

enum class Branches { both, ssl_only, spec_only };
enum class InputCompression { log1p, none };

const char* to_string(Branches b);
const char* to_string(InputCompression c);

struct ModelConfig {
  dsp::StftConfig stft;

  // Spectral branch: a stack of ODConv layers (or static convolutions when
  // odconv_enabled is false) over the (1 x T x F) magnitude map.
  int odconv_layers = 2;
  int odconv_channels = 8;
  int odconv_kernels = 4;
  int odconv_kernel_t = 3;
  int odconv_kernel_f = 3;
  int odconv_reduction = 4;
  bool odconv_enabled = true;
  int spec_dim = 256;
  InputCompression input_compression = InputCompression::log1p;

  ssl::SslEncoderSpec ssl;
  bool ssl_fallback_to_standin = true;

  Branches branches = Branches::both;
  int model_dim = 256;
  int n_blocks = 2;
  int heads = 4;
  int ff_mult = 4;
  int conv_kernel = 31;
  dda::BlockKind block = dda::BlockKind::dda;
  double dropout = 0.1;

  double loss_beta = 1.0;
  double waveform_loss_weight = 0.0;

  void validate() const;
  odconv::OdconvShape odconv_shape(int layer) const;
  dda::BlockShape block_shape() const;

  // "key = value" lines for every field, in a fixed order; hashed into
  // checkpoint headers.
  std::string canonical_text() const;
};

struct EnhancementOutput {
  dsp::Mask mask;
  dsp::ComplexSpectrogram enhanced_spectrogram;
  std::vector<double> enhanced_waveform;
};

// Mean smooth-L1: 0.5 d^2 / beta if |d| < beta else |d| - 0.5 beta.
double smooth_l1_loss(const Tensor& enhanced, const Tensor& clean, double beta);

// Waveform reconstructed from a mask applied to a fixed noisy spectrogram;
// differentiable with respect to the mask through the adjoint synthesis.
ag::Var masked_istft(const ag::Var& mask, const dsp::ComplexSpectrogram& noisy);

class HfsdaModel {
 public:
  // Non-trainable inputs for one utterance: noisy spectrogram and the frozen
  // encoder's hidden states.
  struct Prepared {
    dsp::ComplexSpectrogram noisy;
    Tensor noisy_magnitude;
    Tensor spectral_input;
    std::vector<Tensor> ssl_hidden;
  };

  explicit HfsdaModel(ModelConfig config);

  const ModelConfig& config() const { return config_; }
  const ssl::Encoder* encoder() const { return encoder_ ? &*encoder_ : nullptr; }
  // Non-empty when an external encoder was requested but the stand-in is used.
  const std::string& encoder_warning() const { return encoder_warning_; }

  ParamStore init_params(std::uint64_t seed) const;

  Prepared prepare(std::span<const double> noisy) const;
  ag::Var fused_features(Context& ctx, const Prepared& in) const;
  ag::Var mask_logits(Context& ctx, const Prepared& in) const;
  ag::Var mask(Context& ctx, const Prepared& in) const;

  // Training objective for one example: smooth-L1 between masked noisy
  // magnitude and clean magnitude, plus the optional waveform term.
  ag::Var loss(Context& ctx, const Prepared& in, const Tensor& clean_magnitude,
               std::span<const double> clean_waveform) const;

  EnhancementOutput forward(std::span<const double> noisy, const ParamStore& params) const;
  std::vector<double> enhance(std::span<const double> noisy, const ParamStore& params) const;

 private:
  ModelConfig config_;
  std::optional<ssl::Encoder> encoder_;
  std::string encoder_warning_;
};

}  // namespace hfsda
