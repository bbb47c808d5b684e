#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hfsda/autograd.hpp"
#include "hfsda/params.hpp"

namespace hfsda::ssl {

// Real (T x D) frame-aligned features.
struct FeatureSequence {
  Tensor data;
  double frame_rate_hz = 0.0;

  int frames() const { return data.rows(); }
  int dim() const { return data.cols(); }
};

enum class EncoderKind { external_pretrained, standin };
enum class LayerPolicy { last_layer, weighted_sum_all_layers };

struct SslEncoderSpec {
  EncoderKind kind = EncoderKind::standin;
  std::string identifier;
  LayerPolicy layer_policy = LayerPolicy::weighted_sum_all_layers;
  int output_dim = 256;
  double frame_hop_ms = 20.0;
  std::uint64_t standin_seed = 17;
  int heads = 4;

  void validate() const;
  int hop_samples(int sample_rate) const;
};

// Frozen frame-level encoder producing one (T_ssl x D) hidden state per layer.
//
// Topology ("conv-attn" family, also used by the stand-in):
//   layer 1: non-overlapping hop-sized frames -> linear -> GELU
//   layer 2: width-3 temporal convolution -> GELU, residual
//   layer 3: multi-head self-attention, residual, LayerNorm
// T_ssl = floor(samples / hop).
class Encoder {
 public:
  // Randomly initialised from spec.standin_seed and never updated.
  static Encoder standin(const SslEncoderSpec& spec, int sample_rate);

  // Loads conv-attn weights from a tensor container (checkpoint format) at
  // spec.identifier. Throws EncoderUnavailable if missing or unloadable.
  static Encoder load(const SslEncoderSpec& spec, int sample_rate);

  // Writes this encoder's weights in the format load() reads.
  void save(const std::filesystem::path& path) const;

  std::vector<Tensor> hidden_states(std::span<const double> waveform) const;
  int num_layers() const { return 3; }
  int output_dim() const { return dim_; }
  int hop_samples() const { return hop_; }
  double frame_rate_hz() const;
  const ParamStore& weights() const { return *weights_; }
  const std::string& description() const { return description_; }

 private:
  Encoder(int sample_rate, int hop, int dim, int heads, std::shared_ptr<const ParamStore> weights,
          std::string description);

  int sample_rate_;
  int hop_;
  int dim_;
  int heads_;
  std::shared_ptr<const ParamStore> weights_;
  std::string description_;
};

// Softmax-normalised layer weights from their logits (1 x L).
ag::Var layer_weights(const ag::Var& logits);

// Combines hidden states per policy; logits are only read for
// weighted_sum_all_layers.
ag::Var combine_layers(const std::vector<Tensor>& hidden, LayerPolicy policy, const ag::Var& logits);

FeatureSequence embed(std::span<const double> waveform, const Encoder& encoder, LayerPolicy policy,
                      const Tensor& layer_logits);

// Linear interpolation along time onto target_t frames spanning the first
// to the last source frame (endpoints preserved exactly).
Tensor interpolation_matrix(int source_t, int target_t);
ag::Var align(const ag::Var& features, int target_t);
FeatureSequence align(const FeatureSequence& features, int target_t);

// Frame-wise concatenation along the feature axis.
ag::Var concat_streams(const ag::Var& ssl_aligned, const ag::Var& spec_features);

// Concatenation followed by a learned projection to the model width.
class Fusion {
 public:
  Fusion(std::string name, int ssl_dim, int spec_dim, int model_dim);
  void init(ParamStore& ps, Rng& rng) const;
  ag::Var operator()(Context& ctx, const ag::Var& ssl_aligned, const ag::Var& spec_features) const;

 private:
  std::string name_;
  int ssl_dim_;
  int spec_dim_;
  int model_dim_;
};

}  // namespace hfsda::ssl
