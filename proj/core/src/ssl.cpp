#include "hfsda/ssl.hpp"

#include <cmath>

#include "hfsda/checkpoint.hpp"
#include "hfsda/dda.hpp"
#include "hfsda/errors.hpp"
#include "hfsda/nn.hpp"

namespace hfsda::ssl {

namespace {

const char* const kTensorNames[] = {
    "encoder.frame_proj.weight", "encoder.frame_proj.bias", "encoder.temporal.weight",
    "encoder.temporal.bias",     "encoder.attn.query.weight", "encoder.attn.query.bias",
    "encoder.attn.key.weight",   "encoder.attn.value.weight",
    "encoder.attn.value.bias",   "encoder.attn.out.weight",   "encoder.attn.out.bias",
    "encoder.norm.gamma",        "encoder.norm.beta",
};

// Rows shifted by `offset` frames with zero fill.
Tensor shifted_rows(const Tensor& x, int offset) {
  Tensor out(x.shape());
  const int t = x.rows();
  const int d = x.cols();
  for (int i = 0; i < t; ++i) {
    const int src = i + offset;
    if (src < 0 || src >= t) continue;
    for (int c = 0; c < d; ++c) out.at(i, c) = x.at(src, c);
  }
  return out;
}

}  // namespace

void SslEncoderSpec::validate() const {
  if (output_dim < 1) throw ConfigError("ssl.output_dim must be >= 1");
  if (!(frame_hop_ms > 0)) throw ConfigError("ssl.frame_hop_ms must be positive");
  if (heads < 1 || output_dim % heads != 0)
    throw ConfigError("ssl.output_dim must be divisible by ssl.heads");
}

int SslEncoderSpec::hop_samples(int sample_rate) const {
  const int hop = static_cast<int>(std::lround(frame_hop_ms * sample_rate / 1000.0));
  if (hop < 1) throw ConfigError("ssl.frame_hop_ms is shorter than one sample");
  return hop;
}

Encoder::Encoder(int sample_rate, int hop, int dim, int heads,
                 std::shared_ptr<const ParamStore> weights, std::string description)
    : sample_rate_(sample_rate),
      hop_(hop),
      dim_(dim),
      heads_(heads),
      weights_(std::move(weights)),
      description_(std::move(description)) {}

Encoder Encoder::standin(const SslEncoderSpec& spec, int sample_rate) {
  spec.validate();
  const int hop = spec.hop_samples(sample_rate);
  const int d = spec.output_dim;
  Rng rng(spec.standin_seed);
  auto ps = std::make_shared<ParamStore>();
  nn::Linear{"encoder.frame_proj", hop, d}.init(*ps, rng);
  nn::Linear{"encoder.temporal", 3 * d, d}.init(*ps, rng);
  dda::MultiHeadSelfAttention("encoder.attn", d, spec.heads).init(*ps, rng);
  nn::LayerNorm{"encoder.norm", d}.init(*ps);
  return Encoder(sample_rate, hop, d, spec.heads, std::move(ps),
                 "standin(seed=" + std::to_string(spec.standin_seed) + ")");
}

Encoder Encoder::load(const SslEncoderSpec& spec, int sample_rate) {
  spec.validate();
  if (spec.identifier.empty())
    throw EncoderUnavailable("no encoder checkpoint configured (ssl.identifier is empty)");
  if (!std::filesystem::exists(spec.identifier))
    throw EncoderUnavailable("encoder checkpoint not found: " + spec.identifier);
  checkpoint::Checkpoint ckpt;
  try {
    ckpt = checkpoint::load(spec.identifier);
  } catch (const Error& e) {
    throw EncoderUnavailable("cannot load encoder checkpoint " + spec.identifier + ": " + e.what());
  }
  auto ps = std::make_shared<ParamStore>();
  for (const char* name : kTensorNames) {
    const Tensor* t = ckpt.find(name);
    if (!t) throw EncoderUnavailable("encoder checkpoint lacks tensor '" + std::string(name) + "'");
    ps->add(name, *t);
  }
  const Tensor& proj = ps->get("encoder.frame_proj.weight");
  const int hop = spec.hop_samples(sample_rate);
  if (proj.ndim() != 2 || proj.dim(0) != hop) {
    throw EncoderUnavailable("encoder checkpoint frame size " + shape_string(proj.shape()) +
                             " does not match a " + std::to_string(hop) + "-sample hop");
  }
  const int d = proj.dim(1);
  if (d % spec.heads != 0) throw EncoderUnavailable("encoder width not divisible by ssl.heads");
  return Encoder(sample_rate, hop, d, spec.heads, std::move(ps), "external(" + spec.identifier + ")");
}

void Encoder::save(const std::filesystem::path& path) const {
  checkpoint::Checkpoint ckpt;
  for (std::size_t i = 0; i < weights_->size(); ++i)
    ckpt.tensors.push_back({weights_->names()[i], weights_->tensors()[i]});
  checkpoint::save(path, ckpt);
}

double Encoder::frame_rate_hz() const { return static_cast<double>(sample_rate_) / hop_; }

std::vector<Tensor> Encoder::hidden_states(std::span<const double> waveform) const {
  const int frames = static_cast<int>(waveform.size() / static_cast<std::size_t>(hop_));
  if (frames < 1) {
    throw InvalidInput("ssl encoder: waveform of " + std::to_string(waveform.size()) +
                       " samples is shorter than one " + std::to_string(hop_) + "-sample frame");
  }
  Tensor framed({frames, hop_});
  std::copy_n(waveform.begin(), static_cast<std::size_t>(frames) * hop_, framed.data());
  Context ctx(*weights_, false);
  ag::Var h1 = ag::gelu(nn::Linear{"encoder.frame_proj", hop_, dim_}(ctx, ag::Var::constant(framed)));
  Tensor context({frames, 3 * dim_});
  context.mat().middleCols(0, dim_) = shifted_rows(h1.value(), -1).mat();
  context.mat().middleCols(dim_, dim_) = h1.value().mat();
  context.mat().middleCols(2 * dim_, dim_) = shifted_rows(h1.value(), 1).mat();
  const ag::Var stacked = ag::Var::constant(std::move(context));
  ag::Var h2 = ag::add(h1, ag::gelu(nn::Linear{"encoder.temporal", 3 * dim_, dim_}(ctx, stacked)));
  ag::Var attn = dda::MultiHeadSelfAttention("encoder.attn", dim_, heads_)(ctx, h2);
  ag::Var h3 = nn::LayerNorm{"encoder.norm", dim_}(ctx, ag::add(h2, attn));
  return {h1.value(), h2.value(), h3.value()};
}

ag::Var layer_weights(const ag::Var& logits) {
  return ag::softmax_rows(ag::reshape(logits, {1, static_cast<int>(logits.value().size())}));
}

ag::Var combine_layers(const std::vector<Tensor>& hidden, LayerPolicy policy, const ag::Var& logits) {
  if (hidden.empty()) throw InvalidInput("combine_layers: no hidden states");
  if (policy == LayerPolicy::last_layer) return ag::Var::constant(hidden.back());
  if (logits.value().size() != hidden.size()) {
    throw DimensionError("combine_layers: " + std::to_string(logits.value().size()) +
                         " layer weights for " + std::to_string(hidden.size()) + " layers");
  }
  std::vector<ag::Var> xs;
  xs.reserve(hidden.size());
  for (const Tensor& h : hidden) xs.push_back(ag::Var::constant(h));
  return ag::weighted_sum(layer_weights(logits), xs);
}

FeatureSequence embed(std::span<const double> waveform, const Encoder& encoder, LayerPolicy policy,
                      const Tensor& layer_logits) {
  const auto hidden = encoder.hidden_states(waveform);
  return {combine_layers(hidden, policy, ag::Var::constant(layer_logits)).value(), encoder.frame_rate_hz()};
}

Tensor interpolation_matrix(int source_t, int target_t) {
  if (source_t < 1) throw InvalidInput("align: source sequence has no frames");
  if (target_t < 1) throw InvalidInput("align: target length must be >= 1");
  Tensor a({target_t, source_t});
  if (source_t == 1 || target_t == 1) {
    for (int j = 0; j < target_t; ++j) a.at(j, 0) = 1.0;
    return a;
  }
  for (int j = 0; j < target_t; ++j) {
    const double pos = static_cast<double>(j) * (source_t - 1) / (target_t - 1);
    int i0 = static_cast<int>(std::floor(pos));
    if (i0 >= source_t - 1) {
      a.at(j, source_t - 1) = 1.0;
      continue;
    }
    const double frac = pos - i0;
    a.at(j, i0) += 1.0 - frac;
    if (frac > 0.0) a.at(j, i0 + 1) += frac;
  }
  return a;
}

ag::Var align(const ag::Var& features, int target_t) {
  if (features.value().ndim() != 2) throw DimensionError("align: features must be (T x D)");
  const int source_t = features.value().rows();
  if (source_t == target_t) return features;
  return ag::matmul(ag::Var::constant(interpolation_matrix(source_t, target_t)), features);
}

FeatureSequence align(const FeatureSequence& features, int target_t) {
  const int source_t = features.frames();
  FeatureSequence out{align(ag::Var::constant(features.data), target_t).value(), features.frame_rate_hz};
  if (source_t > 1 && target_t > 1)
    out.frame_rate_hz = features.frame_rate_hz * (target_t - 1) / (source_t - 1);
  return out;
}

ag::Var concat_streams(const ag::Var& ssl_aligned, const ag::Var& spec_features) {
  if (ssl_aligned.value().rows() != spec_features.value().rows()) {
    throw DimensionError("fuse: frame counts differ (" + std::to_string(ssl_aligned.value().rows()) +
                         " vs " + std::to_string(spec_features.value().rows()) + ")");
  }
  return ag::concat_cols({ssl_aligned, spec_features});
}

Fusion::Fusion(std::string name, int ssl_dim, int spec_dim, int model_dim)
    : name_(std::move(name)), ssl_dim_(ssl_dim), spec_dim_(spec_dim), model_dim_(model_dim) {}

void Fusion::init(ParamStore& ps, Rng& rng) const {
  nn::Linear{name_ + ".proj", ssl_dim_ + spec_dim_, model_dim_}.init(ps, rng);
}

ag::Var Fusion::operator()(Context& ctx, const ag::Var& ssl_aligned, const ag::Var& spec_features) const {
  return nn::Linear{name_ + ".proj", ssl_dim_ + spec_dim_, model_dim_}(
      ctx, concat_streams(ssl_aligned, spec_features));
}

}  // namespace hfsda::ssl
