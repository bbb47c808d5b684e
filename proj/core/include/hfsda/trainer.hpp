#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hfsda/checkpoint.hpp"
#include "hfsda/data.hpp"
#include "hfsda/model.hpp"
#include "hfsda/params.hpp"

namespace hfsda::train {

struct TrainConfig {
  int epochs = 200;
  int batch_size = 16;
  double lr0 = 1e-4;
  double decay_factor = 0.5;
  int decay_every = 10;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::uint64_t seed = 0;
  std::filesystem::path checkpoint_dir = "checkpoints";
  int checkpoint_every = 10;
  double val_fraction = 0.05;
  // Global-norm clipping threshold; 0 disables.
  double grad_clip = 0.0;
  // Stops after this many optimisation steps when > 0.
  std::int64_t max_steps = 0;

  void validate() const;
};

// lr0 * decay_factor^floor(epoch / decay_every).
double lr_at(int epoch, const TrainConfig& cfg);

class Adam {
 public:
  Adam(double beta1, double beta2, double eps) : beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(ParamStore& params, const std::vector<Tensor>& grads, double lr);
  std::uint64_t steps() const { return t_; }

  void save(std::vector<checkpoint::NamedTensor>& out, const ParamStore& params) const;
  // Restores moments for every parameter of `params`; missing entries throw
  // IncompatibleCheckpoint.
  void load(const checkpoint::Checkpoint& ckpt, const ParamStore& params);

 private:
  double beta1_;
  double beta2_;
  double eps_;
  std::uint64_t t_ = 0;
  std::vector<Tensor> m_;
  std::vector<Tensor> v_;
};

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  std::optional<double> val_loss;
  double wall_time = 0.0;
};

struct TrainResult {
  std::filesystem::path last_checkpoint;
  std::filesystem::path best_checkpoint;
  std::vector<EpochRecord> history;
};

class Trainer {
 public:
  // config_text is stored in every checkpoint (the resolved run config).
  Trainer(const HfsdaModel& model, TrainConfig cfg, std::string config_text = {});

  const ParamStore& params() const { return params_; }
  ParamStore& params() { return params_; }
  const Adam& optimizer() const { return adam_; }
  int epoch() const { return epoch_; }
  std::uint64_t step_count() const { return step_; }

  // One Adam update on the mean loss over the batch; returns that loss.
  double step(const std::vector<const data::Segment*>& batch, double lr);
  double mean_loss(const std::vector<data::Segment>& segments) const;

  // Runs the remaining epochs up to cfg.epochs over the training pairs, with
  // a seeded validation split. Appends to checkpoint_dir/metrics.jsonl.
  TrainResult fit(const std::vector<data::UtterancePair>& corpus,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

  checkpoint::Checkpoint snapshot() const;
  std::filesystem::path save(const std::filesystem::path& path) const;
  // Restores parameters, optimiser moments, and counters; verifies the
  // model configuration hash.
  void resume(const std::filesystem::path& path);

 private:
  const HfsdaModel& model_;
  TrainConfig cfg_;
  std::string config_text_;
  ParamStore params_;
  Adam adam_;
  int epoch_ = 0;
  std::uint64_t step_ = 0;
  double best_ = 0.0;
  bool has_best_ = false;
};

// Model-affecting configuration hash stored in checkpoint headers.
std::uint64_t model_hash(const ModelConfig& cfg);

// Parameters from a checkpoint for inference, hash-checked.
ParamStore load_params(const std::filesystem::path& path, const ModelConfig& cfg);

enum class AblationPreset {
  full,
  conformer_instead_of_dda,
  conformer_plus_fa,
  ssl_only,
  wav2vec_encoder,
  stft_odconv_only,
  stft_plain_only,
};

const std::vector<std::string>& ablation_names();
AblationPreset ablation_from_string(const std::string& name);
const char* to_string(AblationPreset p);
ModelConfig build_ablation(AblationPreset preset, ModelConfig base);

// Sorted distinct parameter-name prefixes up to `depth` dotted components
// (e.g. "spec.odconv0.attn" at depth 3) with their scalar counts.
std::vector<std::pair<std::string, std::size_t>> parameter_audit(const ParamStore& params, int depth = 3);

}  // namespace hfsda::train
