#include "hfsda/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "hfsda/errors.hpp"

namespace hfsda::train {

namespace fs = std::filesystem;

void TrainConfig::validate() const {
  if (epochs < 0) throw ConfigError("train.epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(lr0 > 0)) throw ConfigError("train.lr0 must be positive");
  if (!(decay_factor > 0 && decay_factor <= 1)) throw ConfigError("train.decay_factor must be in (0, 1]");
  if (decay_every < 1) throw ConfigError("train.decay_every must be >= 1");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1))
    throw ConfigError("train.beta1 and train.beta2 must be in [0, 1)");
  if (!(eps > 0)) throw ConfigError("train.eps must be positive");
  if (checkpoint_every < 1) throw ConfigError("train.checkpoint_every must be >= 1");
  if (!(val_fraction >= 0 && val_fraction < 1)) throw ConfigError("train.val_fraction must be in [0, 1)");
  if (grad_clip < 0) throw ConfigError("train.grad_clip must be >= 0");
  if (max_steps < 0) throw ConfigError("train.max_steps must be >= 0");
}

double lr_at(int epoch, const TrainConfig& cfg) {
  if (epoch < 0) throw InvalidInput("lr_at: negative epoch");
  return cfg.lr0 * std::pow(cfg.decay_factor, epoch / cfg.decay_every);
}

void Adam::step(ParamStore& params, const std::vector<Tensor>& grads, double lr) {
  auto& ps = params.tensors();
  if (grads.size() != ps.size()) throw DimensionError("Adam: gradient count differs from parameter count");
  if (m_.empty()) {
    for (const auto& p : ps) {
      m_.emplace_back(p.shape());
      v_.emplace_back(p.shape());
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    double* p = ps[i].data();
    double* m = m_[i].data();
    double* v = v_[i].data();
    const double* g = grads[i].data();
    for (std::size_t k = 0; k < ps[i].size(); ++k) {
      m[k] = beta1_ * m[k] + (1.0 - beta1_) * g[k];
      v[k] = beta2_ * v[k] + (1.0 - beta2_) * g[k] * g[k];
      p[k] -= lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + eps_);
    }
  }
}

void Adam::save(std::vector<checkpoint::NamedTensor>& out, const ParamStore& params) const {
  out.push_back({"adam.t", Tensor({1}, {static_cast<double>(t_)})});
  // Moments only exist after the first step.
  for (std::size_t i = 0; i < m_.size(); ++i) {
    out.push_back({"adam.m/" + params.names()[i], m_[i]});
    out.push_back({"adam.v/" + params.names()[i], v_[i]});
  }
}

void Adam::load(const checkpoint::Checkpoint& ckpt, const ParamStore& params) {
  const Tensor* t = ckpt.find("adam.t");
  if (!t) throw IncompatibleCheckpoint("checkpoint has no optimiser state");
  t_ = static_cast<std::uint64_t>((*t)[0]);
  m_.clear();
  v_.clear();
  if (t_ == 0) return;
  for (const auto& name : params.names()) {
    const Tensor* m = ckpt.find("adam.m/" + name);
    const Tensor* v = ckpt.find("adam.v/" + name);
    if (!m || !v) throw IncompatibleCheckpoint("checkpoint lacks optimiser moments for '" + name + "'");
    if (m->shape() != params.get(name).shape() || v->shape() != params.get(name).shape())
      throw IncompatibleCheckpoint("optimiser moment shape mismatch for '" + name + "'");
    m_.push_back(*m);
    v_.push_back(*v);
  }
}

Trainer::Trainer(const HfsdaModel& model, TrainConfig cfg, std::string config_text)
    : model_(model),
      cfg_(std::move(cfg)),
      config_text_(std::move(config_text)),
      adam_(cfg_.beta1, cfg_.beta2, cfg_.eps) {
  cfg_.validate();
  params_ = model_.init_params(cfg_.seed);
}

double Trainer::step(const std::vector<const data::Segment*>& batch, double lr) {
  if (batch.empty()) throw InvalidInput("empty batch");
  std::vector<Tensor> grads;
  for (const auto& p : params_.tensors()) grads.emplace_back(p.shape());
  double total = 0.0;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const data::Segment& seg = *batch[i];
    const auto in = model_.prepare(seg.noisy);
    const Tensor clean_mag = dsp::magnitude(dsp::stft(seg.clean, model_.config().stft));
    Context ctx(params_, true, Rng::derived(cfg_.seed, step_, i).next());
    ag::Var loss = model_.loss(ctx, in, clean_mag, seg.clean);
    const double value = loss.value()[0];
    if (!std::isfinite(value)) {
      throw TrainingAborted("non-finite loss at step " + std::to_string(step_) + " on segment " +
                            seg.source_id + "@" + std::to_string(seg.offset));
    }
    total += value;
    loss.backward();
    const auto g = ctx.gradients();
    for (std::size_t k = 0; k < grads.size(); ++k) grads[k] += g[k];
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  double norm2 = 0.0;
  for (auto& g : grads) {
    g *= inv;
    for (double v : g.values()) norm2 += v * v;
  }
  if (!std::isfinite(norm2))
    throw TrainingAborted("non-finite gradient at step " + std::to_string(step_));
  if (cfg_.grad_clip > 0 && std::sqrt(norm2) > cfg_.grad_clip) {
    const double s = cfg_.grad_clip / std::sqrt(norm2);
    for (auto& g : grads) g *= s;
  }
  adam_.step(params_, grads, lr);
  ++step_;
  return total * inv;
}

double Trainer::mean_loss(const std::vector<data::Segment>& segments) const {
  if (segments.empty()) throw InvalidInput("mean_loss: no segments");
  double total = 0.0;
  for (const auto& seg : segments) {
    const auto in = model_.prepare(seg.noisy);
    const Tensor clean_mag = dsp::magnitude(dsp::stft(seg.clean, model_.config().stft));
    Context ctx(params_, false);
    total += model_.loss(ctx, in, clean_mag, seg.clean).value()[0];
  }
  return total / static_cast<double>(segments.size());
}

namespace {

std::string json_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void append_metrics(const fs::path& path, const EpochRecord& r) {
  std::ofstream out(path, std::ios::app);
  out << "{\"epoch\": " << r.epoch << ", \"lr\": " << json_number(r.lr)
      << ", \"train_loss\": " << json_number(r.train_loss)
      << ", \"val_loss\": " << (r.val_loss ? json_number(*r.val_loss) : "null")
      << ", \"wall_time\": " << json_number(r.wall_time) << "}\n";
}

std::string epoch_name(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "epoch_%04d.ckpt", epoch);
  return buf;
}

}  // namespace

TrainResult Trainer::fit(const std::vector<data::UtterancePair>& corpus,
                         const std::function<void(const EpochRecord&)>& on_epoch) {
  if (corpus.empty()) throw CorpusError("training corpus is empty");
  auto [train_pairs, val_pairs] = data::split_validation(corpus, cfg_.val_fraction, cfg_.seed);
  const auto train_segments = data::segment_all(train_pairs);
  const auto val_segments = data::segment_all(val_pairs);
  if (train_segments.empty()) throw CorpusError("no training segments (every utterance is too short)");

  fs::create_directories(cfg_.checkpoint_dir);
  const fs::path metrics_path = cfg_.checkpoint_dir / "metrics.jsonl";
  const auto start = std::chrono::steady_clock::now();
  TrainResult result;
  bool stop = false;
  while (epoch_ < cfg_.epochs && !stop) {
    const int e = epoch_;
    const double lr = lr_at(e, cfg_);
    const auto batches =
        data::batch_indices(train_segments.size(), cfg_.batch_size, Rng::derived(cfg_.seed, 0x5eed, e).next());
    double weighted = 0.0;
    std::size_t seen = 0;
    for (std::size_t b = 0; b < batches.size(); ++b) {
      std::vector<const data::Segment*> batch;
      for (std::size_t idx : batches[b]) batch.push_back(&train_segments[idx]);
      double loss = 0.0;
      try {
        loss = step(batch, lr);
      } catch (const TrainingAborted& err) {
        std::ofstream dump(cfg_.checkpoint_dir / "abort_dump.txt", std::ios::trunc);
        dump << err.what() << "\nepoch " << e << " batch " << b << "\nsegments:";
        for (const auto* s : batch) dump << ' ' << s->source_id << '@' << s->offset;
        dump << '\n';
        throw TrainingAborted(std::string(err.what()) + " (epoch " + std::to_string(e) + ", batch " +
                              std::to_string(b) + "; details in " +
                              (cfg_.checkpoint_dir / "abort_dump.txt").string() + ")");
      }
      weighted += loss * static_cast<double>(batch.size());
      seen += batch.size();
      if (cfg_.max_steps > 0 && step_ >= static_cast<std::uint64_t>(cfg_.max_steps)) {
        stop = true;
        break;
      }
    }
    epoch_ = e + 1;
    EpochRecord rec;
    rec.epoch = epoch_;
    rec.lr = lr;
    rec.train_loss = weighted / static_cast<double>(seen);
    if (!val_segments.empty()) rec.val_loss = mean_loss(val_segments);
    rec.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    append_metrics(metrics_path, rec);
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    const double score = rec.val_loss.value_or(rec.train_loss);
    if (!has_best_ || score < best_) {
      has_best_ = true;
      best_ = score;
      result.best_checkpoint = save(cfg_.checkpoint_dir / "best.ckpt");
    }
    if (epoch_ % cfg_.checkpoint_every == 0) save(cfg_.checkpoint_dir / epoch_name(epoch_));
  }
  result.last_checkpoint = save(cfg_.checkpoint_dir / "last.ckpt");
  if (result.best_checkpoint.empty() && fs::exists(cfg_.checkpoint_dir / "best.ckpt"))
    result.best_checkpoint = cfg_.checkpoint_dir / "best.ckpt";
  return result;
}

checkpoint::Checkpoint Trainer::snapshot() const {
  checkpoint::Checkpoint ckpt;
  ckpt.config_hash = model_hash(model_.config());
  ckpt.epoch = static_cast<std::uint64_t>(epoch_);
  ckpt.step = step_;
  ckpt.config_text = config_text_;
  for (std::size_t i = 0; i < params_.size(); ++i)
    ckpt.tensors.push_back({params_.names()[i], params_.tensors()[i]});
  adam_.save(ckpt.tensors, params_);
  ckpt.tensors.push_back({"trainer.best", Tensor({2}, {has_best_ ? 1.0 : 0.0, best_})});
  return ckpt;
}

fs::path Trainer::save(const fs::path& path) const {
  checkpoint::save(path, snapshot());
  return path;
}

void Trainer::resume(const fs::path& path) {
  const auto ckpt = checkpoint::load(path, model_hash(model_.config()));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const std::string& name = params_.names()[i];
    const Tensor* t = ckpt.find(name);
    if (!t) throw IncompatibleCheckpoint("checkpoint lacks parameter '" + name + "'");
    if (t->shape() != params_.tensors()[i].shape())
      throw IncompatibleCheckpoint("shape mismatch for parameter '" + name + "'");
    params_.tensors()[i] = *t;
  }
  adam_.load(ckpt, params_);
  epoch_ = static_cast<int>(ckpt.epoch);
  step_ = ckpt.step;
  if (const Tensor* b = ckpt.find("trainer.best")) {
    has_best_ = (*b)[0] != 0.0;
    best_ = (*b)[1];
  }
}

std::uint64_t model_hash(const ModelConfig& cfg) { return checkpoint::fnv1a64(cfg.canonical_text()); }

ParamStore load_params(const fs::path& path, const ModelConfig& cfg) {
  const auto ckpt = checkpoint::load(path, model_hash(cfg));
  const ParamStore reference = HfsdaModel(cfg).init_params(0);
  ParamStore out;
  for (const auto& name : reference.names()) {
    const Tensor* t = ckpt.find(name);
    if (!t) throw IncompatibleCheckpoint("checkpoint lacks parameter '" + name + "'");
    if (t->shape() != reference.get(name).shape())
      throw IncompatibleCheckpoint("shape mismatch for parameter '" + name + "'");
    out.add(name, *t);
  }
  return out;
}

const std::vector<std::string>& ablation_names() {
  static const std::vector<std::string> names = {
      "full",     "conformer_instead_of_dda", "conformer_plus_fa", "ssl_only",
      "wav2vec_encoder", "stft_odconv_only", "stft_plain_only",
  };
  return names;
}

AblationPreset ablation_from_string(const std::string& name) {
  const auto& names = ablation_names();
  for (std::size_t i = 0; i < names.size(); ++i)
    if (names[i] == name) return static_cast<AblationPreset>(i);
  std::string valid;
  for (const auto& n : names) valid += (valid.empty() ? "" : ", ") + n;
  throw ConfigError("unknown ablation preset '" + name + "' (valid: " + valid + ")");
}

const char* to_string(AblationPreset p) { return ablation_names()[static_cast<std::size_t>(p)].c_str(); }

ModelConfig build_ablation(AblationPreset preset, ModelConfig base) {
  switch (preset) {
    case AblationPreset::full:
      break;
    case AblationPreset::conformer_instead_of_dda:
      base.block = dda::BlockKind::conformer;
      break;
    case AblationPreset::conformer_plus_fa:
      base.block = dda::BlockKind::conformer_fa;
      break;
    case AblationPreset::ssl_only:
      base.branches = Branches::ssl_only;
      break;
    case AblationPreset::wav2vec_encoder:
      // The pretrained weights are read from ssl.identifier; without them the
      // model falls back to a differently seeded stand-in.
      base.ssl.kind = ssl::EncoderKind::external_pretrained;
      base.ssl_fallback_to_standin = true;
      base.ssl.standin_seed += 1;
      break;
    case AblationPreset::stft_odconv_only:
      base.branches = Branches::spec_only;
      break;
    case AblationPreset::stft_plain_only:
      base.branches = Branches::spec_only;
      base.odconv_enabled = false;
      break;
  }
  base.validate();
  return base;
}

std::vector<std::pair<std::string, std::size_t>> parameter_audit(const ParamStore& params, int depth) {
  std::map<std::string, std::size_t> prefixes;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string& name = params.names()[i];
    std::size_t pos = 0;
    for (int d = 0; d < depth; ++d) {
      const std::size_t next = name.find('.', pos);
      if (next == std::string::npos) {
        pos = std::string::npos;
        break;
      }
      pos = next + 1;
    }
    prefixes[pos == std::string::npos ? name : name.substr(0, pos - 1)] += params.tensors()[i].size();
  }
  return {prefixes.begin(), prefixes.end()};
}

}  // namespace hfsda::train
