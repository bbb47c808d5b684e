#include "hfsda/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "hfsda/errors.hpp"

namespace hfsda::config {

namespace {

using VT = ValueType;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::optional<long long> parse_int(const std::string& s) {
  long long v = 0;
  const char* end = s.data() + s.size();
  auto [p, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc() || p != end) return std::nullopt;
  return v;
}

std::optional<double> parse_real(const std::string& s) {
  if (s.empty()) return std::nullopt;
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::optional<bool> parse_bool(const std::string& s) {
  std::string l = s;
  std::transform(l.begin(), l.end(), l.begin(), [](unsigned char c) { return std::tolower(c); });
  if (l == "true" || l == "1" || l == "yes" || l == "on") return true;
  if (l == "false" || l == "0" || l == "no" || l == "off") return false;
  return std::nullopt;
}

std::string type_name(VT t) {
  switch (t) {
    case VT::integer:
      return "an integer";
    case VT::real:
      return "a number";
    case VT::boolean:
      return "true or false";
    case VT::text:
      return "text";
    case VT::choice:
      return "one of";
  }
  return "?";
}

}  // namespace

const std::vector<KeySpec>& schema() {
  static const std::vector<KeySpec> keys = {
      {"stft.sample_rate", VT::integer, "16000", {}, "sample rate in Hz"},
      {"stft.win_length", VT::integer, "400", {}, "analysis window length (samples)"},
      {"stft.fft_size", VT::integer, "400", {}, "FFT size; bins = fft_size / 2"},
      {"stft.hop_length", VT::integer, "160", {}, "hop (samples)"},

      {"odconv.layers", VT::integer, "2", {}, "ODConv layers in the spectral branch"},
      {"odconv.channels", VT::integer, "8", {}, "output channels per layer"},
      {"odconv.n_kernels", VT::integer, "4", {}, "candidate kernels per layer"},
      {"odconv.kernel_t", VT::integer, "3", {}, "kernel extent along time"},
      {"odconv.kernel_f", VT::integer, "3", {}, "kernel extent along frequency"},
      {"odconv.reduction", VT::integer, "4", {}, "attention bottleneck reduction"},
      {"odconv.enabled", VT::boolean, "true", {}, "false uses static convolutions of the same shape"},

      {"model.dim", VT::integer, "256", {}, "block width D"},
      {"model.n_blocks", VT::integer, "2", {}, "number of blocks"},
      {"model.heads", VT::integer, "4", {}, "attention heads"},
      {"model.ff_mult", VT::integer, "4", {}, "feed-forward expansion"},
      {"model.dropout", VT::real, "0.1", {}, "dropout rate"},
      {"model.spec_dim", VT::integer, "256", {}, "spectral branch projection width"},
      {"model.block", VT::choice, "dda", {"dda", "conformer", "conformer_fa"}, "block type"},
      {"model.conv_kernel", VT::integer, "31", {}, "depthwise kernel of the conformer conv module"},
      {"model.branches", VT::choice, "both", {"both", "ssl", "spec"}, "feature branches"},
      {"model.input_compression", VT::choice, "log1p", {"log1p", "none"}, "spectral branch input"},

      {"loss.beta", VT::real, "1.0", {}, "smooth-L1 transition point"},
      {"loss.waveform_weight", VT::real, "0.0", {}, "weight of the waveform smooth-L1 term"},

      {"ssl.kind", VT::choice, "standin", {"standin", "external_pretrained"}, "frozen encoder source"},
      {"ssl.identifier", VT::text, "", {}, "external encoder weight file"},
      {"ssl.layer_policy", VT::choice, "weighted_sum_all_layers", {"weighted_sum_all_layers", "last_layer"},
       "hidden-state combination"},
      {"ssl.output_dim", VT::integer, "256", {}, "stand-in encoder width"},
      {"ssl.frame_hop_ms", VT::real, "20", {}, "encoder frame hop"},
      {"ssl.standin_seed", VT::integer, "17", {}, "stand-in encoder weight seed"},
      {"ssl.heads", VT::integer, "4", {}, "encoder attention heads"},
      {"ssl.fallback_to_standin", VT::boolean, "true", {}, "use the stand-in when the external encoder is missing"},

      {"train.epochs", VT::integer, "200", {}, "epochs"},
      {"train.batch_size", VT::integer, "16", {}, "segments per step"},
      {"train.lr0", VT::real, "1e-4", {}, "initial learning rate"},
      {"train.decay_factor", VT::real, "0.5", {}, "learning-rate decay factor"},
      {"train.decay_every", VT::integer, "10", {}, "epochs between decays"},
      {"train.beta1", VT::real, "0.9", {}, "Adam beta1"},
      {"train.beta2", VT::real, "0.999", {}, "Adam beta2"},
      {"train.eps", VT::real, "1e-8", {}, "Adam epsilon"},
      {"train.seed", VT::integer, "0", {}, "initialisation, shuffling, dropout and split seed"},
      {"train.checkpoint_dir", VT::text, "runs/default", {}, "output directory"},
      {"train.checkpoint_every", VT::integer, "10", {}, "epochs between numbered checkpoints"},
      {"train.val_fraction", VT::real, "0.05", {}, "fraction of pairs held out for validation"},
      {"train.grad_clip", VT::real, "0", {}, "global gradient norm clip (0 = off)"},
      {"train.max_steps", VT::integer, "0", {}, "stop after this many steps (0 = no limit)"},
      {"train.resume", VT::text, "", {}, "checkpoint to resume from"},

      {"data.noisy_dir", VT::text, "", {}, "training noisy wavs"},
      {"data.clean_dir", VT::text, "", {}, "training clean wavs"},
      {"data.test_noisy_dir", VT::text, "", {}, "test noisy wavs"},
      {"data.test_clean_dir", VT::text, "", {}, "test clean wavs"},
      {"data.seed", VT::integer, "0", {}, "synthetic corpus seed"},
      {"data.max_pairs", VT::integer, "0", {}, "use at most this many pairs (0 = all)"},

      {"metrics.pesq_cmd", VT::text, "", {}, "PESQ command template with {ref} and {est}"},
      {"metrics.composite_cmd", VT::text, "", {}, "CSIG/CBAK/COVL command template with {ref} and {est}"},
  };
  return keys;
}

const KeySpec* find_key(const std::string& key) {
  for (const auto& k : schema())
    if (k.key == key) return &k;
  return nullptr;
}

Profile profile_from_string(const std::string& name) {
  if (name == "full") return Profile::full;
  if (name == "smoke") return Profile::smoke;
  throw ConfigError("unknown profile '" + name + "' (valid: smoke, full)");
}

const char* to_string(Profile p) { return p == Profile::smoke ? "smoke" : "full"; }

EnvLookup process_env() {
  return [](const std::string& name) -> std::optional<std::string> {
    if (const char* v = std::getenv(name.c_str())) return std::string(v);
    return std::nullopt;
  };
}

std::string env_name(const std::string& key) {
  std::string out = "HFSDA_";
  for (char c : key) out += c == '.' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return out;
}

RunConfig::RunConfig() {
  for (const auto& k : schema()) values_[k.key] = k.default_value;
}

RunConfig RunConfig::load(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides,
                          Profile profile, const EnvLookup& env) {
  RunConfig cfg;
  if (file) cfg.merge_file(*file);
  cfg.apply_profile(profile);
  if (env) cfg.merge_env(env);
  for (const auto& o : overrides) cfg.set_override(o);
  cfg.validate();
  return cfg;
}

void RunConfig::merge_text(const std::string& text, const std::string& origin) {
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    // '#' starts a comment at line start or after whitespace only, so command
    // templates may contain it.
    for (std::size_t p = line.find('#'); p != std::string::npos; p = line.find('#', p + 1)) {
      if (p == 0 || std::isspace(static_cast<unsigned char>(line[p - 1]))) {
        line.erase(p);
        break;
      }
    }
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = origin + ":" + std::to_string(lineno);
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError(where + ": malformed section header '" + line + "'");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value', got '" + line + "'");
    std::string key = trim(line.substr(0, eq));
    if (!section.empty()) key = section + "." + key;
    set(key, trim(line.substr(eq + 1)), where);
  }
}

void RunConfig::merge_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  merge_text(buf.str(), path.string());
}

void RunConfig::apply_profile(Profile profile) {
  profile_ = profile;
  if (profile != Profile::smoke) return;
  set("train.epochs", "5", "profile smoke");
  set("train.batch_size", "4", "profile smoke");
  set("train.checkpoint_every", "5", "profile smoke");
}

void RunConfig::merge_env(const EnvLookup& env) {
  for (const auto& k : schema())
    if (auto v = env(env_name(k.key))) set(k.key, *v, "environment " + env_name(k.key));
}

void RunConfig::set(const std::string& key, const std::string& value, const std::string& origin) {
  const KeySpec* spec = find_key(key);
  if (!spec) throw ConfigError(origin + ": unknown config key '" + key + "'");
  bool ok = true;
  switch (spec->type) {
    case VT::integer:
      ok = parse_int(value).has_value();
      break;
    case VT::real:
      ok = parse_real(value).has_value();
      break;
    case VT::boolean:
      ok = parse_bool(value).has_value();
      break;
    case VT::text:
      break;
    case VT::choice:
      ok = std::find(spec->choices.begin(), spec->choices.end(), value) != spec->choices.end();
      break;
  }
  if (!ok) {
    std::string expected = type_name(spec->type);
    if (spec->type == VT::choice) {
      for (std::size_t i = 0; i < spec->choices.size(); ++i) expected += (i ? ", " : " ") + spec->choices[i];
    }
    throw ConfigError(origin + ": invalid value '" + value + "' for key '" + key + "' (expected " + expected + ")");
  }
  values_[key] = value;
}

void RunConfig::set_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)), "--set");
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

long long RunConfig::get_int(const std::string& key) const { return *parse_int(get(key)); }
double RunConfig::get_real(const std::string& key) const { return *parse_real(get(key)); }
bool RunConfig::get_bool(const std::string& key) const { return *parse_bool(get(key)); }

namespace {

int to_int(long long v, const std::string& key) {
  if (v < INT32_MIN || v > INT32_MAX) throw ConfigError("value of '" + key + "' is out of range");
  return static_cast<int>(v);
}

std::uint64_t to_u64(long long v, const std::string& key) {
  if (v < 0) throw ConfigError("'" + key + "' must be >= 0");
  return static_cast<std::uint64_t>(v);
}

}  // namespace

ModelConfig RunConfig::model() const {
  auto i = [this](const std::string& k) { return to_int(get_int(k), k); };
  ModelConfig m;
  m.stft.sample_rate_hz = i("stft.sample_rate");
  m.stft.win_length = i("stft.win_length");
  m.stft.fft_size = i("stft.fft_size");
  m.stft.hop_length = i("stft.hop_length");
  m.odconv_layers = i("odconv.layers");
  m.odconv_channels = i("odconv.channels");
  m.odconv_kernels = i("odconv.n_kernels");
  m.odconv_kernel_t = i("odconv.kernel_t");
  m.odconv_kernel_f = i("odconv.kernel_f");
  m.odconv_reduction = i("odconv.reduction");
  m.odconv_enabled = get_bool("odconv.enabled");
  m.model_dim = i("model.dim");
  m.n_blocks = i("model.n_blocks");
  m.heads = i("model.heads");
  m.ff_mult = i("model.ff_mult");
  m.dropout = get_real("model.dropout");
  m.spec_dim = i("model.spec_dim");
  m.block = dda::block_kind_from_string(get("model.block"));
  m.conv_kernel = i("model.conv_kernel");
  const std::string& br = get("model.branches");
  m.branches = br == "ssl" ? Branches::ssl_only : br == "spec" ? Branches::spec_only : Branches::both;
  m.input_compression = get("model.input_compression") == "none" ? InputCompression::none : InputCompression::log1p;
  m.loss_beta = get_real("loss.beta");
  m.waveform_loss_weight = get_real("loss.waveform_weight");
  m.ssl.kind = get("ssl.kind") == "standin" ? ssl::EncoderKind::standin : ssl::EncoderKind::external_pretrained;
  m.ssl.identifier = get("ssl.identifier");
  m.ssl.layer_policy = get("ssl.layer_policy") == "last_layer" ? ssl::LayerPolicy::last_layer
                                                               : ssl::LayerPolicy::weighted_sum_all_layers;
  m.ssl.output_dim = i("ssl.output_dim");
  m.ssl.frame_hop_ms = get_real("ssl.frame_hop_ms");
  m.ssl.standin_seed = to_u64(get_int("ssl.standin_seed"), "ssl.standin_seed");
  m.ssl.heads = i("ssl.heads");
  m.ssl_fallback_to_standin = get_bool("ssl.fallback_to_standin");
  if (!(m.dropout >= 0 && m.dropout < 1)) throw ConfigError("model.dropout must be in [0, 1)");
  m.validate();
  return m;
}

train::TrainConfig RunConfig::train() const {
  auto i = [this](const std::string& k) { return to_int(get_int(k), k); };
  train::TrainConfig t;
  t.epochs = i("train.epochs");
  t.batch_size = i("train.batch_size");
  t.lr0 = get_real("train.lr0");
  t.decay_factor = get_real("train.decay_factor");
  t.decay_every = i("train.decay_every");
  t.beta1 = get_real("train.beta1");
  t.beta2 = get_real("train.beta2");
  t.eps = get_real("train.eps");
  t.seed = to_u64(get_int("train.seed"), "train.seed");
  t.checkpoint_dir = get("train.checkpoint_dir");
  t.checkpoint_every = i("train.checkpoint_every");
  t.val_fraction = get_real("train.val_fraction");
  t.grad_clip = get_real("train.grad_clip");
  t.max_steps = get_int("train.max_steps");
  if (t.checkpoint_dir.empty()) throw ConfigError("train.checkpoint_dir must not be empty");
  t.validate();
  return t;
}

DataConfig RunConfig::data() const {
  DataConfig d;
  d.noisy_dir = get("data.noisy_dir");
  d.clean_dir = get("data.clean_dir");
  d.test_noisy_dir = get("data.test_noisy_dir");
  d.test_clean_dir = get("data.test_clean_dir");
  d.seed = to_u64(get_int("data.seed"), "data.seed");
  d.max_pairs = to_int(get_int("data.max_pairs"), "data.max_pairs");
  if (d.max_pairs < 0) throw ConfigError("data.max_pairs must be >= 0");
  if (d.noisy_dir.empty() != d.clean_dir.empty())
    throw ConfigError("data.noisy_dir and data.clean_dir must be set together");
  if (d.test_noisy_dir.empty() != d.test_clean_dir.empty())
    throw ConfigError("data.test_noisy_dir and data.test_clean_dir must be set together");
  return d;
}

MetricsConfig RunConfig::metrics() const { return {get("metrics.pesq_cmd"), get("metrics.composite_cmd")}; }

void RunConfig::validate() const {
  model();
  train();
  data();
  metrics();
}

std::string RunConfig::resolved_text() const {
  std::string out;
  for (const auto& k : schema()) out += k.key + " = " + values_.at(k.key) + "\n";
  return out;
}

}  // namespace hfsda::config
