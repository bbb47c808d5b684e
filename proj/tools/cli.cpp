#include "cli.hpp"

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "hfsda/checkpoint.hpp"
#include "hfsda/config.hpp"
#include "hfsda/data.hpp"
#include "hfsda/errors.hpp"
#include "hfsda/metrics.hpp"
#include "hfsda/minicorpus.hpp"
#include "hfsda/trainer.hpp"
#include "hfsda/wav.hpp"
#include "json.hpp"
#include "plot.hpp"

namespace hfsda::cli {

namespace fs = std::filesystem;
using config::Profile;
using config::RunConfig;

namespace {

struct Globals {
  std::string config_path;
  std::vector<std::string> sets;
  std::string profile;
  std::optional<long long> seed;
};

// Writes every line to the console and, once opened, to a log file.
class Log {
 public:
  explicit Log(std::ostream& out) : out_(out) {}
  void open(const fs::path& path) {
    fs::create_directories(path.parent_path());
    file_.open(path, std::ios::app);
  }
  void line(const std::string& s) {
    out_ << s << '\n';
    if (file_) file_ << s << '\n';
  }

 private:
  std::ostream& out_;
  std::ofstream file_;
};

RunConfig load_config(const Globals& g, Profile default_profile, const std::string& base_text = {}) {
  RunConfig cfg;
  if (!base_text.empty()) cfg.merge_text(base_text, "checkpoint");
  if (!g.config_path.empty()) cfg.merge_file(g.config_path);
  cfg.apply_profile(g.profile.empty() ? default_profile : config::profile_from_string(g.profile));
  cfg.merge_env(config::process_env());
  for (const auto& s : g.sets) cfg.set_override(s);
  if (g.seed) cfg.set("train.seed", std::to_string(*g.seed), "--seed");
  cfg.validate();
  return cfg;
}

struct CorpusDirs {
  fs::path noisy;
  fs::path clean;
};

// Training directories from the config; the smoke profile falls back to the
// synthetic mini corpus written under mini_dir.
CorpusDirs training_dirs(const RunConfig& cfg, const fs::path& mini_dir, Log& log) {
  const auto d = cfg.data();
  if (!d.noisy_dir.empty()) return {d.noisy_dir, d.clean_dir};
  if (cfg.profile() != Profile::smoke) {
    throw ConfigError(
        "data.noisy_dir and data.clean_dir are required (or use --profile smoke for the synthetic mini corpus)");
  }
  minicorpus::make(mini_dir, d.seed);
  log.line("mini corpus: " + mini_dir.string());
  return {mini_dir / "noisy", mini_dir / "clean"};
}

std::vector<data::PairDescriptor> scan(const CorpusDirs& dirs, int max_pairs, Log& log) {
  auto result = data::scan_corpus(dirs.noisy, dirs.clean);
  for (const auto& w : result.warnings) log.line("warning: " + w);
  if (max_pairs > 0 && result.pairs.size() > static_cast<std::size_t>(max_pairs))
    result.pairs.resize(static_cast<std::size_t>(max_pairs));
  return result.pairs;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

train::TrainResult run_training(const RunConfig& cfg, const HfsdaModel& model,
                                const std::vector<data::PairDescriptor>& pairs, const std::string& resume, Log& log) {
  const auto tcfg = cfg.train();
  if (!model.encoder_warning().empty()) log.line("warning: " + model.encoder_warning());
  if (model.encoder()) log.line("ssl encoder: " + model.encoder()->description());
  const auto corpus = data::load_corpus(pairs);
  write_text(tcfg.checkpoint_dir / "resolved_config.cfg", cfg.resolved_text());

  train::Trainer trainer(model, tcfg, cfg.resolved_text());
  if (!resume.empty()) {
    trainer.resume(resume);
    log.line("resumed from " + resume + " at epoch " + std::to_string(trainer.epoch()));
  }
  log.line("parameters: " + std::to_string(trainer.params().count_scalars()));
  for (const auto& [prefix, count] : train::parameter_audit(trainer.params()))
    log.line("param-audit: " + prefix + " " + std::to_string(count));
  log.line("training on " + std::to_string(corpus.size()) + " pairs for " + std::to_string(tcfg.epochs) + " epochs");
  auto result = trainer.fit(corpus, [&log](const train::EpochRecord& r) {
    std::ostringstream lr;
    lr << r.lr;
    log.line("epoch " + std::to_string(r.epoch) + " lr " + lr.str() + " train_loss " +
             fixed(r.train_loss, 6) + (r.val_loss ? " val_loss " + fixed(*r.val_loss, 6) : "") + " time " +
             fixed(r.wall_time, 1) + "s");
  });
  log.line("checkpoint: " + result.last_checkpoint.string());
  return result;
}

struct EnhanceStats {
  int written = 0;
  int skipped = 0;
};

EnhanceStats enhance_dir(const HfsdaModel& model, const ParamStore& params, const fs::path& in_dir,
                         const fs::path& out_dir, Log& log) {
  if (!fs::is_directory(in_dir)) throw CorpusError("input directory does not exist: " + in_dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(in_dir)) {
    std::string ext = e.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (e.is_regular_file() && ext == ".wav") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  EnhanceStats stats;
  if (files.empty()) {
    log.line("warning: no .wav files in " + in_dir.string() + "; nothing written");
    return stats;
  }
  fs::create_directories(out_dir);
  const auto min_len = static_cast<std::size_t>(model.config().stft.win_length);
  for (const auto& f : files) {
    const auto noisy = data::ingest(f);
    if (noisy.size() < min_len) {
      log.line("warning: " + f.filename().string() + " is shorter than one analysis frame; skipped");
      ++stats.skipped;
      continue;
    }
    wav::write(out_dir / f.filename(), model.enhance(noisy, params), data::kSampleRate);
    ++stats.written;
  }
  log.line("enhanced " + std::to_string(stats.written) + " files into " + out_dir.string());
  return stats;
}

std::vector<train::EpochRecord> read_training_log(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read training log: " + path.string());
  std::vector<train::EpochRecord> out;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    train::EpochRecord r;
    r.epoch = j.at("epoch").get<int>();
    r.lr = j.at("lr").get<double>();
    r.train_loss = j.at("train_loss").get<double>();
    if (!j.at("val_loss").is_null()) r.val_loss = j["val_loss"].get<double>();
    r.wall_time = j.at("wall_time").get<double>();
    out.push_back(r);
  }
  return out;
}

void write_plots(const metrics::ScoreReport& report, const fs::path& dir, const std::string& train_log, Log& log) {
  plot::Series scores{"files", {}};
  for (const auto& f : report.files) scores.points.emplace_back(f.si_sdr, f.stoi);
  plot::scatter_chart(dir / "scores.svg", "Per-file scores", "SI-SDR (dB)", "STOI", scores);
  log.line("plot: " + (dir / "scores.svg").string());
  if (train_log.empty()) return;
  plot::Series train{"train", {}}, val{"validation", {}};
  for (const auto& r : read_training_log(train_log)) {
    train.points.emplace_back(r.epoch, r.train_loss);
    if (r.val_loss) val.points.emplace_back(r.epoch, *r.val_loss);
  }
  std::vector<plot::Series> series{train};
  if (!val.points.empty()) series.push_back(val);
  plot::line_chart(dir / "loss.svg", "Training loss", "epoch", "smooth-L1 loss", series);
  log.line("plot: " + (dir / "loss.svg").string());
}

metrics::ScoreReport evaluate(const fs::path& est, const fs::path& ref, const fs::path& report_path,
                              const config::MetricsConfig& m, Log& log) {
  const auto report = metrics::evaluate_dirs(est, ref, {m.pesq_cmd, m.composite_cmd});
  for (const auto& w : report.warnings) log.line("warning: " + w);
  metrics::write_report(report_path, report);
  std::istringstream table(report.summary_table());
  for (std::string line; std::getline(table, line);) log.line(line);
  log.line("report: " + report_path.string());
  return report;
}

int cmd_train(const Globals& g, const std::string& resume_flag, std::ostream& out) {
  const RunConfig cfg = load_config(g, Profile::full);
  const auto tcfg = cfg.train();
  Log log(out);
  const auto dirs = training_dirs(cfg, tcfg.checkpoint_dir / "mini_corpus", log);
  const auto pairs = scan(dirs, cfg.data().max_pairs, log);
  const HfsdaModel model(cfg.model());
  log.open(tcfg.checkpoint_dir / "train.log");
  const std::string resume = resume_flag.empty() ? cfg.get("train.resume") : resume_flag;
  run_training(cfg, model, pairs, resume, log);
  return kExitOk;
}

int cmd_enhance(const Globals& g, const std::string& ckpt_path, const std::string& in_dir,
                const std::string& out_dir, std::ostream& out) {
  const auto ckpt = checkpoint::load(ckpt_path);
  const RunConfig cfg = load_config(g, Profile::full, ckpt.config_text);
  const ModelConfig mcfg = cfg.model();
  const ParamStore params = train::load_params(ckpt_path, mcfg);
  if (!fs::is_directory(in_dir)) throw CorpusError("input directory does not exist: " + in_dir);
  const HfsdaModel model(mcfg);
  Log log(out);
  enhance_dir(model, params, in_dir, out_dir, log);
  return kExitOk;
}

int cmd_evaluate(const Globals& g, const std::string& est, const std::string& ref, const std::string& report,
                 const std::string& plot_dir, const std::string& train_log, std::ostream& out) {
  const RunConfig cfg = load_config(g, Profile::full);
  Log log(out);
  const auto r = evaluate(est, ref, report, cfg.metrics(), log);
  if (!plot_dir.empty()) write_plots(r, plot_dir, train_log, log);
  return kExitOk;
}

int cmd_ablate(const Globals& g, const std::string& preset_name, const std::string& output, std::ostream& out) {
  const auto preset = train::ablation_from_string(preset_name);
  RunConfig cfg = load_config(g, Profile::smoke);
  const ModelConfig mcfg = train::build_ablation(preset, cfg.model());
  const fs::path root = output.empty() ? fs::path(cfg.get("train.checkpoint_dir")) / "ablation" : fs::path(output);
  const fs::path run_dir = root / preset_name;
  cfg.merge_text(mcfg.canonical_text(), "preset " + preset_name);
  cfg.set("train.checkpoint_dir", run_dir.string(), "preset " + preset_name);
  cfg.validate();

  Log log(out);
  const auto dirs = training_dirs(cfg, root / "mini_corpus", log);
  const auto pairs = scan(dirs, cfg.data().max_pairs, log);
  const auto d = cfg.data();
  const CorpusDirs test = d.test_noisy_dir.empty() ? dirs : CorpusDirs{d.test_noisy_dir, d.test_clean_dir};
  if (!fs::is_directory(test.noisy) || !fs::is_directory(test.clean))
    throw CorpusError("test directories do not exist: " + test.noisy.string() + ", " + test.clean.string());

  // A previous run of the same preset must not leak into this one.
  fs::remove_all(run_dir);
  log.open(run_dir / "train.log");
  log.line("ablation preset: " + preset_name);
  const HfsdaModel model(mcfg);
  const auto result = run_training(cfg, model, pairs, "", log);

  const ParamStore params = train::load_params(result.last_checkpoint, mcfg);
  enhance_dir(model, params, test.noisy, run_dir / "enhanced", log);
  const auto report = evaluate(run_dir / "enhanced", test.clean, run_dir / "report.jsonl", cfg.metrics(), log);

  const fs::path summary = root / "ablation_summary.tsv";
  const bool fresh = !fs::exists(summary);
  std::ofstream row(summary, std::ios::app);
  if (fresh) row << "preset\tparameters\tfinal_train_loss\tstoi\tsi_sdr\tseg_snr\tpesq\n";
  const auto means = report.corpus_mean();
  auto mean = [&means](const char* k) { return means.contains(k) ? fixed(means.at(k)) : std::string("-"); };
  row << preset_name << '\t' << params.count_scalars() << '\t'
      << (result.history.empty() ? std::string("-") : fixed(result.history.back().train_loss, 6)) << '\t'
      << mean("stoi") << '\t' << mean("si_sdr") << '\t' << mean("seg_snr") << '\t' << mean("pesq") << '\n';
  log.line("summary: " + summary.string());
  return kExitOk;
}

int cmd_inspect(const std::string& path, std::ostream& out) {
  const auto ckpt = checkpoint::load(path);
  std::size_t scalars = 0;
  out << "format_version: " << checkpoint::kFormatVersion << '\n';
  out << "config_hash: " << std::hex << std::setw(16) << std::setfill('0') << ckpt.config_hash << std::dec
      << std::setfill(' ') << '\n';
  out << "epoch: " << ckpt.epoch << '\n';
  out << "step: " << ckpt.step << '\n';
  out << "tensors: " << ckpt.tensors.size() << '\n';
  for (const auto& t : ckpt.tensors) {
    out << "  " << t.name << ' ' << shape_string(t.value.shape()) << '\n';
    if (t.name.find('/') == std::string::npos && t.name.rfind("adam.", 0) != 0 &&
        t.name.rfind("trainer.", 0) != 0)
      scalars += t.value.size();
  }
  out << "model parameters: " << scalars << '\n';
  out << "config:\n" << ckpt.config_text;
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Speech enhancement with self-supervised and spectral features"};
  app.name("hfsda");
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "key = value config file")->check(CLI::ExistingFile);
  app.add_option("--set", g.sets, "override one key (repeatable), e.g. --set train.epochs=3");
  app.add_option("--profile", g.profile, "smoke or full")->check(CLI::IsMember({"smoke", "full"}));
  app.add_option("--seed", g.seed, "sets train.seed");

  std::string resume;
  auto* train = app.add_subcommand("train", "train a model");
  train->add_option("--resume", resume, "checkpoint to continue from");

  std::string checkpoint, in_dir, out_dir;
  auto* enhance = app.add_subcommand("enhance", "enhance every .wav in a directory");
  enhance->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  enhance->add_option("--input", in_dir, "noisy .wav directory")->required();
  enhance->add_option("--output", out_dir, "output directory")->required();

  std::string est, ref, report = "report.jsonl", plot_dir, train_log;
  auto* evaluate_cmd = app.add_subcommand("evaluate", "score enhanced files against references");
  evaluate_cmd->add_option("--est", est, "estimate .wav directory")->required();
  evaluate_cmd->add_option("--ref", ref, "reference .wav directory")->required();
  evaluate_cmd->add_option("--report", report, "report path (line-delimited JSON)");
  evaluate_cmd->add_option("--plot", plot_dir, "write SVG plots into this directory");
  evaluate_cmd->add_option("--train-log", train_log, "metrics.jsonl of a training run, for the loss curve");

  std::string preset, ablate_out;
  auto* ablate = app.add_subcommand("ablate", "train and evaluate one ablation preset (smoke profile by default)");
  ablate->add_option("preset", preset, "preset name")->required();
  ablate->add_option("--output", ablate_out, "ablation root directory");

  std::string inspect_path;
  auto* inspect = app.add_subcommand("inspect-checkpoint", "print a checkpoint header and tensor list");
  inspect->add_option("path", inspect_path, "checkpoint file")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train) return cmd_train(g, resume, out);
    if (*enhance) return cmd_enhance(g, checkpoint, in_dir, out_dir, out);
    if (*evaluate_cmd) return cmd_evaluate(g, est, ref, report, plot_dir, train_log, out);
    if (*ablate) return cmd_ablate(g, preset, ablate_out, out);
    if (*inspect) return cmd_inspect(inspect_path, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IncompatibleCheckpoint& e) {
    err << "incompatible checkpoint: " << e.what() << '\n';
    return kExitUsage;
  } catch (const CorpusError& e) {
    err << "corpus error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace hfsda::cli
