#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace hfsda::metrics {

// Short-time objective intelligibility of `estimate` against `reference`.
// Constants follow the published definition (table below); signals are
// resampled to 10 kHz first.
//
//   internal rate       10000 Hz
//   frame / hop         256 / 128 samples (Hann window), 512-point FFT
//   one-third octaves   15 bands, lowest centre 150 Hz
//   segment length      30 frames (384 ms)
//   clipping            beta = -15 dB
//   silent frames       dropped when 40 dB below the loudest reference frame
//
// Throws InvalidInput for unequal lengths or fewer than 30 active frames.
double stoi(std::span<const double> estimate, std::span<const double> reference, int sample_rate = 16000);

inline constexpr double kSiSdrCap = 100.0;

// 10 log10(|s_t|^2 / |e|^2) with s_t the projection of estimate onto
// reference; capped at kSiSdrCap. Throws InvalidInput for unequal lengths or
// an all-zero reference.
double si_sdr(std::span<const double> estimate, std::span<const double> reference);

// Mean over non-overlapping frames of clamp(10 log10(|ref|^2 / |ref - est|^2)).
// Frames where both energies vanish count as the upper bound.
double seg_snr(std::span<const double> estimate, std::span<const double> reference, int sample_rate = 16000,
               double frame_ms = 30.0, double lo_db = -10.0, double hi_db = 35.0);

// Runs `command_template` with {ref} and {est} replaced by the quoted paths.
// The score is the last number printed on stdout. Returns nullopt (and sets
// `warning`) when the command is empty, fails, or prints no number.
std::optional<double> external_pesq(const std::filesystem::path& estimate_path,
                                    const std::filesystem::path& reference_path,
                                    const std::string& command_template, std::string* warning = nullptr);

struct Composite {
  double csig = 0.0;
  double cbak = 0.0;
  double covl = 0.0;
};

// As external_pesq, but parses "csig", "cbak" and "covl" (case-insensitive,
// each followed by an optional ':' or '=' and a number).
std::optional<Composite> external_composite(const std::filesystem::path& estimate_path,
                                            const std::filesystem::path& reference_path,
                                            const std::string& command_template, std::string* warning = nullptr);

struct FileScore {
  std::string id;
  double stoi = 0.0;
  double si_sdr = 0.0;
  double seg_snr = 0.0;
  std::optional<double> pesq;
  std::optional<double> csig;
  std::optional<double> cbak;
  std::optional<double> covl;
};

struct ScoreReport {
  std::vector<FileScore> files;
  std::vector<std::string> warnings;

  // Mean of each field over the files where it is present.
  std::map<std::string, double> corpus_mean() const;
  std::string summary_table() const;
};

struct EvaluateOptions {
  std::string pesq_cmd;
  std::string composite_cmd;
};

FileScore score_pair(const std::string& id, std::span<const double> estimate, std::span<const double> reference);

// Scores every file stem present in both directories (16/48 kHz mono wav).
// Throws CorpusError when nothing matches.
ScoreReport evaluate_dirs(const std::filesystem::path& est_dir, const std::filesystem::path& ref_dir,
                          const EvaluateOptions& options = {});

// One JSON object per line: {"id":..., "stoi":..., ...}; a final line holds
// {"corpus_mean": {...}}. Absent optional fields are omitted.
void write_report(const std::filesystem::path& path, const ScoreReport& report);
ScoreReport read_report(const std::filesystem::path& path);

}  // namespace hfsda::metrics
