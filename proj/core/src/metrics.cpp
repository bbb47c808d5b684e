#include "hfsda/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numbers>
#include <regex>
#include <sstream>

#include <unsupported/Eigen/FFT>

#include "hfsda/data.hpp"
#include "hfsda/errors.hpp"
#include "hfsda/resample.hpp"
#include "json.hpp"

namespace hfsda::metrics {

namespace fs = std::filesystem;

namespace {

constexpr int kStoiRate = 10000;
constexpr int kFrame = 256;
constexpr int kHop = 128;
constexpr int kFft = 512;
constexpr int kBands = 15;
constexpr double kMinFreq = 150.0;
constexpr int kSegment = 30;
constexpr double kBeta = -15.0;
constexpr double kDynRange = 40.0;
constexpr double kEps = std::numeric_limits<double>::epsilon();

// Hann window of length n taken from the interior of an (n + 2)-point window,
// so neither end is zero.
std::vector<double> hann_interior(int n) {
  std::vector<double> w(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i)
    w[static_cast<std::size_t>(i)] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * (i + 1) / (n + 1));
  return w;
}

// Frame starts 0, hop, ... strictly below len - frame.
std::vector<std::size_t> frame_starts(std::size_t len) {
  std::vector<std::size_t> starts;
  for (std::size_t i = 0; i + kFrame < len; i += kHop) starts.push_back(i);
  return starts;
}

// Drops frames of x more than kDynRange below its loudest frame (and the same
// frames of y), then overlap-adds the windowed survivors.
void remove_silent_frames(std::vector<double>& x, std::vector<double>& y) {
  const auto w = hann_interior(kFrame);
  const auto starts = frame_starts(x.size());
  std::vector<double> energy_db(starts.size());
  for (std::size_t f = 0; f < starts.size(); ++f) {
    double e = 0.0;
    for (int n = 0; n < kFrame; ++n) {
      const double v = w[static_cast<std::size_t>(n)] * x[starts[f] + static_cast<std::size_t>(n)];
      e += v * v;
    }
    energy_db[f] = 20.0 * std::log10(std::sqrt(e) + kEps);
  }
  const double loudest = starts.empty() ? 0.0 : *std::max_element(energy_db.begin(), energy_db.end());
  std::vector<std::size_t> kept;
  for (std::size_t f = 0; f < starts.size(); ++f)
    if (loudest - kDynRange - energy_db[f] < 0) kept.push_back(starts[f]);
  if (kept.empty()) {
    x.clear();
    y.clear();
    return;
  }
  const std::size_t out_len = (kept.size() - 1) * kHop + kFrame;
  std::vector<double> xs(out_len, 0.0), ys(out_len, 0.0);
  for (std::size_t k = 0; k < kept.size(); ++k) {
    for (int n = 0; n < kFrame; ++n) {
      const auto dst = k * kHop + static_cast<std::size_t>(n);
      xs[dst] += w[static_cast<std::size_t>(n)] * x[kept[k] + static_cast<std::size_t>(n)];
      ys[dst] += w[static_cast<std::size_t>(n)] * y[kept[k] + static_cast<std::size_t>(n)];
    }
  }
  x = std::move(xs);
  y = std::move(ys);
}

// |STFT|^2 as (frames x (kFft/2 + 1)).
std::vector<std::vector<double>> power_spectrogram(const std::vector<double>& x) {
  const auto w = hann_interior(kFrame);
  Eigen::FFT<double> fft;
  std::vector<double> buf(kFft);
  std::vector<std::complex<double>> spec;
  std::vector<std::vector<double>> out;
  for (std::size_t start : frame_starts(x.size())) {
    std::fill(buf.begin(), buf.end(), 0.0);
    for (int n = 0; n < kFrame; ++n)
      buf[static_cast<std::size_t>(n)] = w[static_cast<std::size_t>(n)] * x[start + static_cast<std::size_t>(n)];
    fft.fwd(spec, buf);
    std::vector<double> p(kFft / 2 + 1);
    for (int k = 0; k <= kFft / 2; ++k) p[static_cast<std::size_t>(k)] = std::norm(spec[static_cast<std::size_t>(k)]);
    out.push_back(std::move(p));
  }
  return out;
}

// [lo, hi) FFT-bin ranges of the one-third octave bands.
std::vector<std::pair<int, int>> third_octave_bins() {
  std::vector<double> freqs(kFft / 2 + 1);
  for (int k = 0; k <= kFft / 2; ++k)
    freqs[static_cast<std::size_t>(k)] = static_cast<double>(k) * kStoiRate / kFft;
  auto nearest = [&freqs](double f) {
    int best = 0;
    for (int k = 1; k < static_cast<int>(freqs.size()); ++k)
      if (std::abs(freqs[static_cast<std::size_t>(k)] - f) < std::abs(freqs[static_cast<std::size_t>(best)] - f))
        best = k;
    return best;
  };
  std::vector<std::pair<int, int>> bands;
  for (int b = 0; b < kBands; ++b) {
    const double lo = std::sqrt(std::pow(2.0, b / 3.0) * kMinFreq * std::pow(2.0, (b - 1) / 3.0) * kMinFreq);
    const double hi = std::sqrt(std::pow(2.0, b / 3.0) * kMinFreq * std::pow(2.0, (b + 1) / 3.0) * kMinFreq);
    bands.emplace_back(nearest(lo), nearest(hi));
  }
  return bands;
}

// (bands x frames) one-third octave band amplitudes.
std::vector<std::vector<double>> band_envelopes(const std::vector<double>& x) {
  static const auto bands = third_octave_bins();
  const auto power = power_spectrogram(x);
  std::vector<std::vector<double>> env(kBands, std::vector<double>(power.size()));
  for (std::size_t t = 0; t < power.size(); ++t) {
    for (int b = 0; b < kBands; ++b) {
      double s = 0.0;
      for (int k = bands[static_cast<std::size_t>(b)].first; k < bands[static_cast<std::size_t>(b)].second; ++k)
        s += power[t][static_cast<std::size_t>(k)];
      env[static_cast<std::size_t>(b)][t] = std::sqrt(s);
    }
  }
  return env;
}

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

void check_lengths(std::span<const double> a, std::span<const double> b, const char* what) {
  if (a.size() != b.size()) {
    throw InvalidInput(std::string(what) + ": estimate has " + std::to_string(a.size()) +
                       " samples, reference has " + std::to_string(b.size()));
  }
}

std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) {
    if (c == '\'')
      out += "'\\''";
    else
      out += c;
  }
  return out + "'";
}

std::optional<std::string> run_tool(const fs::path& est, const fs::path& ref, const std::string& tmpl,
                                    std::string* warning) {
  if (tmpl.empty()) return std::nullopt;
  std::string cmd = tmpl;
  for (const auto& [key, value] : {std::pair<std::string, std::string>{"{ref}", shell_quote(ref.string())},
                                   std::pair<std::string, std::string>{"{est}", shell_quote(est.string())}}) {
    for (std::size_t pos = cmd.find(key); pos != std::string::npos; pos = cmd.find(key, pos + value.size()))
      cmd.replace(pos, key.size(), value);
  }
  cmd += " 2>/dev/null";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) {
    if (warning) *warning = "cannot run: " + cmd;
    return std::nullopt;
  }
  std::string output;
  char buf[512];
  while (std::fgets(buf, sizeof(buf), pipe)) output += buf;
  const int status = ::pclose(pipe);
  if (status != 0) {
    if (warning) *warning = "tool exited with status " + std::to_string(status) + ": " + cmd;
    return std::nullopt;
  }
  return output;
}

const char* const kNumber = R"([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)";

}  // namespace

double stoi(std::span<const double> estimate, std::span<const double> reference, int sample_rate) {
  check_lengths(estimate, reference, "stoi");
  std::vector<double> x(reference.begin(), reference.end());
  std::vector<double> y(estimate.begin(), estimate.end());
  if (sample_rate != kStoiRate) {
    x = resample(x, sample_rate, kStoiRate);
    y = resample(y, sample_rate, kStoiRate);
  }
  remove_silent_frames(x, y);
  const auto xe = band_envelopes(x);
  const auto ye = band_envelopes(y);
  const std::size_t frames = xe.front().size();
  if (frames < static_cast<std::size_t>(kSegment)) {
    throw InvalidInput("stoi: " + std::to_string(frames) + " active frames, at least " +
                       std::to_string(kSegment) + " (384 ms of speech) are required");
  }
  const double clip = std::pow(10.0, -kBeta / 20.0);
  double total = 0.0;
  std::vector<double> xs(kSegment), ys(kSegment);
  const std::size_t segments = frames - kSegment + 1;
  for (std::size_t m = 0; m < segments; ++m) {
    for (int b = 0; b < kBands; ++b) {
      const auto& xb = xe[static_cast<std::size_t>(b)];
      const auto& yb = ye[static_cast<std::size_t>(b)];
      std::copy_n(xb.begin() + static_cast<std::ptrdiff_t>(m), kSegment, xs.begin());
      std::copy_n(yb.begin() + static_cast<std::ptrdiff_t>(m), kSegment, ys.begin());
      const double scale = norm(xs) / (norm(ys) + kEps);
      double xmean = 0.0, ymean = 0.0;
      for (int j = 0; j < kSegment; ++j) {
        ys[static_cast<std::size_t>(j)] =
            std::min(ys[static_cast<std::size_t>(j)] * scale, xs[static_cast<std::size_t>(j)] * (1.0 + clip));
        xmean += xs[static_cast<std::size_t>(j)];
        ymean += ys[static_cast<std::size_t>(j)];
      }
      xmean /= kSegment;
      ymean /= kSegment;
      for (int j = 0; j < kSegment; ++j) {
        xs[static_cast<std::size_t>(j)] -= xmean;
        ys[static_cast<std::size_t>(j)] -= ymean;
      }
      const double nx = norm(xs) + kEps;
      const double ny = norm(ys) + kEps;
      double corr = 0.0;
      for (int j = 0; j < kSegment; ++j)
        corr += (xs[static_cast<std::size_t>(j)] / nx) * (ys[static_cast<std::size_t>(j)] / ny);
      total += corr;
    }
  }
  return total / static_cast<double>(segments * kBands);
}

double si_sdr(std::span<const double> estimate, std::span<const double> reference) {
  check_lengths(estimate, reference, "si_sdr");
  double dot = 0.0, ref_energy = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    dot += estimate[i] * reference[i];
    ref_energy += reference[i] * reference[i];
  }
  if (ref_energy == 0.0) throw InvalidInput("si_sdr: reference is all zeros");
  const double alpha = dot / ref_energy;
  double target = 0.0, error = 0.0;
  for (std::size_t i = 0; i < reference.size(); ++i) {
    const double s = alpha * reference[i];
    const double e = estimate[i] - s;
    target += s * s;
    error += e * e;
  }
  // An estimate orthogonal to (or zero against) the reference has no target
  // component at all.
  if (target == 0.0) return -kSiSdrCap;
  if (error == 0.0) return kSiSdrCap;
  return std::clamp(10.0 * std::log10(target / error), -kSiSdrCap, kSiSdrCap);
}

double seg_snr(std::span<const double> estimate, std::span<const double> reference, int sample_rate,
               double frame_ms, double lo_db, double hi_db) {
  check_lengths(estimate, reference, "seg_snr");
  if (reference.empty()) throw InvalidInput("seg_snr: empty input");
  const auto frame = std::max<std::size_t>(1, static_cast<std::size_t>(std::lround(frame_ms * sample_rate / 1000.0)));
  const std::size_t frames = std::max<std::size_t>(1, reference.size() / frame);
  double total = 0.0;
  for (std::size_t f = 0; f < frames; ++f) {
    const std::size_t begin = f * frame;
    const std::size_t end = std::min(reference.size(), begin + frame);
    double sig = 0.0, err = 0.0;
    for (std::size_t i = begin; i < end; ++i) {
      sig += reference[i] * reference[i];
      const double e = reference[i] - estimate[i];
      err += e * e;
    }
    double snr = 0.0;
    if (err == 0.0)
      snr = hi_db;
    else if (sig == 0.0)
      snr = lo_db;
    else
      snr = 10.0 * std::log10(sig / err);
    total += std::clamp(snr, lo_db, hi_db);
  }
  return total / static_cast<double>(frames);
}

std::optional<double> external_pesq(const fs::path& estimate_path, const fs::path& reference_path,
                                    const std::string& command_template, std::string* warning) {
  const auto output = run_tool(estimate_path, reference_path, command_template, warning);
  if (!output) return std::nullopt;
  const std::regex number(kNumber);
  std::optional<double> last;
  for (auto it = std::sregex_iterator(output->begin(), output->end(), number); it != std::sregex_iterator(); ++it)
    last = std::stod(it->str());
  if (!last && warning) *warning = "no score in tool output for " + estimate_path.string();
  return last;
}

std::optional<Composite> external_composite(const fs::path& estimate_path, const fs::path& reference_path,
                                            const std::string& command_template, std::string* warning) {
  const auto output = run_tool(estimate_path, reference_path, command_template, warning);
  if (!output) return std::nullopt;
  Composite c;
  const char* keys[] = {"csig", "cbak", "covl"};
  double* fields[] = {&c.csig, &c.cbak, &c.covl};
  for (int i = 0; i < 3; ++i) {
    const std::regex re(std::string(keys[i]) + R"(\s*[:=]?\s*()" + kNumber + ")", std::regex::icase);
    std::smatch m;
    if (!std::regex_search(*output, m, re)) {
      if (warning) *warning = std::string("no ") + keys[i] + " in tool output for " + estimate_path.string();
      return std::nullopt;
    }
    *fields[i] = std::stod(m[1].str());
  }
  return c;
}

std::map<std::string, double> ScoreReport::corpus_mean() const {
  std::map<std::string, std::pair<double, int>> acc;
  auto add = [&acc](const char* key, std::optional<double> v) {
    if (!v) return;
    acc[key].first += *v;
    acc[key].second += 1;
  };
  for (const auto& f : files) {
    add("stoi", f.stoi);
    add("si_sdr", f.si_sdr);
    add("seg_snr", f.seg_snr);
    add("pesq", f.pesq);
    add("csig", f.csig);
    add("cbak", f.cbak);
    add("covl", f.covl);
  }
  std::map<std::string, double> out;
  for (const auto& [k, v] : acc) out[k] = v.first / v.second;
  return out;
}

std::string ScoreReport::summary_table() const {
  const char* order[] = {"stoi", "si_sdr", "seg_snr", "pesq", "csig", "cbak", "covl"};
  const auto means = corpus_mean();
  std::ostringstream os;
  os << std::fixed << std::setprecision(3);
  os << "files: " << files.size() << "\n";
  os << std::left << std::setw(10) << "metric" << std::right << std::setw(12) << "mean" << "\n";
  for (const char* key : order) {
    auto it = means.find(key);
    if (it == means.end()) continue;
    os << std::left << std::setw(10) << key << std::right << std::setw(12) << it->second << "\n";
  }
  return os.str();
}

FileScore score_pair(const std::string& id, std::span<const double> estimate, std::span<const double> reference) {
  FileScore s;
  s.id = id;
  s.stoi = stoi(estimate, reference);
  s.si_sdr = si_sdr(estimate, reference);
  s.seg_snr = seg_snr(estimate, reference);
  return s;
}

ScoreReport evaluate_dirs(const fs::path& est_dir, const fs::path& ref_dir, const EvaluateOptions& options) {
  const auto scan = data::scan_corpus(est_dir, ref_dir);
  ScoreReport report;
  report.warnings = scan.warnings;
  for (const auto& pair : scan.pairs) {
    auto est = data::ingest(pair.noisy_path);
    auto ref = data::ingest(pair.clean_path);
    if (est.size() != ref.size()) {
      report.warnings.push_back(pair.id + ": lengths differ (" + std::to_string(est.size()) + " vs " +
                                std::to_string(ref.size()) + "), truncated to the shorter");
      const auto n = std::min(est.size(), ref.size());
      est.resize(n);
      ref.resize(n);
    }
    FileScore s = score_pair(pair.id, est, ref);
    std::string warning;
    s.pesq = external_pesq(pair.noisy_path, pair.clean_path, options.pesq_cmd, &warning);
    if (!warning.empty()) report.warnings.push_back(pair.id + ": pesq: " + warning);
    warning.clear();
    if (auto c = external_composite(pair.noisy_path, pair.clean_path, options.composite_cmd, &warning)) {
      s.csig = c->csig;
      s.cbak = c->cbak;
      s.covl = c->covl;
    }
    if (!warning.empty()) report.warnings.push_back(pair.id + ": composite: " + warning);
    report.files.push_back(std::move(s));
  }
  return report;
}

void write_report(const fs::path& path, const ScoreReport& report) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write report: " + path.string());
  for (const auto& f : report.files) {
    nlohmann::ordered_json j;
    j["id"] = f.id;
    j["stoi"] = f.stoi;
    j["si_sdr"] = f.si_sdr;
    j["seg_snr"] = f.seg_snr;
    if (f.pesq) j["pesq"] = *f.pesq;
    if (f.csig) j["csig"] = *f.csig;
    if (f.cbak) j["cbak"] = *f.cbak;
    if (f.covl) j["covl"] = *f.covl;
    out << j.dump() << '\n';
  }
  nlohmann::ordered_json mean;
  for (const auto& [k, v] : report.corpus_mean()) mean[k] = v;
  out << nlohmann::ordered_json{{"corpus_mean", mean}}.dump() << '\n';
}

ScoreReport read_report(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot read report: " + path.string());
  ScoreReport report;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line);
    if (j.contains("corpus_mean")) continue;
    FileScore f;
    f.id = j.at("id").get<std::string>();
    f.stoi = j.at("stoi").get<double>();
    f.si_sdr = j.at("si_sdr").get<double>();
    f.seg_snr = j.at("seg_snr").get<double>();
    if (j.contains("pesq")) f.pesq = j["pesq"].get<double>();
    if (j.contains("csig")) f.csig = j["csig"].get<double>();
    if (j.contains("cbak")) f.cbak = j["cbak"].get<double>();
    if (j.contains("covl")) f.covl = j["covl"].get<double>();
    report.files.push_back(std::move(f));
  }
  return report;
}

}  // namespace hfsda::metrics
