#include "hfsda/minicorpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>
#include <sstream>

#include "hfsda/errors.hpp"
#include "hfsda/random.hpp"
#include "hfsda/wav.hpp"

namespace hfsda::minicorpus {

namespace fs = std::filesystem;

namespace {

constexpr int kRate = 16000;
constexpr double kSnrGrid[] = {0.0, 5.0, 10.0, 15.0};

// Raised-cosine bursts of 120-320 ms separated by 40-160 ms of silence.
std::vector<double> syllable_envelope(std::size_t n, Rng& rng) {
  std::vector<double> env(n, 0.0);
  std::size_t pos = static_cast<std::size_t>(rng.uniform(0.02, 0.08) * kRate);
  while (pos < n) {
    const auto len = static_cast<std::size_t>(rng.uniform(0.12, 0.32) * kRate);
    const double level = rng.uniform(0.5, 1.0);
    for (std::size_t i = 0; i < len && pos + i < n; ++i) {
      const double phase = static_cast<double>(i) / static_cast<double>(len);
      env[pos + i] = level * 0.5 * (1.0 - std::cos(2.0 * std::numbers::pi * phase));
    }
    pos += len + static_cast<std::size_t>(rng.uniform(0.04, 0.16) * kRate);
  }
  return env;
}

double energy(const std::vector<double>& x) {
  double e = 0.0;
  for (double v : x) e += v * v;
  return e;
}

}  // namespace

Utterance synthesize(std::uint64_t seed, std::size_t samples, double snr_db) {
  Rng rng(seed);
  const int harmonics = 2 + static_cast<int>(rng.below(3));
  const double f0 = rng.uniform(110.0, 240.0);
  const double glide = rng.uniform(-0.15, 0.15);  // relative f0 change over the utterance
  std::vector<double> phases(static_cast<std::size_t>(harmonics));
  for (double& p : phases) p = rng.uniform(0.0, 2.0 * std::numbers::pi);
  const auto env = syllable_envelope(samples, rng);

  Utterance u;
  u.clean.assign(samples, 0.0);
  double instantaneous_phase = 0.0;
  for (std::size_t i = 0; i < samples; ++i) {
    const double progress = static_cast<double>(i) / static_cast<double>(samples);
    instantaneous_phase += 2.0 * std::numbers::pi * f0 * (1.0 + glide * progress) / kRate;
    double s = 0.0;
    for (int k = 1; k <= harmonics; ++k)
      s += std::sin(k * instantaneous_phase + phases[static_cast<std::size_t>(k - 1)]) / k;
    u.clean[i] = env[i] * s;
  }

  // One-pole low-pass shaping plus a white floor.
  const double pole = rng.uniform(0.6, 0.95);
  std::vector<double> noise(samples);
  double state = 0.0;
  for (std::size_t i = 0; i < samples; ++i) {
    const double w = rng.normal();
    state = pole * state + (1.0 - pole) * w;
    noise[i] = state + 0.05 * w;
  }
  const double gain = std::sqrt(energy(u.clean) / (energy(noise) * std::pow(10.0, snr_db / 10.0)));
  u.noisy.resize(samples);
  for (std::size_t i = 0; i < samples; ++i) u.noisy[i] = u.clean[i] + gain * noise[i];

  double peak = 0.0;
  for (double v : u.noisy) peak = std::max(peak, std::abs(v));
  for (double v : u.clean) peak = std::max(peak, std::abs(v));
  const double norm = 0.8 / peak;
  for (double& v : u.clean) v *= norm;
  for (double& v : u.noisy) v *= norm;
  return u;
}

std::vector<PairInfo> make(const fs::path& dir, std::uint64_t seed, int pairs) {
  fs::create_directories(dir / "noisy");
  fs::create_directories(dir / "clean");
  Rng rng(seed);
  std::vector<PairInfo> infos;
  for (int i = 0; i < pairs; ++i) {
    char id[32];
    std::snprintf(id, sizeof(id), "mini_%02d", i);
    PairInfo info;
    info.id = id;
    info.snr_db = kSnrGrid[i % 4];
    info.samples = static_cast<std::size_t>(rng.uniform(1.2, 4.0) * kRate);
    const Utterance u = synthesize(rng.next(), info.samples, info.snr_db);
    wav::write(dir / "clean" / (info.id + ".wav"), u.clean, kRate);
    wav::write(dir / "noisy" / (info.id + ".wav"), u.noisy, kRate);
    infos.push_back(info);
  }
  std::ofstream manifest(dir / "manifest.csv", std::ios::trunc);
  manifest << "id,snr_db,samples\n";
  for (const auto& p : infos) manifest << p.id << ',' << p.snr_db << ',' << p.samples << '\n';
  if (!manifest) throw Error("cannot write " + (dir / "manifest.csv").string());
  return infos;
}

std::vector<PairInfo> read_manifest(const fs::path& dir) {
  std::ifstream in(dir / "manifest.csv");
  if (!in) throw CorpusError("no manifest in " + dir.string());
  std::string line;
  std::getline(in, line);
  std::vector<PairInfo> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    PairInfo p;
    std::string snr, n;
    std::getline(row, p.id, ',');
    std::getline(row, snr, ',');
    std::getline(row, n, ',');
    p.snr_db = std::stod(snr);
    p.samples = std::stoull(n);
    out.push_back(p);
  }
  return out;
}

}  // namespace hfsda::minicorpus
