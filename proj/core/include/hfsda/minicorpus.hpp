#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace hfsda::minicorpus {

struct PairInfo {
  std::string id;
  double snr_db = 0.0;
  std::size_t samples = 0;
};

struct Utterance {
  std::vector<double> clean;
  std::vector<double> noisy;
};

// Synthetic speech-like pair: 2-4 harmonics with random phases under a
// syllabic on/off envelope, plus low-pass shaped Gaussian noise mixed at
// exactly snr_db. Peak-normalised to 0.8 after mixing.
Utterance synthesize(std::uint64_t seed, std::size_t samples, double snr_db);

// Writes `pairs` pairs as 16 kHz mono 16-bit files to dir/noisy/<id>.wav and
// dir/clean/<id>.wav plus dir/manifest.csv (id,snr_db,samples). SNRs cycle
// through {0, 5, 10, 15} dB and lengths are drawn from [1.2, 4.0] s.
std::vector<PairInfo> make(const std::filesystem::path& dir, std::uint64_t seed, int pairs = 10);

// Reads dir/manifest.csv.
std::vector<PairInfo> read_manifest(const std::filesystem::path& dir);

}  // namespace hfsda::minicorpus
