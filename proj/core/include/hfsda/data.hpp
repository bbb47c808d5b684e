#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace hfsda::data {

inline constexpr int kSampleRate = 16000;
inline constexpr std::size_t kSegmentSamples = 24000;
inline constexpr std::size_t kMinTailSamples = 8000;

struct PairDescriptor {
  std::string id;
  std::filesystem::path noisy_path;
  std::filesystem::path clean_path;
};

struct ScanResult {
  std::vector<PairDescriptor> pairs;
  std::vector<std::string> warnings;
};

struct UtterancePair {
  std::string id;
  std::vector<double> noisy;
  std::vector<double> clean;
};

struct Segment {
  std::vector<double> noisy;
  std::vector<double> clean;
  std::string source_id;
  std::size_t offset = 0;
  // Real (non-padded) samples at the start of the segment.
  std::size_t valid = 0;
};

// Matches *.wav files in the two directories by stem, in lexicographic order.
// Throws CorpusError if a directory is missing or no stems match.
ScanResult scan_corpus(const std::filesystem::path& noisy_dir, const std::filesystem::path& clean_dir);

// Mono audio at 16 kHz in [-1, 1]; 48 kHz input is resampled.
std::vector<double> ingest(const std::filesystem::path& path);

UtterancePair load_pair(const PairDescriptor& pair);
std::vector<UtterancePair> load_corpus(const std::vector<PairDescriptor>& pairs);

std::vector<Segment> segment(const UtterancePair& pair, std::size_t length = kSegmentSamples,
                             std::size_t min_tail = kMinTailSamples);
std::vector<Segment> segment_all(const std::vector<UtterancePair>& pairs);

// Seeded permutation of [0, n) cut into batches; the last batch may be short.
std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, int batch_size, std::uint64_t seed);

// Splits pairs into (train, validation) with floor(fraction * n) validation
// pairs chosen by a seeded shuffle. Original order is kept inside each part.
std::pair<std::vector<UtterancePair>, std::vector<UtterancePair>> split_validation(
    std::vector<UtterancePair> pairs, double fraction, std::uint64_t seed);

}  // namespace hfsda::data
