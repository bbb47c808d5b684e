#include "hfsda/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>

#include "hfsda/errors.hpp"
#include "hfsda/random.hpp"
#include "hfsda/resample.hpp"
#include "hfsda/wav.hpp"

namespace hfsda::data {

namespace fs = std::filesystem;

namespace {

std::map<std::string, fs::path> wav_stems(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw CorpusError("corpus directory does not exist: " + dir.string());
  std::map<std::string, fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    std::string ext = entry.path().extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    if (ext == ".wav") out.emplace(entry.path().stem().string(), entry.path());
  }
  return out;
}

}  // namespace

ScanResult scan_corpus(const fs::path& noisy_dir, const fs::path& clean_dir) {
  const auto noisy = wav_stems(noisy_dir);
  const auto clean = wav_stems(clean_dir);
  ScanResult result;
  for (const auto& [stem, path] : noisy) {
    auto it = clean.find(stem);
    if (it == clean.end()) {
      result.warnings.push_back("'" + stem + "' has no match in " + clean_dir.string());
      continue;
    }
    result.pairs.push_back({stem, path, it->second});
  }
  for (const auto& [stem, path] : clean)
    if (!noisy.contains(stem)) result.warnings.push_back("'" + stem + "' has no match in " + noisy_dir.string());
  if (result.pairs.empty()) {
    throw CorpusError("no matching file stems: " + std::to_string(noisy.size()) + " noisy files in " +
                      noisy_dir.string() + ", " + std::to_string(clean.size()) + " clean files in " +
                      clean_dir.string());
  }
  return result;
}

std::vector<double> ingest(const fs::path& path) {
  wav::Audio audio = wav::read(path);
  if (audio.channels != 1) {
    throw FormatError(path.string() + ": " + std::to_string(audio.channels) +
                      " channels, only mono is supported");
  }
  if (audio.sample_rate == kSampleRate) return std::move(audio.samples);
  if (audio.sample_rate == 48000) return resample(audio.samples, 48000, kSampleRate);
  throw FormatError(path.string() + ": unsupported sample rate " + std::to_string(audio.sample_rate) +
                    " Hz (expected 16000 or 48000)");
}

UtterancePair load_pair(const PairDescriptor& pair) {
  UtterancePair u{pair.id, ingest(pair.noisy_path), ingest(pair.clean_path)};
  if (u.noisy.size() != u.clean.size()) {
    throw CorpusError("pair '" + pair.id + "': noisy has " + std::to_string(u.noisy.size()) +
                      " samples, clean has " + std::to_string(u.clean.size()));
  }
  if (u.noisy.empty()) throw CorpusError("pair '" + pair.id + "' is empty");
  return u;
}

std::vector<UtterancePair> load_corpus(const std::vector<PairDescriptor>& pairs) {
  std::vector<UtterancePair> out;
  out.reserve(pairs.size());
  for (const auto& p : pairs) out.push_back(load_pair(p));
  return out;
}

std::vector<Segment> segment(const UtterancePair& pair, std::size_t length, std::size_t min_tail) {
  std::vector<Segment> out;
  const std::size_t n = std::min(pair.noisy.size(), pair.clean.size());
  for (std::size_t off = 0; off < n; off += length) {
    const std::size_t valid = std::min(length, n - off);
    if (valid < length && valid < min_tail) break;
    Segment s;
    s.noisy.assign(length, 0.0);
    s.clean.assign(length, 0.0);
    std::copy_n(pair.noisy.begin() + static_cast<std::ptrdiff_t>(off), valid, s.noisy.begin());
    std::copy_n(pair.clean.begin() + static_cast<std::ptrdiff_t>(off), valid, s.clean.begin());
    s.source_id = pair.id;
    s.offset = off;
    s.valid = valid;
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<Segment> segment_all(const std::vector<UtterancePair>& pairs) {
  std::vector<Segment> out;
  for (const auto& p : pairs) {
    auto s = segment(p);
    std::move(s.begin(), s.end(), std::back_inserter(out));
  }
  return out;
}

std::vector<std::vector<std::size_t>> batch_indices(std::size_t n, int batch_size, std::uint64_t seed) {
  if (batch_size < 1) throw InvalidInput("batch size must be >= 1");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> batches;
  const auto b = static_cast<std::size_t>(batch_size);
  for (std::size_t i = 0; i < n; i += b)
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + b)));
  return batches;
}

std::pair<std::vector<UtterancePair>, std::vector<UtterancePair>> split_validation(
    std::vector<UtterancePair> pairs, double fraction, std::uint64_t seed) {
  const auto n_val = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(pairs.size())));
  std::vector<std::size_t> order(pairs.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(seed);
  rng.shuffle(order);
  std::vector<bool> is_val(pairs.size(), false);
  for (std::size_t i = 0; i < n_val; ++i) is_val[order[i]] = true;
  std::vector<UtterancePair> train, val;
  for (std::size_t i = 0; i < pairs.size(); ++i)
    (is_val[i] ? val : train).push_back(std::move(pairs[i]));
  return {std::move(train), std::move(val)};
}

}  // namespace hfsda::data
