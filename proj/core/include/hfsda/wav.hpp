#pragma once

#include <filesystem>
#include <span>
#include <vector>

namespace hfsda::wav {

enum class SampleFormat { pcm16, float32 };

struct Audio {
  int sample_rate = 0;
  int channels = 0;
  // Interleaved samples scaled to [-1, 1].
  std::vector<double> samples;
};

// Reads RIFF/WAVE with 16/24/32-bit integer PCM or 32/64-bit IEEE float
// payloads (plain or WAVE_FORMAT_EXTENSIBLE). Throws FormatError otherwise.
Audio read(const std::filesystem::path& path);

// Writes a mono file. pcm16 clips to [-1, 1) and rounds to nearest.
void write(const std::filesystem::path& path, std::span<const double> samples, int sample_rate,
           SampleFormat format = SampleFormat::pcm16);

}  // namespace hfsda::wav
