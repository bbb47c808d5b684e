#include "hfsda/wav.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "hfsda/errors.hpp"

namespace hfsda::wav {

namespace {

static_assert(std::endian::native == std::endian::little, "WAV I/O assumes a little-endian host");

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T load(const std::vector<char>& buf, std::size_t offset) {
  T v{};
  std::memcpy(&v, buf.data() + offset, sizeof(T));
  return v;
}

template <typename T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

Audio read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open audio file: " + path.string());
  std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 12 || std::memcmp(buf.data(), "RIFF", 4) != 0 ||
      std::memcmp(buf.data() + 8, "WAVE", 4) != 0) {
    throw FormatError("not a RIFF/WAVE file: " + path.string());
  }

  std::uint16_t format = 0;
  std::uint16_t channels = 0;
  std::uint32_t rate = 0;
  std::uint16_t bits = 0;
  bool have_fmt = false;
  std::size_t data_offset = 0;
  std::size_t data_size = 0;
  bool have_data = false;

  std::size_t pos = 12;
  while (pos + 8 <= buf.size()) {
    const std::uint32_t size = load<std::uint32_t>(buf, pos + 4);
    const std::size_t body = pos + 8;
    if (std::memcmp(buf.data() + pos, "fmt ", 4) == 0) {
      if (size < 16 || body + size > buf.size()) throw FormatError("truncated fmt chunk: " + path.string());
      format = load<std::uint16_t>(buf, body);
      channels = load<std::uint16_t>(buf, body + 2);
      rate = load<std::uint32_t>(buf, body + 4);
      bits = load<std::uint16_t>(buf, body + 14);
      if (format == kFormatExtensible) {
        if (size < 40) throw FormatError("truncated extensible fmt chunk: " + path.string());
        format = load<std::uint16_t>(buf, body + 24);
      }
      have_fmt = true;
    } else if (std::memcmp(buf.data() + pos, "data", 4) == 0) {
      data_offset = body;
      data_size = std::min<std::size_t>(size, buf.size() - body);
      have_data = true;
    }
    pos = body + size + (size & 1u);
  }
  if (!have_fmt || !have_data) throw FormatError("missing fmt or data chunk: " + path.string());
  if (channels == 0) throw FormatError("zero channels: " + path.string());

  const std::size_t width = bits / 8;
  if (width == 0) throw FormatError("invalid bit depth: " + path.string());
  const std::size_t count = data_size / width;
  Audio audio;
  audio.sample_rate = static_cast<int>(rate);
  audio.channels = channels;
  audio.samples.resize(count);
  const char* p = buf.data() + data_offset;
  if (format == kFormatPcm && bits == 16) {
    for (std::size_t i = 0; i < count; ++i) {
      std::int16_t v;
      std::memcpy(&v, p + 2 * i, 2);
      audio.samples[i] = v / 32768.0;
    }
  } else if (format == kFormatPcm && bits == 24) {
    for (std::size_t i = 0; i < count; ++i) {
      const auto* b = reinterpret_cast<const unsigned char*>(p + 3 * i);
      std::int32_t v = b[0] | (b[1] << 8) | (b[2] << 16);
      if (v & 0x800000) v -= 0x1000000;
      audio.samples[i] = v / 8388608.0;
    }
  } else if (format == kFormatPcm && bits == 32) {
    for (std::size_t i = 0; i < count; ++i) {
      std::int32_t v;
      std::memcpy(&v, p + 4 * i, 4);
      audio.samples[i] = v / 2147483648.0;
    }
  } else if (format == kFormatFloat && bits == 32) {
    for (std::size_t i = 0; i < count; ++i) {
      float v;
      std::memcpy(&v, p + 4 * i, 4);
      audio.samples[i] = v;
    }
  } else if (format == kFormatFloat && bits == 64) {
    for (std::size_t i = 0; i < count; ++i) std::memcpy(&audio.samples[i], p + 8 * i, 8);
  } else {
    throw FormatError("unsupported sample format (" + std::to_string(format) + ", " +
                      std::to_string(bits) + " bit): " + path.string());
  }
  return audio;
}

void write(const std::filesystem::path& path, std::span<const double> samples, int sample_rate,
           SampleFormat format) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FormatError("cannot write audio file: " + path.string());
  const std::uint16_t bits = format == SampleFormat::pcm16 ? 16 : 32;
  const std::uint16_t tag = format == SampleFormat::pcm16 ? kFormatPcm : kFormatFloat;
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(samples.size() * (bits / 8));
  out.write("RIFF", 4);
  put<std::uint32_t>(out, 36 + data_bytes);
  out.write("WAVE", 4);
  out.write("fmt ", 4);
  put<std::uint32_t>(out, 16);
  put<std::uint16_t>(out, tag);
  put<std::uint16_t>(out, 1);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(sample_rate));
  put<std::uint32_t>(out, static_cast<std::uint32_t>(sample_rate) * (bits / 8));
  put<std::uint16_t>(out, bits / 8);
  put<std::uint16_t>(out, bits);
  out.write("data", 4);
  put<std::uint32_t>(out, data_bytes);
  for (double s : samples) {
    if (format == SampleFormat::pcm16) {
      const double scaled = std::round(std::clamp(s, -1.0, 1.0) * 32768.0);
      put<std::int16_t>(out, static_cast<std::int16_t>(std::clamp(scaled, -32768.0, 32767.0)));
    } else {
      put<float>(out, static_cast<float>(s));
    }
  }
  if (!out) throw FormatError("failed writing audio file: " + path.string());
}

}  // namespace hfsda::wav
