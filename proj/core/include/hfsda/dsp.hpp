#pragma once

#include <complex>
#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "hfsda/tensor.hpp"

namespace hfsda::dsp {

enum class WindowKind { hamming };
enum class BinPolicy { drop_nyquist };

// STFT framing. Defaults: 25 ms Hamming window, 400-point FFT and 10 ms hop
// at 16 kHz, giving 200 retained bins once the Nyquist bin is dropped.
struct StftConfig {
  int sample_rate_hz = 16000;
  int win_length = 400;
  int fft_size = 400;
  int hop_length = 160;
  WindowKind window = WindowKind::hamming;
  bool center_pad = true;
  BinPolicy bin_policy = BinPolicy::drop_nyquist;

  // Throws ConfigError when an invariant is violated.
  void validate() const;
  int bins() const { return fft_size / 2; }
  int frames_for(std::size_t samples) const;

  bool operator==(const StftConfig&) const = default;
};

using Complex = std::complex<double>;

// T frames x F bins, row-major (frame-major).
struct ComplexSpectrogram {
  int frames = 0;
  int bins = 0;
  std::vector<Complex> data;
  StftConfig config;
  std::optional<std::size_t> source_length;

  Complex& at(int t, int f) { return data[static_cast<std::size_t>(t) * bins + f]; }
  const Complex& at(int t, int f) const { return data[static_cast<std::size_t>(t) * bins + f]; }
};

// Real (T x F) magnitude mask with entries in [0, 1].
class Mask {
 public:
  explicit Mask(Tensor data);
  const Tensor& data() const { return data_; }
  int frames() const { return data_.dim(0); }
  int bins() const { return data_.dim(1); }

 private:
  Tensor data_;
};

// Periodic window of `length` samples.
std::vector<double> make_window(WindowKind kind, int length);

ComplexSpectrogram stft(std::span<const double> waveform, const StftConfig& config);

// Least-squares inverse of stft() over the retained bins: overlap-add of the
// synthesis frames followed by a correction for the discarded Nyquist
// component. Exact on any spectrogram produced by stft().
std::vector<double> istft(const ComplexSpectrogram& spec);

// Adjoint of istft() with respect to the real and imaginary parts of every
// retained coefficient: given dL/dy for the output waveform, returns the
// gradient as a complex spectrogram (real part = d/dRe, imaginary = d/dIm).
ComplexSpectrogram istft_adjoint(std::span<const double> grad_waveform,
                                 const StftConfig& config, int frames,
                                 std::size_t source_length);

ComplexSpectrogram apply_mask(const ComplexSpectrogram& spec, const Mask& mask);
Tensor magnitude(const ComplexSpectrogram& spec);

}  // namespace hfsda::dsp
