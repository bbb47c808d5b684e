#include "hfsda/dsp.hpp"

#include <cmath>
#include <numbers>

#include <unsupported/Eigen/FFT>

#include "hfsda/errors.hpp"

namespace hfsda::dsp {

namespace {

int pad_amount(const StftConfig& c) { return c.center_pad ? c.fft_size / 2 : 0; }

// Analysis/synthesis window zero-extended to fft_size, centred.
std::vector<double> frame_window(const StftConfig& c) {
  std::vector<double> w(static_cast<std::size_t>(c.fft_size), 0.0);
  const auto base = make_window(c.window, c.win_length);
  const int offset = (c.fft_size - c.win_length) / 2;
  for (int i = 0; i < c.win_length; ++i) w[static_cast<std::size_t>(offset + i)] = base[static_cast<std::size_t>(i)];
  return w;
}

// numpy-style "reflect" index folding (edge sample not repeated).
std::size_t reflect_index(long long i, std::size_t n) {
  if (n == 1) return 0;
  const long long period = 2 * (static_cast<long long>(n) - 1);
  long long m = i % period;
  if (m < 0) m += period;
  if (m >= static_cast<long long>(n)) m = period - m;
  return static_cast<std::size_t>(m);
}

std::vector<double> padded_signal(std::span<const double> x, const StftConfig& c) {
  const int pad = pad_amount(c);
  std::vector<double> out(x.size() + 2 * static_cast<std::size_t>(pad));
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = x[reflect_index(static_cast<long long>(i) - pad, x.size())];
  return out;
}

std::size_t padded_length(std::size_t source_length, const StftConfig& c) {
  return source_length + 2 * static_cast<std::size_t>(pad_amount(c));
}

// Normal-equation operator of the retained-bin analysis:
//   M z = D z - (1/N) sum_t u_t <u_t, z>,  u_t = S_t^T (w .* (-1)^n)
// where D is the overlap-added squared window.
class SynthesisOperator {
 public:
  SynthesisOperator(const StftConfig& c, int frames, std::size_t length)
      : n_(c.fft_size), hop_(c.hop_length), frames_(frames), w_(frame_window(c)), diag_(length, 0.0) {
    for (int t = 0; t < frames_; ++t)
      for (int k = 0; k < n_; ++k) {
        const std::size_t idx = static_cast<std::size_t>(t) * hop_ + k;
        if (idx < diag_.size()) diag_[idx] += w_[static_cast<std::size_t>(k)] * w_[static_cast<std::size_t>(k)];
      }
  }

  const std::vector<double>& diag() const { return diag_; }

  void apply(const std::vector<double>& z, std::vector<double>& out) const {
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = diag_[i] * z[i];
    const double inv_n = 1.0 / n_;
    for (int t = 0; t < frames_; ++t) {
      const std::size_t base = static_cast<std::size_t>(t) * hop_;
      double dot = 0.0;
      for (int k = 0; k < n_; ++k) {
        const std::size_t idx = base + k;
        if (idx >= z.size()) break;
        dot += sign(k) * w_[static_cast<std::size_t>(k)] * z[idx];
      }
      dot *= inv_n;
      for (int k = 0; k < n_; ++k) {
        const std::size_t idx = base + k;
        if (idx >= z.size()) break;
        out[idx] -= dot * sign(k) * w_[static_cast<std::size_t>(k)];
      }
    }
  }

  // Preconditioned conjugate gradient; M is symmetric positive definite.
  std::vector<double> solve(const std::vector<double>& b) const {
    const std::size_t n = b.size();
    std::vector<double> x(n, 0.0);
    double bnorm = 0.0;
    for (double v : b) bnorm += v * v;
    if (bnorm == 0.0) return x;
    std::vector<double> r = b;
    std::vector<double> z(n);
    std::vector<double> p(n);
    std::vector<double> ap(n);
    // Samples no frame covers (the tail of the right padding when the length
    // is not a multiple of the hop) have zero weight and stay at zero.
    for (std::size_t i = 0; i < n; ++i) z[i] = diag_[i] > 0.0 ? r[i] / diag_[i] : 0.0;
    p = z;
    double rz = 0.0;
    for (std::size_t i = 0; i < n; ++i) rz += r[i] * z[i];
    const double tol = 1e-28 * bnorm;
    for (int iter = 0; iter < 1000; ++iter) {
      apply(p, ap);
      double pap = 0.0;
      for (std::size_t i = 0; i < n; ++i) pap += p[i] * ap[i];
      if (pap <= 0.0) break;
      const double alpha = rz / pap;
      double rr = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        x[i] += alpha * p[i];
        r[i] -= alpha * ap[i];
        rr += r[i] * r[i];
      }
      if (rr <= tol) break;
      double rz_next = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        z[i] = diag_[i] > 0.0 ? r[i] / diag_[i] : 0.0;
        rz_next += r[i] * z[i];
      }
      const double beta = rz_next / rz;
      rz = rz_next;
      for (std::size_t i = 0; i < n; ++i) p[i] = z[i] + beta * p[i];
    }
    return x;
  }

 private:
  static double sign(int k) { return (k & 1) ? -1.0 : 1.0; }

  int n_;
  int hop_;
  int frames_;
  std::vector<double> w_;
  std::vector<double> diag_;
};

void check_spectrogram(const ComplexSpectrogram& spec) {
  spec.config.validate();
  if (spec.bins != spec.config.bins()) {
    throw DimensionError("spectrogram has " + std::to_string(spec.bins) + " bins, config expects " +
                         std::to_string(spec.config.bins()));
  }
  if (spec.data.size() != static_cast<std::size_t>(spec.frames) * spec.bins) {
    throw DimensionError("spectrogram data size does not match its frame/bin counts");
  }
}

}  // namespace

void StftConfig::validate() const {
  if (sample_rate_hz <= 0) throw ConfigError("stft.sample_rate must be positive");
  if (win_length < 2 || fft_size < 2 || hop_length < 1)
    throw ConfigError("stft window, fft size and hop must be positive");
  if (win_length > fft_size) throw ConfigError("stft.win_length must not exceed stft.fft_size");
  if (hop_length > win_length) throw ConfigError("stft.hop_length must not exceed stft.win_length");
  if (fft_size % 2 != 0) throw ConfigError("stft.fft_size must be even");
}

int StftConfig::frames_for(std::size_t samples) const {
  if (center_pad) return 1 + static_cast<int>(samples / static_cast<std::size_t>(hop_length));
  if (samples < static_cast<std::size_t>(fft_size)) return 0;
  return 1 + static_cast<int>((samples - fft_size) / static_cast<std::size_t>(hop_length));
}

Mask::Mask(Tensor data) : data_(std::move(data)) {
  if (data_.ndim() != 2) throw DimensionError("mask must be a (T x F) matrix");
  for (double v : data_.values()) {
    if (!(v >= 0.0 && v <= 1.0)) throw InvalidInput("mask entries must lie in [0, 1]");
  }
}

std::vector<double> make_window(WindowKind kind, int length) {
  std::vector<double> w(static_cast<std::size_t>(length));
  switch (kind) {
    case WindowKind::hamming:
      for (int i = 0; i < length; ++i)
        w[static_cast<std::size_t>(i)] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / length);
      break;
  }
  return w;
}

ComplexSpectrogram stft(std::span<const double> waveform, const StftConfig& config) {
  config.validate();
  if (waveform.empty()) throw InvalidInput("stft: empty waveform");
  for (double v : waveform) {
    if (!std::isfinite(v)) throw InvalidInput("stft: non-finite sample");
  }
  const int frames = config.frames_for(waveform.size());
  if (frames < 1) throw InvalidInput("stft: waveform shorter than one frame");
  const std::vector<double> padded = padded_signal(waveform, config);
  const std::vector<double> w = frame_window(config);
  const int n = config.fft_size;
  const int bins = config.bins();

  ComplexSpectrogram spec;
  spec.frames = frames;
  spec.bins = bins;
  spec.config = config;
  spec.source_length = waveform.size();
  spec.data.resize(static_cast<std::size_t>(frames) * bins);

  Eigen::FFT<double> fft;
  std::vector<double> frame(static_cast<std::size_t>(n));
  std::vector<Complex> out;
  for (int t = 0; t < frames; ++t) {
    const std::size_t base = static_cast<std::size_t>(t) * config.hop_length;
    for (int k = 0; k < n; ++k)
      frame[static_cast<std::size_t>(k)] = w[static_cast<std::size_t>(k)] * padded[base + k];
    fft.fwd(out, frame);
    for (int f = 0; f < bins; ++f) spec.at(t, f) = out[static_cast<std::size_t>(f)];
  }
  return spec;
}

std::vector<double> istft(const ComplexSpectrogram& spec) {
  check_spectrogram(spec);
  if (!spec.source_length) throw InvalidInput("istft: spectrogram carries no source length");
  const StftConfig& c = spec.config;
  const std::size_t length = *spec.source_length;
  if (c.frames_for(length) != spec.frames) {
    throw DimensionError("istft: " + std::to_string(spec.frames) + " frames inconsistent with source length " +
                         std::to_string(length));
  }
  const int n = c.fft_size;
  const std::size_t plen = padded_length(length, c);
  const std::vector<double> w = frame_window(c);

  std::vector<double> rhs(plen, 0.0);
  Eigen::FFT<double> fft;
  std::vector<Complex> full(static_cast<std::size_t>(n));
  std::vector<double> frame;
  for (int t = 0; t < spec.frames; ++t) {
    full[0] = Complex(spec.at(t, 0).real(), 0.0);
    for (int f = 1; f < spec.bins; ++f) {
      full[static_cast<std::size_t>(f)] = spec.at(t, f);
      full[static_cast<std::size_t>(n - f)] = std::conj(spec.at(t, f));
    }
    full[static_cast<std::size_t>(n / 2)] = Complex(0.0, 0.0);
    fft.inv(frame, full);
    const std::size_t base = static_cast<std::size_t>(t) * c.hop_length;
    for (int k = 0; k < n; ++k) {
      const std::size_t idx = base + k;
      if (idx < plen) rhs[idx] += w[static_cast<std::size_t>(k)] * frame[static_cast<std::size_t>(k)];
    }
  }
  const SynthesisOperator op(c, spec.frames, plen);
  const std::vector<double> padded = op.solve(rhs);
  const std::size_t pad = static_cast<std::size_t>(pad_amount(c));
  return std::vector<double>(padded.begin() + static_cast<std::ptrdiff_t>(pad),
                             padded.begin() + static_cast<std::ptrdiff_t>(pad + length));
}

ComplexSpectrogram istft_adjoint(std::span<const double> grad_waveform, const StftConfig& config,
                                 int frames, std::size_t source_length) {
  config.validate();
  if (grad_waveform.size() != source_length) {
    throw DimensionError("istft_adjoint: gradient length does not match source length");
  }
  const int n = config.fft_size;
  const int bins = config.bins();
  const std::size_t plen = padded_length(source_length, config);
  const std::size_t pad = static_cast<std::size_t>(pad_amount(config));
  std::vector<double> g(plen, 0.0);
  for (std::size_t i = 0; i < source_length; ++i) g[pad + i] = grad_waveform[i];
  const SynthesisOperator op(config, frames, plen);
  const std::vector<double> z = op.solve(g);
  const std::vector<double> w = frame_window(config);

  ComplexSpectrogram out;
  out.frames = frames;
  out.bins = bins;
  out.config = config;
  out.source_length = source_length;
  out.data.resize(static_cast<std::size_t>(frames) * bins);
  Eigen::FFT<double> fft;
  std::vector<double> h(static_cast<std::size_t>(n));
  std::vector<Complex> spectrum;
  for (int t = 0; t < frames; ++t) {
    const std::size_t base = static_cast<std::size_t>(t) * config.hop_length;
    for (int k = 0; k < n; ++k) {
      const std::size_t idx = base + k;
      h[static_cast<std::size_t>(k)] = idx < plen ? w[static_cast<std::size_t>(k)] * z[idx] : 0.0;
    }
    fft.fwd(spectrum, h);
    out.at(t, 0) = Complex(spectrum[0].real() / n, 0.0);
    for (int f = 1; f < bins; ++f) out.at(t, f) = spectrum[static_cast<std::size_t>(f)] * (2.0 / n);
  }
  return out;
}

ComplexSpectrogram apply_mask(const ComplexSpectrogram& spec, const Mask& mask) {
  check_spectrogram(spec);
  if (mask.frames() != spec.frames || mask.bins() != spec.bins) {
    throw DimensionError("apply_mask: mask " + shape_string(mask.data().shape()) +
                         " does not match spectrogram (" + std::to_string(spec.frames) + " x " +
                         std::to_string(spec.bins) + ")");
  }
  ComplexSpectrogram out = spec;
  for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= mask.data()[i];
  return out;
}

Tensor magnitude(const ComplexSpectrogram& spec) {
  Tensor out({spec.frames, spec.bins});
  for (std::size_t i = 0; i < spec.data.size(); ++i) out[i] = std::abs(spec.data[i]);
  return out;
}

}  // namespace hfsda::dsp
