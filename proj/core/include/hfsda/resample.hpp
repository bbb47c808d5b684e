#pragma once

#include <span>
#include <vector>

namespace hfsda {

// Rational polyphase resampler, up/down by integer factors.
//
// Filter: Kaiser-windowed sinc (beta = 8.0, about 80 dB stopband) with 24
// zero crossings on each side at the lower of the two rates. Cutoff sits at
// 0.92 of the lower Nyquist frequency so the transition band ends before
// aliasing starts. The filter is symmetric and centred, so the output has
// no group delay relative to the input. Output length is ceil(n * up / down).
class PolyphaseResampler {
 public:
  PolyphaseResampler(int up, int down);

  std::vector<double> process(std::span<const double> input) const;
  int up() const { return up_; }
  int down() const { return down_; }

 private:
  int up_;
  int down_;
  int half_length_;  // taps on each side of the centre, at the upsampled rate
  std::vector<double> taps_;
};

std::vector<double> resample(std::span<const double> input, int from_rate, int to_rate);

}  // namespace hfsda
