#include "hfsda/resample.hpp"

#include <cmath>
#include <numbers>
#include <numeric>

#include "hfsda/errors.hpp"

namespace hfsda {

namespace {

constexpr double kKaiserBeta = 8.0;
constexpr int kZeroCrossings = 24;
constexpr double kCutoffFraction = 0.92;

double bessel_i0(double x) {
  double sum = 1.0;
  double term = 1.0;
  const double q = x * x / 4.0;
  for (int k = 1; k < 200; ++k) {
    term *= q / (static_cast<double>(k) * k);
    sum += term;
    if (term < 1e-17 * sum) break;
  }
  return sum;
}

}  // namespace

PolyphaseResampler::PolyphaseResampler(int up, int down) {
  if (up < 1 || down < 1) throw InvalidInput("resampler factors must be positive");
  const int g = std::gcd(up, down);
  up_ = up / g;
  down_ = down / g;
  const int factor = std::max(up_, down_);
  half_length_ = kZeroCrossings * factor;
  const double cutoff = kCutoffFraction * 0.5 / factor;  // cycles per upsampled sample
  const double i0_beta = bessel_i0(kKaiserBeta);
  taps_.resize(static_cast<std::size_t>(2 * half_length_ + 1));
  for (int k = -half_length_; k <= half_length_; ++k) {
    const double x = 2.0 * cutoff * k;
    const double sinc = k == 0 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
    const double r = static_cast<double>(k) / half_length_;
    const double window = bessel_i0(kKaiserBeta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0_beta;
    // Gain `up` restores amplitude lost to zero insertion.
    taps_[static_cast<std::size_t>(k + half_length_)] = 2.0 * cutoff * sinc * window * up_;
  }
}

std::vector<double> PolyphaseResampler::process(std::span<const double> input) const {
  const long long n = static_cast<long long>(input.size());
  if (n == 0) return {};
  const long long out_len = (n * up_ + down_ - 1) / down_;
  std::vector<double> out(static_cast<std::size_t>(out_len));
  for (long long m = 0; m < out_len; ++m) {
    // Output sample m sits at upsampled position p = m * down.
    const long long p = m * down_;
    // Contributing inputs j satisfy |p - j*up| <= half_length.
    long long j_lo = (p - half_length_ + up_ - 1) / up_;
    if (p - half_length_ < 0) j_lo = -((half_length_ - p) / up_);
    long long j_hi = (p + half_length_) / up_;
    j_lo = std::max(j_lo, 0LL);
    j_hi = std::min(j_hi, n - 1);
    double acc = 0.0;
    for (long long j = j_lo; j <= j_hi; ++j) {
      const long long k = p - j * up_;
      acc += input[static_cast<std::size_t>(j)] * taps_[static_cast<std::size_t>(k + half_length_)];
    }
    out[static_cast<std::size_t>(m)] = acc;
  }
  return out;
}

std::vector<double> resample(std::span<const double> input, int from_rate, int to_rate) {
  if (from_rate <= 0 || to_rate <= 0) throw InvalidInput("sample rates must be positive");
  if (from_rate == to_rate) return {input.begin(), input.end()};
  return PolyphaseResampler(to_rate, from_rate).process(input);
}

}  // namespace hfsda
