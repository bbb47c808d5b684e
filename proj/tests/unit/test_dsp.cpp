#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "hfsda/dsp.hpp"
#include "hfsda/errors.hpp"
#include "testkit.hpp"

using namespace hfsda;
using dsp::Complex;

namespace {

double rel_l2(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num / den);
}

}  // namespace

TEST(StftConfig, DefaultsAreValid) {
  dsp::StftConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.bins(), 200);
  EXPECT_EQ(c.frames_for(24000), 151);
}

TEST(StftConfig, RejectsWindowLongerThanFft) {
  dsp::StftConfig c;
  c.win_length = 512;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(StftConfig, RejectsHopLongerThanWindow) {
  dsp::StftConfig c;
  c.hop_length = 401;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(Stft, ShapeFor24000Samples) {
  auto x = testkit::random_signal(24000, 1);
  auto s = dsp::stft(x, {});
  EXPECT_EQ(s.frames, 151);
  EXPECT_EQ(s.bins, 200);
  EXPECT_EQ(s.data.size(), 151u * 200u);
}

TEST(Stft, FrameCountLaw) {
  for (std::size_t n : {400u, 401u, 1000u, 16000u, 30000u, 67200u}) {
    auto s = dsp::stft(testkit::random_signal(n, n), {});
    EXPECT_EQ(s.frames, static_cast<int>(1 + n / 160)) << n;
  }
}

TEST(Stft, ZeroInZeroOut) {
  std::vector<double> x(24000, 0.0);
  auto s = dsp::stft(x, {});
  for (const auto& c : s.data) EXPECT_EQ(std::abs(c), 0.0);
}

TEST(Stft, SineMatchesDirectDftOfOneFrame) {
  const double pi = std::numbers::pi;
  std::vector<double> x(16000);
  for (std::size_t n = 0; n < x.size(); ++n) x[n] = std::sin(2 * pi * 1000.0 * n / 16000.0);
  auto s = dsp::stft(x, {});

  // Interior frame t starts at t*hop - win/2 in the unpadded signal.
  const int t = 40, N = 400;
  const int start = t * 160 - 200;
  int peak = -1;
  double best = -1;
  for (int k = 0; k < 200; ++k) {
    Complex acc = 0;
    for (int n = 0; n < N; ++n) {
      const double w = 0.54 - 0.46 * std::cos(2 * pi * n / N);
      acc += x[static_cast<std::size_t>(start + n)] * w * std::polar(1.0, -2 * pi * k * n / N);
    }
    EXPECT_NEAR(std::abs(s.at(t, k)), std::abs(acc), 1e-9 * (1 + std::abs(acc))) << k;
    if (std::abs(acc) > best) best = std::abs(acc), peak = k;
  }
  EXPECT_EQ(peak, 25);
  int stft_peak = 0;
  for (int k = 1; k < 200; ++k)
    if (std::abs(s.at(t, k)) > std::abs(s.at(t, stft_peak))) stft_peak = k;
  EXPECT_EQ(stft_peak, 25);
}

TEST(Istft, RoundTripRandom) {
  auto x = testkit::random_signal(24000, 7);
  auto y = dsp::istft(dsp::stft(x, {}));
  ASSERT_EQ(y.size(), x.size());
  EXPECT_LT(rel_l2(y, x), 1e-6);
}

TEST(Istft, RoundTripLengthsNotMultipleOfHop) {
  for (std::size_t n : {401u, 4321u, 26358u}) {
    auto x = testkit::random_signal(n, n);
    auto y = dsp::istft(dsp::stft(x, {}));
    ASSERT_EQ(y.size(), n);
    EXPECT_LT(rel_l2(y, x), 1e-6) << n;
  }
}

TEST(Istft, ZeroSpectrogramGivesZeroWaveform) {
  auto s = dsp::stft(std::vector<double>(8000, 0.0), {});
  for (double v : dsp::istft(s)) EXPECT_EQ(v, 0.0);
}

TEST(Istft, Linearity) {
  auto x = testkit::random_signal(24000, 3);
  auto s = dsp::stft(x, {});
  for (auto& c : s.data) c *= 2.0;
  auto y = dsp::istft(s);
  for (std::size_t i = 0; i < x.size(); ++i) ASSERT_NEAR(y[i], 2 * x[i], 1e-6);
}

TEST(Istft, AdjointIdentity) {
  // <istft(S), g> == <S, istft_adjoint(g)> over real and imaginary parts.
  auto x = testkit::random_signal(5000, 11);
  auto s = dsp::stft(testkit::random_signal(5000, 12), {});
  auto g = testkit::random_signal(5000, 13);
  auto y = dsp::istft(s);
  auto a = dsp::istft_adjoint(g, s.config, s.frames, 5000);
  double lhs = 0, rhs = 0;
  for (std::size_t i = 0; i < y.size(); ++i) lhs += y[i] * g[i];
  for (std::size_t i = 0; i < s.data.size(); ++i)
    rhs += s.data[i].real() * a.data[i].real() + s.data[i].imag() * a.data[i].imag();
  EXPECT_NEAR(lhs, rhs, 1e-8 * std::abs(lhs));
  (void)x;
}

TEST(ApplyMask, OnesAndZeros) {
  auto s = dsp::stft(testkit::random_signal(4000, 5), {});
  auto ones = dsp::apply_mask(s, dsp::Mask(Tensor({s.frames, s.bins}, 1.0)));
  auto zeros = dsp::apply_mask(s, dsp::Mask(Tensor({s.frames, s.bins}, 0.0)));
  for (std::size_t i = 0; i < s.data.size(); ++i) {
    EXPECT_EQ(ones.data[i], s.data[i]);
    EXPECT_EQ(std::abs(zeros.data[i]), 0.0);
  }
}

TEST(ApplyMask, HalfMaskHalvesMagnitudeKeepsPhase) {
  auto s = dsp::stft(testkit::random_signal(4000, 6), {});
  auto h = dsp::apply_mask(s, dsp::Mask(Tensor({s.frames, s.bins}, 0.5)));
  for (std::size_t i = 0; i < s.data.size(); ++i) {
    EXPECT_NEAR(std::abs(h.data[i]), 0.5 * std::abs(s.data[i]), 1e-12);
    if (std::abs(s.data[i]) > 1e-9) {
      EXPECT_NEAR(std::arg(h.data[i]), std::arg(s.data[i]), 1e-12);
    }
  }
}

TEST(ApplyMask, ShapeMismatchThrows) {
  auto s = dsp::stft(testkit::random_signal(4000, 6), {});
  EXPECT_THROW(dsp::apply_mask(s, dsp::Mask(Tensor({s.frames + 1, s.bins}, 0.5))), DimensionError);
}

TEST(Mask, RejectsOutOfRange) {
  EXPECT_THROW(dsp::Mask(Tensor({2, 2}, 1.5)), InvalidInput);
  EXPECT_THROW(dsp::Mask(Tensor({2, 2}, -0.1)), InvalidInput);
}

TEST(Magnitude, Basics) {
  dsp::ComplexSpectrogram s;
  s.frames = 1;
  s.bins = 2;
  s.data = {Complex(3, 4), Complex(0, 0)};
  auto m = dsp::magnitude(s);
  EXPECT_DOUBLE_EQ(m[0], 5.0);
  EXPECT_DOUBLE_EQ(m[1], 0.0);

  auto r = dsp::magnitude(dsp::stft(testkit::random_signal(3000, 9), {}));
  for (double v : r.values()) EXPECT_GE(v, 0.0);
}
