#include <gtest/gtest.h>

#include <cmath>

#include "hfsda/wav.hpp"
#include "testkit.hpp"

using namespace hfsda;

TEST(FiniteDiff, QuadraticIsExact) {
  Tensor x = testkit::random_tensor({7}, 1);
  auto g = testkit::finite_diff_grad(
      [](const Tensor& t) {
        double s = 0;
        for (double v : t.values()) s += v * v;
        return s;
      },
      x);
  for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(g[i], 2 * x[i], 1e-8);
}

TEST(FiniteDiff, ConstantHasZeroGradient) {
  auto g = testkit::finite_diff_grad([](const Tensor&) { return 3.0; }, Tensor({4}, 1.0));
  for (double v : g.values()) EXPECT_EQ(v, 0.0);
}

TEST(FiniteDiff, NonFiniteValueIsAnOracleError) {
  EXPECT_THROW(testkit::finite_diff_grad([](const Tensor& t) { return std::log(t[0]); }, Tensor({1}, 0.0)),
               testkit::OracleError);
}

TEST(FiniteDiff, SpecValidation) {
  testkit::GradCheckSpec s;
  s.step = 0;
  EXPECT_THROW(s.validate(), testkit::OracleError);
  s = {};
  s.tolerance = -1;
  EXPECT_THROW(s.validate(), testkit::OracleError);
}

TEST(FiniteDiff, OdconvToyMatchesAnalytic) {
  // c_in = 1, c_out = 1, one 2x2 kernel plus a bottleneck of 4: 20 scalars
  // in the kernel and the kernel-selection head.
  odconv::OdconvShape s;
  s.c_in = 1;
  s.c_out = 1;
  s.n_kernels = 1;
  s.kernel_t = 2;
  s.kernel_f = 2;
  odconv::OdconvLayer layer("toy", s);
  ParamStore ps;
  Rng rng(2);
  layer.init(ps, rng);
  Tensor x = testkit::random_tensor({1, 4, 4}, 3);
  auto res = testkit::check_param_grads(
      ps, [&](Context& c) { return ag::sum(ag::mul(layer.forward(c, ag::Var::constant(x)), layer.forward(c, ag::Var::constant(x)))); });
  for (const auto& r : res) EXPECT_TRUE(r.ok) << r.name << " " << r.rel_error;
}

TEST(BruteForce, SingleKernelUnitAttentionIsPlainConvolution) {
  odconv::OdconvShape s;
  s.c_in = 1;
  s.c_out = 1;
  s.n_kernels = 1;
  Tensor w = testkit::random_tensor({1, 1, 1, 3, 3}, 4);
  Tensor x = testkit::random_tensor({1, 4, 5}, 5);
  Tensor y = testkit::bruteforce_eq1(w, testkit::unit_attention(s), x);
  // Written out directly for one interior and one corner position.
  auto X = [&](int t, int f) { return (t < 0 || t >= 4 || f < 0 || f >= 5) ? 0.0 : x[t * 5 + f]; };
  for (auto [t, f] : {std::pair{1, 2}, std::pair{0, 0}}) {
    double acc = 0;
    for (int a = 0; a < 3; ++a)
      for (int b = 0; b < 3; ++b) acc += w[a * 3 + b] * X(t + a - 1, f + b - 1);
    EXPECT_NEAR(y[t * 5 + f], acc, 1e-14);
  }
}

TEST(BruteForce, LinearInInput) {
  odconv::OdconvShape s;
  s.c_in = 2;
  s.c_out = 3;
  s.n_kernels = 2;
  Tensor w = testkit::random_tensor({2, 3, 2, 3, 3}, 6);
  auto attn = testkit::unit_attention(s);
  attn.alpha_w[0] = 0.3;
  attn.alpha_w[1] = 0.7;
  Tensor x = testkit::random_tensor({2, 4, 4}, 7);
  Tensor x2 = x;
  x2 *= 2.0;
  Tensor y = testkit::bruteforce_eq1(w, attn, x), y2 = testkit::bruteforce_eq1(w, attn, x2);
  for (std::size_t i = 0; i < y.size(); ++i) EXPECT_NEAR(y2[i], 2 * y[i], 1e-12);
}

TEST(BruteForce, RejectsLargeOrMismatchedInstances) {
  odconv::OdconvShape s;
  s.c_in = 1;
  s.c_out = 1;
  s.n_kernels = 1;
  EXPECT_THROW(testkit::bruteforce_eq1(Tensor({1, 1, 1, 3, 3}), testkit::unit_attention(s), Tensor({2, 4, 4})),
               testkit::OracleError);
  EXPECT_THROW(testkit::bruteforce_eq1(Tensor({1, 1, 1, 3, 3}), testkit::unit_attention(s), Tensor({1, 151, 200})),
               testkit::OracleError);
}

TEST(MiniCorpus, DeterministicMonoSixteenKilohertz) {
  auto a = testkit::scratch_dir("mc"), b = testkit::scratch_dir("mc");
  auto info = testkit::make_mini_corpus(a, 42);
  testkit::make_mini_corpus(b, 42);
  ASSERT_EQ(info.size(), 10u);
  for (const auto& p : info) {
    for (const char* sub : {"noisy", "clean"}) {
      auto fa = a / sub / (p.id + ".wav");
      EXPECT_TRUE(testkit::files_identical(fa, b / sub / (p.id + ".wav"))) << fa;
      auto audio = wav::read(fa);
      EXPECT_EQ(audio.sample_rate, 16000);
      EXPECT_EQ(audio.channels, 1);
      EXPECT_EQ(audio.samples.size(), p.samples);
    }
    EXPECT_GE(p.samples, 19200u);
    EXPECT_LE(p.samples, 64000u);
  }
}

TEST(MiniCorpus, MeasuredSnrMatchesLabel) {
  auto dir = testkit::scratch_dir("mc");
  auto info = testkit::make_mini_corpus(dir, 7);
  const double grid[4] = {0, 5, 10, 15};
  for (std::size_t i = 0; i < info.size(); ++i) {
    EXPECT_EQ(info[i].snr_db, grid[i % 4]);
    auto clean = wav::read(dir / "clean" / (info[i].id + ".wav")).samples;
    auto noisy = wav::read(dir / "noisy" / (info[i].id + ".wav")).samples;
    EXPECT_NEAR(testkit::measured_snr_db(clean, noisy), info[i].snr_db, 0.1) << info[i].id;
  }
}
