#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <numbers>

#include "hfsda/errors.hpp"
#include "hfsda/metrics.hpp"
#include "hfsda/random.hpp"
#include "hfsda/wav.hpp"
#include "testkit.hpp"

using namespace hfsda;
namespace fs = std::filesystem;

namespace {

constexpr double kPi = std::numbers::pi;

// Closed-form harmonic "speech" under a 3 Hz envelope and a deterministic
// chirp-plus-FM interferer; the same construction was scored with pystoi to
// obtain the reference values below.
std::vector<double> closed_form_clean() {
  std::vector<double> x(40000);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double t = i / 16000.0;
    const double env = 0.5 * (1 - std::cos(2 * kPi * 3.0 * t));
    x[i] = env * (std::sin(2 * kPi * 220 * t) + 0.6 * std::sin(2 * kPi * 440 * t + 0.3) +
                  0.4 * std::sin(2 * kPi * 880 * t + 1.1) + 0.3 * std::sin(2 * kPi * 1760 * t + 2.0) +
                  0.2 * std::sin(2 * kPi * 3100 * t + 0.7));
  }
  return x;
}

std::vector<double> closed_form_noise() {
  std::vector<double> x(40000);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double t = i / 16000.0;
    x[i] = 0.3 * std::sin(2 * kPi * (300 * t + 900 * t * t)) +
           0.2 * std::sin(2 * kPi * 2500 * t + 0.5 * std::sin(2 * kPi * 7 * t));
  }
  return x;
}

std::vector<double> mix_at_snr(const std::vector<double>& clean, std::uint64_t seed, double snr_db) {
  Rng rng(seed);
  std::vector<double> n(clean.size());
  double pc = 0, pn = 0;
  for (std::size_t i = 0; i < n.size(); ++i) {
    n[i] = rng.normal();
    pc += clean[i] * clean[i];
    pn += n[i] * n[i];
  }
  const double g = std::sqrt(pc / (pn * std::pow(10.0, snr_db / 10.0)));
  std::vector<double> y(clean);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += g * n[i];
  return y;
}

std::vector<double> speech_like() {
  auto mc = minicorpus::synthesize(21, 48000, 10.0);
  return mc.clean;
}

fs::path write_script(const fs::path& dir, const std::string& name, const std::string& body) {
  auto p = dir / name;
  std::ofstream f(p);
  f << "#!/bin/sh\n" << body << "\n";
  f.close();
  fs::permissions(p, fs::perms::owner_all);
  return p;
}

}  // namespace

TEST(Stoi, SelfSimilarity) {
  auto x = speech_like();
  EXPECT_GE(metrics::stoi(x, x), 0.99);
  auto c = closed_form_clean();
  EXPECT_GE(metrics::stoi(c, c), 0.99);
}

TEST(Stoi, AgreesWithReferenceImplementation) {
  // pystoi 0.4 on the closed-form pair, scaled interferer g = 0.5, 1, 2.
  // Measured gap is about 4e-4; the 16 -> 10 kHz resamplers differ.
  const double expected[3] = {0.8896069809966095, 0.8740854843250713, 0.854358823256313};
  const double gains[3] = {0.5, 1.0, 2.0};
  auto clean = closed_form_clean();
  auto noise = closed_form_noise();
  for (int k = 0; k < 3; ++k) {
    std::vector<double> y(clean);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] += gains[k] * noise[i];
    EXPECT_NEAR(metrics::stoi(y, clean), expected[k], 0.002) << gains[k];
  }
}

TEST(Stoi, LowAtMinusTenDecibels) {
  auto x = speech_like();
  EXPECT_LT(metrics::stoi(mix_at_snr(x, 3, -10.0), x), 0.5);
}

TEST(Stoi, MonotoneInSnr) {
  auto x = speech_like();
  double prev = -1;
  for (double snr : {-5.0, 0.0, 5.0, 10.0}) {
    const double s = metrics::stoi(mix_at_snr(x, 4, snr), x);
    EXPECT_GT(s, prev) << snr;
    prev = s;
  }
}

TEST(Stoi, AmplitudeScalingDoesNotMatter) {
  auto x = speech_like();
  auto y = mix_at_snr(x, 5, 0.0);
  const double base = metrics::stoi(y, x);
  for (double a : {0.1, 3.0}) {
    std::vector<double> xa(x), ya(y);
    for (double& v : xa) v *= a;
    for (double& v : ya) v *= a;
    EXPECT_NEAR(metrics::stoi(xa, xa), metrics::stoi(x, x), 1e-9) << a;
    EXPECT_NEAR(metrics::stoi(ya, x), base, 1e-9) << a;
  }
}

TEST(Stoi, InputErrors) {
  auto x = speech_like();
  std::vector<double> shorter(x.begin(), x.end() - 1);
  EXPECT_THROW(metrics::stoi(shorter, x), InvalidInput);
  std::vector<double> tiny(2000, 0.1);
  EXPECT_THROW(metrics::stoi(tiny, tiny), InvalidInput);
}

TEST(SiSdr, CapAndScaleInvariance) {
  auto x = testkit::random_signal(8000, 1);
  EXPECT_EQ(metrics::si_sdr(x, x), metrics::kSiSdrCap);
  std::vector<double> x3(x);
  for (double& v : x3) v *= 3;
  EXPECT_EQ(metrics::si_sdr(x3, x), metrics::kSiSdrCap);
}

TEST(SiSdr, ScaleInvarianceForAnyNonzeroGain) {
  auto ref = testkit::random_signal(8000, 5);
  auto est = testkit::random_signal(8000, 6);
  for (std::size_t i = 0; i < est.size(); ++i) est[i] += ref[i];
  const double base = metrics::si_sdr(est, ref);
  for (double a : {-2.5, -1.0, 1e-3, 7.0}) {
    std::vector<double> scaled(est);
    for (double& v : scaled) v *= a;
    EXPECT_NEAR(metrics::si_sdr(scaled, ref), base, 1e-9) << a;
  }
}

TEST(SiSdr, OrthogonalNoiseAtOneTenthIsTwentyDecibels) {
  std::vector<double> ref(16000), noise(16000);
  for (std::size_t i = 0; i < ref.size(); ++i) {
    ref[i] = std::sin(2 * kPi * 440.0 * i / 16000.0);
    noise[i] = 0.1 * std::cos(2 * kPi * 440.0 * i / 16000.0);  // orthogonal over whole periods
  }
  std::vector<double> est(ref);
  for (std::size_t i = 0; i < est.size(); ++i) est[i] += noise[i];
  EXPECT_NEAR(metrics::si_sdr(est, ref), 20.0, 0.01);
}

TEST(SiSdr, Errors) {
  auto x = testkit::random_signal(100, 2);
  EXPECT_EQ(metrics::si_sdr(std::vector<double>(100, 0.0), x), -metrics::kSiSdrCap);
  EXPECT_THROW(metrics::si_sdr(x, std::vector<double>(100, 0.0)), InvalidInput);
  EXPECT_THROW(metrics::si_sdr(x, std::vector<double>(99, 1.0)), InvalidInput);
}

TEST(SegSnr, Clamps) {
  auto x = testkit::random_signal(4800, 3);
  EXPECT_DOUBLE_EQ(metrics::seg_snr(x, x), 35.0);
  // The error equals the reference in every frame: 0 dB, not the lower clamp.
  EXPECT_NEAR(metrics::seg_snr(std::vector<double>(4800, 0.0), x), 0.0, 1e-12);
  std::vector<double> flipped(x);
  for (double& v : flipped) v = -3 * v;  // error 4x the reference: -12 dB, clamped
  EXPECT_DOUBLE_EQ(metrics::seg_snr(flipped, x), -10.0);
}

TEST(SegSnr, MeanOfFrameValues) {
  // Two 30 ms frames (480 samples) with SNRs of 0 dB and 20 dB.
  auto ref = testkit::random_signal(960, 4);
  std::vector<double> est(ref);
  for (std::size_t i = 0; i < 480; ++i) est[i] = 0.0;
  for (std::size_t i = 480; i < 960; ++i) est[i] = 1.1 * ref[i];
  EXPECT_NEAR(metrics::seg_snr(est, ref), 10.0, 1e-9);
}

TEST(ExternalTools, AbsentToolDegradesGracefully) {
  std::string warning;
  EXPECT_FALSE(metrics::external_pesq("a.wav", "b.wav", "", &warning).has_value());
  EXPECT_FALSE(metrics::external_pesq("a.wav", "b.wav", "/nonexistent/pesq {ref} {est}", &warning).has_value());
  EXPECT_FALSE(warning.empty());
}

TEST(ExternalTools, ParsesScores) {
  auto dir = testkit::scratch_dir("tools");
  auto pesq = write_script(dir, "pesq.sh", "echo \"comparing $1 $2\"; echo 'PESQ (MOS-LQO): 4.64'");
  auto comp = write_script(dir, "comp.sh", "echo 'Csig: 4.1 Cbak=3.2 covl 3.9'");
  auto p = metrics::external_pesq("e.wav", "r.wav", pesq.string() + " {ref} {est}");
  ASSERT_TRUE(p.has_value());
  EXPECT_DOUBLE_EQ(*p, 4.64);
  auto c = metrics::external_composite("e.wav", "r.wav", comp.string() + " {ref} {est}");
  ASSERT_TRUE(c.has_value());
  EXPECT_DOUBLE_EQ(c->csig, 4.1);
  EXPECT_DOUBLE_EQ(c->cbak, 3.2);
  EXPECT_DOUBLE_EQ(c->covl, 3.9);
}

TEST(Report, RoundTripAndMeans) {
  auto dir = testkit::scratch_dir("report");
  metrics::ScoreReport r;
  r.files.push_back({"a", 0.9, 12.5, 8.0, 3.1, std::nullopt, std::nullopt, std::nullopt});
  r.files.push_back({"b", 0.7, 2.5, 4.0, std::nullopt, 3.0, 2.0, 2.5});
  metrics::write_report(dir / "r.jsonl", r);
  auto back = metrics::read_report(dir / "r.jsonl");
  ASSERT_EQ(back.files.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back.files[i].id, r.files[i].id);
    EXPECT_EQ(back.files[i].stoi, r.files[i].stoi);
    EXPECT_EQ(back.files[i].si_sdr, r.files[i].si_sdr);
    EXPECT_EQ(back.files[i].seg_snr, r.files[i].seg_snr);
    EXPECT_EQ(back.files[i].pesq, r.files[i].pesq);
    EXPECT_EQ(back.files[i].csig, r.files[i].csig);
  }
  auto mean = r.corpus_mean();
  EXPECT_DOUBLE_EQ(mean.at("stoi"), 0.8);
  EXPECT_DOUBLE_EQ(mean.at("pesq"), 3.1);  // only "a" has it
  EXPECT_DOUBLE_EQ(mean.at("csig"), 3.0);
  std::ifstream f(dir / "r.jsonl");
  std::string first;
  std::getline(f, first);
  EXPECT_EQ(first.find("csig"), std::string::npos);
  EXPECT_FALSE(r.summary_table().empty());
}

TEST(EvaluateDirs, IdenticalDirectories) {
  auto dir = testkit::scratch_dir("eval");
  testkit::make_mini_corpus(dir, 8);
  auto report = metrics::evaluate_dirs(dir / "clean", dir / "clean");
  ASSERT_EQ(report.files.size(), 10u);
  auto mean = report.corpus_mean();
  EXPECT_GE(mean.at("stoi"), 0.99);
  EXPECT_EQ(mean.at("si_sdr"), metrics::kSiSdrCap);
  EXPECT_EQ(mean.count("pesq"), 0u);
}

TEST(EvaluateDirs, ExternalToolScoresIncluded) {
  auto dir = testkit::scratch_dir("eval");
  testkit::make_mini_corpus(dir, 9);
  auto tool = write_script(dir, "pesq.sh", "echo 4.5");
  metrics::EvaluateOptions opt;
  opt.pesq_cmd = tool.string() + " {ref} {est}";
  auto report = metrics::evaluate_dirs(dir / "noisy", dir / "clean", opt);
  for (const auto& f : report.files) EXPECT_EQ(f.pesq, 4.5);
  EXPECT_THROW(metrics::evaluate_dirs(dir / "noisy", dir / "nothing"), CorpusError);
}
