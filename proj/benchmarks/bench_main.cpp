#include <benchmark/benchmark.h>

#include <cmath>

#include "hfsda/dda.hpp"
#include "hfsda/dsp.hpp"
#include "hfsda/model.hpp"
#include "hfsda/odconv.hpp"
#include "hfsda/random.hpp"

using namespace hfsda;

namespace {

std::vector<double> noise(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> x(n);
  for (double& v : x) v = 0.3 * rng.normal();
  return x;
}

Tensor noise_tensor(const Shape& shape, std::uint64_t seed) {
  Tensor t(shape);
  Rng rng(seed);
  for (double& v : t.storage()) v = rng.normal();
  return t;
}

}  // namespace

// Argument: signal length in samples.
static void BM_Stft(benchmark::State& state) {
  auto x = noise(static_cast<std::size_t>(state.range(0)), 1);
  dsp::StftConfig cfg;
  for (auto _ : state) benchmark::DoNotOptimize(dsp::stft(x, cfg));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Stft)->Arg(24000)->Arg(64000)->Unit(benchmark::kMillisecond);

static void BM_Istft(benchmark::State& state) {
  auto spec = dsp::stft(noise(static_cast<std::size_t>(state.range(0)), 2), dsp::StftConfig{});
  for (auto _ : state) benchmark::DoNotOptimize(dsp::istft(spec));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Istft)->Arg(24000)->Arg(64000)->Unit(benchmark::kMillisecond);

// One ODConv layer at the default width on a 1.5 s magnitude map.
static void BM_OdconvForward(benchmark::State& state) {
  odconv::OdconvShape s;
  s.c_in = static_cast<int>(state.range(0));
  odconv::OdconvLayer layer("l", s);
  ParamStore ps;
  Rng rng(3);
  layer.init(ps, rng);
  Tensor x = noise_tensor({s.c_in, 151, 200}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(odconv::odconv_forward(x, layer, ps));
}
BENCHMARK(BM_OdconvForward)->Arg(1)->Arg(8)->Unit(benchmark::kMillisecond);

static void BM_BlockForward(benchmark::State& state) {
  dda::BlockShape shape;
  shape.kind = static_cast<dda::BlockKind>(state.range(0));
  dda::Block block("b", shape);
  ParamStore ps;
  Rng rng(5);
  block.init(ps, rng);
  Tensor x = noise_tensor({151, shape.dim}, 6);
  for (auto _ : state) {
    Context ctx(ps, false);
    benchmark::DoNotOptimize(block(ctx, ag::Var::constant(x)).value());
  }
  state.SetLabel(dda::to_string(shape.kind));
}
BENCHMARK(BM_BlockForward)
    ->Arg(static_cast<int>(dda::BlockKind::dda))
    ->Arg(static_cast<int>(dda::BlockKind::conformer))
    ->Unit(benchmark::kMillisecond);

static void BM_BlockForwardBackward(benchmark::State& state) {
  dda::BlockShape shape;
  dda::Block block("b", shape);
  ParamStore ps;
  Rng rng(7);
  block.init(ps, rng);
  Tensor x = noise_tensor({151, shape.dim}, 8);
  for (auto _ : state) {
    Context ctx(ps, true, 9);
    auto y = block(ctx, ag::Var::constant(x));
    ag::sum(y).backward();
    benchmark::DoNotOptimize(ctx.gradients());
  }
}
BENCHMARK(BM_BlockForwardBackward)->Unit(benchmark::kMillisecond);

static void BM_Enhance(benchmark::State& state) {
  HfsdaModel model(ModelConfig{});
  ParamStore ps = model.init_params(1);
  auto x = noise(static_cast<std::size_t>(state.range(0)), 10);
  for (auto _ : state) benchmark::DoNotOptimize(model.enhance(x, ps));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_Enhance)->Arg(24000)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
