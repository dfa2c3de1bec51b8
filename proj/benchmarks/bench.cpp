#include <benchmark/benchmark.h>

#include "aio/data/synth.hpp"
#include "aio/numcore/ops.hpp"
#include "aio/pipeline/train.hpp"
#include "helpers.hpp"

using namespace aio;

namespace {

void BM_Matmul(benchmark::State& state) {
  const auto n = std::size_t(state.range(0));
  Rng rng(1);
  const auto a = testing::random_tensor({n, n}, rng), b = testing::random_tensor({n, n}, rng);
  NoGradScope off;
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * std::int64_t(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(96)->Arg(256);

void BM_Attention(benchmark::State& state) {
  const std::size_t blocks = 8, tokens = std::size_t(state.range(0)), d = 96;
  Rng rng(2);
  const auto q = testing::random_tensor({blocks * tokens, d}, rng), k = testing::random_tensor({blocks * tokens, d}, rng),
             v = testing::random_tensor({blocks * tokens, d}, rng);
  NoGradScope off;
  for (auto _ : state) benchmark::DoNotOptimize(attention(q, k, v, blocks, 4));
}
BENCHMARK(BM_Attention)->Arg(80)->Arg(320);

struct Setup {
  Config cfg;
  Vocab vocab = grammar_vocab();
  ModelConfig mc = ModelConfig::from(cfg, vocab.size());
  TrainOptions opt = TrainOptions::from(cfg);
  TrainingSet data;
  Model model;
  Batch batch;

  Setup() {
    ScenarioOptions so;
    so.frames = 8;
    std::vector<LoadedSequence> videos;
    for (std::uint64_t i = 0; i < opt.batch; ++i)
      videos.push_back(LoadedSequence::render(random_scenario("b" + std::to_string(i), 40 + i, so)));
    data = TrainingSet::from(std::move(videos), true);
    Rng rng(3);
    model = Model::create(mc, rng);
    batch = sample_batch(data, vocab, mc, opt, rng);
  }
};

void BM_Forward(benchmark::State& state) {
  Setup s;
  NoGradScope off;
  for (auto _ : state) benchmark::DoNotOptimize(forward(s.model, s.batch.input, false));
}
BENCHMARK(BM_Forward)->Unit(benchmark::kMillisecond);

void BM_TrainStep(benchmark::State& state) {
  Setup s;
  AdamW optim(s.model.params, s.opt.optim);
  for (auto _ : state) benchmark::DoNotOptimize(train_step(s.model, optim, s.batch, s.opt.weights, 1e-5));
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
