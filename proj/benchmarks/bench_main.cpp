#include <benchmark/benchmark.h>

#include <random>

#include "fadvlp/nn.hpp"
#include "fadvlp/ops.hpp"
#include "fadvlp/pipeline.hpp"
#include "fadvlp/runtime.hpp"

using namespace fadvlp;

namespace {

Tensor<float> random_tensor(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> dist;  // timing input only
  std::vector<float> v(shape_numel(shape));
  for (float& x : v) x = dist(rng);
  return Tensor<float>(shape, v);
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_tensor({n, n}, 1), b = random_tensor({n, n}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * 2 * n * n * n);
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(128)->Arg(256);

void BM_MatmulBackward(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  auto a = random_tensor({n, n}, 1), b = random_tensor({n, n}, 2);
  a.set_requires_grad(true);
  b.set_requires_grad(true);
  for (auto _ : state) {
    Tape<float> tape;
    Tape<float>::Scope scope(tape);
    tape.backward(sum(matmul(a, b)));
  }
}
BENCHMARK(BM_MatmulBackward)->Arg(64)->Arg(128);

// Causal self-attention over [32, 24, 64], the default text-encoder shape.
void BM_SelfAttention(benchmark::State& state) {
  ParameterStore<float> store(3);
  const auto params = AttentionParams<float>::create(store, "attn", 64, 4);
  const auto x = random_tensor({32, 24, 64}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(causal_self_attention(x, params));
}
BENCHMARK(BM_SelfAttention);

// One optimizer update at the default model size and batch 32.
void BM_TrainStep(benchmark::State& state) {
  configure_allocator();
  RunConfig rc;
  rc.seed = 5;
  rc.data.items = 300;
  const Corpus corpus = make_corpus(rc);
  const TripletDataset ds = make_triplets(corpus, rc);
  const HoldoutSplit split = make_split(corpus, rc);
  const TrainingData data(corpus, build_vocabulary(corpus, ds.triplets), split.train, ds.triplets,
                          rc.model.max_text_len);
  TrainerState trainer(effective_model_config(rc, data.vocab), 6);
  TrainConfig tc = effective_train_config(rc, "pretrain");
  const bool stage2 = state.range(0) == 2;
  tc.stage1_steps = stage2 ? 0 : 1;
  tc.stage2_steps = stage2 ? 1 : 0;
  for (auto _ : state) pretrain(trainer, data, tc);
}
BENCHMARK(BM_TrainStep)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

}  // namespace
BENCHMARK_MAIN();
