#include <benchmark/benchmark.h>

#include "dualran/synthetic.hpp"
#include "dualran/training.hpp"

using namespace dualran;

namespace {

ModelConfig bench_config(Variant v) {
  ModelConfig mc;
  mc.feature_dim = 16;
  mc.num_classes = 4;
  mc.variant = v;
  return mc;
}

const DialogCorpus& bench_corpus() {
  static const DialogCorpus corpus = [] {
    SyntheticSpec spec;
    spec.train_dialogs = 16;
    spec.val_dialogs = 0;
    spec.test_dialogs = 0;
    return generate_synthetic(spec).corpus;
  }();
  return corpus;
}

}  // namespace

static void BM_ModelForward(benchmark::State& state) {
  const auto params = init_params<float>(bench_config(static_cast<Variant>(state.range(0))), 1);
  const auto batch = make_batch<float>(bench_corpus(), {0}, params.config.speaker_vocab);
  const auto in = batch.input(0, true);
  NoGradGuard no_grad;
  for (auto _ : state) benchmark::DoNotOptimize(forward(params, in, nn::ForwardContext{}));
}
BENCHMARK(BM_ModelForward)->Arg(0)->Arg(1)->Arg(2)->ArgName("variant");

// One optimizer step on a 16-dialog batch: forward, backward, AdamW.
static void BM_TrainStep(benchmark::State& state) {
  auto params = init_params<float>(bench_config(Variant::Dual), 1);
  std::vector<std::size_t> order(16);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  const auto batch = make_batch<float>(bench_corpus(), order, params.config.speaker_vocab);
  auto opt = make_adamw_state(params.store);
  Rng rng(3);
  const nn::ForwardContext ctx{true, &rng};
  for (auto _ : state) {
    params.store.zero_grad();
    backward(batch_data_loss(params, batch, ctx));
    adamw_step(params.store, opt, AdamWHyper{});
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(batch.valid_count()));
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
