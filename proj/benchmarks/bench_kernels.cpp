#include <benchmark/benchmark.h>

#include "dualran/attention.hpp"
#include "dualran/ops.hpp"
#include "dualran/recurrence.hpp"

using namespace dualran;

namespace {

template <typename T>
Tensor<T> random_tensor(Shape shape, std::uint64_t seed, bool grad = false) {
  Rng rng(seed);
  return Tensor<T>::from_data(shape, normal_values<T>(rng, shape_numel(shape), 1.0), grad);
}

const nn::ForwardContext kEval{};

}  // namespace

static void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_tensor<float>({n, n}, 1), b = random_tensor<float>({n, n}, 2);
  for (auto _ : state) benchmark::DoNotOptimize(ops::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->Arg(16)->Arg(64)->Arg(256);

static void BM_Softmax(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto x = random_tensor<float>({n, n}, 3);
  for (auto _ : state) benchmark::DoNotOptimize(ops::softmax(x));
}
BENCHMARK(BM_Softmax)->Arg(16)->Arg(128);

static void BM_LayerNorm(benchmark::State& state) {
  const auto d = static_cast<std::size_t>(state.range(0));
  ParamStore<float> store;
  const auto p = nn::make_layer_norm(store, "ln", d);
  const auto x = random_tensor<float>({64, d}, 4);
  for (auto _ : state) benchmark::DoNotOptimize(nn::layer_norm(x, p));
}
BENCHMARK(BM_LayerNorm)->Arg(16)->Arg(1024);

static void BM_BiLstm(benchmark::State& state) {
  const auto T = static_cast<std::size_t>(state.range(0)), d = static_cast<std::size_t>(state.range(1));
  ParamStore<float> store;
  Rng rng(5);
  const auto fw = make_rnn_cell(store, "fw", RnnKind::Lstm, d, d / 2, rng);
  const auto bw = make_rnn_cell(store, "bw", RnnKind::Lstm, d, d / 2, rng);
  const auto x = random_tensor<float>({T, d}, 6);
  for (auto _ : state) benchmark::DoNotOptimize(rnn_bidir(x, T, fw, bw));
}
BENCHMARK(BM_BiLstm)->Args({16, 16})->Args({64, 64})->Args({64, 256});

static void BM_Attention(benchmark::State& state) {
  const auto T = static_cast<std::size_t>(state.range(0)), d = static_cast<std::size_t>(state.range(1));
  ParamStore<float> store;
  Rng rng(7);
  const auto p = make_mha(store, "mha", d, 4, 0.0, rng);
  const auto x = random_tensor<float>({T, d}, 8);
  const Mask mask = full_mask(T);
  for (auto _ : state) benchmark::DoNotOptimize(multi_head_attention(x, mask, p, kEval));
}
BENCHMARK(BM_Attention)->Args({16, 16})->Args({64, 64})->Args({64, 256});

static void BM_LocalBlockBackward(benchmark::State& state) {
  const auto T = static_cast<std::size_t>(state.range(0)), d = static_cast<std::size_t>(state.range(1));
  ParamStore<float> store;
  Rng rng(9);
  const auto p = make_local_block(store, "local", {d, d / 2, 2 * d, RnnKind::Lstm, nn::Activation::Relu, 0.0}, rng);
  const auto x = random_tensor<float>({T, d}, 10, true);
  for (auto _ : state) {
    store.zero_grad();
    backward(ops::sum(local_block(x, T, p, kEval)));
  }
}
BENCHMARK(BM_LocalBlockBackward)->Args({16, 16})->Args({64, 64});

static void BM_GlobalBlockBackward(benchmark::State& state) {
  const auto T = static_cast<std::size_t>(state.range(0)), d = static_cast<std::size_t>(state.range(1));
  ParamStore<float> store;
  Rng rng(11);
  const auto p = make_global_block(store, "global", {d, 4, 2 * d, nn::Activation::Relu, 0.0}, rng);
  const auto x = random_tensor<float>({T, d}, 12, true);
  const Mask mask = full_mask(T);
  for (auto _ : state) {
    store.zero_grad();
    backward(ops::sum(global_block(x, mask, p, kEval)));
  }
}
BENCHMARK(BM_GlobalBlockBackward)->Args({16, 16})->Args({64, 64});
