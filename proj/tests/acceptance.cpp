// Acceptance run: one PASS/FAIL line per criterion, exit status nonzero when
// any gating criterion fails. Criterion 10 needs DUALRAN_IEMOCAP_CORPUS and
// never gates.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <unistd.h>

#include "cli.hpp"
#include "dualran/checkpoint.hpp"
#include "dualran/data.hpp"
#include "dualran/errors.hpp"
#include "dualran/metrics.hpp"
#include "dualran/ops.hpp"
#include "dualran/synthetic.hpp"
#include "dualran/training.hpp"
#include "oracles.hpp"

using namespace dualran;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a = 0, double b = 0, double c = 0, double d = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d);
  return buf;
}

std::vector<double> values(const Tensord& t) { return {t.data().begin(), t.data().end()}; }

Tensord leaf(const std::vector<double>& v, Shape shape) { return Tensord::from_data(std::move(shape), v); }

void assign(Tensord& t, const std::vector<double>& v) {
  auto d = t.mutable_data();
  std::copy(v.begin(), v.end(), d.begin());
}

const nn::ForwardContext kEval{};

// ---------------------------------------------------------------- 1

Verdict gradient_integrity() {
  const auto start = Clock::now();
  const auto rows = cli::gradcheck_suite();
  const double secs = seconds_since(start);
  double worst = 0.0;
  std::string worst_block;
  std::set<std::string> seen;
  for (const auto& r : rows) {
    seen.insert(r.block);
    if (r.deviation >= worst) {
      worst = r.deviation;
      worst_block = r.block;
    }
  }
  bool covered = true;
  for (const char* b : {"linear", "layer-norm", "feed-forward", "lstm", "gru", "attention", "dual", "singlev1",
                        "singlev2"})
    covered = covered && seen.count(b);
  const bool pass = covered && worst < cli::kGradCheckTolerance && secs < 60.0;
  return {pass, fmt("%.0f blocks, worst %.2e", static_cast<double>(rows.size()), worst) + " (" + worst_block +
                    ")" + fmt(", %.2fs", secs) + (covered ? "" : ", missing blocks")};
}

// ---------------------------------------------------------------- 2

Verdict oracle_equivalence() {
  const auto start = Clock::now();
  std::mt19937_64 gen(2024);
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return std::uniform_int_distribution<std::size_t>(lo, hi)(gen);
  };
  constexpr int kTrials = 100;
  std::map<std::string, double> worst{{"matmul", 0}, {"softmax", 0}, {"layer_norm", 0}, {"lstm", 0}, {"attention", 0}};

  for (int trial = 0; trial < kTrials; ++trial) {
    {
      const std::size_t m = pick(1, 7), k = pick(1, 7), n = pick(1, 7);
      const auto a = oracle::random_mat(gen, m * k), b = oracle::random_mat(gen, k * n);
      const auto got = values(ops::matmul(leaf(a, {m, k}), leaf(b, {k, n})));
      worst["matmul"] = std::max(worst["matmul"], oracle::max_abs_diff(got, oracle::matmul(a, b, m, k, n)));
    }
    {
      const std::size_t r = pick(1, 6), c = pick(1, 9);
      const auto x = oracle::random_mat(gen, r * c, -20.0, 20.0);
      const auto got = values(ops::softmax(leaf(x, {r, c})));
      worst["softmax"] = std::max(worst["softmax"], oracle::max_abs_diff(got, oracle::softmax_rows(x, r, c)));
    }
    {
      const std::size_t r = pick(1, 6), d = pick(2, 12);
      ParamStore<double> store;
      auto p = nn::make_layer_norm(store, "ln", d);
      const auto g = oracle::random_mat(gen, d, 0.5, 1.5), s = oracle::random_mat(gen, d);
      assign(p.gain, g);
      assign(p.shift, s);
      const auto x = oracle::random_mat(gen, r * d, -3.0, 3.0);
      const auto got = values(nn::layer_norm(leaf(x, {r, d}), p));
      worst["layer_norm"] =
          std::max(worst["layer_norm"], oracle::max_abs_diff(got, oracle::layer_norm(x, g, s, r, d, p.epsilon)));
    }
    {
      const std::size_t T = pick(1, 6), d = pick(1, 6), h = pick(1, 5), len = pick(1, T);
      const bool reverse = trial % 2 == 1;
      ParamStore<double> store;
      Rng rng(static_cast<std::uint64_t>(trial));
      auto cell = make_rnn_cell(store, "c", RnnKind::Lstm, d, h, rng);
      const auto x = oracle::random_mat(gen, T * d);
      const auto got = values(rnn_direction(leaf(x, {T, d}), len, cell, reverse));
      const auto want =
          oracle::lstm(x, T, len, d, h, values(cell.w_ih), values(cell.w_hh), values(cell.b_ih), reverse);
      worst["lstm"] = std::max(worst["lstm"], oracle::max_abs_diff(got, want));
    }
    {
      const std::size_t heads = std::size_t{1} << pick(0, 2), d = heads * pick(1, 3), T = pick(1, 7);
      std::vector<std::uint8_t> mask(T, 1);
      const std::size_t valid = pick(1, T);
      std::fill(mask.begin() + static_cast<std::ptrdiff_t>(valid), mask.end(), 0);
      ParamStore<double> store;
      Rng rng(static_cast<std::uint64_t>(1000 + trial));
      auto p = make_mha(store, "a", d, heads, 0.0, rng);
      const oracle::AttentionWeights w{values(p.q.weight), values(p.q.bias), values(p.k.weight), values(p.k.bias),
                                       values(p.v.weight), values(p.v.bias), values(p.o.weight), values(p.o.bias)};
      const auto x = oracle::random_mat(gen, T * d, -2.0, 2.0);
      const auto got = values(multi_head_attention(leaf(x, {T, d}), mask, p, kEval));
      worst["attention"] = std::max(worst["attention"], oracle::max_abs_diff(got, oracle::attention(x, mask, T, d, heads, w)));
    }
  }
  const double secs = seconds_since(start);
  const double tol = 1e-10;
  bool pass = secs < 60.0;
  std::string detail = fmt("%.0f instances each;", kTrials);
  for (const auto& [name, w] : worst) {
    pass = pass && w < tol;
    detail += " " + name + fmt(" %.1e", w);
  }
  return {pass, detail + fmt("; tol %.0e, %.2fs", tol, secs)};
}

// ---------------------------------------------------------------- 3

Verdict architectural_discriminants() {
  const std::size_t T = 8, d = 16;
  double global_worst = 0.0, local_least = 1e300;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    ModelConfig mc;
    mc.feature_dim = d;
    mc.dropout = 0.0;
    const auto params = init_params<double>(mc, seed);
    Rng rng(mix_seed(seed, 33));
    const auto xv = normal_values<double>(rng, T * d, 1.0);
    const auto perm = rng.permutation(T);
    std::vector<double> pv(T * d);
    for (std::size_t i = 0; i < T; ++i)
      std::copy_n(xv.begin() + static_cast<std::ptrdiff_t>(perm[i] * d), d, pv.begin() + static_cast<std::ptrdiff_t>(i * d));
    const auto x = leaf(xv, {T, d}), px = leaf(pv, {T, d});
    const Mask mask = full_mask(T);

    auto compare = [&](const Tensord& a, const Tensord& b) {
      // Row i of f(Px) against row perm[i] of f(x).
      double diff = 0.0;
      const auto av = values(a), bv = values(b);
      for (std::size_t i = 0; i < T; ++i)
        for (std::size_t c = 0; c < d; ++c) diff = std::max(diff, std::abs(bv[i * d + c] - av[perm[i] * d + c]));
      return diff;
    };
    global_worst = std::max(global_worst, compare(global_stack(x, mask, params.global, kEval),
                                                  global_stack(px, mask, params.global, kEval)));
    local_least = std::min(local_least, compare(local_stack(x, T, params.local, kEval),
                                                local_stack(px, T, params.local, kEval)));
  }
  const bool pass = global_worst < 1e-5 && local_least > 1e-3;
  return {pass, fmt("20 seeds; global max diff %.1e (< 1e-5), local min diff %.2e (> 1e-3)", global_worst, local_least)};
}

// ---------------------------------------------------------------- 4

template <typename T>
void zero(Tensor<T>& t) {
  if (!t.defined()) return;
  for (auto& v : t.mutable_data()) v = T(0);
}

template <typename T>
bool same_values(const Tensor<T>& a, const Tensor<T>& b) {
  const auto av = a.data(), bv = b.data();
  if (av.size() != bv.size()) return false;
  for (std::size_t i = 0; i < av.size(); ++i)
    if (!(av[i] == bv[i])) return false;
  return true;
}

template <typename T>
int identity_failures() {
  ModelConfig mc;
  mc.feature_dim = 16;
  mc.dropout = 0.0;
  int failures = 0;
  for (RnnKind kind : {RnnKind::Lstm, RnnKind::Gru}) {
    mc.rnn = kind;
    auto params = init_params<T>(mc, 5);
    Rng rng(6);
    const std::size_t len = 9;
    const auto x = Tensor<T>::from_data({len, 16}, normal_values<T>(rng, len * 16, 1.0));
    const Mask mask = full_mask(len);
    for (auto& b : params.local) {
      zero(b.proj.weight);
      zero(b.proj.bias);
      zero(b.ffn.fc2.weight);
      zero(b.ffn.fc2.bias);
      failures += !same_values(local_block(x, len, b, kEval), x);
    }
    for (auto& b : params.global) {
      zero(b.mha.o.weight);
      zero(b.mha.o.bias);
      zero(b.ffn.fc2.weight);
      zero(b.ffn.fc2.bias);
      failures += !same_values(global_block(x, mask, b, kEval), x);
    }
    failures += !same_values(local_stack(x, len, params.local, kEval), x);
    failures += !same_values(global_stack(x, mask, params.global, kEval), x);
  }
  return failures;
}

Verdict skip_identity() {
  const int f32 = identity_failures<float>(), f64 = identity_failures<double>();
  return {f32 + f64 == 0, fmt("local/global blocks and stacks, LSTM and GRU, f32 and f64; %.0f mismatches",
                              static_cast<double>(f32 + f64))};
}

// ---------------------------------------------------------------- 5

// Shared settings for the full model and both ablations. Chosen once on a
// small grid over layers, dropout and learning rate; see the README.
struct BenchRun {
  double accuracy = 0.0;
  double ceiling = 0.0;
};

BenchRun benchmark_run(std::uint64_t seed, const std::string& ablation) {
  SyntheticSpec spec;  // k=2, noise 1.0, d=16, 4 classes, 500/100/100 dialogs
  spec.seed = seed;
  auto syn = generate_synthetic(spec);
  const auto tr = syn.corpus.subset("train"), va = syn.corpus.subset("val"), te = syn.corpus.subset("test");
  ModelConfig mc;
  mc.feature_dim = spec.dim;
  mc.num_classes = spec.num_classes;
  mc.local_layers = 2;
  mc.global_layers = 2;
  mc.heads = 4;
  mc.dropout = 0.3;
  mc.ablations = parse_ablations(ablation);
  TrainConfig tc;
  tc.learning_rate = 1e-3;
  tc.batch_size = 16;
  tc.max_epochs = 100;
  tc.seed = seed;
  tc.selection_metric = "accuracy";
  const auto res = train<float>(tr, &va, mc, tc);
  return {evaluate(res.params, te).report.accuracy, syn.ceilings.at("test").accuracy};
}

Verdict synthetic_benchmark() {
  const auto start = Clock::now();
  double dual_sum = 0.0, no_local_sum = 0.0, no_global_sum = 0.0, ceiling_sum = 0.0;
  bool per_seed = true;
  std::string rows;
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const auto dual = benchmark_run(seed, "");
    const auto no_local = benchmark_run(seed, "no-local");
    const auto no_global = benchmark_run(seed, "no-global");
    per_seed = per_seed && dual.accuracy > no_local.accuracy && dual.accuracy > no_global.accuracy;
    dual_sum += dual.accuracy;
    no_local_sum += no_local.accuracy;
    no_global_sum += no_global.accuracy;
    ceiling_sum += dual.ceiling;
    std::printf("  seed %llu: ceiling %.4f  dual %.4f  w/o L %.4f  w/o G %.4f\n",
                static_cast<unsigned long long>(seed), dual.ceiling, dual.accuracy, no_local.accuracy,
                no_global.accuracy);
    std::fflush(stdout);
  }
  const double dual = dual_sum / 3, no_local = no_local_sum / 3, no_global = no_global_sum / 3,
               ceiling = ceiling_sum / 3, secs = seconds_since(start);
  const bool pass = dual >= ceiling + 0.15 && per_seed && dual > no_local && dual > no_global && secs < 600.0;
  return {pass, fmt("mean dual %.4f vs ceiling %.4f (+%.1f pts); ", dual, ceiling, 100 * (dual - ceiling)) +
                    fmt("w/o L %.4f, w/o G %.4f; ", no_local, no_global) +
                    (per_seed ? "dual ahead on every seed" : "an ablation matched or beat dual on some seed") +
                    fmt("; %.1fs", secs)};
}

// ---------------------------------------------------------------- 6

DialogCorpus two_dialogs() {
  DialogCorpus c;
  c.feature_dim = 8;
  c.manifest = synthetic_manifest(4);
  Rng rng(77);
  for (int i = 0; i < 2; ++i) {
    Dialog d;
    d.id = "overfit-" + std::to_string(i);
    for (int t = 0; t < 7; ++t) {
      Turn turn;
      turn.features = normal_values<double>(rng, 8, 1.0);
      turn.speaker = t % 2;
      turn.label = static_cast<std::int64_t>(rng.below(4));
      d.turns.push_back(turn);
    }
    c.dialogs.push_back(d);
  }
  return c;
}

Verdict overfit() {
  const auto corpus = two_dialogs();
  ModelConfig mc;
  mc.feature_dim = 8;
  mc.num_classes = 4;
  mc.local_layers = 1;
  mc.global_layers = 1;
  mc.heads = 2;
  mc.dropout = 0.0;
  TrainConfig tc;
  tc.learning_rate = 1e-2;
  tc.batch_size = 2;
  tc.max_epochs = 200;
  tc.l2_factor = 0.0;
  tc.precision = "f64";
  const auto r = train<double>(corpus, nullptr, mc, tc);
  const auto batch = make_batch<double>(corpus, {0, 1}, mc.speaker_vocab);
  const double loss = batch_data_loss(r.params, batch, kEval).item();
  return {loss < 0.01, fmt("2 dialogs, 200 epochs: data loss %.2e (< 1e-2)", loss)};
}

// ---------------------------------------------------------------- 7

Verdict metric_oracle() {
  std::mt19937_64 gen(707);
  std::uniform_int_distribution<int> kdist(2, 8), cdist(0, 25), zdist(0, 4);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t k = static_cast<std::size_t>(kdist(gen));
    ConfusionMatrix cm(k);
    std::vector<std::pair<int, int>> pairs;
    for (std::size_t t = 0; t < k; ++t)
      for (std::size_t p = 0; p < k; ++p) {
        const int n = zdist(gen) == 0 ? 0 : cdist(gen);
        cm.at(t, p) = static_cast<std::uint64_t>(n);
        for (int i = 0; i < n; ++i) pairs.emplace_back(static_cast<int>(t), static_cast<int>(p));
      }
    const int neutral = trial % 4 == 0 ? -1 : static_cast<int>(static_cast<std::size_t>(trial) % k);
    const auto r = compute_metrics(cm, neutral < 0 ? std::nullopt : std::optional<std::size_t>(neutral));
    const auto o = oracle::metrics_from_pairs(pairs, static_cast<int>(k), neutral);
    for (double diff : {r.accuracy - o.accuracy, r.weighted_f1 - o.weighted_f1, r.macro_f1 - o.macro_f1,
                        r.micro_f1 - o.micro_f1, r.micro_f1_excl_neutral - o.micro_f1_excl})
      worst = std::max(worst, std::abs(diff));
  }
  ConfusionMatrix hand(2);
  hand.counts = {5, 5, 5, 5};
  const auto h = compute_metrics(hand);
  const bool hand_ok = h.accuracy == 0.5 && h.weighted_f1 == 0.5 && h.per_class_f1[0] == 0.5 && h.per_class_f1[1] == 0.5;
  return {worst < 1e-12 && hand_ok, fmt("100 matrices, max diff %.1e (< 1e-12); [[5,5],[5,5]] accuracy %.3f weighted F1 %.3f",
                                        worst, h.accuracy, h.weighted_f1)};
}

// ---------------------------------------------------------------- 8

Verdict sentiment_merge() {
  const std::map<std::string, std::map<std::string, std::string>> table = {
      {"iemocap",
       {{"sad", "negative"}, {"angry", "negative"}, {"frustrated", "negative"}, {"neutral", "neutral"},
        {"happy", "positive"}, {"excited", "positive"}}},
      {"meld", {{"negative", "negative"}, {"neutral", "neutral"}, {"positive", "positive"}}},
      {"emorynlp",
       {{"mad", "negative"}, {"sad", "negative"}, {"scared", "negative"}, {"neutral", "neutral"},
        {"joyful", "positive"}, {"peaceful", "positive"}, {"powerful", "positive"}}},
      {"dailydialog",
       {{"anger", "negative"}, {"sad", "negative"}, {"fear", "negative"}, {"disgust", "negative"},
        {"neutral", "neutral"}, {"happy", "positive"}, {"surprise", "positive"}}},
  };
  int checked = 0, wrong = 0;
  for (const auto& [dataset, rows] : table)
    for (const auto& [label, want] : rows) {
      ++checked;
      if (to_string(merge_sentiment(label, dataset)) != want) ++wrong;
    }
  // Every class of the emotion manifests has a sentiment.
  int unmapped = 0;
  for (const char* dataset : {"iemocap", "emorynlp", "dailydialog"})
    for (const auto& label : builtin_manifest(dataset).classes) {
      try {
        (void)merge_sentiment(label, dataset);
      } catch (const LabelError&) {
        ++unmapped;
      }
    }
  bool rejects = false;
  try {
    (void)merge_sentiment("bored", "iemocap");
  } catch (const LabelError&) {
    rejects = true;
  }
  return {wrong == 0 && unmapped == 0 && rejects,
          fmt("%.0f table entries, %.0f wrong; %.0f manifest labels unmapped; unknown label ", checked, wrong, unmapped) +
              (rejects ? "rejected" : "accepted")};
}

// ---------------------------------------------------------------- 9

Verdict determinism() {
  SyntheticSpec spec;
  spec.train_dialogs = 24;
  spec.val_dialogs = 0;
  spec.test_dialogs = 4;
  spec.seed = 9;
  const auto syn = generate_synthetic(spec);
  const auto tr = syn.corpus.subset("train");
  ModelConfig mc;
  mc.feature_dim = spec.dim;
  mc.num_classes = spec.num_classes;
  mc.dropout = 0.2;
  TrainConfig tc;
  tc.max_epochs = 1;
  tc.batch_size = 8;
  tc.seed = 21;
  const auto a = train<float>(tr, nullptr, mc, tc), b = train<float>(tr, nullptr, mc, tc);
  const double la = a.history.at(0).train_loss, lb = b.history.at(0).train_loss;
  const bool same_loss = std::memcmp(&la, &lb, sizeof la) == 0;

  // Round trip in both precisions: identical forward outputs.
  const fs::path file = fs::temp_directory_path() / ("dualran_acceptance_" + std::to_string(::getpid()) + ".bin");
  bool same_forward = true;
  auto check_round_trip = [&](const auto& params) {
    using T = typename std::decay_t<decltype(params.store.entries()[0].tensor.data())>::value_type;
    save_params(params, file.string());
    const auto back = load_params<std::remove_const_t<T>>(file.string(), params.config);
    const auto test = syn.corpus.subset("test");
    const auto batch = make_batch<std::remove_const_t<T>>(test, {0, 1, 2, 3}, mc.speaker_vocab);
    for (std::size_t i = 0; i < batch.size; ++i) {
      const auto in = batch.input(i, true);
      const auto fx = forward(params, in, kEval), fy = forward(back, in, kEval);
      const auto x = fx.probabilities.data(), y = fy.probabilities.data();
      same_forward = same_forward && x.size() == y.size() &&
                     std::memcmp(x.data(), y.data(), x.size() * sizeof(x[0])) == 0;
    }
  };
  check_round_trip(a.params);
  check_round_trip(init_params<double>(mc, 4));
  fs::remove(file);
  return {same_loss && same_forward, fmt("epoch-0 loss %.17g twice, ", la) +
                                         (same_loss ? "bit-identical" : "DIFFERENT") +
                                         "; checkpoint round trip (f32, f64) forward outputs " +
                                         (same_forward ? "bit-identical" : "DIFFER")};
}

// ---------------------------------------------------------------- 10

// Opt-in: DUALRAN_IEMOCAP_CORPUS names a corpus file with train / val / test
// split tags and IEMOCAP labels. DUALRAN_IEMOCAP_EPOCHS shortens the run.
std::pair<std::string, std::string> full_data() {
  const char* path = std::getenv("DUALRAN_IEMOCAP_CORPUS");
  if (!path || !*path) return {"SKIP", "set DUALRAN_IEMOCAP_CORPUS to a 1024-d IEMOCAP corpus to run"};
  try {
    const auto all = load_corpus(path, builtin_manifest("iemocap"));
    const auto tr = all.subset("train"), te = all.subset("test");
    auto va = all.subset("val");
    if (va.dialogs.empty()) va = all.subset("dev");
    const auto profile = cli::find_profile("iemocap");
    cli::RunSettings s;
    s.model = profile->model;
    s.train = profile->train;
    s.model["feature_dim"] = std::to_string(all.feature_dim);
    s.model["num_classes"] = "6";
    if (const char* e = std::getenv("DUALRAN_IEMOCAP_EPOCHS")) s.train["max_epochs"] = e;
    const auto mc = s.model_config();
    const auto tc = s.train_config();
    const auto start = Clock::now();
    const auto r = train<float>(tr, va.dialogs.empty() ? nullptr : &va, mc, tc);
    const auto ev = evaluate(r.params, te);
    const double wf1 = 100 * ev.report.weighted_f1;
    return {"INFO", fmt("test weighted F1 %.2f, accuracy %.2f (target band 66-71); %.0fs", wf1,
                        100 * ev.report.accuracy, seconds_since(start)) +
                        (wf1 >= 66 && wf1 <= 71 ? ", inside band" : ", outside band")};
  } catch (const std::exception& e) {
    return {"INFO", std::string("could not run: ") + e.what()};
  }
}

}  // namespace

int main() {
  struct Criterion {
    int id;
    const char* name;
    std::function<Verdict()> run;
  };
  const std::vector<Criterion> criteria = {
      {1, "gradient integrity", gradient_integrity},
      {2, "oracle equivalence", oracle_equivalence},
      {3, "architectural discriminants", architectural_discriminants},
      {4, "skip-connection identity", skip_identity},
      {5, "synthetic context benchmark", synthetic_benchmark},
      {6, "overfit smoke test", overfit},
      {7, "metric oracle", metric_oracle},
      {8, "sentiment merge fidelity", sentiment_merge},
      {9, "determinism and persistence", determinism},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    Verdict v;
    try {
      v = c.run();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    failed += !v.pass;
    std::printf("criterion %d %s: %s - %s\n", c.id, c.name, v.pass ? "PASS" : "FAIL", v.detail.c_str());
    std::fflush(stdout);
  }
  const auto [status, detail] = full_data();
  std::printf("criterion 10 full-data path: %s - %s\n", status.c_str(), detail.c_str());
  std::printf("%d of %zu gating criteria failed\n", failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
