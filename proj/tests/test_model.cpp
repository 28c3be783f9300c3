#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <random>

#include "dualran/checkpoint.hpp"
#include "dualran/errors.hpp"
#include "dualran/gradcheck.hpp"
#include "dualran/model.hpp"
#include "dualran/ops.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace dualran;
using testutil::values;

namespace fs = std::filesystem;

namespace {

const nn::ForwardContext kEval{false, nullptr};

ModelConfig small_config() {
  ModelConfig c;
  c.feature_dim = 8;
  c.local_layers = 1;
  c.global_layers = 2;
  c.heads = 2;
  c.num_classes = 5;
  c.speaker_vocab = 4;
  c.dropout = 0.0;
  return c;
}

fs::path temp_file(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "dualran_test_model";
  fs::create_directories(dir);
  return dir / name;
}

std::vector<char> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void write_bytes(const fs::path& p, const std::vector<char>& b) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out.write(b.data(), static_cast<std::streamsize>(b.size()));
}

}  // namespace

TEST(Model, ProbabilityRowsSumToOne) {
  ModelConfig c;  // 6 classes, d = 16
  std::mt19937_64 gen(41);
  const auto pd = init_params<double>(c, 3);
  const auto out = forward(pd, testutil::dialog<double>(gen, 10, 16), kEval);
  EXPECT_EQ(out.logits.shape(), (Shape{10, 6}));
  const auto p = values(out.probabilities);
  for (std::size_t r = 0; r < 10; ++r) {
    double s = 0.0;
    for (std::size_t k = 0; k < 6; ++k) s += p[r * 6 + k];
    EXPECT_NEAR(s, 1.0, 1e-12);
  }
  const auto pf = init_params<float>(c, 3);
  const auto outf = forward(pf, testutil::dialog<float>(gen, 10, 16), kEval);
  const auto q = values(outf.probabilities);
  for (std::size_t r = 0; r < 10; ++r) {
    double s = 0.0;
    for (std::size_t k = 0; k < 6; ++k) s += q[r * 6 + k];
    EXPECT_NEAR(s, 1.0, 1e-6);
  }
}

TEST(Model, DualMatchesComposition) {
  const auto c = small_config();
  const auto p = init_params<double>(c, 5);
  std::mt19937_64 gen(42);
  const auto in = testutil::dialog<double>(gen, 6, 8);
  const auto x = speaker_encode(p, in.features, in.speakers);
  // X = C + EMB(S) checked against the raw table
  const auto table = values(p.speakers->table);
  const auto xv = values(x), cv = values(in.features);
  for (std::size_t t = 0; t < 6; ++t)
    for (std::size_t j = 0; j < 8; ++j)
      EXPECT_DOUBLE_EQ(xv[t * 8 + j], cv[t * 8 + j] + table[static_cast<std::size_t>(in.speakers[t]) * 8 + j]);

  const auto l = values(local_stack(x, 6, p.local, kEval));
  const auto g = values(global_stack(x, in.mask, p.global, kEval));
  std::vector<double> joined;
  for (std::size_t t = 0; t < 6; ++t) {
    joined.insert(joined.end(), l.begin() + t * 8, l.begin() + (t + 1) * 8);
    joined.insert(joined.end(), g.begin() + t * 8, g.begin() + (t + 1) * 8);
  }
  const auto h = oracle::linear(joined, values(p.fusion->weight), nullptr, 6, 16, 8);
  const auto logits = oracle::linear(h, values(p.head.weight), nullptr, 6, 8, 5);
  const auto out = forward(p, in, kEval);
  EXPECT_LT(testutil::max_diff(values(out.logits), logits), 1e-12);
  EXPECT_LT(testutil::max_diff(values(out.probabilities), oracle::softmax_rows(logits, 6, 5)), 1e-12);
}

TEST(Model, SingleStreamVariantsCompose) {
  std::mt19937_64 gen(43);
  auto c = small_config();
  const auto in = testutil::dialog<double>(gen, 5, 8);
  std::vector<std::vector<double>> outs;
  for (Variant v : {Variant::Dual, Variant::SingleV1, Variant::SingleV2}) {
    c.variant = v;
    const auto p = init_params<double>(c, 9);
    const auto x = speaker_encode(p, in.features, in.speakers);
    const auto got = values(forward(p, in, kEval).logits);
    if (v != Variant::Dual) {
      const auto stacked = v == Variant::SingleV1
                               ? global_stack(local_stack(x, 5, p.local, kEval), in.mask, p.global, kEval)
                               : local_stack(global_stack(x, in.mask, p.global, kEval), 5, p.local, kEval);
      const auto expected = oracle::linear(values(stacked), values(p.head.weight), nullptr, 5, 8, 5);
      EXPECT_LT(testutil::max_diff(got, expected), 1e-12) << to_string(v);
      EXPECT_FALSE(p.fusion.has_value());
    }
    outs.push_back(got);
  }
  EXPECT_GT(testutil::max_diff(outs[0], outs[1]), 1e-6);
  EXPECT_GT(testutil::max_diff(outs[0], outs[2]), 1e-6);
  EXPECT_GT(testutil::max_diff(outs[1], outs[2]), 1e-6);
}

TEST(Model, ZeroedFusionColumnsIsolateStreams) {
  std::mt19937_64 gen(44);
  const auto c = small_config();
  const auto in = testutil::dialog<double>(gen, 6, 8);
  for (bool keep_local : {true, false}) {
    auto p = init_params<double>(c, 6);
    // W_gl is [d x 2d]; columns [0, d) read the local stream, [d, 2d) the global one.
    auto w = p.fusion->weight.mutable_data();
    for (std::size_t r = 0; r < 8; ++r)
      for (std::size_t col = 0; col < 16; ++col)
        if ((col < 8) != keep_local) w[r * 16 + col] = 0.0;
    const auto before = values(forward(p, in, kEval).logits);
    // Scramble the stream that was cut off.
    Rng noise(99);
    for (auto& e : p.store.entries()) {
      const bool is_local = e.name.rfind("local.", 0) == 0, is_global = e.name.rfind("global.", 0) == 0;
      if ((keep_local && is_global) || (!keep_local && is_local))
        for (auto& v : e.tensor.mutable_data()) v += noise.normal();
    }
    const auto after = values(forward(p, in, kEval).logits);
    EXPECT_LT(testutil::max_diff(before, after), 1e-12) << "keep_local " << keep_local;
  }
}

TEST(Model, SpeakerAblationIgnoresSpeakers) {
  std::mt19937_64 gen(45);
  auto c = small_config();
  const auto in = testutil::dialog<double>(gen, 5, 8);
  auto swapped = in;
  for (auto& s : swapped.speakers) s = 3 - s;
  {
    const auto p = init_params<double>(c, 2);
    EXPECT_GT(testutil::max_diff(values(forward(p, in, kEval).logits), values(forward(p, swapped, kEval).logits)),
              1e-9);
  }
  c.ablations.no_speaker = true;
  const auto p = init_params<double>(c, 2);
  EXPECT_FALSE(p.speakers.has_value());
  EXPECT_EQ(values(forward(p, in, kEval).logits), values(forward(p, swapped, kEval).logits));
  EXPECT_EQ(values(speaker_encode(p, in.features, in.speakers)), values(in.features));
}

TEST(Model, SpeakerLengthMismatchIsDimensionError) {
  const auto p = init_params<double>(small_config(), 1);
  const std::vector<std::int64_t> ids{0, 1};
  EXPECT_THROW(speaker_encode(p, Tensord::zeros({3, 8}), ids), DimensionError);
}

TEST(Model, PaddedTurnsDoNotLeak) {
  std::mt19937_64 gen(46);
  const auto c = small_config();
  const auto p = init_params<double>(c, 4);
  const auto in = testutil::dialog<double>(gen, 4, 8);
  DialogInput<double> padded;
  auto fv = values(in.features);
  for (int i = 0; i < 3 * 8; ++i) fv.push_back(123.0);
  padded.features = testutil::tensor({7, 8}, fv);
  padded.speakers = in.speakers;
  padded.speakers.insert(padded.speakers.end(), {2, 3, 0});
  padded.mask = {1, 1, 1, 1, 0, 0, 0};
  const auto a = values(forward(p, in, kEval).probabilities);
  const auto b = values(forward(p, padded, kEval).probabilities);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-12);
}

TEST(Model, ParamCountMatchesStore) {
  std::vector<ModelConfig> configs;
  ModelConfig base;
  configs.push_back(base);
  for (const char* a : {"no-local", "no-global", "no-speaker", "no-sc-both"}) {
    auto c = base;
    c.ablations.apply(a);
    configs.push_back(c);
  }
  for (Variant v : {Variant::SingleV1, Variant::SingleV2}) {
    auto c = base;
    c.variant = v;
    configs.push_back(c);
  }
  auto gru = base;
  gru.rnn = RnnKind::Gru;
  gru.local_layers = 3;
  gru.global_layers = 5;
  gru.feature_dim = 24;
  configs.push_back(gru);
  for (const auto& c : configs) {
    const auto p = init_params<float>(c, 1);
    EXPECT_EQ(p.store.count(), param_count(c)) << c.canonical_text();
  }
  // fusion and head alone: 2d*d + d*|E|
  auto c = base;
  c.ablations.no_speaker = true;
  const std::size_t d = c.feature_dim;
  const std::size_t blocks = c.local_layers * local_block_param_count({d, d / 2, 2 * d, RnnKind::Lstm,
                                                                       nn::Activation::Relu, 0.0}) +
                             c.global_layers * global_block_param_count({d, c.heads, 2 * d, nn::Activation::Relu, 0.0});
  EXPECT_EQ(param_count(c), blocks + 2 * d * d + d * c.num_classes);
}

TEST(Model, SharedComponentsShareInitialValues) {
  auto c = small_config();
  const auto dual = init_params<double>(c, 8);
  c.ablations.no_local = true;
  const auto no_local = init_params<double>(c, 8);
  EXPECT_EQ(values(dual.head.weight), values(no_local.head.weight));
  EXPECT_EQ(values(dual.global[0].mha.q.weight), values(no_local.global[0].mha.q.weight));
  EXPECT_TRUE(no_local.local.empty());
  EXPECT_FALSE(no_local.fusion.has_value());
}

TEST(Model, EndToEndGradCheck) {
  auto c = small_config();
  c.local_layers = 1;
  c.global_layers = 1;
  std::mt19937_64 gen(47);
  auto p = init_params<double>(c, 12);
  const auto in = testutil::dialog<double>(gen, 3, 8);
  const std::vector<std::int64_t> labels{1, 4, 0};
  std::vector<std::pair<std::string, Tensord>> leaves;
  for (auto& e : p.store.entries()) leaves.emplace_back(e.name, e.tensor);
  const auto r = grad_check_leaves(
      [&] {
        const auto out = forward(p, in, kEval);
        return ops::masked_nll(ops::log(out.probabilities), labels, in.mask);
      },
      leaves);
  EXPECT_LT(r.max_deviation, 1e-5) << r.worst_tensor << "[" << r.worst_index << "]";
  EXPECT_EQ(r.coordinates, p.store.count());
}

TEST(Model, CorruptedGradientIsCaught) {
  auto c = small_config();
  c.local_layers = 1;
  c.global_layers = 1;
  std::mt19937_64 gen(48);
  auto p = init_params<double>(c, 12);
  const auto in = testutil::dialog<double>(gen, 3, 8);
  const std::vector<std::int64_t> labels{1, 4, 0};
  std::vector<std::pair<std::string, Tensord>> leaves;
  for (auto& e : p.store.entries()) leaves.emplace_back(e.name, e.tensor);
  GradCheckOptions opt;
  opt.corrupt_analytic = true;
  const auto r = grad_check_leaves(
      [&] { return ops::cross_entropy(forward(p, in, kEval).logits, labels, in.mask); }, leaves, opt);
  EXPECT_GT(r.max_deviation, 1e-3);
}

TEST(Model, PredictBreaksTiesLow) {
  const auto probs = testutil::tensor({3, 3}, {0.5, 0.5, 0.0, 0.2, 0.3, 0.5, 0.3, 0.4, 0.3});
  EXPECT_EQ(predict(probs), (std::vector<std::int64_t>{0, 2, 1}));
}

TEST(Model, InvalidConfigsRejected) {
  auto bad = [](auto mutate) {
    ModelConfig c;
    mutate(c);
    return c;
  };
  const std::vector<ModelConfig> cases = {
      bad([](ModelConfig& c) { c.feature_dim = 0; }),
      bad([](ModelConfig& c) { c.num_classes = 0; }),
      bad([](ModelConfig& c) { c.dropout = 1.0; }),
      bad([](ModelConfig& c) { c.heads = 3; }),
      bad([](ModelConfig& c) { c.local_layers = 0; }),
      bad([](ModelConfig& c) { c.global_layers = 0; }),
      bad([](ModelConfig& c) { c.ablations.no_local = c.ablations.no_global = true; }),
      bad([](ModelConfig& c) {
        c.variant = Variant::SingleV1;
        c.ablations.no_local = true;
      }),
      bad([](ModelConfig& c) {
        c.ablations.no_local = true;
        c.ablations.no_skip_local = true;
      }),
      bad([](ModelConfig& c) { c.speaker_vocab = 0; }),
  };
  for (const auto& c : cases) EXPECT_THROW(c.validate(), ConfigError) << c.canonical_text();
  ModelConfig ok;
  ok.global_layers = 0;
  ok.ablations.no_global = true;
  EXPECT_NO_THROW(ok.validate());
}

TEST(Model, AblationNames) {
  const auto a = parse_ablations("no-sc-both,no-speaker");
  EXPECT_TRUE(a.no_skip_local && a.no_skip_global && a.no_speaker);
  EXPECT_FALSE(a.no_local || a.no_global);
  EXPECT_EQ(parse_ablations(a.to_string()), a);
  EXPECT_EQ(parse_ablations(""), Ablations{});
  EXPECT_THROW(parse_ablations("no-attention"), ConfigError);
  EXPECT_EQ(parse_variant(to_string(Variant::SingleV2)), Variant::SingleV2);
}

TEST(Model, ConfigHashIsStable) {
  ModelConfig a, b;
  EXPECT_EQ(a.hash(), b.hash());
  b.dropout = 0.2;
  EXPECT_NE(a.hash(), b.hash());
  // hidden_dim 0 resolves to d / 2, so the explicit value hashes the same
  b = a;
  b.hidden_dim = a.feature_dim / 2;
  EXPECT_EQ(a.hash(), b.hash());
  std::map<std::string, std::string> kv;
  auto c = small_config();
  c.rnn = RnnKind::Gru;
  c.ablations.no_speaker = true;
  for (auto& [k, v] : c.to_key_values()) kv[k] = v;
  EXPECT_EQ(ModelConfig::from_key_values(kv).canonical_text(), c.canonical_text());
  EXPECT_EQ(hash_hex(0xabcULL), "0000000000000abc");
}

TEST(Checkpoint, RoundTripIsExact) {
  auto c = small_config();
  c.rnn = RnnKind::Gru;
  const auto p = init_params<double>(c, 21);
  const auto path = temp_file("roundtrip.bin");
  save_params(p, path.string());
  const auto q = load_params<double>(path.string(), c);
  ASSERT_EQ(q.store.size(), p.store.size());
  for (std::size_t i = 0; i < p.store.size(); ++i) {
    EXPECT_EQ(q.store.entries()[i].name, p.store.entries()[i].name);
    EXPECT_EQ(values(q.store.entries()[i].tensor), values(p.store.entries()[i].tensor));
  }
  std::mt19937_64 gen(49);
  const auto in = testutil::dialog<double>(gen, 4, 8);
  EXPECT_EQ(values(forward(p, in, kEval).logits), values(forward(q, in, kEval).logits));
  EXPECT_EQ(read_checkpoint_header(path.string()).config_hash, c.hash());
}

TEST(Checkpoint, FloatLoadsAsDouble) {
  const auto c = small_config();
  const auto p = init_params<float>(c, 22);
  const auto path = temp_file("float.bin");
  save_params(p, path.string());
  const auto q = load_params<double>(path.string());
  for (std::size_t i = 0; i < p.store.size(); ++i)
    EXPECT_EQ(values(q.store.entries()[i].tensor), values(p.store.entries()[i].tensor));
}

TEST(Checkpoint, TruncationIsFormatError) {
  const auto p = init_params<double>(small_config(), 23);
  const auto path = temp_file("trunc.bin");
  save_params(p, path.string());
  auto bytes = read_bytes(path);
  for (std::size_t keep : {std::size_t{4}, std::size_t{30}, bytes.size() / 2, bytes.size() - 1}) {
    write_bytes(path, std::vector<char>(bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(keep)));
    EXPECT_THROW(load_params<double>(path.string()), FormatError) << keep;
  }
  bytes[0] = 'X';
  write_bytes(path, bytes);
  EXPECT_THROW(read_checkpoint_header(path.string()), FormatError);
  EXPECT_THROW(load_params<double>((temp_file("missing.bin")).string()), Error);
}

TEST(Checkpoint, HashMismatchQuotesBothHashes) {
  const auto c = small_config();
  const auto p = init_params<double>(c, 24);
  const auto path = temp_file("mismatch.bin");
  save_params(p, path.string());
  auto other = c;
  other.global_layers = 3;
  try {
    load_params<double>(path.string(), other);
    FAIL() << "expected FormatError";
  } catch (const FormatError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find(hash_hex(c.hash())), std::string::npos) << msg;
    EXPECT_NE(msg.find(hash_hex(other.hash())), std::string::npos) << msg;
  }
}
