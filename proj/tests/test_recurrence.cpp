#include <gtest/gtest.h>

#include <random>

#include "dualran/errors.hpp"
#include "dualran/gradcheck.hpp"
#include "dualran/ops.hpp"
#include "dualran/recurrence.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace dualran;
using testutil::values;

namespace {

const nn::ForwardContext kEval{false, nullptr};

std::vector<double> oracle_direction(const Tensord& x, std::size_t length, const RnnCellParams<double>& c,
                                     bool reverse) {
  const std::size_t T = x.dim(0), d = x.dim(1), h = c.hidden_dim;
  if (c.kind == RnnKind::Lstm)
    return oracle::lstm(values(x), T, length, d, h, values(c.w_ih), values(c.w_hh), values(c.b_ih), reverse);
  return oracle::gru(values(x), T, length, d, h, values(c.w_ih), values(c.w_hh), values(c.b_ih), values(c.b_hh),
                     reverse);
}

LocalBlockShape shape_of(RnnKind kind) { return {6, 3, 12, kind, nn::Activation::Relu, 0.0}; }

class RnnKinds : public ::testing::TestWithParam<RnnKind> {};

}  // namespace

TEST_P(RnnKinds, DirectionMatchesOracle) {
  std::mt19937_64 gen(21);
  ParamStore<double> store;
  Rng rng(4);
  auto cell = make_rnn_cell(store, "cell", GetParam(), 5, 4, rng);
  const auto x = testutil::random_tensor(gen, {7, 5});
  for (std::size_t length : {7u, 4u, 1u}) {
    for (bool reverse : {false, true}) {
      const auto got = values(rnn_direction(x, length, cell, reverse));
      EXPECT_LT(testutil::max_diff(got, oracle_direction(x, length, cell, reverse)), 1e-12)
          << "length " << length << " reverse " << reverse;
    }
  }
}

TEST_P(RnnKinds, ZeroWeightsGiveZeroOutput) {
  ParamStore<double> store;
  Rng rng(4);
  auto f = make_rnn_cell(store, "f", GetParam(), 3, 2, rng);
  auto b = make_rnn_cell(store, "b", GetParam(), 3, 2, rng);
  for (auto& e : store.entries()) testutil::fill(e.tensor, 0.0);
  std::mt19937_64 gen(1);
  for (double v : values(rnn_bidir(testutil::random_tensor(gen, {4, 3}), 4, f, b))) EXPECT_EQ(v, 0.0);
}

TEST_P(RnnKinds, SingleTurnBothDirectionsAgree) {
  // With T = 1 each direction sees the same single input from a zero state.
  ParamStore<double> s1, s2;
  Rng r1(8), r2(8);
  auto f = make_rnn_cell(s1, "c", GetParam(), 4, 3, r1);
  auto b = make_rnn_cell(s2, "c", GetParam(), 4, 3, r2);
  std::mt19937_64 gen(2);
  const auto y = values(rnn_bidir(testutil::random_tensor(gen, {1, 4}), 1, f, b));
  ASSERT_EQ(y.size(), 6u);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(y[j], y[3 + j]);
}

TEST_P(RnnKinds, BidirIsConcatenationOfDirections) {
  std::mt19937_64 gen(22);
  ParamStore<double> store;
  Rng rng(5);
  auto f = make_rnn_cell(store, "f", GetParam(), 4, 3, rng);
  auto b = make_rnn_cell(store, "b", GetParam(), 4, 3, rng);
  const auto x = testutil::random_tensor(gen, {5, 4});
  const auto both = values(rnn_bidir(x, 5, f, b));
  const auto fw = oracle_direction(x, 5, f, false), bw = oracle_direction(x, 5, b, true);
  for (std::size_t t = 0; t < 5; ++t)
    for (std::size_t j = 0; j < 3; ++j) {
      EXPECT_NEAR(both[t * 6 + j], fw[t * 3 + j], 1e-12);
      EXPECT_NEAR(both[t * 6 + 3 + j], bw[t * 3 + j], 1e-12);
    }
}

TEST_P(RnnKinds, RnnPrimeIsProjectionOfBidir) {
  std::mt19937_64 gen(23);
  ParamStore<double> store;
  Rng rng(6);
  auto p = make_local_block(store, "blk", shape_of(GetParam()), rng);
  const auto x = testutil::random_tensor(gen, {5, 6});
  const auto bi = values(rnn_bidir(x, 5, p.forward_cell, p.backward_cell));
  const auto wb = values(p.proj.bias);
  const auto expected = oracle::linear(bi, values(p.proj.weight), &wb, 5, 6, 6);
  EXPECT_LT(testutil::max_diff(values(rnn_prime(x, 5, p, kEval)), expected), 1e-12);
}

TEST_P(RnnKinds, BlockMatchesHandComposition) {
  std::mt19937_64 gen(24);
  ParamStore<double> store;
  Rng rng(7);
  auto p = make_local_block(store, "blk", shape_of(GetParam()), rng);
  testutil::set_values(p.norm1.gain, oracle::random_mat(gen, 6, 0.5, 1.5));
  testutil::set_values(p.norm2.shift, oracle::random_mat(gen, 6));
  const std::size_t T = 4, d = 6;
  const auto xv = oracle::random_mat(gen, T * d);
  const auto x = testutil::tensor({T, d}, xv);

  auto ln = [&](const std::vector<double>& v, const nn::LayerNormParams<double>& n) {
    return oracle::layer_norm(v, values(n.gain), values(n.shift), T, d, n.epsilon);
  };
  const auto l1 = ln(xv, p.norm1);
  const auto bi = [&] {
    const auto f = oracle_direction(testutil::tensor({T, d}, l1), T, p.forward_cell, false);
    const auto b = oracle_direction(testutil::tensor({T, d}, l1), T, p.backward_cell, true);
    std::vector<double> out(T * 6);
    for (std::size_t t = 0; t < T; ++t)
      for (std::size_t j = 0; j < 3; ++j) {
        out[t * 6 + j] = f[t * 3 + j];
        out[t * 6 + 3 + j] = b[t * 3 + j];
      }
    return out;
  }();
  const auto pb = values(p.proj.bias);
  auto x_rnn = oracle::linear(bi, values(p.proj.weight), &pb, T, 6, d);
  for (std::size_t i = 0; i < x_rnn.size(); ++i) x_rnn[i] += xv[i];
  const auto l2 = ln(x_rnn, p.norm2);
  const auto b1 = values(p.ffn.fc1.bias), b2 = values(p.ffn.fc2.bias);
  auto hidden = oracle::linear(l2, values(p.ffn.fc1.weight), &b1, T, d, 12);
  for (auto& v : hidden) v = std::max(v, 0.0);
  auto out = oracle::linear(hidden, values(p.ffn.fc2.weight), &b2, T, 12, d);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += x_rnn[i];

  EXPECT_LT(testutil::max_diff(values(local_block(x, T, p, kEval)), out), 1e-10);
}

TEST_P(RnnKinds, ZeroedProjectionsGiveIdentity) {
  std::mt19937_64 gen(25);
  ParamStore<double> store;
  Rng rng(8);
  auto p = make_local_block(store, "blk", shape_of(GetParam()), rng);
  testutil::fill(p.proj.weight, 0.0);
  testutil::fill(p.proj.bias, 0.0);
  testutil::fill(p.ffn.fc2.weight, 0.0);
  testutil::fill(p.ffn.fc2.bias, 0.0);
  const auto x = testutil::random_tensor(gen, {5, 6});
  EXPECT_EQ(values(local_block(x, 5, p, kEval)), values(x));
}

TEST_P(RnnKinds, OutputDependsOnOrder) {
  std::mt19937_64 gen(26);
  ParamStore<double> store;
  Rng rng(9);
  auto p = make_local_block(store, "blk", shape_of(GetParam()), rng);
  auto xv = oracle::random_mat(gen, 5 * 6);
  const auto a = values(local_block(testutil::tensor({5, 6}, xv), 5, p, kEval));
  for (std::size_t c = 0; c < 6; ++c) std::swap(xv[0 * 6 + c], xv[1 * 6 + c]);
  const auto b = values(local_block(testutil::tensor({5, 6}, xv), 5, p, kEval));
  // Row 4 was untouched yet sees a different history.
  double diff = 0.0;
  for (std::size_t c = 0; c < 6; ++c) diff = std::max(diff, std::abs(a[4 * 6 + c] - b[4 * 6 + c]));
  EXPECT_GT(diff, 1e-6);
}

TEST_P(RnnKinds, PaddingDoesNotLeak) {
  std::mt19937_64 gen(27);
  ParamStore<double> store;
  Rng rng(10);
  std::vector<LocalBlockParams<double>> layers;
  layers.push_back(make_local_block(store, "l0", shape_of(GetParam()), rng));
  layers.push_back(make_local_block(store, "l1", shape_of(GetParam()), rng));
  const auto valid = oracle::random_mat(gen, 3 * 6);
  auto padded = valid;
  for (int i = 0; i < 4 * 6; ++i) padded.push_back(1e6);
  const auto short_out = values(local_stack(testutil::tensor({3, 6}, valid), 3, layers, kEval));
  const auto long_out = values(local_stack(testutil::tensor({7, 6}, padded), 3, layers, kEval));
  for (std::size_t i = 0; i < short_out.size(); ++i) EXPECT_EQ(short_out[i], long_out[i]);
}

TEST_P(RnnKinds, BlockGradCheck) {
  std::mt19937_64 gen(28);
  ParamStore<double> store;
  Rng rng(11);
  auto shape = shape_of(GetParam());
  shape.d = 4;
  shape.hidden = 2;
  shape.ff = 5;
  auto p = make_local_block(store, "blk", shape, rng);
  auto x = testutil::random_tensor(gen, {3, 4}, true);
  const auto w = testutil::random_tensor(gen, {3, 4});
  std::vector<std::pair<std::string, Tensord>> leaves{{"x", x}};
  for (auto& e : store.entries()) leaves.emplace_back(e.name, e.tensor);
  const auto r = grad_check_leaves([&] { return ops::sum(ops::mul(local_block(x, 3, p, kEval), w)); }, leaves);
  EXPECT_LT(r.max_deviation, 1e-5) << r.worst_tensor << "[" << r.worst_index << "]";
}

TEST_P(RnnKinds, ParamCountMatchesStore) {
  ParamStore<double> store;
  Rng rng(1);
  make_local_block(store, "blk", shape_of(GetParam()), rng);
  EXPECT_EQ(store.count(), local_block_param_count(shape_of(GetParam())));
}

INSTANTIATE_TEST_SUITE_P(Cells, RnnKinds, ::testing::Values(RnnKind::Lstm, RnnKind::Gru),
                         [](const auto& info) { return to_string(info.param); });

TEST(Recurrence, LengthBeyondSequenceIsContractError) {
  ParamStore<double> store;
  Rng rng(1);
  auto cell = make_rnn_cell(store, "c", RnnKind::Lstm, 2, 2, rng);
  EXPECT_THROW(rnn_direction(Tensord::zeros({3, 2}), 4, cell, false), ContractError);
}

TEST(Recurrence, EmptyStackIsConfigError) {
  std::vector<LocalBlockParams<double>> none;
  EXPECT_THROW(local_stack(Tensord::zeros({3, 4}), 3, none, kEval), ConfigError);
}

TEST(Recurrence, WithoutResidualDiffers) {
  std::mt19937_64 gen(29);
  ParamStore<double> store;
  Rng rng(12);
  auto p = make_local_block(store, "blk", shape_of(RnnKind::Lstm), rng);
  const auto x = testutil::random_tensor(gen, {4, 6});
  EXPECT_GT(testutil::max_diff(values(local_block(x, 4, p, kEval, false)), values(local_block(x, 4, p, kEval))),
            1e-6);
}

TEST(Recurrence, KindParsing) {
  EXPECT_EQ(parse_rnn_kind("gru"), RnnKind::Gru);
  EXPECT_EQ(parse_rnn_kind(to_string(RnnKind::Lstm)), RnnKind::Lstm);
  EXPECT_THROW(parse_rnn_kind("rnn"), ConfigError);
}
