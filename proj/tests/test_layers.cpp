#include <gtest/gtest.h>

#include <cmath>
#include <functional>

#include "morphtag/grad_check.hpp"
#include "morphtag/layers.hpp"
#include "oracles.hpp"

using namespace morphtag;

namespace {

Tensor<double> random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor<double> t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(-scale, scale);
  return t;
}

void perturb(ParamStore<double>& store, Rng& rng, double scale) {
  store.for_each([&](Param<double>& p) {
    for (double& v : p.value.values()) v += rng.uniform(-scale, scale);
  });
}

// Checks parameter and input gradients of a layer through the objective
// sum(r * forward(x)) for a fixed random r.
double layer_grad_error(ParamStore<double>& store, Shape input_shape,
                        const std::function<Tensor<double>(const Tensor<double>&)>& forward,
                        const std::function<Tensor<double>(const Tensor<double>&)>& backward, Rng& rng) {
  Param<double>& input = store.add("input", input_shape);
  for (double& v : input.value.values()) v = rng.uniform(-1.0, 1.0);
  const Tensor<double> probe = forward(input.value);
  const Tensor<double> r = random_tensor(probe.shape(), rng);
  const Objective f = [&](ParamStore<double>&, bool grad) {
    const Tensor<double> y = forward(input.value);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += r[i] * y[i];
    if (grad) {
      const Tensor<double> dx = backward(r);
      for (std::size_t i = 0; i < dx.size(); ++i) input.grad[i] += dx[i];
    }
    return s;
  };
  return grad_check(f, store).max_rel_err;
}

}  // namespace

TEST(EmbedOp, IdentityTableReturnsUnitRow) {
  const auto table = Tensor<double>::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  EXPECT_EQ(embed(table, 1).storage(), (std::vector<double>{0, 1, 0}));
}

TEST(EmbedOp, ReadsTheRequestedRow) {
  Rng rng(1);
  const auto table = random_tensor({5, 2}, rng);
  const auto row = embed(table, 4);
  EXPECT_EQ(row[0], table.at(4, 0));
  EXPECT_EQ(row[1], table.at(4, 1));
  EXPECT_THROW(embed(table, 5), IndexError);
}

TEST(EmbedOp, RepeatedIndexAccumulatesGradient) {
  ParamStore<double> store;
  Rng rng(2);
  Embedding<double> emb(store, "e", 4, 2, rng);
  const int ids[] = {3, 1, 3};
  emb.forward(ids);
  const auto d = Tensor<double>::matrix(3, 2, {1, 2, 10, 20, 100, 200});
  emb.backward(view(d));
  const Tensor<double>& g = emb.table().grad;
  EXPECT_EQ(g.at(3, 0), 101.0);
  EXPECT_EQ(g.at(3, 1), 202.0);
  EXPECT_EQ(g.at(1, 0), 10.0);
  EXPECT_EQ(g.at(0, 0), 0.0);
}

TEST(AffineOp, IdentityWeightsPassInputThrough) {
  const auto x = Tensor<double>::vector({0.5, -2.0, 3.0});
  const auto w = Tensor<double>::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  EXPECT_EQ(affine(x, w, Tensor<double>({3}), Activation::kNone).storage(), x.storage());
}

TEST(AffineOp, ZeroWeightsGiveActivatedBias) {
  const auto b = Tensor<double>::vector({0.3, -1.2});
  const auto y = affine(Tensor<double>::vector({5.0, 6.0, 7.0}), Tensor<double>({2, 3}), b, Activation::kTanh);
  EXPECT_DOUBLE_EQ(y[0], std::tanh(0.3));
  EXPECT_DOUBLE_EQ(y[1], std::tanh(-1.2));
}

TEST(AffineOp, RandomInstanceMatchesLoopOracle) {
  Rng rng(3);
  const auto x = random_tensor({4}, rng);
  const auto w = random_tensor({3, 4}, rng);
  const auto b = random_tensor({3}, rng);
  for (const Activation a : {Activation::kNone, Activation::kTanh, Activation::kRelu, Activation::kSigmoid}) {
    const auto y = affine(x, w, b, a);
    for (std::size_t i = 0; i < 3; ++i) {
      double s = b[i];
      for (std::size_t j = 0; j < 4; ++j) s += w.at(i, j) * x[j];
      EXPECT_NEAR(y[i], oracle::act(a, s), 1e-14);
    }
  }
}

TEST(Conv1dOp, WidthOneIdentityFiltersCopyInput) {
  Rng rng(4);
  const auto x = random_tensor({5, 3}, rng);
  Tensor<double> w({3, 1, 3});
  for (std::size_t f = 0; f < 3; ++f) w[f * 3 + f] = 1.0;
  const auto y = conv1d(x, w, Tensor<double>({3}), Activation::kNone);
  EXPECT_EQ(y.storage(), x.storage());
}

TEST(Conv1dOp, ShortInputPaddedToFilterWidth) {
  Rng rng(5);
  const auto y = conv1d(random_tensor({3, 2}, rng), random_tensor({4, 5, 2}, rng), random_tensor({4}, rng),
                        Activation::kRelu);
  EXPECT_EQ(y.shape(), (Shape{1, 4}));
}

TEST(Conv1dOp, RandomInstanceMatchesSlidingWindowOracle) {
  Rng rng(6);
  const auto x = random_tensor({7, 3}, rng);
  const auto w = random_tensor({2, 3, 3}, rng);
  const auto b = random_tensor({2}, rng);
  const auto y = conv1d(x, w, b, Activation::kTanh);
  EXPECT_EQ(y.shape(), (Shape{5, 2}));
  EXPECT_LT(oracle::max_rel_err(y, oracle::conv1d(x, w, b, Activation::kTanh)), 1e-12);
}

TEST(Conv1dOp, PadRowFillsMissingPositions) {
  const auto x = Tensor<double>::matrix(1, 1, {2.0});
  const auto w = Tensor<double>({1, 3, 1}, 1.0);
  const double pad[] = {0.5};
  const auto y = conv1d(x, w, Tensor<double>({1}), Activation::kNone, std::span<const double>(pad));
  EXPECT_DOUBLE_EQ(y[0], 3.0);
}

TEST(MaxPoolOp, SingleStepIsIdentity) {
  const auto x = Tensor<double>::matrix(1, 3, {1, -2, 3});
  EXPECT_EQ(max_pool_over_time(x).values.storage(), x.storage());
}

TEST(MaxPoolOp, ColumnMaxima) {
  const auto r = max_pool_over_time(Tensor<double>::matrix(2, 2, {1, 5, 3, 2}));
  EXPECT_EQ(r.values.storage(), (std::vector<double>{3, 5}));
  EXPECT_EQ(r.argmax, (std::vector<std::size_t>{1, 0}));
}

TEST(MaxPoolOp, TiesRouteGradientToFirstRow) {
  const auto x = Tensor<double>::matrix(3, 2, {4, 4, 4, 4, 4, 4});
  MaxPoolOverTime<double> pool;
  const std::size_t lens[] = {3};
  const auto y = pool.forward(view(x), RaggedLayout::from_lengths(lens));
  EXPECT_EQ(y.storage(), (std::vector<double>{4, 4}));
  const auto dx = pool.backward(view(Tensor<double>::matrix(1, 2, {1, 2})));
  EXPECT_EQ(dx.storage(), (std::vector<double>{1, 2, 0, 0, 0, 0}));
}

TEST(LstmStepOp, ZeroWeightsAndStateGiveZeroOutput) {
  const Tensor<double> wx({8, 3}), wh({8, 2}), b({8});
  const auto next = lstm_step(Tensor<double>::vector({1, 2, 3}), LstmState<double>::zeros(2), {wx, wh, b});
  for (const double v : next.h.values()) EXPECT_EQ(v, 0.0);
  for (const double v : next.c.values()) EXPECT_EQ(v, 0.0);
}

TEST(LstmStepOp, SaturatedForgetAndClosedInputKeepCell) {
  const std::size_t h = 2;
  const Tensor<double> wx({4 * h, 3}), wh({4 * h, h});
  Tensor<double> b({4 * h});
  for (std::size_t k = 0; k < h; ++k) {
    b[k] = -40.0;     // input gate closed
    b[h + k] = 40.0;  // forget gate open
  }
  LstmState<double> s{Tensor<double>::vector({0.1, -0.4}), Tensor<double>::vector({0.7, -1.3})};
  const auto next = lstm_step(Tensor<double>::vector({1, -1, 2}), s, {wx, wh, b});
  EXPECT_NEAR(next.c[0], 0.7, 1e-12);
  EXPECT_NEAR(next.c[1], -1.3, 1e-12);
}

TEST(LstmStepOp, RandomInstanceMatchesGateEquations) {
  Rng rng(7);
  const auto wx = random_tensor({8, 3}, rng), wh = random_tensor({8, 2}, rng), b = random_tensor({8}, rng);
  const auto x = random_tensor({3}, rng);
  LstmState<double> s{random_tensor({2}, rng), random_tensor({2}, rng)};
  const auto next = lstm_step(x, s, {wx, wh, b});
  const auto o = oracle::lstm_step(x.storage(), s.h.storage(), s.c.storage(), wx, wh, b);
  EXPECT_LT(oracle::max_rel_err(next.h, o.h), 1e-13);
  EXPECT_LT(oracle::max_rel_err(next.c, o.c), 1e-13);
}

TEST(HighwayOp, ClosedGateCarriesInput) {
  Rng rng(8);
  const auto x = random_tensor({4}, rng);
  const auto wh = random_tensor({4, 4}, rng), bh = random_tensor({4}, rng);
  const Tensor<double> wt({4, 4});
  const Tensor<double> bt({4}, -60.0);
  const auto y = highway(x, {wh, bh, wt, bt});
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(y[i], x[i], 1e-12);
}

TEST(HighwayOp, OpenGateGivesTransform) {
  Rng rng(9);
  const auto x = random_tensor({4}, rng);
  const auto wh = random_tensor({4, 4}, rng), bh = random_tensor({4}, rng);
  const Tensor<double> wt({4, 4});
  const Tensor<double> bt({4}, 60.0);
  const auto y = highway(x, {wh, bh, wt, bt});
  const auto h = affine(x, wh, bh, Activation::kRelu);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(y[i], h[i], 1e-12);
}

TEST(HighwayOp, RandomInstanceMatchesFormula) {
  Rng rng(10);
  const auto x = random_tensor({4}, rng);
  const auto wh = random_tensor({4, 4}, rng), bh = random_tensor({4}, rng);
  const auto wt = random_tensor({4, 4}, rng), bt = random_tensor({4}, rng);
  EXPECT_LT(oracle::max_rel_err(highway(x, {wh, bh, wt, bt}), oracle::highway(x.storage(), wh, bh, wt, bt)), 1e-13);
}

TEST(DropoutOp, KeepProbOneIsIdentity) {
  Rng rng(11);
  const auto x = random_tensor({50}, rng);
  EXPECT_EQ(dropout(x, 1.0, Mode::kTrain, rng).storage(), x.storage());
  EXPECT_EQ(dropout(x, 1.0, Mode::kEval, rng).storage(), x.storage());
}

TEST(DropoutOp, EvalModeIsIdentity) {
  Rng rng(12);
  const auto x = random_tensor({50}, rng);
  EXPECT_EQ(dropout(x, 0.3, Mode::kEval, rng).storage(), x.storage());
}

TEST(DropoutOp, InvertedScalingPreservesMean) {
  Rng rng(13);
  const std::size_t n = 100000;
  const double p = 0.7;
  const auto y = dropout(Tensor<double>({n}, 1.0), p, Mode::kTrain, rng);
  double mean = 0.0;
  std::size_t kept = 0;
  for (const double v : y.values()) {
    mean += v;
    if (v != 0.0) {
      ++kept;
      ASSERT_NEAR(v, 1.0 / p, 1e-12);
    }
  }
  mean /= double(n);
  const double sigma = std::sqrt((1.0 - p) / p / double(n));
  EXPECT_LT(std::fabs(mean - 1.0), 3.0 * sigma);
  EXPECT_GT(kept, 0u);
}

TEST(Init, GlorotBoundsForgetBiasAndHighwayGateBias) {
  ParamStore<double> store;
  Rng rng(14);
  Lstm<double> lstm(store, "l", 6, 4, rng);
  Highway<double> hw(store, "h", 5, rng);
  Affine<double> out(store, "o", 6, 3, Activation::kNone, rng);
  const double limit = std::sqrt(6.0 / (6.0 + 3.0));
  for (const double v : store.get("o.w").value.values()) EXPECT_LE(std::fabs(v), limit);
  for (const double v : store.get("o.b").value.values()) EXPECT_EQ(v, 0.0);
  const auto& b = store.get("l.b").value;
  for (std::size_t k = 0; k < 16; ++k) EXPECT_EQ(b[k], (k >= 4 && k < 8) ? 1.0 : 0.0);
  for (const double v : store.get("h.gate.b").value.values()) EXPECT_EQ(v, -2.0);
}

TEST(LayerGradients, Affine) {
  for (const Activation a : {Activation::kNone, Activation::kTanh, Activation::kSigmoid}) {
    ParamStore<double> store;
    Rng rng(20);
    Affine<double> layer(store, "a", 4, 3, a, rng);
    perturb(store, rng, 0.3);
    const double err = layer_grad_error(
        store, {5, 4}, [&](const Tensor<double>& x) { return layer.forward(view(x)); },
        [&](const Tensor<double>& d) { return layer.backward(view(d)); }, rng);
    EXPECT_LT(err, 1e-4);
  }
}

TEST(LayerGradients, Conv1dWithPooling) {
  ParamStore<double> store;
  Rng rng(21);
  Conv1d<double> conv(store, "c", 3, 3, 4, Activation::kTanh, rng);
  perturb(store, rng, 0.3);
  MaxPoolOverTime<double> pool;
  const std::size_t lens[] = {5, 1, 3};
  const RaggedLayout layout = RaggedLayout::from_lengths(lens);
  const double err = layer_grad_error(
      store, {9, 3},
      [&](const Tensor<double>& x) {
        RaggedLayout out;
        const Tensor<double> y = conv.forward(view(x), layout, &out);
        return pool.forward(view(y), out);
      },
      [&](const Tensor<double>& d) {
        const Tensor<double> dy = pool.backward(view(d));
        return conv.backward(view(dy));
      },
      rng);
  EXPECT_LT(err, 1e-4);
}

TEST(LayerGradients, LstmOverPackedBatch) {
  ParamStore<double> store;
  Rng rng(22);
  Lstm<double> lstm(store, "l", 3, 4, rng);
  perturb(store, rng, 0.3);
  const std::size_t lens[] = {2, 4, 1};
  const PackedLayout layout = PackedLayout::from_lengths(lens);
  const double err = layer_grad_error(
      store, {7, 3}, [&](const Tensor<double>& x) { return lstm.forward(view(x), layout, Mode::kEval, rng); },
      [&](const Tensor<double>& d) { return lstm.backward(view(d)); }, rng);
  EXPECT_LT(err, 1e-4);
}

TEST(LayerGradients, BiLstmOverPackedBatch) {
  ParamStore<double> store;
  Rng rng(23);
  BiLstm<double> bi(store, "b", 3, 2, rng);
  perturb(store, rng, 0.3);
  const std::size_t lens[] = {3, 3, 2};
  const PackedLayout layout = PackedLayout::from_lengths(lens);
  const double err = layer_grad_error(
      store, {8, 3}, [&](const Tensor<double>& x) { return bi.forward(view(x), layout, Mode::kEval, rng); },
      [&](const Tensor<double>& d) { return bi.backward(view(d)); }, rng);
  EXPECT_LT(err, 1e-4);
}

TEST(LayerGradients, Highway) {
  ParamStore<double> store;
  Rng rng(24);
  Highway<double> hw(store, "h", 5, rng);
  perturb(store, rng, 0.5);
  const double err = layer_grad_error(
      store, {3, 5}, [&](const Tensor<double>& x) { return hw.forward(view(x)); },
      [&](const Tensor<double>& d) { return hw.backward(view(d)); }, rng);
  EXPECT_LT(err, 1e-4);
}

TEST(LayerGradients, RecurrentDropoutMaskIsDifferentiable) {
  for (const RecurrentDropout kind : {RecurrentDropout::kPerStep, RecurrentDropout::kPerSequence}) {
    ParamStore<double> store;
    Rng rng(25);
    Lstm<double> lstm(store, "l", 2, 3, rng, 0.6, kind);
    perturb(store, rng, 0.3);
    const std::size_t lens[] = {3, 2};
    const PackedLayout layout = PackedLayout::from_lengths(lens);
    // Re-seeding per call keeps the mask fixed across finite-difference evaluations.
    const double err = layer_grad_error(
        store, {5, 2},
        [&](const Tensor<double>& x) {
          Rng mask_rng(99);
          return lstm.forward(view(x), layout, Mode::kTrain, mask_rng);
        },
        [&](const Tensor<double>& d) { return lstm.backward(view(d)); }, rng);
    EXPECT_LT(err, 1e-4);
  }
}

TEST(LstmLayer, PackedSequencesEqualComposedSteps) {
  ParamStore<double> store;
  Rng rng(30);
  Lstm<double> lstm(store, "l", 3, 4, rng);
  perturb(store, rng, 0.5);
  const std::size_t lens[] = {2, 5, 1, 5};
  const PackedLayout layout = PackedLayout::from_lengths(lens);
  const auto x = random_tensor({layout.total, 3}, rng);
  const auto y = lstm.forward(view(x), layout, Mode::kEval, rng);
  const LstmWeights<double> w = lstm.weights();
  for (std::size_t s = 0; s < 4; ++s) {
    LstmState<double> state = LstmState<double>::zeros(4);
    for (std::size_t t = 0; t < lens[s]; ++t) {
      const std::size_t r = layout.row(s, t);
      Tensor<double> xt({3});
      for (std::size_t j = 0; j < 3; ++j) xt[j] = x.at(r, j);
      state = lstm_step(xt, state, w);
      for (std::size_t k = 0; k < 4; ++k) EXPECT_NEAR(y.at(r, k), state.h[k], 1e-12);
    }
  }
}

TEST(PackedLayoutTest, SortsByLengthStablyAndReversalIsInvolution) {
  const std::size_t lens[] = {2, 3, 3, 1};
  const PackedLayout p = PackedLayout::from_lengths(lens);
  EXPECT_EQ(p.order, (std::vector<std::size_t>{1, 2, 0, 3}));
  EXPECT_EQ(p.batch_sizes, (std::vector<std::size_t>{4, 3, 2}));
  EXPECT_EQ(p.total, 9u);
  const auto rev = p.reversal();
  for (std::size_t r = 0; r < rev.size(); ++r) EXPECT_EQ(rev[rev[r]], r);
  EXPECT_EQ(rev[p.row(0, 0)], p.row(0, 1));
}
