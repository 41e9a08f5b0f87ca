#include <gtest/gtest.h>

#include <algorithm>
#include <functional>

#include "morphtag/encoders.hpp"
#include "morphtag/grad_check.hpp"
#include "oracles.hpp"

using namespace morphtag;

namespace {

constexpr std::size_t kChars = 12;
constexpr std::size_t kWords = 9;

EncoderConfig small_config(EncoderKind kind) {
  EncoderConfig c = EncoderConfig::defaults(kind);
  c.char_dim = 4;
  c.word_dim = 5;
  c.max_word_len = 6;
  c.conv_layers = 2;
  c.conv_filters = 6;
  c.conv_width = 3;
  c.highway_min_width = 1;
  c.highway_max_width = 3;
  c.highway_filters_per_width = 2;
  c.highway_max_filters = 5;
  c.highway_layers = 2;
  if (kind == EncoderKind::kDnn) c.hidden = {7, 5};
  if (kind == EncoderKind::kLstm || kind == EncoderKind::kBlstm) c.hidden = {4, 3};
  return c;
}

std::vector<int> random_word(Rng& rng, std::size_t len) {
  std::vector<int> w(len);
  for (int& c : w) c = 2 + static_cast<int>(rng.below(kChars - 2));
  return w;
}

WordBatch random_batch(Rng& rng, std::size_t n, std::size_t max_len) {
  WordBatch b;
  for (std::size_t i = 0; i < n; ++i) {
    b.chars.push_back(random_word(rng, 1 + rng.below(max_len)));
    b.words.push_back(static_cast<int>(rng.below(kWords)));
  }
  return b;
}

struct Built {
  ParamStore<double> store;
  std::unique_ptr<WordEncoder<double>> encoder;
};

std::unique_ptr<Built> build(const EncoderConfig& cfg, std::uint64_t seed) {
  auto b = std::make_unique<Built>();
  Rng rng(seed);
  b->encoder = make_encoder<double>(cfg, kChars, kWords, 1.0, RecurrentDropout::kPerStep, b->store, rng);
  b->store.for_each([&](Param<double>& p) {
    for (double& v : p.value.values()) v += rng.uniform(-0.3, 0.3);
  });
  return b;
}

Tensor<double> encode(WordEncoder<double>& enc, const WordBatch& batch) {
  Rng rng(0);
  return enc.forward(batch, Mode::kEval, rng);
}

std::vector<double> row(const Tensor<double>& t, std::size_t r) {
  return std::vector<double>(t.data() + r * t.cols(), t.data() + (r + 1) * t.cols());
}

}  // namespace

TEST(HighwayFilters, CountsPerWidth) {
  EXPECT_EQ(num_filters(1), 50u);
  EXPECT_EQ(num_filters(4), 200u);
  EXPECT_EQ(num_filters(7), 200u);
  EXPECT_ANY_THROW(num_filters(0));
  EXPECT_ANY_THROW(num_filters(8));
  EXPECT_EQ(EncoderConfig::defaults(EncoderKind::kCnnHighway).char_vector_dim(), 1100u);
}

TEST(FixedLengthChars, PadsShortWordsOnTheRight) {
  EXPECT_EQ(fixed_length_chars({5, 6}, 4), (std::vector<int>{5, 6, kPadChar, kPadChar}));
}

TEST(FixedLengthChars, TruncationKeepsSuffix) {
  EXPECT_EQ(fixed_length_chars({2, 3, 4, 5, 6}, 3), (std::vector<int>{4, 5, 6}));
  EXPECT_EQ(fixed_length_chars({2, 3, 4}, 3), (std::vector<int>{2, 3, 4}));
}

TEST(PadChars, OnlyExtendsShortWords) {
  EXPECT_EQ(pad_chars({3}, 3), (std::vector<int>{3, kPadChar, kPadChar}));
  EXPECT_EQ(pad_chars({3, 4, 5, 6}, 3), (std::vector<int>{3, 4, 5, 6}));
}

TEST(DnnEncoder, WordsSharingTheKeptSuffixEncodeIdentically) {
  auto b = build(small_config(EncoderKind::kDnn), 1);
  WordBatch batch;
  batch.chars = {{2, 3, 4, 5, 6, 7, 8}, {9, 3, 4, 5, 6, 7, 8}, {3, 4, 5, 6, 7, 9}};
  const auto y = encode(*b->encoder, batch);
  EXPECT_EQ(row(y, 0), row(y, 1));
  EXPECT_NE(row(y, 0), row(y, 2));
}

TEST(CnnEncoder, SingleLayerMatchesPaddedConvolutionOracle) {
  EncoderConfig cfg = small_config(EncoderKind::kCnn);
  cfg.conv_layers = 1;
  auto b = build(cfg, 2);
  Rng rng(3);
  const WordBatch batch = random_batch(rng, 10, 8);
  const auto y = encode(*b->encoder, batch);
  const Tensor<double>& table = b->store.get("encoder.chars").value;
  const Tensor<double>& w = b->store.get("encoder.conv0.w").value;
  const Tensor<double>& bias = b->store.get("encoder.conv0.b").value;
  for (std::size_t i = 0; i < batch.chars.size(); ++i) {
    const std::vector<int> ids = pad_chars(batch.chars[i], cfg.conv_width);
    Tensor<double> seq({ids.size(), cfg.char_dim});
    for (std::size_t t = 0; t < ids.size(); ++t) {
      for (std::size_t d = 0; d < cfg.char_dim; ++d) seq.at(t, d) = table.at(std::size_t(ids[t]), d);
    }
    const auto conv = oracle::conv1d(seq, w, bias, Activation::kRelu);
    const Tensor<double> windows({conv.size() / cfg.conv_filters, cfg.conv_filters}, conv);
    const auto pooled = oracle::max_pool(windows);
    for (std::size_t f = 0; f < cfg.conv_filters; ++f) EXPECT_NEAR(y.at(i, f), pooled[f], 1e-12);
  }
}

TEST(CnnEncoder, SensitiveToCharacterOrder) {
  auto b = build(small_config(EncoderKind::kCnn), 4);
  WordBatch batch;
  batch.chars = {{2, 3, 4, 5, 6}, {6, 5, 4, 3, 2}};
  const auto y = encode(*b->encoder, batch);
  EXPECT_NE(row(y, 0), row(y, 1));
}

TEST(CnnEncoder, DefaultWidthIs256) {
  ParamStore<float> store;
  Rng rng(5);
  auto enc = make_encoder<float>(EncoderConfig::defaults(EncoderKind::kCnn), 30, 10, 1.0,
                                 RecurrentDropout::kPerStep, store, rng);
  WordBatch batch;
  batch.chars = {{4}, {4, 5, 6, 7, 8, 9, 10, 11}};
  Rng r(0);
  EXPECT_EQ(enc->forward(batch, Mode::kEval, r).shape(), (Shape{2, 256}));
}

TEST(CnnHighwayEncoder, DefaultWidthAndOneCharacterWord) {
  ParamStore<float> store;
  Rng rng(6);
  auto enc = make_encoder<float>(EncoderConfig::defaults(EncoderKind::kCnnHighway), 30, 10, 1.0,
                                 RecurrentDropout::kPerStep, store, rng);
  WordBatch batch;
  batch.chars = {{7}};
  Rng r(0);
  const auto y = enc->forward(batch, Mode::kEval, r);
  EXPECT_EQ(y.shape(), (Shape{1, 1100}));
  for (const float v : y.values()) ASSERT_TRUE(std::isfinite(v));
}

TEST(LstmEncoder, SingleCharacterIsOneStepFromZeroState) {
  EncoderConfig cfg = small_config(EncoderKind::kLstm);
  cfg.hidden = {3};
  auto b = build(cfg, 7);
  WordBatch batch;
  batch.chars = {{5}};
  const auto y = encode(*b->encoder, batch);
  const Tensor<double>& table = b->store.get("encoder.chars").value;
  Tensor<double> x({cfg.char_dim});
  for (std::size_t d = 0; d < cfg.char_dim; ++d) x[d] = table.at(5, d);
  const auto o = oracle::lstm_step(x.storage(), std::vector<double>(3), std::vector<double>(3),
                                   b->store.get("encoder.lstm0.wx").value, b->store.get("encoder.lstm0.wh").value,
                                   b->store.get("encoder.lstm0.b").value);
  EXPECT_LT(oracle::max_rel_err(y, o.h), 1e-13);
}

TEST(LstmEncoder, FinalStateMatchesStepOracle) {
  EncoderConfig cfg = small_config(EncoderKind::kLstm);
  cfg.hidden = {3};
  auto b = build(cfg, 8);
  Rng rng(9);
  const WordBatch batch = random_batch(rng, 6, 9);
  const auto y = encode(*b->encoder, batch);
  const Tensor<double>& table = b->store.get("encoder.chars").value;
  for (std::size_t i = 0; i < batch.chars.size(); ++i) {
    std::vector<double> h(3), c(3);
    for (const int ch : batch.chars[i]) {
      std::vector<double> x(cfg.char_dim);
      for (std::size_t d = 0; d < cfg.char_dim; ++d) x[d] = table.at(std::size_t(ch), d);
      const auto o = oracle::lstm_step(x, h, c, b->store.get("encoder.lstm0.wx").value,
                                       b->store.get("encoder.lstm0.wh").value, b->store.get("encoder.lstm0.b").value);
      h = o.h;
      c = o.c;
    }
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(y.at(i, k), h[k], 1e-12);
  }
}

TEST(BlstmEncoder, TwoPassOracle) {
  EncoderConfig cfg = small_config(EncoderKind::kBlstm);
  cfg.hidden = {3};
  auto b = build(cfg, 10);
  Rng rng(11);
  const WordBatch batch = random_batch(rng, 6, 9);
  const auto y = encode(*b->encoder, batch);
  ASSERT_EQ(y.cols(), 6u);
  const Tensor<double>& table = b->store.get("encoder.chars").value;
  auto run = [&](std::vector<int> chars, const std::string& dir) {
    std::vector<double> h(3), c(3);
    for (const int ch : chars) {
      std::vector<double> x(cfg.char_dim);
      for (std::size_t d = 0; d < cfg.char_dim; ++d) x[d] = table.at(std::size_t(ch), d);
      const auto o = oracle::lstm_step(x, h, c, b->store.get("encoder.lstm0." + dir + ".wx").value,
                                       b->store.get("encoder.lstm0." + dir + ".wh").value,
                                       b->store.get("encoder.lstm0." + dir + ".b").value);
      h = o.h;
      c = o.c;
    }
    return h;
  };
  for (std::size_t i = 0; i < batch.chars.size(); ++i) {
    const auto fwd = run(batch.chars[i], "fwd");
    std::vector<int> rev(batch.chars[i].rbegin(), batch.chars[i].rend());
    const auto bwd = run(rev, "bwd");
    for (std::size_t k = 0; k < 3; ++k) {
      EXPECT_NEAR(y.at(i, k), fwd[k], 1e-12);
      EXPECT_NEAR(y.at(i, 3 + k), bwd[k], 1e-12);
    }
  }
}

TEST(BlstmEncoder, PalindromeWithTiedDirectionsGivesEqualHalves) {
  EncoderConfig cfg = small_config(EncoderKind::kBlstm);
  cfg.hidden = {3};
  auto b = build(cfg, 12);
  for (const char* part : {".wx", ".wh", ".b"}) {
    b->store.get(std::string("encoder.lstm0.bwd") + part).value =
        b->store.get(std::string("encoder.lstm0.fwd") + part).value;
  }
  WordBatch batch;
  batch.chars = {{2, 5, 7, 5, 2}, {4, 4}};
  const auto y = encode(*b->encoder, batch);
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t k = 0; k < 3; ++k) EXPECT_DOUBLE_EQ(y.at(i, k), y.at(i, 3 + k));
  }
}

TEST(LutEncoder, UnknownWordUsesReservedRow) {
  auto b = build(small_config(EncoderKind::kLut), 13);
  WordBatch batch;
  batch.words = {kUnkWord, 3};
  const auto y = encode(*b->encoder, batch);
  const Tensor<double>& table = b->store.get("encoder.words").value;
  for (std::size_t d = 0; d < 5; ++d) {
    EXPECT_EQ(y.at(0, d), table.at(0, d));
    EXPECT_EQ(y.at(1, d), table.at(3, d));
  }
}

TEST(ComposeWordVector, ConcatenatesCharacterThenWordPart) {
  const std::optional<Tensor<double>> c = Tensor<double>({256}, 1.0);
  const std::optional<Tensor<double>> w = Tensor<double>({300}, 2.0);
  const auto v = compose_word_vector(c, w);
  EXPECT_EQ(v.size(), 556u);
  EXPECT_EQ(v[255], 1.0);
  EXPECT_EQ(v[256], 2.0);
  EXPECT_EQ(compose_word_vector<double>(c, std::nullopt).size(), 256u);
  EXPECT_EQ(compose_word_vector<double>(std::nullopt, w).size(), 300u);
  EXPECT_THROW(compose_word_vector<double>(std::nullopt, std::nullopt), ConfigError);
}

TEST(EncoderConfigTest, OutputDimAddsPretrainedWidth) {
  EncoderConfig c = EncoderConfig::defaults(EncoderKind::kCnn);
  c.pretrained = PretrainedMode::kFixed;
  c.pretrained_dim = 300;
  EXPECT_EQ(c.output_dim(), 556u);
  c.pretrained_dim = 0;
  EXPECT_THROW(c.validate(), ConfigError);
}

TEST(EncoderConfigTest, OutputDimMatchesEncoderForAllKindsAndLengths) {
  for (const EncoderKind kind : kAllEncoderKinds) {
    const EncoderConfig cfg = small_config(kind);
    auto b = build(cfg, 14);
    EXPECT_EQ(b->encoder->output_dim(), cfg.char_vector_dim()) << encoder_kind_name(kind);
    WordBatch batch;
    for (std::size_t len = 1; len <= 30; ++len) {
      batch.chars.push_back(std::vector<int>(len, 3));
      batch.words.push_back(1);
    }
    const auto y = encode(*b->encoder, batch);
    EXPECT_EQ(y.shape(), (Shape{30, cfg.char_vector_dim()})) << encoder_kind_name(kind);
  }
}

TEST(EncoderInput, EmptyWordIsRejected) {
  auto b = build(small_config(EncoderKind::kCnn), 15);
  WordBatch batch;
  batch.chars = {{}};
  Rng rng(0);
  EXPECT_THROW(b->encoder->forward(batch, Mode::kEval, rng), DataError);
}

TEST(EncoderGradients, AllKinds) {
  for (const EncoderKind kind : kAllEncoderKinds) {
    auto b = build(small_config(kind), 16);
    Rng rng(17);
    const WordBatch batch = random_batch(rng, 5, 7);
    const auto probe = encode(*b->encoder, batch);
    Tensor<double> r(probe.shape());
    for (double& v : r.values()) v = rng.uniform(-1.0, 1.0);
    const Objective f = [&](ParamStore<double>&, bool grad) {
      const auto y = encode(*b->encoder, batch);
      double s = 0.0;
      for (std::size_t i = 0; i < y.size(); ++i) s += r[i] * y[i];
      if (grad) b->encoder->backward(view(r));
      return s;
    };
    EXPECT_LT(grad_check(f, b->store).max_rel_err, 1e-4) << encoder_kind_name(kind);
  }
}

TEST(EncoderNames, RoundTrip) {
  for (const EncoderKind kind : kAllEncoderKinds) EXPECT_EQ(parse_encoder_kind(encoder_kind_name(kind)), kind);
  EXPECT_THROW(parse_encoder_kind("rnn"), ConfigError);
  for (const auto m : {PretrainedMode::kNone, PretrainedMode::kFixed, PretrainedMode::kFinetuned}) {
    EXPECT_EQ(parse_pretrained_mode(pretrained_mode_name(m)), m);
  }
}
