#include <gtest/gtest.h>

#include <cmath>

#include "morphtag/tagger.hpp"
#include "morphtag/training.hpp"
#include "oracles.hpp"

using namespace morphtag;

namespace {

std::vector<const EncodedSentence*> pointers(const std::vector<EncodedSentence>& s) {
  std::vector<const EncodedSentence*> p;
  for (const auto& x : s) p.push_back(&x);
  return p;
}

std::unique_ptr<Tagger<double>> make_tagger(const ModelConfig& cfg, const ToyBatch& toy, std::uint64_t seed) {
  Rng rng(seed);
  auto t = std::make_unique<Tagger<double>>(cfg, toy.char_vocab, toy.word_vocab, toy.tags,
                                            cfg.encoder.pretrained == PretrainedMode::kNone ? 0 : toy.pretrained_rows,
                                            rng);
  Rng jitter(seed + 100);
  t->params().for_each([&](Param<double>& p) {
    for (double& v : p.value.values()) v += jitter.uniform(-0.3, 0.3);
  });
  return t;
}

EncodedSentence reversed(const EncodedSentence& s) {
  EncodedSentence r = s;
  std::reverse(r.chars.begin(), r.chars.end());
  std::reverse(r.words.begin(), r.words.end());
  std::reverse(r.pretrained.begin(), r.pretrained.end());
  std::reverse(r.tags.begin(), r.tags.end());
  return r;
}

// Swaps the two column halves [a | b] -> [b | a] of a matrix.
void swap_column_halves(Tensor<double>& m, std::size_t half) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    for (std::size_t j = 0; j < half; ++j) std::swap(m.at(r, j), m.at(r, half + j));
  }
}

}  // namespace

TEST(PredictTags, ArgmaxPerPosition) {
  const auto d = Tensor<double>::matrix(3, 3, {0.1, 0.7, 0.2, 0.0, 0.0, 1.0, 0.5, 0.25, 0.25});
  EXPECT_EQ(predict_tags(d), (std::vector<int>{1, 2, 0}));
}

TEST(PredictTags, TiesGoToLowestId) {
  EXPECT_EQ(predict_tags(Tensor<double>::matrix(1, 4, {0.25, 0.25, 0.25, 0.25})), (std::vector<int>{0}));
  EXPECT_EQ(predict_tags(Tensor<double>::matrix(1, 3, {0.2, 0.4, 0.4})), (std::vector<int>{1}));
}

TEST(PredictTags, MatchesBruteForceJointDecoding) {
  Rng rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor<double> d({3, 4});
    for (std::size_t r = 0; r < 3; ++r) {
      double s = 0.0;
      for (std::size_t k = 0; k < 4; ++k) s += d.at(r, k) = rng.uniform(0.01, 1.0);
      for (std::size_t k = 0; k < 4; ++k) d.at(r, k) /= s;
    }
    EXPECT_EQ(predict_tags(d), oracle::brute_force_decode(d.storage(), 3, 4));
  }
}

TEST(SentenceLoss, Examples) {
  const int gold0[] = {0};
  EXPECT_NEAR(sentence_loss(Tensor<double>::matrix(1, 2, {0.5, 0.5}), gold0), std::log(2.0), 1e-15);
  EXPECT_EQ(sentence_loss(Tensor<double>::matrix(1, 2, {1.0, 0.0}), gold0), 0.0);
  const int gold[] = {1, 0};
  EXPECT_NEAR(sentence_loss(Tensor<double>::matrix(2, 2, {0.2, 0.8, 0.4, 0.6}), gold),
              -std::log(0.8) - std::log(0.4), 1e-15);
}

TEST(SentenceLoss, RejectsBadGold) {
  const int out_of_range[] = {2};
  EXPECT_THROW(sentence_loss(Tensor<double>::matrix(1, 2, {0.5, 0.5}), out_of_range), IndexError);
  const int too_many[] = {0, 1};
  EXPECT_THROW(sentence_loss(Tensor<double>::matrix(1, 2, {0.5, 0.5}), too_many), DataError);
}

TEST(TaggerModel, OneWordSentenceGivesOneNormalisedRow) {
  const ToyBatch toy = make_toy_batch(3);
  auto t = make_tagger(gradcheck_config(EncoderKind::kCnn, false, PretrainedMode::kNone), toy, 4);
  EncodedSentence one = toy.sentences[0];
  one.chars.resize(1);
  one.words.resize(1);
  one.pretrained.resize(1);
  one.tags.resize(1);
  const EncodedSentence* p[] = {&one};
  const auto d = t->distributions(p);
  ASSERT_EQ(d.size(), 1u);
  EXPECT_EQ(d[0].shape(), (Shape{1, toy.tags}));
  double s = 0.0;
  for (const double v : d[0].values()) s += v;
  EXPECT_NEAR(s, 1.0, 1e-12);
}

TEST(TaggerModel, RowsAreDistributionsForEveryEncoder) {
  const ToyBatch toy = make_toy_batch(5);
  for (const EncoderKind kind : kAllEncoderKinds) {
    auto t = make_tagger(gradcheck_config(kind, true, PretrainedMode::kFinetuned), toy, 6);
    for (const auto& d : t->distributions(pointers(toy.sentences))) {
      for (std::size_t r = 0; r < d.rows(); ++r) {
        double s = 0.0;
        for (const double v : d.row(r)) {
          EXPECT_GE(v, 0.0);
          s += v;
        }
        EXPECT_NEAR(s, 1.0, 1e-12);
      }
    }
  }
}

TEST(TaggerModel, SkipConnectionsWidenClassifierInput) {
  const ToyBatch toy = make_toy_batch(7);
  for (const EncoderKind kind : kAllEncoderKinds) {
    const ModelConfig off = gradcheck_config(kind, false, PretrainedMode::kNone);
    const ModelConfig on = gradcheck_config(kind, true, PretrainedMode::kNone);
    auto a = make_tagger(off, toy, 1);
    auto b = make_tagger(on, toy, 1);
    const std::size_t dv = on.encoder.output_dim();
    EXPECT_EQ(a->params().get("output.w").value.cols(), 2 * off.context_hidden);
    EXPECT_EQ(b->params().get("output.w").value.cols(), 2 * on.context_hidden + dv);
    EXPECT_EQ(on.classifier_input_dim() - off.classifier_input_dim(), dv);
  }
}

TEST(TaggerModel, ReversedSentenceWithMirroredWeightsGivesReversedOutput) {
  const ToyBatch toy = make_toy_batch(8);
  const ModelConfig cfg = gradcheck_config(EncoderKind::kCnn, false, PretrainedMode::kNone);
  auto a = make_tagger(cfg, toy, 9);
  auto b = make_tagger(cfg, toy, 9);
  const std::size_t h = cfg.context_hidden;
  for (std::size_t i = 0; i < cfg.context_layers; ++i) {
    const std::string base = "context.blstm" + std::to_string(i);
    for (const char* part : {".wx", ".wh", ".b"}) {
      std::swap(b->params().get(base + ".fwd" + part).value, b->params().get(base + ".bwd" + part).value);
    }
    if (i > 0) {
      swap_column_halves(b->params().get(base + ".fwd.wx").value, h);
      swap_column_halves(b->params().get(base + ".bwd.wx").value, h);
    }
  }
  swap_column_halves(b->params().get("output.w").value, h);

  for (const EncodedSentence& s : toy.sentences) {
    const EncodedSentence r = reversed(s);
    const EncodedSentence* pa[] = {&s};
    const EncodedSentence* pb[] = {&r};
    const auto da = a->distributions(pa)[0];
    const auto db = b->distributions(pb)[0];
    const std::size_t n = s.size();
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t k = 0; k < toy.tags; ++k) EXPECT_NEAR(da.at(i, k), db.at(n - 1 - i, k), 1e-12);
    }
  }
}

TEST(TaggerModel, OutputDoesNotDependOnBatchComposition) {
  const ToyBatch toy = make_toy_batch(10);
  const ToyBatch other = make_toy_batch(11);
  for (const EncoderKind kind : kAllEncoderKinds) {
    auto t = make_tagger(gradcheck_config(kind, true, PretrainedMode::kNone), toy, 12);
    const EncodedSentence* alone[] = {&toy.sentences[1]};
    const EncodedSentence* mixed[] = {&other.sentences[0], &toy.sentences[1], &other.sentences[1]};
    const auto a = t->distributions(alone)[0];
    const auto m = t->distributions(mixed)[1];
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], m[i], 1e-13) << encoder_kind_name(kind);
  }
}

TEST(TaggerModel, GradientIsScaledByTokenCount) {
  const ToyBatch toy = make_toy_batch(13);
  auto t = make_tagger(gradcheck_config(EncoderKind::kCnn, false, PretrainedMode::kNone), toy, 14);
  Rng unused(0);
  auto grads_for = [&](std::vector<const EncodedSentence*> batch) {
    t->params().zero_grad();
    t->loss_and_gradient(batch, Mode::kEval, unused);
    std::vector<double> g;
    t->params().for_each([&](const Param<double>& p) { g.insert(g.end(), p.grad.values().begin(), p.grad.values().end()); });
    return g;
  };
  const auto ga = grads_for({&toy.sentences[0]});
  const auto gb = grads_for({&toy.sentences[1]});
  const auto gab = grads_for({&toy.sentences[0], &toy.sentences[1]});
  const double na = double(toy.sentences[0].size()), nb = double(toy.sentences[1].size());
  for (std::size_t i = 0; i < gab.size(); ++i) {
    EXPECT_NEAR(gab[i], (na * ga[i] + nb * gb[i]) / (na + nb), 1e-12);
  }
}

TEST(TaggerModel, LossMatchesSumOfSentenceLosses) {
  const ToyBatch toy = make_toy_batch(15);
  auto t = make_tagger(gradcheck_config(EncoderKind::kBlstm, false, PretrainedMode::kNone), toy, 16);
  const auto ptrs = pointers(toy.sentences);
  const BatchLoss l = t->loss(ptrs);
  const auto d = t->distributions(ptrs);
  EXPECT_EQ(l.tokens, toy.sentences[0].size() + toy.sentences[1].size());
  for (std::size_t s = 0; s < 2; ++s) EXPECT_NEAR(l.sentence_losses[s], sentence_loss(d[s], toy.sentences[s].tags), 1e-12);
  Rng unused(0);
  const BatchLoss lg = t->loss_and_gradient(ptrs, Mode::kEval, unused);
  EXPECT_NEAR(lg.total(), l.total(), 1e-10);
}

TEST(TaggerModel, FullModelGradientsAgreeWithFiniteDifferences) {
  const ToyBatch toy = make_toy_batch(17);
  for (const EncoderKind kind : kAllEncoderKinds) {
    for (const bool skip : {false, true}) {
      const auto r = gradcheck_model(gradcheck_config(kind, skip, PretrainedMode::kNone), toy);
      EXPECT_LT(r.result.max_rel_err, 1e-3) << encoder_kind_name(kind) << " skip=" << skip;
    }
  }
}

TEST(TaggerModel, FixedEmbeddingsAreExcludedFromGradientCheck) {
  const ToyBatch toy = make_toy_batch(18);
  const auto fixed = gradcheck_model(gradcheck_config(EncoderKind::kCnn, false, PretrainedMode::kFixed), toy);
  EXPECT_EQ(fixed.excluded_params, 1u);
  EXPECT_LT(fixed.result.max_rel_err, 1e-3);
  const auto tuned = gradcheck_model(gradcheck_config(EncoderKind::kCnn, true, PretrainedMode::kFinetuned), toy);
  EXPECT_EQ(tuned.excluded_params, 0u);
  EXPECT_LT(tuned.result.max_rel_err, 1e-3);
}

TEST(TaggerModel, TrainingTokenOutsideInventoryIsRejected) {
  ToyBatch toy = make_toy_batch(19);
  auto t = make_tagger(gradcheck_config(EncoderKind::kCnn, false, PretrainedMode::kNone), toy, 20);
  toy.sentences[0].tags[0] = -1;
  Rng unused(0);
  EXPECT_THROW(t->loss_and_gradient(pointers(toy.sentences), Mode::kEval, unused), DataError);
}

TEST(EncodeSentence, UnknownSymbolsAndTags) {
  Sentence train{{"ab", "b"}, {"X", "Y"}, {"_", "_"}, {"X", "Y"}};
  const Vocabularies vocab = build_vocabularies({train});
  Sentence test{{"AbC", "zz"}, {"X", "Q"}, {"_", "_"}, {"X", "Q"}};
  const EncodedSentence e = encode_sentence(test, vocab);
  const int a = vocab.chars.find("a"), b = vocab.chars.find("b");
  EXPECT_EQ(e.chars[0], (std::vector<int>{a, b, kUnkChar}));
  EXPECT_EQ(e.chars[1], (std::vector<int>{kUnkChar, kUnkChar}));
  EXPECT_EQ(e.words, (std::vector<int>{kUnkWord, kUnkWord}));
  EXPECT_EQ(e.tags, (std::vector<int>{vocab.tags.find("X"), -1}));
  EXPECT_TRUE(e.pretrained.empty());
  const EncodedSentence known = encode_words({"AB"}, vocab);
  EXPECT_EQ(known.words, (std::vector<int>{vocab.words.find("ab")}));
  EXPECT_EQ(known.tags, (std::vector<int>{-1}));
}

TEST(ModelConfigTest, ValidationErrors) {
  ModelConfig c;
  c.context_layers = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  ModelConfig none;
  none.encoder = EncoderConfig::defaults(EncoderKind::kNone);
  EXPECT_THROW(none.validate(), ConfigError);
}
