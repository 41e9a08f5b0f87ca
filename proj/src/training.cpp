#include "morphtag/training.hpp"

#include <chrono>
#include <cmath>

#include "morphtag/evaluation.hpp"

namespace morphtag {

void TrainConfig::validate() const {
  if (!(base_lr > 0.0)) throw ConfigError("base_lr must be positive");
  if (!(rms_decay > 0.0 && rms_decay < 1.0)) throw ConfigError("rms_decay must lie in (0, 1)");
  if (!(rms_eps > 0.0)) throw ConfigError("rms_eps must be positive");
  if (batch_size == 0) throw ConfigError("batch_size must be positive");
  if (lr_halving_period == 0) throw ConfigError("lr_halving_period must be positive");
  if (max_epochs == 0) throw ConfigError("max_epochs must be positive");
  if (grad_clip_norm < 0.0) throw ConfigError("grad_clip_norm must not be negative");
  if (!(unk_replace_prob >= 0.0 && unk_replace_prob <= 1.0)) throw ConfigError("unk_replace_prob must lie in [0, 1]");
  if (eval_batch_size == 0) throw ConfigError("eval_batch_size must be positive");
}

template <typename T>
void rmsprop_update(ParamStore<T>& params, double lr, double rho, double eps) {
  const T r = static_cast<T>(rho), one_minus_r = static_cast<T>(1.0 - rho);
  const T step = static_cast<T>(lr), e = static_cast<T>(eps);
  params.for_each([&](Param<T>& p) {
    if (p.trainable) {
      T* w = p.value.data();
      T* acc = p.rms_acc.data();
      const T* g = p.grad.data();
      for (std::size_t i = 0; i < p.value.size(); ++i) {
        acc[i] = r * acc[i] + one_minus_r * g[i] * g[i];
        w[i] -= step * g[i] / std::sqrt(acc[i] + e);
      }
    }
    p.grad.zero();
  });
}

double lr_at_epoch(double base_lr, std::size_t epoch, std::size_t halving_period) {
  return std::ldexp(base_lr, -static_cast<int>(epoch / halving_period));
}

template <typename T>
double clip_grad_norm(ParamStore<T>& params, double max_norm) {
  const double norm = params.grad_norm();
  if (max_norm > 0.0 && norm > max_norm) params.scale_grads(static_cast<T>(max_norm / norm));
  return norm;
}

EncodedSentence with_unk_replacement(const EncodedSentence& s, const Vocabularies& vocab, double p, Rng& rng) {
  EncodedSentence out = s;
  if (p <= 0.0) return out;
  for (auto& word : out.chars) {
    for (int& c : word) {
      if (vocab.singleton_chars.count(c) && rng.bernoulli(p)) c = kUnkChar;
    }
  }
  for (int& w : out.words) {
    if (vocab.singleton_words.count(w) && rng.bernoulli(p)) w = kUnkWord;
  }
  return out;
}

template <typename T>
std::vector<Tensor<T>> snapshot_weights(const ParamStore<T>& params) {
  std::vector<Tensor<T>> out;
  params.for_each([&](const Param<T>& p) { out.push_back(p.value); });
  return out;
}

template <typename T>
void restore_weights(ParamStore<T>& params, const std::vector<Tensor<T>>& weights) {
  if (weights.size() != params.size()) throw DimensionError("restore_weights: parameter count differs");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (weights[i].shape() != params[i].value.shape()) throw DimensionError("restore_weights: shape differs");
    params[i].value = weights[i];
  }
}

namespace {

std::vector<const EncodedSentence*> pointers(const std::vector<EncodedSentence>& sentences, std::size_t begin,
                                             std::size_t end) {
  std::vector<const EncodedSentence*> out;
  for (std::size_t i = begin; i < end; ++i) out.push_back(&sentences[i]);
  return out;
}

}  // namespace

template <typename T>
std::vector<std::vector<int>> predict_all(Tagger<T>& model, const std::vector<EncodedSentence>& sentences,
                                          std::size_t batch_size) {
  std::vector<std::vector<int>> out;
  out.reserve(sentences.size());
  for (std::size_t i = 0; i < sentences.size(); i += batch_size) {
    const auto batch = pointers(sentences, i, std::min(sentences.size(), i + batch_size));
    for (auto& tags : model.predict(batch)) out.push_back(std::move(tags));
  }
  return out;
}

template <typename T>
double tag_error_rate(Tagger<T>& model, const std::vector<EncodedSentence>& sentences, std::size_t batch_size) {
  const auto pred = predict_all(model, sentences, batch_size);
  std::size_t tokens = 0, errors = 0;
  for (std::size_t s = 0; s < sentences.size(); ++s) {
    tokens += sentences[s].size();
    errors += count_errors(pred[s], sentences[s].tags);
  }
  return tokens ? 100.0 * static_cast<double>(errors) / static_cast<double>(tokens) : 0.0;
}

template <typename T>
FitResult fit(Tagger<T>& model, const std::vector<EncodedSentence>& train, const std::vector<EncodedSentence>& dev,
              const Vocabularies& vocab, const TrainConfig& cfg, const FitCallbacks& callbacks) {
  cfg.validate();
  if (train.empty()) throw DataError("training set is empty");
  if (dev.empty()) throw DataError("development set is empty");
  using Clock = std::chrono::steady_clock;

  Rng rng(cfg.seed ^ 0x5deece66dULL);
  FitResult result;
  std::vector<Tensor<T>> best = snapshot_weights(model.params());
  std::size_t since_improvement = 0;
  bool have_best = false;
  model.params().zero_grad();

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const auto start = Clock::now();
    const double lr = lr_at_epoch(cfg.base_lr, epoch, cfg.lr_halving_period);
    double loss_sum = 0.0;
    std::size_t tokens = 0;
    for (const auto& idx : make_batches(train.size(), cfg.batch_size, rng)) {
      std::vector<EncodedSentence> noisy;
      noisy.reserve(idx.size());
      for (const std::size_t i : idx) noisy.push_back(with_unk_replacement(train[i], vocab, cfg.unk_replace_prob, rng));
      const auto batch = pointers(noisy, 0, noisy.size());
      const BatchLoss bl = model.loss_and_gradient(batch, Mode::kTrain, rng);
      const double total = bl.total();
      if (!std::isfinite(total) || !model.params().grads_finite()) {
        result.diverged = true;
        result.message = "training diverged in epoch " + std::to_string(epoch) + " (non-finite loss or gradient)";
        break;
      }
      loss_sum += total;
      tokens += bl.tokens;
      clip_grad_norm(model.params(), cfg.grad_clip_norm);
      rmsprop_update(model.params(), lr, cfg.rms_decay, cfg.rms_eps);
    }
    if (result.diverged) break;

    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = tokens ? loss_sum / static_cast<double>(tokens) : 0.0;
    m.dev_error = tag_error_rate(model, dev, cfg.eval_batch_size);
    m.seconds = std::chrono::duration<double>(Clock::now() - start).count();
    result.log.push_back(m);
    if (callbacks.on_epoch) callbacks.on_epoch(m);

    if (!have_best || m.dev_error < result.best_dev_error) {
      have_best = true;
      result.best_dev_error = m.dev_error;
      result.best_epoch = epoch;
      best = snapshot_weights(model.params());
      since_improvement = 0;
      if (callbacks.on_improvement) callbacks.on_improvement(m);
    } else if (++since_improvement > cfg.patience) {
      break;
    }
    if (callbacks.stop && callbacks.stop(m)) break;
  }
  restore_weights(model.params(), best);
  return result;
}

// ---------------------------------------------------------------------------
// Gradient checking

namespace {
constexpr double kGradcheckJitter = 0.3;
}  // namespace

ModelConfig gradcheck_config(EncoderKind kind, bool skip_connections, PretrainedMode pretrained) {
  ModelConfig cfg;
  EncoderConfig& e = cfg.encoder;
  e = EncoderConfig::defaults(kind);
  e.char_dim = 4;
  e.word_dim = 5;
  e.max_word_len = 4;
  switch (kind) {
    case EncoderKind::kDnn:
      e.hidden = {6};
      break;
    case EncoderKind::kLstm:
      e.hidden = {6, 4};
      break;
    case EncoderKind::kBlstm:
      e.hidden = {4, 3};
      break;
    default:
      break;
  }
  e.conv_layers = 2;
  e.conv_filters = 5;
  e.conv_width = 3;
  e.highway_min_width = 1;
  e.highway_max_width = 3;
  e.highway_filters_per_width = 2;
  e.highway_max_filters = 5;
  e.highway_layers = 2;
  e.pretrained = pretrained;
  e.pretrained_dim = pretrained == PretrainedMode::kNone ? 0 : 3;
  cfg.context_layers = 2;
  cfg.context_hidden = 4;
  cfg.skip_connections = skip_connections;
  cfg.keep_prob = 1.0;
  return cfg;
}

ToyBatch make_toy_batch(std::uint64_t seed) {
  ToyBatch b;
  b.char_vocab = 9;
  b.word_vocab = 7;
  b.tags = 5;
  b.pretrained_rows = 6;
  Rng rng(seed);
  for (const std::size_t len : {4u, 3u}) {
    EncodedSentence s;
    for (std::size_t i = 0; i < len; ++i) {
      // Word lengths 1..6 cover both padding and truncation paths.
      const std::size_t m = 1 + rng.below(6);
      std::vector<int> chars;
      for (std::size_t k = 0; k < m; ++k) chars.push_back(1 + static_cast<int>(rng.below(b.char_vocab - 1)));
      s.chars.push_back(std::move(chars));
      s.words.push_back(static_cast<int>(rng.below(b.word_vocab)));
      s.pretrained.push_back(static_cast<int>(rng.below(b.pretrained_rows)));
      s.tags.push_back(static_cast<int>(rng.below(b.tags)));
    }
    b.sentences.push_back(std::move(s));
  }
  return b;
}

ModelGradCheck gradcheck_model(const ModelConfig& cfg, const ToyBatch& batch, const GradCheckOptions& options) {
  Rng init(options.seed);
  Tagger<double> model(cfg, batch.char_vocab, batch.word_vocab, batch.tags,
                       cfg.encoder.pretrained == PretrainedMode::kNone ? 0 : batch.pretrained_rows, init);
  // Zero-initialised biases can leave relu units exactly at their kink
  // (e.g. a window of dead inputs), where finite differences are meaningless.
  Rng jitter(options.seed + 1);
  model.params().for_each([&](Param<double>& p) {
    for (double& v : p.value.values()) v += jitter.uniform(-kGradcheckJitter, kGradcheckJitter);
  });
  std::vector<const EncodedSentence*> ptrs;
  for (const EncodedSentence& s : batch.sentences) ptrs.push_back(&s);
  const Objective f = [&](ParamStore<double>&, bool compute_grad) {
    if (compute_grad) {
      Rng unused(0);
      const BatchLoss l = model.loss_and_gradient(ptrs, Mode::kEval, unused);
      return l.total() / static_cast<double>(l.tokens);
    }
    const BatchLoss l = model.loss(ptrs);
    return l.total() / static_cast<double>(l.tokens);
  };
  ModelGradCheck out;
  model.params().for_each([&](const Param<double>& p) { out.excluded_params += p.trainable ? 0 : 1; });
  out.result = grad_check(f, model.params(), options);
  return out;
}

#define MORPHTAG_INSTANTIATE(T)                                                                                   \
  template void rmsprop_update<T>(ParamStore<T>&, double, double, double);                                      \
  template double clip_grad_norm<T>(ParamStore<T>&, double);                                                    \
  template std::vector<Tensor<T>> snapshot_weights<T>(const ParamStore<T>&);                                    \
  template void restore_weights<T>(ParamStore<T>&, const std::vector<Tensor<T>>&);                              \
  template FitResult fit<T>(Tagger<T>&, const std::vector<EncodedSentence>&, const std::vector<EncodedSentence>&, \
                            const Vocabularies&, const TrainConfig&, const FitCallbacks&);                      \
  template std::vector<std::vector<int>> predict_all<T>(Tagger<T>&, const std::vector<EncodedSentence>&,         \
                                                        std::size_t);                                           \
  template double tag_error_rate<T>(Tagger<T>&, const std::vector<EncodedSentence>&, std::size_t);

MORPHTAG_INSTANTIATE(float)
MORPHTAG_INSTANTIATE(double)

#undef MORPHTAG_INSTANTIATE

}  // namespace morphtag
