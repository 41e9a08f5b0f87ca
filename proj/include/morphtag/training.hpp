#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "morphtag/grad_check.hpp"
#include "morphtag/tagger.hpp"

namespace morphtag {

struct TrainConfig {
  double base_lr = 1e-3;
  double rms_decay = 0.9;
  double rms_eps = 1e-8;
  std::size_t batch_size = 16;
  std::size_t lr_halving_period = 10;  // epochs
  std::size_t max_epochs = 100;
  std::size_t patience = 7;
  double grad_clip_norm = 5.0;  // global norm; 0 disables clipping
  double unk_replace_prob = 0.5;
  std::size_t eval_batch_size = 64;
  std::uint64_t seed = 1;

  void validate() const;
};

// acc = rho * acc + (1 - rho) g^2; w -= lr g / sqrt(acc + eps); grads zeroed.
template <typename T>
void rmsprop_update(ParamStore<T>& params, double lr, double rho, double eps);

double lr_at_epoch(double base_lr, std::size_t epoch, std::size_t halving_period = 10);

// Rescales trainable gradients to the given global norm when it is exceeded.
// Returns the norm before clipping.
template <typename T>
double clip_grad_norm(ParamStore<T>& params, double max_norm);

// Training-time copy with singleton characters and words replaced by the
// unknown symbol, each occurrence with probability p.
EncodedSentence with_unk_replacement(const EncodedSentence& s, const Vocabularies& vocab, double p, Rng& rng);

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean per token
  double dev_error = 0.0;   // percent
  double seconds = 0.0;
};

struct FitResult {
  std::vector<EpochMetrics> log;
  std::size_t best_epoch = 0;
  double best_dev_error = 100.0;
  bool diverged = false;
  std::string message;
};

struct FitCallbacks {
  std::function<void(const EpochMetrics&)> on_epoch;
  // Called with the model holding the new best weights.
  std::function<void(const EpochMetrics&)> on_improvement;
  // Returning true ends training after this epoch.
  std::function<bool(const EpochMetrics&)> stop;
};

// Weight values of every parameter, in store order.
template <typename T>
std::vector<Tensor<T>> snapshot_weights(const ParamStore<T>& params);
template <typename T>
void restore_weights(ParamStore<T>& params, const std::vector<Tensor<T>>& weights);

// Trains until dev error stops improving for more than `patience` epochs or
// max_epochs is reached; leaves the best weights in the model.
template <typename T>
FitResult fit(Tagger<T>& model, const std::vector<EncodedSentence>& train, const std::vector<EncodedSentence>& dev,
              const Vocabularies& vocab, const TrainConfig& cfg, const FitCallbacks& callbacks = {});

// Predictions in batches of batch_size; the result does not depend on it.
template <typename T>
std::vector<std::vector<int>> predict_all(Tagger<T>& model, const std::vector<EncodedSentence>& sentences,
                                          std::size_t batch_size = 64);

// Tag error rate (percent) against the encoded gold ids.
template <typename T>
double tag_error_rate(Tagger<T>& model, const std::vector<EncodedSentence>& sentences,
                      std::size_t batch_size = 64);

// Small model of the given kind for finite-difference checks.
ModelConfig gradcheck_config(EncoderKind kind, bool skip_connections, PretrainedMode pretrained);

struct ToyBatch {
  std::vector<EncodedSentence> sentences;
  std::size_t char_vocab = 0;
  std::size_t word_vocab = 0;
  std::size_t tags = 0;
  std::size_t pretrained_rows = 0;
};

ToyBatch make_toy_batch(std::uint64_t seed);

struct ModelGradCheck {
  GradCheckResult result;
  std::size_t excluded_params = 0;  // frozen entries left out of the check
};

// Full-loss gradient check in double precision with dropout disabled.
ModelGradCheck gradcheck_model(const ModelConfig& cfg, const ToyBatch& batch, const GradCheckOptions& options = {});

}  // namespace morphtag
