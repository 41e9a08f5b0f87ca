#pragma once

#include <memory>
#include <string>
#include <vector>

#include "morphtag/config.hpp"
#include "morphtag/data.hpp"
#include "morphtag/tagger.hpp"
#include "morphtag/training.hpp"

namespace morphtag {

inline constexpr int kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Tensor<float> value;
};

// On disk: a directory holding manifest.txt, weights.bin (little-endian
// float32, tensors concatenated in manifest order) and one TSV file per
// vocabulary ("id<TAB>symbol").
struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  Vocabulary chars;
  Vocabulary words;
  Vocabulary tags;
  Vocabulary pretrained_words;  // empty without embeddings
  std::vector<NamedTensor> tensors;
};

template <typename T>
Checkpoint make_checkpoint(const Tagger<T>& model, const TrainConfig& train, const Vocabularies& vocab,
                           const EmbeddingTable* embeddings = nullptr);

void save_checkpoint(const Checkpoint& ckpt, const std::string& dir);
Checkpoint load_checkpoint(const std::string& dir);

// Tagger holding the checkpoint weights.
template <typename T>
std::unique_ptr<Tagger<T>> restore_tagger(const Checkpoint& ckpt);

// Vocabularies for encoding input; singleton sets are not stored.
Vocabularies checkpoint_vocabularies(const Checkpoint& ckpt);
// Word lookup for the stored embedding rows (empty without embeddings).
EmbeddingTable checkpoint_embeddings(const Checkpoint& ckpt);

}  // namespace morphtag
