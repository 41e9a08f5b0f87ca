#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "morphtag/data.hpp"

namespace morphtag {

// Agglutinative toy language. Nouns, adjectives and determiners inflect for
// case (nom, acc -ti, dat -na, gen -sun) and number (pl -lar) and agree
// inside a noun phrase; verbs inflect for tense and person/number and agree
// with an overt subject. Every tag is recoverable from the word's suffixes.
struct SyntheticConfig {
  std::size_t train_sentences = 500;
  std::size_t dev_sentences = 100;
  std::size_t test_sentences = 200;
  // Stems per open class (noun, adjective, verb, adverb) and split pool.
  std::size_t noun_stems = 100;
  std::size_t adj_stems = 40;
  std::size_t verb_stems = 60;
  std::size_t adv_stems = 15;
  // Probability that an open-class word in dev/test uses a stem never seen
  // in training.
  double heldout_prob = 0.8;
  std::size_t embedding_dim = 32;
  double embedding_noise = 0.25;
  std::uint64_t seed = 1;
};

struct SyntheticCorpus {
  std::vector<Sentence> train;
  std::vector<Sentence> dev;
  std::vector<Sentence> test;
  // One vector per distinct form of all three splits, built from tag
  // prototypes plus noise (stands in for vectors trained on a large corpus).
  std::vector<std::string> embedding_words;
  Tensor<float> embedding_vectors;
};

// The 40 POSMORPH tags of the language, sorted.
std::vector<std::string> synthetic_tag_inventory();

SyntheticCorpus generate_synthetic(const SyntheticConfig& cfg);

}  // namespace morphtag
