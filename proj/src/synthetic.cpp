#include "morphtag/synthetic.hpp"

#include <algorithm>
#include <array>
#include <unordered_map>
#include <unordered_set>

#include "morphtag/rng.hpp"

namespace morphtag {

namespace {

constexpr std::array<const char*, 4> kCaseName = {"Nom", "Acc", "Dat", "Gen"};
constexpr std::array<const char*, 4> kCaseSuffix = {"", "ti", "na", "sun"};
constexpr std::array<const char*, 2> kNumberName = {"Sing", "Plur"};
constexpr std::array<const char*, 2> kNumberSuffix = {"", "lar"};
constexpr std::array<const char*, 3> kTenseName = {"Pres", "Past", "Fut"};
constexpr std::array<const char*, 3> kTenseSuffix = {"a", "di", "ecek"};
// Person/number endings: 1sg, 3sg, 1pl, 3pl.
constexpr std::array<const char*, 4> kPersonSuffix = {"m", "", "k", "ler"};
constexpr std::array<int, 4> kPersonValue = {1, 3, 1, 3};
constexpr std::array<int, 4> kPersonNumber = {0, 0, 1, 1};

constexpr std::array<const char*, 2> kDetRoots = {"he", "so"};
constexpr std::array<const char*, 3> kConj = {"ve", "ama", "veya"};
constexpr std::array<const char*, 3> kAdp = {"ile", "icin", "gibi"};
constexpr std::array<const char*, 3> kFinalPunct = {".", "!", "?"};

constexpr const char* kConsonants = "bfghjmpvzy";
constexpr const char* kVowels = "aeiou";

std::string nominal_morph(int c, int n) {
  return std::string("Case=") + kCaseName[c] + "|Number=" + kNumberName[n];
}

std::string verb_morph(int person, int number, int tense) {
  return std::string("Number=") + kNumberName[number] + "|Person=" + std::to_string(person) +
         "|Tense=" + kTenseName[tense];
}

struct Pools {
  std::vector<std::string> noun, adj, verb, adv;
};

class Generator {
 public:
  Generator(const SyntheticConfig& cfg, Rng& rng) : cfg_(cfg), rng_(rng) {
    for (Pools* p : {&train_, &dev_, &test_}) {
      p->noun = stems(cfg.noun_stems);
      p->adj = stems(cfg.adj_stems);
      p->verb = stems(cfg.verb_stems);
      p->adv = stems(cfg.adv_stems);
    }
  }

  std::vector<Sentence> split(std::size_t count, const Pools* heldout) {
    std::vector<Sentence> out;
    heldout_ = heldout;
    for (std::size_t i = 0; i < count; ++i) out.push_back(sentence());
    return out;
  }

  const Pools& train_pools() const { return train_; }
  const Pools& dev_pools() const { return dev_; }
  const Pools& test_pools() const { return test_; }

 private:
  std::vector<std::string> stems(std::size_t n) {
    std::vector<std::string> out;
    while (out.size() < n) {
      const std::size_t syllables = 2 + rng_.below(2);
      std::string s;
      for (std::size_t k = 0; k < syllables; ++k) {
        s += kConsonants[rng_.below(10)];
        s += kVowels[rng_.below(5)];
      }
      if (used_.insert(s).second) out.push_back(s);
    }
    return out;
  }

  template <std::size_t N>
  const char* pick(const std::array<const char*, N>& a) {
    return a[rng_.below(N)];
  }

  const std::string& stem(std::vector<std::string> Pools::*pool) {
    const Pools& p = heldout_ && rng_.bernoulli(cfg_.heldout_prob) ? *heldout_ : train_;
    const auto& v = p.*pool;
    return v[rng_.below(v.size())];
  }

  void push(Sentence& s, std::string form, std::string pos, std::string morph) {
    s.tags.push_back(project_tag(pos, morph, Tagset::kPosMorph));
    s.words.push_back(std::move(form));
    s.pos.push_back(std::move(pos));
    s.morph.push_back(std::move(morph));
  }

  void noun_phrase(Sentence& s, int c, int n) {
    const std::string infl = std::string(kNumberSuffix[n]) + kCaseSuffix[c];
    const std::string morph = nominal_morph(c, n);
    if (rng_.bernoulli(0.5)) push(s, pick(kDetRoots) + infl, "DET", morph);
    if (rng_.bernoulli(0.4)) {
      push(s, stem(&Pools::adj) + "ul" + infl, "ADJ", morph);
      if (rng_.bernoulli(0.3)) push(s, stem(&Pools::adj) + "ul" + infl, "ADJ", morph);
    }
    push(s, stem(&Pools::noun) + infl, "NOUN", morph);
  }

  void clause(Sentence& s) {
    const bool subject = rng_.bernoulli(0.75);
    const int number = static_cast<int>(rng_.below(2));
    if (subject) noun_phrase(s, 0, number);
    if (rng_.bernoulli(0.6)) noun_phrase(s, 1 + static_cast<int>(rng_.below(3)), static_cast<int>(rng_.below(2)));
    if (rng_.bernoulli(0.3)) {
      push(s, pick(kAdp), "ADP", "_");
      noun_phrase(s, 2, static_cast<int>(rng_.below(2)));
    }
    if (rng_.bernoulli(0.4)) push(s, stem(&Pools::adv) + "ce", "ADV", "_");
    // An overt subject fixes third person and its number.
    const std::size_t pn = subject ? (number ? 3 : 1) : rng_.below(4);
    const int tense = static_cast<int>(rng_.below(3));
    push(s, stem(&Pools::verb) + "r" + kTenseSuffix[tense] + kPersonSuffix[pn], "VERB",
         verb_morph(kPersonValue[pn], kPersonNumber[pn], tense));
  }

  Sentence sentence() {
    Sentence s;
    clause(s);
    if (rng_.bernoulli(0.3)) {
      push(s, ",", "PUNCT", "_");
      push(s, pick(kConj), "CONJ", "_");
      clause(s);
    }
    push(s, pick(kFinalPunct), "PUNCT", "_");
    return s;
  }

  const SyntheticConfig& cfg_;
  Rng& rng_;
  std::unordered_set<std::string> used_;
  Pools train_, dev_, test_;
  const Pools* heldout_ = nullptr;
};

}  // namespace

std::vector<std::string> synthetic_tag_inventory() {
  std::vector<std::string> tags = {"ADP", "ADV", "CONJ", "PUNCT"};
  for (const char* pos : {"NOUN", "ADJ", "DET"}) {
    for (int c = 0; c < 4; ++c) {
      for (int n = 0; n < 2; ++n) tags.push_back(project_tag(pos, nominal_morph(c, n), Tagset::kPosMorph));
    }
  }
  for (std::size_t pn = 0; pn < 4; ++pn) {
    for (int t = 0; t < 3; ++t) {
      tags.push_back(project_tag("VERB", verb_morph(kPersonValue[pn], kPersonNumber[pn], t), Tagset::kPosMorph));
    }
  }
  std::sort(tags.begin(), tags.end());
  return tags;
}

SyntheticCorpus generate_synthetic(const SyntheticConfig& cfg) {
  if (cfg.noun_stems == 0 || cfg.adj_stems == 0 || cfg.verb_stems == 0 || cfg.adv_stems == 0) {
    throw ConfigError("synthetic: every stem pool must be nonempty");
  }
  if (!(cfg.heldout_prob >= 0.0 && cfg.heldout_prob <= 1.0)) throw ConfigError("synthetic: heldout_prob must lie in [0, 1]");
  Rng rng(cfg.seed);
  Generator gen(cfg, rng);
  SyntheticCorpus out;
  out.train = gen.split(cfg.train_sentences, nullptr);
  out.dev = gen.split(cfg.dev_sentences, &gen.dev_pools());
  out.test = gen.split(cfg.test_sentences, &gen.test_pools());

  const std::size_t d = cfg.embedding_dim;
  std::unordered_map<std::string, std::vector<float>> prototypes;
  for (const std::string& tag : synthetic_tag_inventory()) {
    std::vector<float> p(d);
    for (float& v : p) v = static_cast<float>(rng.uniform(-1.0, 1.0));
    prototypes.emplace(tag, std::move(p));
  }
  std::unordered_set<std::string> seen;
  std::vector<float> values;
  for (const auto* split : {&out.train, &out.dev, &out.test}) {
    for (const Sentence& s : *split) {
      for (std::size_t i = 0; i < s.size(); ++i) {
        if (!seen.insert(s.words[i]).second) continue;
        out.embedding_words.push_back(s.words[i]);
        for (const float p : prototypes.at(s.tags[i])) {
          values.push_back(p + static_cast<float>(rng.uniform(-cfg.embedding_noise, cfg.embedding_noise)));
        }
      }
    }
  }
  out.embedding_vectors = Tensor<float>({out.embedding_words.size(), d}, std::move(values));
  return out;
}

}  // namespace morphtag
