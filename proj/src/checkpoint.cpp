#include "morphtag/checkpoint.hpp"

#include <bit>
#include <charconv>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace morphtag {

namespace fs = std::filesystem;

namespace {

constexpr const char* kFormat = "morphtag-checkpoint";
constexpr const char* kManifest = "manifest.txt";
constexpr const char* kWeights = "weights.bin";

struct VocabFile {
  const char* key;
  const char* file;
};
constexpr VocabFile kVocabFiles[] = {
    {"vocab.chars", "chars.tsv"},
    {"vocab.words", "words.tsv"},
    {"vocab.tags", "tags.tsv"},
    {"vocab.pretrained", "pretrained.tsv"},
};

void write_vocab(const fs::path& path, const Vocabulary& v) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  for (std::size_t i = 0; i < v.size(); ++i) out << i << '\t' << v.symbol(i) << '\n';
  if (!out) throw DataError("error writing '" + path.string() + "'");
}

Vocabulary read_vocab(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open vocabulary '" + path.string() + "'");
  std::vector<std::string> symbols;
  std::string line;
  while (std::getline(in, line)) {
    const std::size_t tab = line.find('\t');
    std::size_t id = 0;
    const auto res = std::from_chars(line.data(), line.data() + (tab == std::string::npos ? 0 : tab), id);
    if (tab == std::string::npos || res.ec != std::errc() || res.ptr != line.data() + tab || id != symbols.size()) {
      throw ParseError(path.string() + ":" + std::to_string(symbols.size() + 1) + ": expected '" +
                       std::to_string(symbols.size()) + "<TAB>symbol'");
    }
    symbols.push_back(line.substr(tab + 1));
  }
  Vocabulary v(symbols);
  if (v.size() != symbols.size()) throw ParseError(path.string() + ": duplicate symbol");
  return v;
}

std::uint32_t to_little_endian(std::uint32_t x) {
  if constexpr (std::endian::native == std::endian::big) {
    x = ((x & 0xffu) << 24) | ((x & 0xff00u) << 8) | ((x >> 8) & 0xff00u) | (x >> 24);
  }
  return x;
}

std::string shape_text(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += 'x';
    out += std::to_string(s[i]);
  }
  return out;
}

std::size_t parse_size(const std::string& text, const std::string& what) {
  std::size_t v = 0;
  const auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc() || res.ptr != text.data() + text.size()) {
    throw ParseError("manifest: bad " + what + " '" + text + "'");
  }
  return v;
}

Shape parse_shape(const std::string& text) {
  Shape s;
  std::size_t start = 0;
  while (true) {
    const std::size_t x = text.find('x', start);
    s.push_back(parse_size(text.substr(start, x == std::string::npos ? std::string::npos : x - start), "shape"));
    if (x == std::string::npos) break;
    start = x + 1;
  }
  return s;
}

std::size_t shape_count(const Shape& s) {
  std::size_t n = 1;
  for (const std::size_t d : s) n *= d;
  return n;
}

}  // namespace

template <typename T>
Checkpoint make_checkpoint(const Tagger<T>& model, const TrainConfig& train, const Vocabularies& vocab,
                           const EmbeddingTable* embeddings) {
  Checkpoint ckpt;
  ckpt.model = model.config();
  ckpt.train = train;
  ckpt.chars = vocab.chars;
  ckpt.words = vocab.words;
  ckpt.tags = vocab.tags;
  if (model.config().encoder.pretrained != PretrainedMode::kNone) {
    if (!embeddings) throw ConfigError("make_checkpoint: model uses embeddings but no table was given");
    ckpt.pretrained_words = embeddings->words;
  }
  model.params().for_each([&](const Param<T>& p) { ckpt.tensors.push_back({p.name, tensor_cast<float>(p.value)}); });
  return ckpt;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& dir) {
  const fs::path root(dir);
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw DataError("cannot create checkpoint directory '" + dir + "': " + ec.message());

  std::ostringstream manifest;
  manifest << "format=" << kFormat << '\n';
  manifest << "version=" << kCheckpointVersion << '\n';
  for (const auto& [k, v] : model_config_entries(ckpt.model)) manifest << "model." << k << '=' << v << '\n';
  for (const auto& [k, v] : train_config_entries(ckpt.train)) manifest << "train." << k << '=' << v << '\n';
  const Vocabulary* vocabs[] = {&ckpt.chars, &ckpt.words, &ckpt.tags, &ckpt.pretrained_words};
  for (std::size_t i = 0; i < 4; ++i) {
    if (i == 3 && ckpt.pretrained_words.size() == 0) continue;
    manifest << kVocabFiles[i].key << '=' << kVocabFiles[i].file << '\n';
    write_vocab(root / kVocabFiles[i].file, *vocabs[i]);
  }
  manifest << "weights=" << kWeights << '\n';

  std::ofstream blob(root / kWeights, std::ios::binary);
  if (!blob) throw DataError("cannot write '" + (root / kWeights).string() + "'");
  std::size_t offset = 0;
  std::vector<std::uint32_t> buf;
  for (const NamedTensor& t : ckpt.tensors) {
    const std::size_t n = t.value.size();
    manifest << "tensor=" << t.name << ' ' << shape_text(t.value.shape()) << ' ' << offset << ' ' << n << '\n';
    buf.resize(n);
    for (std::size_t i = 0; i < n; ++i) buf[i] = to_little_endian(std::bit_cast<std::uint32_t>(t.value[i]));
    blob.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(n * sizeof(std::uint32_t)));
    offset += n * sizeof(std::uint32_t);
  }
  if (!blob) throw DataError("error writing '" + (root / kWeights).string() + "'");

  std::ofstream mf(root / kManifest, std::ios::binary);
  mf << manifest.str();
  if (!mf) throw DataError("error writing '" + (root / kManifest).string() + "'");
}

Checkpoint load_checkpoint(const std::string& dir) {
  const fs::path root(dir);
  std::ifstream mf(root / kManifest, std::ios::binary);
  if (!mf) throw ParseError("cannot open '" + (root / kManifest).string() + "'");
  const KeyValues entries = parse_key_values(mf, (root / kManifest).string());

  Checkpoint ckpt;
  KeyValues model_entries, train_entries;
  struct TensorEntry {
    std::string name;
    Shape shape;
    std::size_t offset = 0, count = 0;
  };
  std::vector<TensorEntry> index;
  std::string format, version, weights;
  fs::path vocab_paths[4];
  for (const auto& [key, value] : entries) {
    if (key == "format") {
      format = value;
    } else if (key == "version") {
      version = value;
    } else if (key == "weights") {
      weights = value;
    } else if (key.rfind("model.", 0) == 0) {
      model_entries.emplace_back(key.substr(6), value);
    } else if (key.rfind("train.", 0) == 0) {
      train_entries.emplace_back(key.substr(6), value);
    } else if (key == "tensor") {
      std::istringstream ls(value);
      std::string name, shape, offset, count, extra;
      if (!(ls >> name >> shape >> offset >> count) || (ls >> extra)) {
        throw ParseError("manifest: malformed tensor entry '" + value + "'");
      }
      index.push_back({name, parse_shape(shape), parse_size(offset, "offset"), parse_size(count, "count")});
    } else {
      bool known = false;
      for (std::size_t i = 0; i < 4; ++i) {
        if (key == kVocabFiles[i].key) {
          vocab_paths[i] = root / value;
          known = true;
        }
      }
      if (!known) throw ParseError("manifest: unknown key '" + key + "'");
    }
  }
  if (format != kFormat) throw ParseError("manifest: not a morphtag checkpoint");
  if (version.empty()) throw ParseError("manifest: missing version");
  if (version != std::to_string(kCheckpointVersion)) throw ParseError("manifest: unsupported version " + version);
  if (weights.empty()) throw ParseError("manifest: missing weights entry");

  ModelConfig model;
  TrainConfig train;
  try {
    for (const auto& [k, v] : model_entries) {
      if (k == "encoder") apply_model_key(model, k, v);
    }
    for (const auto& [k, v] : model_entries) {
      if (k != "encoder" && !apply_model_key(model, k, v)) throw ConfigError("unknown model key '" + k + "'");
    }
    for (const auto& [k, v] : train_entries) {
      if (!apply_train_key(train, k, v)) throw ConfigError("unknown train key '" + k + "'");
    }
  } catch (const ConfigError& e) {
    throw ParseError(std::string("manifest: ") + e.what());
  }
  ckpt.model = model;
  ckpt.train = train;

  for (std::size_t i = 0; i < 3; ++i) {
    if (vocab_paths[i].empty()) throw ParseError(std::string("manifest: missing ") + kVocabFiles[i].key);
  }
  ckpt.chars = read_vocab(vocab_paths[0]);
  ckpt.words = read_vocab(vocab_paths[1]);
  ckpt.tags = read_vocab(vocab_paths[2]);
  if (!vocab_paths[3].empty()) ckpt.pretrained_words = read_vocab(vocab_paths[3]);

  std::ifstream blob(root / weights, std::ios::binary);
  if (!blob) throw ParseError("cannot open '" + (root / weights).string() + "'");
  const std::string bytes((std::istreambuf_iterator<char>(blob)), std::istreambuf_iterator<char>());
  std::size_t expected = 0;
  for (const TensorEntry& e : index) {
    if (shape_count(e.shape) != e.count) {
      throw ParseError("manifest: tensor '" + e.name + "' shape " + shape_text(e.shape) + " does not match count " +
                       std::to_string(e.count));
    }
    if (e.offset != expected) throw ParseError("manifest: tensor '" + e.name + "' has a non-contiguous offset");
    expected += e.count * sizeof(float);
  }
  if (bytes.size() != expected) {
    throw ParseError("weights blob has " + std::to_string(bytes.size()) + " bytes, manifest declares " +
                     std::to_string(expected));
  }
  for (const TensorEntry& e : index) {
    Tensor<float> t(e.shape);
    for (std::size_t i = 0; i < e.count; ++i) {
      std::uint32_t raw = 0;
      std::memcpy(&raw, bytes.data() + e.offset + i * sizeof(float), sizeof raw);
      t[i] = std::bit_cast<float>(to_little_endian(raw));
    }
    ckpt.tensors.push_back({e.name, std::move(t)});
  }
  return ckpt;
}

template <typename T>
std::unique_ptr<Tagger<T>> restore_tagger(const Checkpoint& ckpt) {
  Rng rng(0);
  auto model = std::make_unique<Tagger<T>>(ckpt.model, ckpt.chars.size(), ckpt.words.size(), ckpt.tags.size(),
                                           ckpt.pretrained_words.size(), rng);
  ParamStore<T>& params = model->params();
  if (params.size() != ckpt.tensors.size()) {
    throw DataError("checkpoint has " + std::to_string(ckpt.tensors.size()) + " tensors, model expects " +
                    std::to_string(params.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Param<T>& p = params[i];
    const NamedTensor& t = ckpt.tensors[i];
    if (p.name != t.name || p.value.shape() != t.value.shape()) {
      throw DataError("checkpoint tensor '" + t.name + "' " + shape_text(t.value.shape()) + " does not match '" +
                      p.name + "' " + shape_text(p.value.shape()));
    }
    p.value = tensor_cast<T>(t.value);
  }
  return model;
}

Vocabularies checkpoint_vocabularies(const Checkpoint& ckpt) {
  Vocabularies v;
  v.chars = ckpt.chars;
  v.words = ckpt.words;
  v.tags = ckpt.tags;
  return v;
}

EmbeddingTable checkpoint_embeddings(const Checkpoint& ckpt) {
  EmbeddingTable table;
  table.words = ckpt.pretrained_words;
  for (const NamedTensor& t : ckpt.tensors) {
    if (t.name == "pretrained.words") table.vectors = t.value;
  }
  return table;
}

#define MORPHTAG_INSTANTIATE(T)                                                                          \
  template Checkpoint make_checkpoint<T>(const Tagger<T>&, const TrainConfig&, const Vocabularies&,     \
                                         const EmbeddingTable*);                                        \
  template std::unique_ptr<Tagger<T>> restore_tagger<T>(const Checkpoint&);

MORPHTAG_INSTANTIATE(float)
MORPHTAG_INSTANTIATE(double)

#undef MORPHTAG_INSTANTIATE

}  // namespace morphtag
