#include "morphtag/data.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>

namespace morphtag {

Tagset parse_tagset(std::string_view name) {
  if (name == "POS" || name == "pos") return Tagset::kPos;
  if (name == "MORPH" || name == "morph") return Tagset::kMorph;
  if (name == "POSMORPH" || name == "posmorph") return Tagset::kPosMorph;
  throw ParseError("unknown tag set '" + std::string(name) + "' (expected POS, MORPH or POSMORPH)");
}

std::string_view tagset_name(Tagset tagset) {
  switch (tagset) {
    case Tagset::kPos:
      return "POS";
    case Tagset::kMorph:
      return "MORPH";
    case Tagset::kPosMorph:
      return "POSMORPH";
  }
  return "POS";
}

std::string project_tag(const std::string& pos, const std::string& morph, Tagset tagset) {
  switch (tagset) {
    case Tagset::kPos:
      return pos;
    case Tagset::kMorph:
      return morph;
    case Tagset::kPosMorph:
      return morph == "_" ? pos : pos + "|" + morph;
  }
  return pos;
}

// ---------------------------------------------------------------------------
// UTF-8

std::vector<char32_t> utf8_decode(std::string_view s) {
  std::vector<char32_t> out;
  out.reserve(s.size());
  std::size_t i = 0;
  while (i < s.size()) {
    const auto b0 = static_cast<unsigned char>(s[i]);
    std::size_t len = 0;
    char32_t cp = 0;
    if (b0 < 0x80) {
      len = 1;
      cp = b0;
    } else if ((b0 & 0xE0) == 0xC0) {
      len = 2;
      cp = b0 & 0x1F;
    } else if ((b0 & 0xF0) == 0xE0) {
      len = 3;
      cp = b0 & 0x0F;
    } else if ((b0 & 0xF8) == 0xF0) {
      len = 4;
      cp = b0 & 0x07;
    }
    bool ok = len > 0 && i + len <= s.size();
    for (std::size_t k = 1; ok && k < len; ++k) {
      const auto b = static_cast<unsigned char>(s[i + k]);
      if ((b & 0xC0) != 0x80) {
        ok = false;
      } else {
        cp = (cp << 6) | (b & 0x3F);
      }
    }
    if (ok) {
      static constexpr char32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
      if (cp < kMin[len] || cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) ok = false;
    }
    if (!ok) {
      out.push_back(0xFFFD);
      ++i;
      continue;
    }
    out.push_back(cp);
    i += len;
  }
  return out;
}

std::string utf8_encode(char32_t cp) {
  std::string out;
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
  return out;
}

// Covers Latin, Latin-1, Latin Extended-A, Greek and Cyrillic capitals.
char32_t lowercase(char32_t cp) {
  if (cp >= U'A' && cp <= U'Z') return cp + 0x20;
  if (cp < 0xC0) return cp;
  if (cp <= 0xDE) return cp == 0xD7 ? cp : cp + 0x20;
  if (cp >= 0x100 && cp <= 0x17F) {
    if (cp == 0x130) return U'i';
    if (cp == 0x178) return 0xFF;
    if ((cp >= 0x100 && cp <= 0x137) || (cp >= 0x14A && cp <= 0x177)) return (cp % 2 == 0) ? cp + 1 : cp;
    if ((cp >= 0x139 && cp <= 0x148) || (cp >= 0x179 && cp <= 0x17E)) return (cp % 2 == 1) ? cp + 1 : cp;
    return cp;
  }
  if (cp == 0x386) return 0x3AC;
  if (cp >= 0x388 && cp <= 0x38A) return cp + 0x25;
  if (cp == 0x38C) return 0x3CC;
  if (cp == 0x38E || cp == 0x38F) return cp + 0x3F;
  if (cp >= 0x391 && cp <= 0x3AB && cp != 0x3A2) return cp + 0x20;
  if (cp >= 0x400 && cp <= 0x40F) return cp + 0x50;
  if (cp >= 0x410 && cp <= 0x42F) return cp + 0x20;
  return cp;
}

std::string lowercase(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (const char32_t cp : utf8_decode(s)) out += utf8_encode(lowercase(cp));
  return out;
}

std::vector<std::string> split_chars(std::string_view word) {
  std::vector<std::string> out;
  for (const char32_t cp : utf8_decode(word)) out.push_back(utf8_encode(cp));
  return out;
}

// ---------------------------------------------------------------------------
// Corpus

namespace {

std::string strip_cr(std::string line) {
  if (!line.empty() && line.back() == '\r') line.pop_back();
  return line;
}

bool is_blank(const std::string& line) {
  return std::all_of(line.begin(), line.end(), [](char c) { return c == ' ' || c == '\t'; });
}

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t tab = line.find('\t', start);
    fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return fields;
}

}  // namespace

std::vector<Sentence> parse_corpus(std::istream& in, Tagset tagset, const std::string& source) {
  std::vector<Sentence> out;
  Sentence current;
  std::string line;
  std::size_t line_no = 0;
  std::size_t blank_run = 0;  // blank lines since the last token line
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(std::move(line));
    if (is_blank(line)) {
      if (!current.words.empty()) {
        out.push_back(std::move(current));
        current = Sentence();
      }
      ++blank_run;
      continue;
    }
    // Trailing blank lines are tolerated; empty sentences elsewhere are not.
    if (current.words.empty() && ((out.empty() && blank_run > 0) || blank_run > 1)) {
      throw ParseError(source + ":" + std::to_string(line_no) + ": empty sentence before this line");
    }
    blank_run = 0;
    const std::vector<std::string> fields = split_tabs(line);
    if (fields.size() != 3) {
      throw ParseError(source + ":" + std::to_string(line_no) + ": expected 3 tab-separated fields, found " +
                       std::to_string(fields.size()));
    }
    for (const std::string& f : fields) {
      if (f.empty()) throw ParseError(source + ":" + std::to_string(line_no) + ": empty field");
    }
    current.words.push_back(lowercase(fields[0]));
    current.pos.push_back(fields[1]);
    current.morph.push_back(fields[2]);
    current.tags.push_back(project_tag(fields[1], fields[2], tagset));
  }
  if (!current.words.empty()) out.push_back(std::move(current));
  return out;
}

std::vector<Sentence> load_corpus(const std::string& path, Tagset tagset) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open corpus file '" + path + "'");
  return parse_corpus(in, tagset, path);
}

void write_corpus(std::ostream& out, const std::vector<Sentence>& sentences) {
  for (std::size_t s = 0; s < sentences.size(); ++s) {
    const Sentence& sent = sentences[s];
    if (s > 0) out << '\n';
    for (std::size_t i = 0; i < sent.size(); ++i) {
      out << sent.words[i] << '\t' << sent.pos[i] << '\t' << sent.morph[i] << '\n';
    }
  }
}

void write_corpus(const std::string& path, const std::vector<Sentence>& sentences) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write corpus file '" + path + "'");
  write_corpus(out, sentences);
}

std::size_t token_count(const std::vector<Sentence>& sentences) {
  std::size_t n = 0;
  for (const Sentence& s : sentences) n += s.size();
  return n;
}

// ---------------------------------------------------------------------------
// Vocabularies

Vocabulary::Vocabulary(std::vector<std::string> symbols) {
  for (std::string& s : symbols) add(s);
}

int Vocabulary::find(const std::string& symbol) const {
  auto it = index_.find(symbol);
  return it == index_.end() ? -1 : it->second;
}

int Vocabulary::id_or(const std::string& symbol, int fallback) const {
  const int id = find(symbol);
  return id < 0 ? fallback : id;
}

int Vocabulary::add(const std::string& symbol) {
  auto [it, inserted] = index_.emplace(symbol, static_cast<int>(symbols_.size()));
  if (inserted) symbols_.push_back(symbol);
  return it->second;
}

Vocabularies build_vocabularies(const std::vector<Sentence>& train) {
  std::map<std::string, std::size_t> char_counts, word_counts;
  std::map<std::string, std::size_t> tags;
  for (const Sentence& s : train) {
    for (std::size_t i = 0; i < s.size(); ++i) {
      ++word_counts[s.words[i]];
      for (const std::string& c : split_chars(s.words[i])) ++char_counts[c];
      ++tags[s.tags[i]];
    }
  }
  Vocabularies v;
  v.chars.add(kPadSymbol);
  v.chars.add(kUnkSymbol);
  for (const auto& [c, n] : char_counts) {
    const int id = v.chars.add(c);
    if (n == 1) v.singleton_chars.insert(id);
  }
  v.words.add(kUnkSymbol);
  for (const auto& [w, n] : word_counts) {
    const int id = v.words.add(w);
    if (n == 1) v.singleton_words.insert(id);
  }
  for (const auto& entry : tags) v.tags.add(entry.first);
  return v;
}

CoverageReport coverage_report(const std::vector<Sentence>& train, const std::vector<Sentence>& test) {
  std::unordered_map<std::string, std::size_t> counts;
  for (const Sentence& s : train) {
    for (const std::string& w : s.words) ++counts[lowercase(w)];
  }
  CoverageReport r;
  for (const Sentence& s : test) {
    for (const std::string& w : s.words) {
      ++r.tokens;
      auto it = counts.find(lowercase(w));
      const std::size_t n = it == counts.end() ? 0 : it->second;
      if (n == 0) {
        ++r.unseen;
      } else if (n < 5) {
        ++r.rare;
      } else {
        ++r.frequent;
      }
    }
  }
  return r;
}

// ---------------------------------------------------------------------------
// Embeddings

EmbeddingTable parse_embeddings(std::istream& in, std::ostream* warn, const std::string& source) {
  std::string line;
  std::size_t line_no = 0;
  auto fail = [&](const std::string& what) {
    throw ParseError(source + ":" + std::to_string(line_no) + ": " + what);
  };
  if (!std::getline(in, line)) {
    line_no = 1;
    fail("missing header");
  }
  ++line_no;
  std::size_t count = 0, dim = 0;
  {
    std::istringstream header(strip_cr(line));
    std::string extra;
    if (!(header >> count >> dim) || (header >> extra) || dim == 0) fail("malformed header, expected 'V d'");
  }
  std::vector<float> values(dim, 0.0f);
  std::vector<double> sum(dim, 0.0);
  EmbeddingTable table;
  table.words.add(kUnkSymbol);
  std::size_t loaded = 0;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(std::move(line));
    if (is_blank(line)) continue;
    std::istringstream ls(line);
    std::string word;
    ls >> word;
    std::vector<float> vec;
    vec.reserve(dim);
    std::string tok;
    while (ls >> tok) {
      char* end = nullptr;
      const float v = std::strtof(tok.c_str(), &end);
      if (end == tok.c_str() || *end != '\0') fail("bad number '" + tok + "'");
      vec.push_back(v);
    }
    if (vec.size() != dim) {
      fail("vector for '" + word + "' has " + std::to_string(vec.size()) + " values, header declares " +
           std::to_string(dim));
    }
    ++loaded;
    const std::string key = lowercase(word);
    if (table.words.find(key) >= 0) {
      if (warn) *warn << "warning: " << source << ":" << line_no << ": duplicate word '" << key
                      << "', keeping first vector\n";
      continue;
    }
    table.words.add(key);
    values.insert(values.end(), vec.begin(), vec.end());
    for (std::size_t j = 0; j < dim; ++j) sum[j] += vec[j];
  }
  if (loaded != count && warn) {
    *warn << "warning: " << source << ": header declares " << count << " vectors, found " << loaded << "\n";
  }
  const std::size_t rows = table.words.size();
  if (rows > 1) {
    for (std::size_t j = 0; j < dim; ++j) values[j] = static_cast<float>(sum[j] / double(rows - 1));
  }
  table.vectors = Tensor<float>({rows, dim}, std::move(values));
  return table;
}

EmbeddingTable load_embeddings(const std::string& path, std::ostream* warn) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open embedding file '" + path + "'");
  return parse_embeddings(in, warn, path);
}

EmbeddingTable make_embedding_table(const std::vector<std::string>& words, const Tensor<float>& vectors) {
  if (vectors.rows() != words.size()) throw DimensionError("make_embedding_table: one vector per word required");
  const std::size_t dim = vectors.cols();
  EmbeddingTable table;
  table.words.add(kUnkSymbol);
  std::vector<float> values(dim, 0.0f);
  std::vector<double> sum(dim, 0.0);
  for (std::size_t i = 0; i < words.size(); ++i) {
    const std::string key = lowercase(words[i]);
    if (table.words.find(key) >= 0) continue;
    table.words.add(key);
    const auto row = vectors.row(i);
    values.insert(values.end(), row.begin(), row.end());
    for (std::size_t j = 0; j < dim; ++j) sum[j] += row[j];
  }
  const std::size_t rows = table.words.size();
  if (rows > 1) {
    for (std::size_t j = 0; j < dim; ++j) values[j] = static_cast<float>(sum[j] / double(rows - 1));
  }
  table.vectors = Tensor<float>({rows, dim}, std::move(values));
  return table;
}

void write_embeddings(const std::string& path, const std::vector<std::string>& words, const Tensor<float>& vectors) {
  if (vectors.rows() != words.size()) throw DimensionError("write_embeddings: one vector per word required");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write embedding file '" + path + "'");
  out << words.size() << ' ' << vectors.cols() << '\n';
  char buf[32];
  for (std::size_t i = 0; i < words.size(); ++i) {
    out << words[i];
    for (const float v : vectors.row(i)) {
      const int n = std::snprintf(buf, sizeof buf, " %.6g", static_cast<double>(v));
      out.write(buf, n);
    }
    out << '\n';
  }
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size, Rng& rng) {
  if (batch_size == 0) throw ConfigError("batch size must be positive");
  std::vector<std::size_t> order(n);
  for (std::size_t i = 0; i < n; ++i) order[i] = i;
  rng.shuffle(std::span<std::size_t>(order));
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t i = 0; i < n; i += batch_size) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
  }
  return batches;
}

}  // namespace morphtag
