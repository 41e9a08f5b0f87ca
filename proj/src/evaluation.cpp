#include "morphtag/evaluation.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <sstream>

namespace morphtag {

namespace {

EvalReport make_report(Tagset tagset, std::size_t tokens, std::size_t errors) {
  EvalReport r;
  r.tagset = tagset;
  r.tokens = tokens;
  r.errors = errors;
  r.error_rate = tokens ? 100.0 * static_cast<double>(errors) / static_cast<double>(tokens) : 0.0;
  return r;
}

int tagset_column(Tagset t) {
  switch (t) {
    case Tagset::kPos:
      return 0;
    case Tagset::kMorph:
      return 1;
    case Tagset::kPosMorph:
      return 2;
  }
  return 0;
}

}  // namespace

EvalReport error_rate(std::span<const int> predicted, std::span<const std::string> gold, const Vocabulary& tags,
                      Tagset tagset) {
  if (predicted.size() != gold.size()) {
    throw DataError("error_rate: " + std::to_string(predicted.size()) + " predictions for " +
                    std::to_string(gold.size()) + " gold tags");
  }
  std::vector<int> gold_ids(gold.size());
  for (std::size_t i = 0; i < gold.size(); ++i) gold_ids[i] = tags.find(gold[i]);
  return make_report(tagset, gold.size(), count_errors(predicted, gold_ids));
}

EvalReport error_rate(const std::vector<std::vector<int>>& predicted, const std::vector<Sentence>& gold,
                      const Vocabulary& tags, Tagset tagset) {
  if (predicted.size() != gold.size()) {
    throw DataError("error_rate: " + std::to_string(predicted.size()) + " predicted sentences for " +
                    std::to_string(gold.size()) + " gold sentences");
  }
  std::vector<int> flat_pred;
  std::vector<std::string> flat_gold;
  for (std::size_t s = 0; s < gold.size(); ++s) {
    if (predicted[s].size() != gold[s].size()) {
      throw DataError("error_rate: sentence " + std::to_string(s) + " length mismatch");
    }
    flat_pred.insert(flat_pred.end(), predicted[s].begin(), predicted[s].end());
    flat_gold.insert(flat_gold.end(), gold[s].tags.begin(), gold[s].tags.end());
  }
  return error_rate(flat_pred, flat_gold, tags, tagset);
}

std::size_t count_errors(std::span<const int> predicted, std::span<const int> gold) {
  if (predicted.size() != gold.size()) throw DataError("count_errors: length mismatch");
  std::size_t errors = 0;
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] < 0 || predicted[i] != gold[i]) ++errors;
  }
  return errors;
}

std::string format_percent(double value) {
  if (!std::isfinite(value)) return "nan";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::fixed);
  std::string s(buf, res.ptr);
  bool negative = false;
  if (!s.empty() && s[0] == '-') {
    negative = true;
    s.erase(0, 1);
  }
  std::size_t dot = s.find('.');
  if (dot == std::string::npos) {
    s += ".";
    dot = s.size() - 1;
  }
  while (s.size() < dot + 4) s += '0';
  const bool round_up = s[dot + 3] >= '5';
  std::string digits = s.substr(0, dot) + s.substr(dot + 1, 2);
  if (round_up) {
    std::size_t i = digits.size();
    while (i > 0) {
      --i;
      if (digits[i] == '9') {
        digits[i] = '0';
      } else {
        ++digits[i];
        break;
      }
      if (i == 0) digits.insert(digits.begin(), '1');
    }
  }
  std::string out = digits.substr(0, digits.size() - 2) + "." + digits.substr(digits.size() - 2);
  if (negative && out.find_first_not_of("0.") != std::string::npos) out.insert(out.begin(), '-');
  return out;
}

std::string report_text(const std::vector<EvalReport>& reports) {
  std::vector<std::string> setups;
  std::map<std::pair<std::string, int>, std::string> cells;
  for (const EvalReport& r : reports) {
    if (std::find(setups.begin(), setups.end(), r.setup) == setups.end()) setups.push_back(r.setup);
    cells[{r.setup, tagset_column(r.tagset)}] = format_percent(r.error_rate);
  }
  std::size_t width = 5;
  for (const std::string& s : setups) width = std::max(width, s.size());
  std::ostringstream out;
  auto pad = [](const std::string& s, std::size_t w) { return s + std::string(w > s.size() ? w - s.size() : 0, ' '); };
  out << pad("setup", width);
  for (const char* name : {"POS", "MORPH", "POSMORPH"}) out << "  " << pad(name, 8);
  out << '\n';
  for (const std::string& s : setups) {
    out << pad(s, width);
    for (int c = 0; c < 3; ++c) {
      auto it = cells.find({s, c});
      out << "  " << pad(it == cells.end() ? "-" : it->second, 8);
    }
    out << '\n';
  }
  return out.str();
}

std::string report_csv(const std::vector<EvalReport>& reports) {
  std::vector<const EvalReport*> ordered;
  for (const EvalReport& r : reports) ordered.push_back(&r);
  std::stable_sort(ordered.begin(), ordered.end(), [](const EvalReport* a, const EvalReport* b) {
    return tagset_column(a->tagset) < tagset_column(b->tagset);
  });
  std::ostringstream out;
  out << "tagset,tokens,errors,error_rate\n";
  for (const EvalReport* r : ordered) {
    out << tagset_name(r->tagset) << ',' << r->tokens << ',' << r->errors << ',' << format_percent(r->error_rate)
        << '\n';
  }
  return out.str();
}

}  // namespace morphtag
