#pragma once

#include <span>
#include <string>
#include <vector>

#include "morphtag/data.hpp"

namespace morphtag {

struct EvalReport {
  std::string setup;
  Tagset tagset = Tagset::kPos;
  std::size_t tokens = 0;
  std::size_t errors = 0;
  double error_rate = 0.0;  // percent
};

// Exact match on the full tag string. Gold tags outside the inventory are
// errors whatever was predicted.
EvalReport error_rate(std::span<const int> predicted, std::span<const std::string> gold, const Vocabulary& tags,
                      Tagset tagset);
EvalReport error_rate(const std::vector<std::vector<int>>& predicted, const std::vector<Sentence>& gold,
                      const Vocabulary& tags, Tagset tagset);

// Same rule on ids, where gold -1 marks a tag outside the inventory.
std::size_t count_errors(std::span<const int> predicted, std::span<const int> gold);

// Two decimals, halves rounded up, based on the shortest decimal form.
std::string format_percent(double value);

// Rows are setups in first-appearance order; columns POS, MORPH, POSMORPH.
std::string report_text(const std::vector<EvalReport>& reports);
// "tagset,tokens,errors,error_rate" with rows ordered POS, MORPH, POSMORPH.
std::string report_csv(const std::vector<EvalReport>& reports);

}  // namespace morphtag
