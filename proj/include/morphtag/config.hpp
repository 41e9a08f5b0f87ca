#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "morphtag/tagger.hpp"
#include "morphtag/training.hpp"

namespace morphtag {

using KeyValues = std::vector<std::pair<std::string, std::string>>;

// Flat "key=value" lines; '#' starts a comment line.
KeyValues parse_key_values(std::istream& in, const std::string& source = "<stream>");
KeyValues load_key_values(const std::string& path);

// Shortest decimal form that reads back to the same double.
std::string format_number(double value);

KeyValues model_config_entries(const ModelConfig& cfg);
KeyValues train_config_entries(const TrainConfig& cfg);

// Returns false for keys that belong to neither config.
bool apply_model_key(ModelConfig& cfg, const std::string& key, const std::string& value);
bool apply_train_key(TrainConfig& cfg, const std::string& key, const std::string& value);

// Applies entries in order, except that "encoder" is applied first because it
// resets the encoder hyperparameters to that kind's defaults. Unknown keys
// raise ConfigError.
void apply_entries(const KeyValues& entries, ModelConfig& model, TrainConfig& train);

}  // namespace morphtag
