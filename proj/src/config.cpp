#include "morphtag/config.hpp"

#include <charconv>
#include <fstream>
#include <istream>

namespace morphtag {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::size_t to_size(const std::string& key, const std::string& value) {
  std::size_t out = 0;
  const auto res = std::from_chars(value.data(), value.data() + value.size(), out);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + value + "'");
  }
  return out;
}

double to_double(const std::string& key, const std::string& value) {
  double out = 0.0;
  const auto res = std::from_chars(value.data(), value.data() + value.size(), out);
  if (res.ec != std::errc() || res.ptr != value.data() + value.size()) {
    throw ConfigError(key + ": expected a number, got '" + value + "'");
  }
  return out;
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1" || value == "yes") return true;
  if (value == "false" || value == "0" || value == "no") return false;
  throw ConfigError(key + ": expected true or false, got '" + value + "'");
}

std::vector<std::size_t> to_size_list(const std::string& key, const std::string& value) {
  std::vector<std::size_t> out;
  std::size_t start = 0;
  while (start <= value.size()) {
    const std::size_t comma = value.find(',', start);
    const std::string item = trim(value.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (!item.empty()) out.push_back(to_size(key, item));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::string size_list(const std::vector<std::size_t>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ',';
    out += std::to_string(v[i]);
  }
  return out;
}

RecurrentDropout parse_recurrent_dropout(const std::string& value) {
  if (value == "per_step") return RecurrentDropout::kPerStep;
  if (value == "per_sequence") return RecurrentDropout::kPerSequence;
  throw ConfigError("recurrent_dropout: expected per_step or per_sequence, got '" + value + "'");
}

}  // namespace

KeyValues parse_key_values(std::istream& in, const std::string& source) {
  KeyValues out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected key=value");
    }
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw ConfigError(source + ":" + std::to_string(line_no) + ": empty key");
    out.emplace_back(key, trim(t.substr(eq + 1)));
  }
  return out;
}

KeyValues load_key_values(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  return parse_key_values(in, path);
}

std::string format_number(double value) {
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, res.ptr);
}

KeyValues model_config_entries(const ModelConfig& cfg) {
  const EncoderConfig& e = cfg.encoder;
  return {
      {"encoder", std::string(encoder_kind_name(e.kind))},
      {"char_dim", std::to_string(e.char_dim)},
      {"word_dim", std::to_string(e.word_dim)},
      {"hidden", size_list(e.hidden)},
      {"max_word_len", std::to_string(e.max_word_len)},
      {"conv_layers", std::to_string(e.conv_layers)},
      {"conv_filters", std::to_string(e.conv_filters)},
      {"conv_width", std::to_string(e.conv_width)},
      {"highway_min_width", std::to_string(e.highway_min_width)},
      {"highway_max_width", std::to_string(e.highway_max_width)},
      {"highway_filters_per_width", std::to_string(e.highway_filters_per_width)},
      {"highway_max_filters", std::to_string(e.highway_max_filters)},
      {"highway_layers", std::to_string(e.highway_layers)},
      {"pretrained", std::string(pretrained_mode_name(e.pretrained))},
      {"pretrained_dim", std::to_string(e.pretrained_dim)},
      {"context_layers", std::to_string(cfg.context_layers)},
      {"context_hidden", std::to_string(cfg.context_hidden)},
      {"skip_connections", cfg.skip_connections ? "true" : "false"},
      {"tagset", std::string(tagset_name(cfg.tagset))},
      {"keep_prob", format_number(cfg.keep_prob)},
      {"recurrent_dropout", cfg.recurrent_dropout == RecurrentDropout::kPerStep ? "per_step" : "per_sequence"},
  };
}

KeyValues train_config_entries(const TrainConfig& cfg) {
  return {
      {"lr", format_number(cfg.base_lr)},
      {"rms_decay", format_number(cfg.rms_decay)},
      {"rms_eps", format_number(cfg.rms_eps)},
      {"batch_size", std::to_string(cfg.batch_size)},
      {"lr_halving_period", std::to_string(cfg.lr_halving_period)},
      {"max_epochs", std::to_string(cfg.max_epochs)},
      {"patience", std::to_string(cfg.patience)},
      {"grad_clip_norm", format_number(cfg.grad_clip_norm)},
      {"unk_replace_prob", format_number(cfg.unk_replace_prob)},
      {"eval_batch_size", std::to_string(cfg.eval_batch_size)},
      {"seed", std::to_string(cfg.seed)},
  };
}

bool apply_model_key(ModelConfig& cfg, const std::string& key, const std::string& value) {
  EncoderConfig& e = cfg.encoder;
  if (key == "encoder") {
    const EncoderConfig fresh = EncoderConfig::defaults(parse_encoder_kind(value));
    const PretrainedMode mode = e.pretrained;
    const std::size_t dim = e.pretrained_dim;
    e = fresh;
    e.pretrained = mode;
    e.pretrained_dim = dim;
  } else if (key == "char_dim") {
    e.char_dim = to_size(key, value);
  } else if (key == "word_dim") {
    e.word_dim = to_size(key, value);
  } else if (key == "hidden") {
    e.hidden = to_size_list(key, value);
  } else if (key == "max_word_len") {
    e.max_word_len = to_size(key, value);
  } else if (key == "conv_layers") {
    e.conv_layers = to_size(key, value);
  } else if (key == "conv_filters") {
    e.conv_filters = to_size(key, value);
  } else if (key == "conv_width") {
    e.conv_width = to_size(key, value);
  } else if (key == "highway_min_width") {
    e.highway_min_width = to_size(key, value);
  } else if (key == "highway_max_width") {
    e.highway_max_width = to_size(key, value);
  } else if (key == "highway_filters_per_width") {
    e.highway_filters_per_width = to_size(key, value);
  } else if (key == "highway_max_filters") {
    e.highway_max_filters = to_size(key, value);
  } else if (key == "highway_layers") {
    e.highway_layers = to_size(key, value);
  } else if (key == "pretrained") {
    e.pretrained = parse_pretrained_mode(value);
  } else if (key == "pretrained_dim") {
    e.pretrained_dim = to_size(key, value);
  } else if (key == "context_layers") {
    cfg.context_layers = to_size(key, value);
  } else if (key == "context_hidden") {
    cfg.context_hidden = to_size(key, value);
  } else if (key == "skip_connections") {
    cfg.skip_connections = to_bool(key, value);
  } else if (key == "tagset") {
    try {
      cfg.tagset = parse_tagset(value);
    } catch (const ParseError& err) {
      throw ConfigError(err.what());
    }
  } else if (key == "keep_prob") {
    cfg.keep_prob = to_double(key, value);
  } else if (key == "recurrent_dropout") {
    cfg.recurrent_dropout = parse_recurrent_dropout(value);
  } else {
    return false;
  }
  return true;
}

bool apply_train_key(TrainConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "lr") {
    cfg.base_lr = to_double(key, value);
  } else if (key == "rms_decay") {
    cfg.rms_decay = to_double(key, value);
  } else if (key == "rms_eps") {
    cfg.rms_eps = to_double(key, value);
  } else if (key == "batch_size") {
    cfg.batch_size = to_size(key, value);
  } else if (key == "lr_halving_period") {
    cfg.lr_halving_period = to_size(key, value);
  } else if (key == "max_epochs") {
    cfg.max_epochs = to_size(key, value);
  } else if (key == "patience") {
    cfg.patience = to_size(key, value);
  } else if (key == "grad_clip_norm") {
    cfg.grad_clip_norm = to_double(key, value);
  } else if (key == "unk_replace_prob") {
    cfg.unk_replace_prob = to_double(key, value);
  } else if (key == "eval_batch_size") {
    cfg.eval_batch_size = to_size(key, value);
  } else if (key == "seed") {
    cfg.seed = to_size(key, value);
  } else {
    return false;
  }
  return true;
}

void apply_entries(const KeyValues& entries, ModelConfig& model, TrainConfig& train) {
  for (const auto& [key, value] : entries) {
    if (key == "encoder") apply_model_key(model, key, value);
  }
  for (const auto& [key, value] : entries) {
    if (key == "encoder") continue;
    if (!apply_model_key(model, key, value) && !apply_train_key(train, key, value)) {
      throw ConfigError("unknown configuration key '" + key + "'");
    }
  }
}

}  // namespace morphtag
