#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "morphtag/checkpoint.hpp"
#include "morphtag/config.hpp"
#include "morphtag/evaluation.hpp"
#include "morphtag/synthetic.hpp"
#include "morphtag/training.hpp"

using namespace morphtag;
namespace fs = std::filesystem;

namespace {

constexpr int kExitError = 1;
constexpr int kExitDiverged = 3;
constexpr int kExitGradcheck = 4;

std::string fixed(double v, int digits) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

std::vector<EncodedSentence> encode_all(const std::vector<Sentence>& sentences, const Vocabularies& vocab,
                                        const EmbeddingTable* emb) {
  std::vector<EncodedSentence> out;
  out.reserve(sentences.size());
  for (const Sentence& s : sentences) out.push_back(encode_sentence(s, vocab, emb));
  return out;
}

struct TrainArgs {
  std::string train, dev, config, out, metrics, embeddings;
  std::vector<std::string> sets;
  // Flag overrides, applied after the config file.
  KeyValues overrides;
};

int cmd_train(const TrainArgs& a) {
  ModelConfig model;
  TrainConfig train;
  KeyValues entries;
  if (!a.config.empty()) entries = load_key_values(a.config);
  for (const std::string& s : a.sets) {
    const std::size_t eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    entries.emplace_back(s.substr(0, eq), s.substr(eq + 1));
  }
  entries.insert(entries.end(), a.overrides.begin(), a.overrides.end());
  apply_entries(entries, model, train);

  std::unique_ptr<EmbeddingTable> emb;
  if (model.encoder.pretrained != PretrainedMode::kNone) {
    if (a.embeddings.empty()) throw ConfigError("pretrained=" + std::string(pretrained_mode_name(model.encoder.pretrained)) +
                                                " requires --embeddings");
    emb = std::make_unique<EmbeddingTable>(load_embeddings(a.embeddings, &std::cerr));
    model.encoder.pretrained_dim = emb->dim();
  } else if (!a.embeddings.empty()) {
    throw ConfigError("--embeddings requires --pretrained fixed or finetuned");
  }
  model.validate();
  train.validate();

  const auto train_set = load_corpus(a.train, model.tagset);
  const auto dev_set = load_corpus(a.dev, model.tagset);
  const Vocabularies vocab = build_vocabularies(train_set);
  const auto train_enc = encode_all(train_set, vocab, emb.get());
  const auto dev_enc = encode_all(dev_set, vocab, emb.get());

  Rng init(train.seed);
  Tagger<float> tagger(model, vocab.chars.size(), vocab.words.size(), vocab.tags.size(), emb ? emb->size() : 0, init);
  if (emb) tagger.set_pretrained(emb->vectors);

  fs::create_directories(a.out);
  const std::string metrics_path = a.metrics.empty() ? (fs::path(a.out) / "metrics.csv").string() : a.metrics;
  std::ofstream metrics(metrics_path);
  if (!metrics) throw DataError("cannot write '" + metrics_path + "'");
  metrics << "# train=" << a.train << "\n# dev=" << a.dev << '\n';
  if (!a.embeddings.empty()) metrics << "# embeddings=" << a.embeddings << '\n';
  for (const auto& [k, v] : model_config_entries(model)) metrics << "# " << k << '=' << v << '\n';
  for (const auto& [k, v] : train_config_entries(train)) metrics << "# " << k << '=' << v << '\n';
  metrics << "epoch,train_loss,dev_error,seconds\n";

  std::cerr << "train " << train_set.size() << " sentences, " << token_count(train_set) << " tokens; dev "
            << dev_set.size() << " sentences; " << vocab.tags.size() << " tags; " << tagger.params().parameter_count()
            << " parameters\n";
  FitCallbacks cb;
  cb.on_epoch = [&](const EpochMetrics& m) {
    metrics << m.epoch << ',' << fixed(m.train_loss, 6) << ',' << fixed(m.dev_error, 4) << ',' << fixed(m.seconds, 3)
            << '\n';
    metrics.flush();
    std::cerr << "epoch " << m.epoch << "  loss " << fixed(m.train_loss, 4) << "  dev error "
              << format_percent(m.dev_error) << "%  (" << fixed(m.seconds, 1) << " s)\n";
  };
  const FitResult result = fit(tagger, train_enc, dev_enc, vocab, train, cb);
  if (!result.log.empty()) {
    save_checkpoint(make_checkpoint(tagger, train, vocab, emb.get()), a.out);
  }
  if (result.diverged) {
    std::cerr << "error: " << result.message;
    if (!result.log.empty()) std::cerr << "; best checkpoint (epoch " << result.best_epoch << ") saved to " << a.out;
    std::cerr << '\n';
    return kExitDiverged;
  }
  std::cerr << "best dev error " << format_percent(result.best_dev_error) << "% at epoch " << result.best_epoch
            << "; checkpoint written to " << a.out << '\n';
  return 0;
}

// Reads either tag output ("form<TAB>tag") or corpus lines projected to the tag set.
std::vector<std::vector<std::string>> load_predicted_tags(const std::string& path, Tagset tagset) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  std::vector<std::vector<std::string>> out;
  std::vector<std::string> current;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) {
      if (!current.empty()) out.push_back(std::move(current));
      current.clear();
      continue;
    }
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      const std::size_t tab = line.find('\t', start);
      fields.push_back(line.substr(start, tab == std::string::npos ? std::string::npos : tab - start));
      if (tab == std::string::npos) break;
      start = tab + 1;
    }
    if (fields.size() == 2) {
      current.push_back(fields[1]);
    } else if (fields.size() == 3) {
      current.push_back(project_tag(fields[1], fields[2], tagset));
    } else {
      throw ParseError(path + ":" + std::to_string(line_no) + ": expected 2 or 3 tab-separated fields");
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

int cmd_eval(const std::string& model_dir, const std::string& predicted, const std::string& test,
             const std::string& tagset_arg) {
  EvalReport report;
  if (!predicted.empty()) {
    const Tagset tagset = tagset_arg.empty() ? Tagset::kPosMorph : parse_tagset(tagset_arg);
    const auto gold = load_corpus(test, tagset);
    const auto pred = load_predicted_tags(predicted, tagset);
    if (pred.size() != gold.size()) {
      throw DataError("predicted file has " + std::to_string(pred.size()) + " sentences, gold has " +
                      std::to_string(gold.size()));
    }
    // The inventory is every tag seen in either file, so only string equality counts.
    Vocabulary tags;
    std::vector<std::vector<int>> ids;
    for (const auto& s : gold) {
      for (const auto& t : s.tags) tags.add(t);
    }
    for (const auto& s : pred) {
      ids.emplace_back();
      for (const auto& t : s) ids.back().push_back(tags.add(t));
    }
    report = error_rate(ids, gold, tags, tagset);
    report.setup = "predicted";
  } else {
    const Checkpoint ckpt = load_checkpoint(model_dir);
    if (!tagset_arg.empty() && parse_tagset(tagset_arg) != ckpt.model.tagset) {
      throw ConfigError("model was trained on tag set " + std::string(tagset_name(ckpt.model.tagset)) + ", not " +
                        tagset_arg);
    }
    const auto model = restore_tagger<float>(ckpt);
    const Vocabularies vocab = checkpoint_vocabularies(ckpt);
    const EmbeddingTable emb = checkpoint_embeddings(ckpt);
    const bool has_emb = ckpt.model.encoder.pretrained != PretrainedMode::kNone;
    const auto gold = load_corpus(test, ckpt.model.tagset);
    const auto enc = encode_all(gold, vocab, has_emb ? &emb : nullptr);
    report = error_rate(predict_all(*model, enc), gold, vocab.tags, ckpt.model.tagset);
    report.setup = std::string(encoder_kind_name(ckpt.model.encoder.kind));
  }
  std::cout << report_text({report}) << '\n' << report_csv({report});
  return 0;
}

std::vector<std::string> split_tokens(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ls(line);
  std::string tok;
  while (ls >> tok) out.push_back(tok);
  return out;
}

int cmd_tag(const std::string& model_dir, const std::string& input, const std::string& output,
            std::size_t batch_size) {
  const Checkpoint ckpt = load_checkpoint(model_dir);
  const auto model = restore_tagger<float>(ckpt);
  const Vocabularies vocab = checkpoint_vocabularies(ckpt);
  const EmbeddingTable emb = checkpoint_embeddings(ckpt);
  const bool has_emb = ckpt.model.encoder.pretrained != PretrainedMode::kNone;

  std::ifstream in_file;
  if (input != "-") {
    in_file.open(input);
    if (!in_file) throw DataError("cannot open '" + input + "'");
  }
  std::istream& in = input == "-" ? std::cin : in_file;
  std::ofstream out_file;
  if (output != "-") {
    out_file.open(output);
    if (!out_file) throw DataError("cannot write '" + output + "'");
  }
  std::ostream& out = output == "-" ? std::cout : out_file;

  std::vector<std::vector<std::string>> forms;
  std::vector<EncodedSentence> enc;
  auto flush = [&] {
    const auto pred = predict_all(*model, enc, batch_size);
    for (std::size_t s = 0; s < forms.size(); ++s) {
      for (std::size_t i = 0; i < forms[s].size(); ++i) {
        out << forms[s][i] << '\t' << vocab.tags.symbol(static_cast<std::size_t>(pred[s][i])) << '\n';
      }
      out << '\n';
    }
    forms.clear();
    enc.clear();
  };
  std::string line;
  while (std::getline(in, line)) {
    auto tokens = split_tokens(line);
    if (tokens.empty()) continue;
    enc.push_back(encode_words(tokens, vocab, has_emb ? &emb : nullptr));
    forms.push_back(std::move(tokens));
    if (enc.size() >= batch_size) flush();
  }
  flush();
  out.flush();
  return 0;
}

int cmd_gradcheck(const std::string& encoder, const std::string& skip, const std::string& pretrained,
                  std::uint64_t seed, double eps, double threshold) {
  std::vector<EncoderKind> kinds;
  if (encoder == "all") {
    kinds.assign(std::begin(kAllEncoderKinds), std::end(kAllEncoderKinds));
  } else {
    kinds.push_back(parse_encoder_kind(encoder));
  }
  std::vector<bool> skips;
  if (skip == "both" || skip == "off") skips.push_back(false);
  if (skip == "both" || skip == "on") skips.push_back(true);
  if (skips.empty()) throw ConfigError("--skip must be on, off or both");
  std::vector<PretrainedMode> modes;
  if (pretrained == "all") {
    modes = {PretrainedMode::kNone, PretrainedMode::kFixed, PretrainedMode::kFinetuned};
  } else {
    modes.push_back(parse_pretrained_mode(pretrained));
  }

  GradCheckOptions opt;
  opt.eps = eps;
  opt.seed = seed;
  const ToyBatch batch = make_toy_batch(seed);
  std::ostringstream csv;
  csv << "encoder,skip,pretrained,coords,max_rel_err,worst_param,pass\n";
  std::printf("%-11s %-4s %-10s %7s %12s  %s\n", "encoder", "skip", "pretrained", "coords", "max_rel_err",
              "worst parameter");
  bool all_pass = true;
  for (const EncoderKind kind : kinds) {
    for (const bool s : skips) {
      for (const PretrainedMode m : modes) {
        const ModelGradCheck r = gradcheck_model(gradcheck_config(kind, s, m), batch, opt);
        const bool pass = r.result.max_rel_err < threshold;
        all_pass = all_pass && pass;
        const std::string worst = r.result.worst_param + "[" + std::to_string(r.result.worst_index) + "]";
        std::printf("%-11s %-4s %-10s %7zu %12.3e  %s%s\n", std::string(encoder_kind_name(kind)).c_str(),
                    s ? "on" : "off", std::string(pretrained_mode_name(m)).c_str(), r.result.coords_checked,
                    r.result.max_rel_err, worst.c_str(), pass ? "" : "  FAIL");
        char err[32];
        std::snprintf(err, sizeof err, "%.6e", r.result.max_rel_err);
        csv << encoder_kind_name(kind) << ',' << (s ? "on" : "off") << ',' << pretrained_mode_name(m) << ','
            << r.result.coords_checked << ',' << err << ',' << worst << ',' << (pass ? "true" : "false") << '\n';
      }
    }
  }
  std::cout << '\n' << csv.str();
  std::cout.flush();
  return all_pass ? 0 : kExitGradcheck;
}

int cmd_coverage(const std::string& train, const std::string& test) {
  const CoverageReport r = coverage_report(load_corpus(train, Tagset::kPosMorph), load_corpus(test, Tagset::kPosMorph));
  std::printf("%-22s %8s %9s\n", "training occurrences", "tokens", "fraction");
  std::printf("%-22s %8zu %9s\n", "0 (unseen)", r.unseen, fixed(r.fraction_unseen(), 4).c_str());
  std::printf("%-22s %8zu %9s\n", "1-4 (rare)", r.rare, fixed(r.fraction_rare(), 4).c_str());
  std::printf("%-22s %8zu %9s\n", ">=5 (frequent)", r.frequent, fixed(r.fraction_frequent(), 4).c_str());
  std::printf("%-22s %8zu\n\n", "total", r.tokens);
  std::printf("unseen,rare,frequent,tokens\n%s,%s,%s,%zu\n", fixed(r.fraction_unseen(), 4).c_str(),
              fixed(r.fraction_rare(), 4).c_str(), fixed(r.fraction_frequent(), 4).c_str(), r.tokens);
  return 0;
}

int cmd_synth(const std::string& out, const SyntheticConfig& cfg) {
  const SyntheticCorpus c = generate_synthetic(cfg);
  fs::create_directories(out);
  const fs::path root(out);
  write_corpus((root / "train.tsv").string(), c.train);
  write_corpus((root / "dev.tsv").string(), c.dev);
  write_corpus((root / "test.tsv").string(), c.test);
  write_embeddings((root / "embeddings.txt").string(), c.embedding_words, c.embedding_vectors);
  std::cerr << "wrote " << c.train.size() << "/" << c.dev.size() << "/" << c.test.size()
            << " train/dev/test sentences and " << c.embedding_words.size() << " embeddings to " << out << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural morphological tagger with character-based word vectors"};
  app.require_subcommand(1);

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Train a tagger with early stopping on a development set");
  train->add_option("--train", ta.train, "Training corpus (form<TAB>POS<TAB>MORPH)")->required()->check(CLI::ExistingFile);
  train->add_option("--dev", ta.dev, "Development corpus for early stopping")->required()->check(CLI::ExistingFile);
  train->add_option("--out", ta.out, "Checkpoint directory")->required();
  train->add_option("--config", ta.config, "key=value configuration file")->check(CLI::ExistingFile);
  train->add_option("--metrics", ta.metrics, "Metrics CSV path (default <out>/metrics.csv)");
  train->add_option("--embeddings", ta.embeddings, "Pre-trained word vectors (word2vec text format)")
      ->check(CLI::ExistingFile);
  train->add_option("--set", ta.sets, "Override any configuration key (key=value, repeatable)");
  struct Flag {
    const char* name;
    const char* key;
    const char* help;
  };
  static const Flag kTrainFlags[] = {
      {"--tagset", "tagset", "pos, morph or posmorph"},
      {"--encoder", "encoder", "none, lut, dnn, cnn, cnnhighway, lstm or blstm"},
      {"--pretrained", "pretrained", "none, fixed or finetuned"},
      {"--seed", "seed", "Random seed"},
      {"--conv-layers", "conv_layers", "Convolution layers of the cnn encoder"},
      {"--context-layers", "context_layers", "BLSTM layers of the context model"},
      {"--skip-connections", "skip_connections", "true or false"},
      {"--keep-prob", "keep_prob", "Dropout keep probability"},
      {"--lr", "lr", "Base learning rate"},
      {"--batch-size", "batch_size", "Sentences per batch"},
      {"--max-epochs", "max_epochs", "Epoch limit"},
      {"--patience", "patience", "Epochs without dev improvement before stopping"},
  };
  std::vector<std::pair<const Flag*, std::string>> flag_values;
  flag_values.reserve(std::size(kTrainFlags));
  for (const Flag& f : kTrainFlags) {
    flag_values.emplace_back(&f, "");
    train->add_option(f.name, flag_values.back().second, f.help);
  }

  std::string model_dir, predicted, test, tagset;
  auto* eval = app.add_subcommand("eval", "Tag error rate on a gold corpus");
  auto* eval_model = eval->add_option("--model", model_dir, "Checkpoint directory");
  auto* eval_pred = eval->add_option("--predicted", predicted, "Tagged file to score instead of a model")
                        ->check(CLI::ExistingFile);
  eval_model->excludes(eval_pred);
  eval->add_option("--test", test, "Gold corpus")->required()->check(CLI::ExistingFile);
  eval->add_option("--tagset", tagset, "Must match the model's tag set");

  std::string input = "-", output = "-";
  std::size_t batch_size = 64;
  auto* tag = app.add_subcommand("tag", "Tag one sentence per line of space-separated tokens");
  tag->add_option("--model", model_dir, "Checkpoint directory")->required();
  tag->add_option("--input", input, "Input text, '-' for stdin");
  tag->add_option("--output", output, "Output TSV, '-' for stdout");
  tag->add_option("--batch-size", batch_size, "Sentences per batch")->check(CLI::PositiveNumber);

  std::string gc_encoder = "all", gc_skip = "both", gc_pretrained = "none";
  std::uint64_t gc_seed = GradCheckOptions{}.seed;
  double gc_eps = 1e-4, gc_threshold = 1e-3;
  auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient check on a toy batch");
  gradcheck->add_option("--encoder", gc_encoder, "Encoder kind or 'all'");
  gradcheck->add_option("--skip", gc_skip, "Skip connections: on, off or both");
  gradcheck->add_option("--pretrained", gc_pretrained, "none, fixed, finetuned or all");
  gradcheck->add_option("--seed", gc_seed, "Seed of the toy batch and model");
  gradcheck->add_option("--eps", gc_eps, "Central difference step");
  gradcheck->add_option("--threshold", gc_threshold, "Failure threshold on the relative error");

  std::string cov_train, cov_test;
  auto* coverage = app.add_subcommand("coverage", "Test tokens bucketed by training frequency");
  coverage->add_option("--train", cov_train, "Training corpus")->required()->check(CLI::ExistingFile);
  coverage->add_option("--test", cov_test, "Test corpus")->required()->check(CLI::ExistingFile);

  std::string synth_out;
  SyntheticConfig sc;
  auto* synth = app.add_subcommand("synth", "Write a synthetic agglutinative corpus and embeddings");
  synth->add_option("--out", synth_out, "Output directory")->required();
  synth->add_option("--seed", sc.seed, "Random seed");
  synth->add_option("--train-sentences", sc.train_sentences, "Training sentences");
  synth->add_option("--dev-sentences", sc.dev_sentences, "Development sentences");
  synth->add_option("--test-sentences", sc.test_sentences, "Test sentences");
  synth->add_option("--heldout-prob", sc.heldout_prob, "Chance of an unseen stem in dev/test");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*train) {
      for (const auto& [flag, value] : flag_values) {
        if (train->count(flag->name)) ta.overrides.emplace_back(flag->key, value);
      }
      return cmd_train(ta);
    }
    if (*eval) {
      if (model_dir.empty() && predicted.empty()) throw ConfigError("eval needs --model or --predicted");
      return cmd_eval(model_dir, predicted, test, tagset);
    }
    if (*tag) return cmd_tag(model_dir, input, output, batch_size);
    if (*gradcheck) return cmd_gradcheck(gc_encoder, gc_skip, gc_pretrained, gc_seed, gc_eps, gc_threshold);
    if (*coverage) return cmd_coverage(cov_train, cov_test);
    if (*synth) return cmd_synth(synth_out, sc);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitError;
  }
  return 0;
}
