#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nerforge/corpus.hpp"
#include "nerforge/embeddings.hpp"
#include "nerforge/errors.hpp"
#include "nerforge/evaluation.hpp"
#include "nerforge/gradcheck.hpp"
#include "nerforge/model.hpp"
#include "nerforge/training.hpp"

namespace {

using namespace nerforge;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumeric = 3;

std::string fmt(const char* format, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), format, v);
  return buf;
}

int env_threads() {
  const char* raw = std::getenv("NER_FORGE_THREADS");
  if (raw == nullptr || *raw == '\0') return 1;
  char* end = nullptr;
  const long v = std::strtol(raw, &end, 10);
  if (end == nullptr || *end != '\0' || v < 1) {
    throw std::invalid_argument(std::string("NER_FORGE_THREADS: not a positive integer: ") + raw);
  }
  return static_cast<int>(v);
}

TagScheme parse_scheme(const std::string& name) {
  if (name == "bio") return TagScheme::BIO;
  if (name == "bioes") return TagScheme::BIOES;
  throw std::invalid_argument("unknown tag scheme: " + name);
}

// Datasets are handled internally in BIO; BIOES files are converted on read.
Dataset read_dataset(const std::string& path, TagScheme scheme) {
  Dataset data = read_conll(path, scheme);
  if (scheme == TagScheme::BIO) return data;
  std::vector<Sentence> converted;
  converted.reserve(data.sentences.size());
  for (const Sentence& s : data.sentences) {
    std::vector<std::string> tags;
    tags.reserve(s.tokens.size());
    for (const Token& t : s.tokens) tags.push_back(t.tag);
    auto bio = convert_scheme(tags, TagScheme::BIOES, TagScheme::BIO);
    Sentence cs;
    cs.tokens.reserve(s.tokens.size());
    for (size_t i = 0; i < s.tokens.size(); ++i) cs.tokens.push_back({s.tokens[i].surface, bio[i]});
    converted.push_back(std::move(cs));
  }
  return make_dataset(std::move(converted));
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw DataError(path + ": cannot open for writing");
  return out;
}

void write_metrics_csv(const std::string& path, const std::vector<EpochMetrics>& metrics) {
  auto out = open_out(path);
  out << "epoch,loss,val_f1,lr\n";
  for (const EpochMetrics& m : metrics) {
    out << m.epoch << ',' << fmt("%.6f", m.mean_loss) << ',' << fmt("%.4f", m.val_f1 * 100.0)
        << ',' << fmt("%.10g", m.lr) << '\n';
  }
  if (!out) throw DataError(path + ": write failed");
}

void write_eval_csv(std::ostream& out, const EvalReport& r) {
  out << "type,tp,fp,fn,precision,recall,f1\n";
  auto line = [&out](const std::string& name, const TypeCounts& c) {
    out << name << ',' << c.tp << ',' << c.fp << ',' << c.fn << ','
        << fmt("%.2f", c.precision * 100.0) << ',' << fmt("%.2f", c.recall * 100.0) << ','
        << fmt("%.2f", c.f1 * 100.0) << '\n';
  };
  for (const auto& [etype, counts] : r.per_type) line(etype, counts);
  line("TOTAL", TypeCounts{r.tp, r.fp, r.fn, r.precision, r.recall, r.f1});
}

struct CommonArgs {
  std::string scheme = "bio";
  uint64_t seed = 42;
};

struct TrainArgs {
  std::string train_path;
  std::string dev_path;
  std::string embeddings_path;
  std::string model_out = "model.nerb";
  std::string metrics_out = "metrics.csv";
  bool merge_dev = false;
  TrainConfig cfg;
  int lstm_state = 200;
};

int cmd_train(const CommonArgs& common, const TrainArgs& a) {
  TrainConfig cfg = a.cfg;
  cfg.seed = common.seed;
  cfg.validate();

  const TagScheme scheme = parse_scheme(common.scheme);
  Dataset data = read_dataset(a.train_path, scheme);
  if (a.merge_dev) {
    if (a.dev_path.empty()) {
      throw std::invalid_argument("--merge-dev requires --dev");
    }
    Dataset dev = read_dataset(a.dev_path, scheme);
    std::cout << "training set size = " << data.sentences.size() + dev.sentences.size() << " ("
              << data.sentences.size() << " train + " << dev.sentences.size() << " dev)\n";
    std::vector<Sentence> merged = data.sentences;
    merged.insert(merged.end(), dev.sentences.begin(), dev.sentences.end());
    data = make_dataset(std::move(merged));
  }

  EmbeddingStore store = load_text_embeddings(a.embeddings_path);
  std::cout << "embeddings: " << store.name() << " (" << store.vocab_size() << " words, dim "
            << store.dim() << ")\n";

  TaggerConfig mcfg;
  mcfg.lstm_state = a.lstm_state;
  mcfg.dropout = cfg.dropout;
  mcfg.tags = data.tag_set;
  CharVocab vocab = build_char_vocab(data);
  TaggerModel model = init_model(mcfg, vocab, store, common.seed);
  std::cout << "model: " << model.params.count() << " trainable parameters, " << mcfg.tags.size()
            << " tags\n";

  ProgressSink progress = [](const EpochMetrics& m) {
    std::cout << "epoch " << m.epoch << ": loss " << fmt("%.6f", m.mean_loss) << ", val F1 "
              << fmt("%.2f", m.val_f1 * 100.0) << ", lr " << fmt("%.6g", m.lr) << std::endl;
  };
  TrainResult result = train(std::move(model), data, store, cfg, progress);
  if (result.skipped_steps > 0) {
    std::cout << "warning: " << result.skipped_steps << " steps skipped (non-finite gradients)\n";
  }
  std::cout << "best epoch " << result.best_epoch << " with val F1 "
            << fmt("%.2f", result.best_val_f1 * 100.0) << "\n";

  save_model(result.model, a.model_out);
  write_metrics_csv(a.metrics_out, result.metrics);
  std::cout << "wrote " << a.model_out << " and " << a.metrics_out << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string model_path;
  std::string test_path;
  std::string embeddings_path;
  std::string csv_out;
  bool token_f1 = false;
};

int cmd_eval(const CommonArgs& common, const EvalArgs& a) {
  const TagScheme scheme = parse_scheme(common.scheme);
  EmbeddingStore store = load_text_embeddings(a.embeddings_path);
  TaggerModel model = load_model(a.model_path, store);
  Dataset test = read_dataset(a.test_path, scheme);

  std::vector<std::string> unknown;
  for (const std::string& tag : test.tag_set) {
    if (!model.tag_index.count(tag)) unknown.push_back(tag);
  }
  if (!unknown.empty()) {
    std::string msg = a.test_path + ": tags unknown to the model:";
    for (const auto& t : unknown) msg += " " + t;
    throw DataError(msg);
  }

  std::vector<std::vector<std::string>> preds;
  preds.reserve(test.sentences.size());
  for (const Sentence& s : test.sentences) preds.push_back(predict_tags(model, s, store));
  EvalReport report = evaluate(test, preds);

  write_eval_csv(std::cout, report);
  if (!a.csv_out.empty()) {
    auto out = open_out(a.csv_out);
    write_eval_csv(out, report);
  }
  if (a.token_f1) {
    std::cout << "token_accuracy," << fmt("%.2f", report.token_accuracy * 100.0) << "\n";
  }
  return kExitOk;
}

struct PredictArgs {
  std::string model_path;
  std::string input_path;
  std::string embeddings_path;
  std::string output_path;
};

int cmd_predict(const CommonArgs&, const PredictArgs& a) {
  EmbeddingStore store = load_text_embeddings(a.embeddings_path);
  TaggerModel model = load_model(a.model_path, store);
  Dataset input = read_conll_untagged(a.input_path);

  auto out = open_out(a.output_path);
  for (size_t i = 0; i < input.sentences.size(); ++i) {
    const Sentence& s = input.sentences[i];
    auto tags = predict_tags(model, s, store);
    for (size_t t = 0; t < s.tokens.size(); ++t) {
      out << s.tokens[t].surface << ' ' << tags[t] << '\n';
    }
    out << '\n';
  }
  if (!out) throw DataError(a.output_path + ": write failed");
  return kExitOk;
}

struct CoverageArgs {
  std::vector<std::string> splits;  // name=path pairs
  std::string embeddings_path;
  std::string dataset_name = "dataset";
};

int cmd_coverage(const CommonArgs& common, const CoverageArgs& a) {
  const TagScheme scheme = parse_scheme(common.scheme);
  EmbeddingStore store = load_text_embeddings(a.embeddings_path);
  std::cout << "dataset,split,covered,total,ratio\n";
  for (const std::string& spec : a.splits) {
    const auto eq = spec.find('=');
    if (eq == std::string::npos || eq == 0 || eq + 1 >= spec.size()) {
      throw std::invalid_argument("--split expects NAME=PATH, got: " + spec);
    }
    const std::string split_name = spec.substr(0, eq);
    const std::string path = spec.substr(eq + 1);
    Dataset data = read_dataset(path, scheme);
    CoverageReport r = coverage_report(store, data, a.dataset_name, split_name);
    std::cout << r.dataset_name << ',' << r.split_name << ',' << r.covered_tokens << ','
              << r.total_tokens << ',' << fmt("%.3f", r.ratio * 100.0) << '\n';
  }
  return kExitOk;
}

struct GradCheckArgs {
  double tol = 1e-4;
};

int cmd_gradcheck(const CommonArgs& common, const GradCheckArgs& a) {
  ad::GradCheckReport report = grad_check_toy_tagger(a.tol, common.seed);
  std::cout << report.summary() << "\n";
  return report.pass ? kExitOk : kExitNumeric;
}

struct SearchArgs {
  std::string train_path;
  std::string embeddings_path;
  std::string csv_out = "search.csv";
  int trials = 8;
};

int cmd_search(const CommonArgs& common, const SearchArgs& a) {
  const TagScheme scheme = parse_scheme(common.scheme);
  Dataset data = read_dataset(a.train_path, scheme);
  EmbeddingStore store = load_text_embeddings(a.embeddings_path);

  const int threads = env_threads();
  SearchResult result = random_search(SearchSpace{}, a.trials, data, store, common.seed, threads);

  auto out = open_out(a.csv_out);
  out << "trial,lstm_state,dropout,batch_size,lr,epochs,po,best_epoch,best_val_f1,status\n";
  for (const SearchTrial& t : result.trials) {
    out << t.index << ',' << t.lstm_state << ',' << fmt("%.6f", t.config.dropout) << ','
        << t.config.batch_size << ',' << fmt("%.10g", t.config.lr) << ',' << t.config.epochs << ','
        << fmt("%.6f", t.config.po) << ',' << t.best_epoch << ','
        << fmt("%.4f", t.best_val_f1 * 100.0) << ',' << (t.failed ? "failed" : "ok") << '\n';
  }
  const SearchTrial& best = result.trials[static_cast<size_t>(result.best_index)];
  std::cout << "best trial " << best.index << ": lstm_state " << best.lstm_state << ", dropout "
            << fmt("%.4f", best.config.dropout) << ", batch " << best.config.batch_size << ", lr "
            << fmt("%.6g", best.config.lr) << ", epochs " << best.config.epochs << ", po "
            << fmt("%.4f", best.config.po) << ", val F1 " << fmt("%.2f", best.best_val_f1 * 100.0)
            << "\n";
  std::cout << "wrote " << a.csv_out << "\n";
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"nerforge: BiLSTM-CNN-Char named-entity tagger"};
  app.require_subcommand(1);
  app.fallthrough();  // lets --seed/--scheme appear after the subcommand name

  CommonArgs common;
  app.add_option("--seed", common.seed, "Master seed for all random streams")
      ->capture_default_str();
  app.add_option("--scheme", common.scheme, "Tag scheme of input files (bio|bioes)")
      ->check(CLI::IsMember({"bio", "bioes"}))
      ->capture_default_str();

  TrainArgs train_args;
  CLI::App* train_cmd = app.add_subcommand("train", "Train a tagger");
  train_cmd->add_option("--train", train_args.train_path, "Training CoNLL file")->required();
  train_cmd->add_option("--dev", train_args.dev_path, "Development CoNLL file");
  train_cmd->add_option("--embeddings", train_args.embeddings_path, "Embedding text file")
      ->required();
  train_cmd->add_option("--model-out", train_args.model_out, "Output model path")
      ->capture_default_str();
  train_cmd->add_option("--metrics-out", train_args.metrics_out, "Output metrics CSV path")
      ->capture_default_str();
  train_cmd->add_flag("--merge-dev", train_args.merge_dev,
                      "Merge --dev sentences into the training set before splitting");
  train_cmd->add_option("--max-epochs", train_args.cfg.epochs, "Number of training epochs")
      ->capture_default_str();
  train_cmd->add_option("--lr", train_args.cfg.lr, "Initial learning rate")->capture_default_str();
  train_cmd->add_option("--po", train_args.cfg.po, "Learning-rate decay coefficient")
      ->capture_default_str();
  train_cmd->add_option("--batch-size", train_args.cfg.batch_size, "Sentences per batch")
      ->capture_default_str();
  train_cmd->add_option("--dropout", train_args.cfg.dropout, "Dropout rate")
      ->capture_default_str();
  train_cmd->add_option("--validation-split", train_args.cfg.validation_split,
                        "Fraction of training sentences held out for validation")
      ->capture_default_str();
  train_cmd->add_option("--clip", train_args.cfg.clip, "Global gradient-norm clip")
      ->capture_default_str();
  train_cmd->add_option("--lstm-state", train_args.lstm_state, "LSTM state size per direction")
      ->capture_default_str();

  EvalArgs eval_args;
  CLI::App* eval_cmd = app.add_subcommand("eval", "Score a model on a tagged test set");
  eval_cmd->add_option("--model", eval_args.model_path, "Model file")->required();
  eval_cmd->add_option("--test", eval_args.test_path, "Test CoNLL file")->required();
  eval_cmd->add_option("--embeddings", eval_args.embeddings_path, "Embedding text file")
      ->required();
  eval_cmd->add_option("--csv-out", eval_args.csv_out, "Also write the report to this CSV file");
  eval_cmd->add_flag("--token-f1", eval_args.token_f1, "Also print token-level accuracy");

  PredictArgs predict_args;
  CLI::App* predict_cmd = app.add_subcommand("predict", "Tag an untagged CoNLL file");
  predict_cmd->add_option("--model", predict_args.model_path, "Model file")->required();
  predict_cmd->add_option("--input", predict_args.input_path, "Input CoNLL file")->required();
  predict_cmd->add_option("--embeddings", predict_args.embeddings_path, "Embedding text file")
      ->required();
  predict_cmd->add_option("--output", predict_args.output_path, "Output CoNLL file")->required();

  CoverageArgs coverage_args;
  CLI::App* coverage_cmd =
      app.add_subcommand("coverage", "Embedding coverage of dataset splits");
  coverage_cmd->add_option("--embeddings", coverage_args.embeddings_path, "Embedding text file")
      ->required();
  coverage_cmd->add_option("--split", coverage_args.splits, "Split as NAME=PATH (repeatable)")
      ->required();
  coverage_cmd->add_option("--dataset", coverage_args.dataset_name, "Dataset name for the report")
      ->capture_default_str();

  GradCheckArgs gradcheck_args;
  CLI::App* gradcheck_cmd =
      app.add_subcommand("grad-check", "Verify gradients against finite differences");
  gradcheck_cmd->add_option("--tol", gradcheck_args.tol, "Relative error tolerance")
      ->capture_default_str();

  SearchArgs search_args;
  CLI::App* search_cmd = app.add_subcommand("search", "Random hyperparameter search");
  search_cmd->add_option("--train", search_args.train_path, "Training CoNLL file")->required();
  search_cmd->add_option("--embeddings", search_args.embeddings_path, "Embedding text file")
      ->required();
  search_cmd->add_option("--trials", search_args.trials, "Number of trials")
      ->capture_default_str();
  search_cmd->add_option("--csv-out", search_args.csv_out, "Output CSV path")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
    if (train_cmd->parsed()) return cmd_train(common, train_args);
    if (eval_cmd->parsed()) return cmd_eval(common, eval_args);
    if (predict_cmd->parsed()) return cmd_predict(common, predict_args);
    if (coverage_cmd->parsed()) return cmd_coverage(common, coverage_args);
    if (gradcheck_cmd->parsed()) return cmd_gradcheck(common, gradcheck_args);
    if (search_cmd->parsed()) return cmd_search(common, search_args);
    return kExitUsage;
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}
