#pragma once

// The `colorname` command line: one executable driving ingest, training,
// evaluation, analysis, sampling, gradient checks and the HTTP service.
//
// Reports go to `out`, progress logs to `err`. Exit codes: 0 ok, 1 runtime
// failure, 2 usage error (including missing input files).

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "colorname/analysis.hpp"
#include "colorname/color2name.hpp"
#include "colorname/model_check.hpp"
#include "colorname/name2color.hpp"
#include "colorname/service.hpp"

namespace colorname::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

struct IngestOptions {
  std::vector<std::string> inputs;
  std::string source = "other";
  std::string output;
};

struct SplitOptions {
  std::string input;
  std::string out_dir;
  std::vector<double> fractions{0.8, 0.1, 0.1};
  std::uint64_t seed = 42;
};

struct TrainN2COptions {
  std::string train, dev, out, vocab, csv;
  std::string kind = "lstm2";
  EncoderConfig model;
  TrainConfig train_cfg;
  std::uint64_t min_count = kDefaultMinCount;
};

struct TrainC2NOptions {
  std::string train, dev, out, vocab, csv;
  std::string kind = "color-lm";
  DecoderConfig model;
  DecoderTrainConfig train_cfg;
  std::uint64_t min_count = kDefaultMinCount;
};

struct EvalOptions {
  std::string model;
  std::vector<std::string> data;
  std::string csv;
  std::uint64_t seed = 42;
};

struct PredictOptions {
  std::string model;
  std::vector<std::string> names;
  std::string input;
  std::string csv;
};

struct TraceOptions {
  std::string model;
  std::string name;
  std::string csv;
};

struct GenerateOptions {
  std::string model;
  std::string lab;
  std::string rgb;
  int n = 5;
  double temperature = 1.0;
  std::uint64_t seed = 42;
  std::size_t max_length = 64;
  std::string csv;
};

struct AnalyzeOptions {
  std::string model;
  std::vector<std::string> inputs;
  std::string csv;
  std::string distances;
  std::string histogram;
};

struct TuringSampleOptions {
  std::string model;
  std::string data;
  std::string tag;
  std::string out;
  std::size_t n = 20;
  std::uint64_t seed = 42;
  bool append = false;
};

struct TuringReportOptions {
  std::string items;
  std::string log;
  std::string csv;
};

struct GradcheckOptions {
  std::vector<std::string> kinds;
  double tolerance = 1e-4;
  ModelCheckOptions model;
};

struct ServeOptions {
  std::string config;
  std::string host;
  int port = -1;
  std::string name2color, color2name, items, log, static_dir, cors_origin;
};

struct Options {
  IngestOptions ingest;
  SplitOptions split;
  TrainN2COptions train_n2c;
  TrainC2NOptions train_c2n;
  EvalOptions eval_mse;
  EvalOptions eval_ppl;
  PredictOptions predict;
  TraceOptions trace;
  GenerateOptions generate;
  AnalyzeOptions analyze;
  TuringSampleOptions turing_sample;
  TuringReportOptions turing_report;
  GradcheckOptions gradcheck;
  ServeOptions serve;
};

namespace detail {

inline std::string fixed(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << text;
}

inline std::vector<std::string> kinds_of_encoder() {
  return {"unigram", "unigram-linear", "bigram", "bigram-linear", "rnn", "lstm1", "lstm2"};
}
inline std::vector<std::string> kinds_of_decoder() { return {"lm", "color-lm", "vae", "color-vae"}; }

inline ColorLab parse_lab_triple(const std::string& text) {
  std::vector<double> v;
  std::stringstream ss(text);
  for (std::string part; std::getline(ss, part, ',');) {
    std::size_t used = 0;
    v.push_back(std::stod(part, &used));
    if (used != part.size()) throw std::invalid_argument("bad number '" + part + "'");
  }
  if (v.size() != 3) throw std::invalid_argument("expected L,a,b");
  if (v[0] < ColorLab::kMinL || v[0] > ColorLab::kMaxL || v[1] < ColorLab::kMinAB || v[1] > ColorLab::kMaxAB ||
      v[2] < ColorLab::kMinAB || v[2] > ColorLab::kMaxAB) {
    throw std::invalid_argument("Lab value outside L in [0,100], a,b in [-128,127]");
  }
  return {v[0], v[1], v[2]};
}

inline CharVocab vocab_for(const std::string& path, const Dataset& train, std::uint64_t min_count) {
  return path.empty() ? build_vocab(train, min_count) : CharVocab::load(path);
}

}  // namespace detail

/// Registers every subcommand and flag, writing parsed values into `o`.
inline std::unique_ptr<CLI::App> make_app(Options& o) {
  auto app = std::make_unique<CLI::App>("Color names to CIE Lab colors and back.", "colorname");
  app->require_subcommand(1);
  app->fallthrough(false);

  {
    auto* c = app->add_subcommand("ingest", "Validate name,hex CSV files and write one cleaned CSV.");
    c->add_option("--input", o.ingest.inputs, "Input CSV file(s) with name,hex rows")->required()->check(CLI::ExistingFile);
    c->add_option("--source", o.ingest.source, "Source tag: train-pool, ggplot2, paint or other")
        ->check(CLI::IsMember({"train-pool", "ggplot2", "paint", "other"}))
        ->capture_default_str();
    c->add_option("--output", o.ingest.output, "Cleaned output CSV")->required();
  }
  {
    auto* c = app->add_subcommand("split", "Seeded train/dev/test split of a CSV into train.csv, dev.csv, test.csv.");
    c->add_option("--input", o.split.input, "Input CSV")->required()->check(CLI::ExistingFile);
    c->add_option("--out-dir", o.split.out_dir, "Directory for the three output files")->required();
    c->add_option("--fractions", o.split.fractions, "Relative train,dev,test weights")
        ->delimiter(',')
        ->expected(3)
        ->capture_default_str();
    c->add_option("--seed", o.split.seed, "Shuffle seed")->capture_default_str();
  }
  {
    auto& t = o.train_n2c;
    auto* c = app->add_subcommand("train-n2c", "Train a name-to-color regressor.");
    c->add_option("--train", t.train, "Training CSV")->required()->check(CLI::ExistingFile);
    c->add_option("--dev", t.dev, "Dev CSV for early stopping")->check(CLI::ExistingFile);
    c->add_option("--kind", t.kind, "Model kind")->check(CLI::IsMember(detail::kinds_of_encoder()))->capture_default_str();
    c->add_option("--embed", t.model.embed_dim, "Character embedding size")->check(CLI::PositiveNumber)->capture_default_str();
    c->add_option("--hidden", t.model.hidden_dim, "Hidden size")->check(CLI::PositiveNumber)->capture_default_str();
    c->add_option("--epochs", t.train_cfg.epochs, "Maximum epochs")->check(CLI::NonNegativeNumber)->capture_default_str();
    c->add_option("--batch", t.train_cfg.batch_size, "Minibatch size")->check(CLI::PositiveNumber)->capture_default_str();
    c->add_option("--lr", t.train_cfg.learning_rate, "Adam learning rate")->check(CLI::PositiveNumber)->capture_default_str();
    c->add_option("--clip", t.train_cfg.clip_norm, "Global gradient norm clip")->capture_default_str();
    c->add_option("--patience", t.train_cfg.patience, "Epochs without dev improvement before stopping (0 = off)")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    c->add_option("--min-count", t.min_count, "Minimum character count for the vocabulary")->capture_default_str();
    c->add_option("--vocab", t.vocab, "Use this saved vocabulary instead of building one")->check(CLI::ExistingFile);
    c->add_option("--seed", t.train_cfg.seed, "Initialization and shuffling seed")->capture_default_str();
    c->add_option("--out", t.out, "Output checkpoint")->required();
    c->add_option("--csv", t.csv, "Write the epoch history as CSV");
  }
  {
    auto& t = o.train_c2n;
    auto* c = app->add_subcommand("train-c2n", "Train a color-to-name decoder.");
    c->add_option("--train", t.train, "Training CSV")->required()->check(CLI::ExistingFile);
    c->add_option("--dev", t.dev, "Dev CSV for early stopping")->check(CLI::ExistingFile);
    c->add_option("--kind", t.kind, "Model kind")->check(CLI::IsMember(detail::kinds_of_decoder()))->capture_default_str();
    c->add_option("--embed", t.model.embed_dim, "Character embedding size")->check(CLI::PositiveNumber)->capture_default_str();
    c->add_option("--hidden", t.model.hidden_dim, "Hidden size")->check(CLI::PositiveNumber)->capture_default_str();
    c->add_option("--latent", t.model.latent_dim, "Latent size for VAE kinds")->check(CLI::PositiveNumber)->capture_default_str();
    c->add_option("--epochs", t.train_cfg.epochs, "Maximum epochs")->check(CLI::NonNegativeNumber)->capture_default_str();
    c->add_option("--batch", t.train_cfg.batch_size, "Minibatch size")->check(CLI::PositiveNumber)->capture_default_str();
    c->add_option("--lr", t.train_cfg.learning_rate, "Adam learning rate")->check(CLI::PositiveNumber)->capture_default_str();
    c->add_option("--clip", t.train_cfg.clip_norm, "Global gradient norm clip")->capture_default_str();
    c->add_option("--patience", t.train_cfg.patience, "Epochs without dev improvement before stopping (0 = off)")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    c->add_option("--kl-warmup", t.train_cfg.kl_warmup_epochs, "Epochs of linear KL weight warmup (0 = off)")
        ->check(CLI::NonNegativeNumber)
        ->capture_default_str();
    c->add_option("--min-count", t.min_count, "Minimum character count for the vocabulary")->capture_default_str();
    c->add_option("--vocab", t.vocab, "Use this saved vocabulary instead of building one")->check(CLI::ExistingFile);
    c->add_option("--seed", t.train_cfg.seed, "Initialization and shuffling seed")->capture_default_str();
    c->add_option("--out", t.out, "Output checkpoint")->required();
    c->add_option("--csv", t.csv, "Write the epoch history as CSV");
  }
  {
    auto* c = app->add_subcommand("eval-mse", "Mean squared Lab error of a name-to-color model.");
    c->add_option("--model", o.eval_mse.model, "Name-to-color checkpoint")->required()->check(CLI::ExistingFile);
    c->add_option("--data", o.eval_mse.data, "Evaluation CSV(s)")->required()->check(CLI::ExistingFile);
    c->add_option("--csv", o.eval_mse.csv, "Write the report as CSV");
  }
  {
    auto* c = app->add_subcommand("eval-ppl", "Per-character perplexity of a color-to-name model.");
    c->add_option("--model", o.eval_ppl.model, "Color-to-name checkpoint")->required()->check(CLI::ExistingFile);
    c->add_option("--data", o.eval_ppl.data, "Evaluation CSV(s)")->required()->check(CLI::ExistingFile);
    c->add_option("--seed", o.eval_ppl.seed, "Seed for VAE latent noise")->capture_default_str();
    c->add_option("--csv", o.eval_ppl.csv, "Write the report as CSV");
  }
  {
    auto* c = app->add_subcommand("predict", "Predict colors for names.");
    c->add_option("--model", o.predict.model, "Name-to-color checkpoint")->required()->check(CLI::ExistingFile);
    c->add_option("names", o.predict.names, "Names to color");
    c->add_option("--input", o.predict.input, "File with one name per line")->check(CLI::ExistingFile);
    c->add_option("--csv", o.predict.csv, "Write predictions as name,hex CSV");
  }
  {
    auto* c = app->add_subcommand("trace", "Color after each character of a name.");
    c->add_option("--model", o.trace.model, "Name-to-color checkpoint")->required()->check(CLI::ExistingFile);
    c->add_option("--name", o.trace.name, "Name to trace")->required();
    c->add_option("--csv", o.trace.csv, "Write the trace as CSV");
  }
  {
    auto& g = o.generate;
    auto* c = app->add_subcommand("generate", "Sample names for a color.");
    c->add_option("--model", g.model, "Color-to-name checkpoint")->required()->check(CLI::ExistingFile);
    auto* lab = c->add_option("--lab", g.lab, "Target color as L,a,b");
    c->add_option("--rgb", g.rgb, "Target color as #RRGGBB")->excludes(lab);
    c->add_option("--n", g.n, "Number of names (1 to 50)")->check(CLI::Range(1, 50))->capture_default_str();
    c->add_option("--temperature", g.temperature, "Softmax temperature in (0, 5]")
        ->check(CLI::Validator(
            [](std::string& v) -> std::string {
              double t = 0.0;
              try {
                t = std::stod(v);
              } catch (const std::exception&) {
                return "not a number: " + v;
              }
              return t > 0.0 && t <= 5.0 ? std::string() : "temperature must be in (0, 5]";
            },
            "(0, 5]"))
        ->capture_default_str();
    c->add_option("--seed", g.seed, "Sampling seed")->capture_default_str();
    c->add_option("--max-length", g.max_length, "Maximum characters per name")->check(CLI::PositiveNumber)->capture_default_str();
    c->add_option("--csv", g.csv, "Write names as CSV");
  }
  {
    auto& a = o.analyze;
    auto* c = app->add_subcommand("analyze-corpus", "Distance from middle gray of predicted word colors in text files.");
    c->add_option("--model", a.model, "Name-to-color checkpoint")->required()->check(CLI::ExistingFile);
    c->add_option("--input", a.inputs, "Text file(s), one corpus each")->required()->check(CLI::ExistingFile);
    c->add_option("--csv", a.csv, "Write the summary as CSV");
    c->add_option("--distances", a.distances, "Write every scored word and its distance as CSV");
    c->add_option("--histogram", a.histogram, "Write per-corpus histogram counts (bin width 5) as CSV");
  }
  {
    auto& t = o.turing_sample;
    auto* c = app->add_subcommand("turing-sample", "Draw Turing-test items (name, actual and predicted color).");
    c->add_option("--model", t.model, "Name-to-color checkpoint")->required()->check(CLI::ExistingFile);
    c->add_option("--data", t.data, "Held-out CSV to draw from")->required()->check(CLI::ExistingFile);
    c->add_option("--tag", t.tag, "Dataset tag, used as the item id prefix and table column")->required();
    c->add_option("--n", t.n, "Items to draw")->check(CLI::PositiveNumber)->capture_default_str();
    c->add_option("--seed", t.seed, "Sampling seed")->capture_default_str();
    c->add_option("--out", t.out, "Item file (one JSON object per line)")->required();
    c->add_flag("--append", t.append, "Append to the item file instead of replacing it");
  }
  {
    auto& t = o.turing_report;
    auto* c = app->add_subcommand("turing-report", "Tabulate judgments into preference percentages.");
    c->add_option("--items", t.items, "Item file")->required()->check(CLI::ExistingFile);
    c->add_option("--log", t.log, "Judgment log")->required()->check(CLI::ExistingFile);
    c->add_option("--csv", t.csv, "Write the table as CSV");
  }
  {
    auto& g = o.gradcheck;
    auto* c = app->add_subcommand("gradcheck", "Finite-difference gradient check of a downsized model.");
    auto kinds = checkable_kinds();
    kinds.insert(kinds.end(), {"unigram-linear", "bigram-linear"});
    c->add_option("--kind", g.kinds, "Model kind(s)")->required()->check(CLI::IsMember(kinds));
    c->add_option("--tolerance", g.tolerance, "Maximum relative error")->capture_default_str();
    c->add_option("--embed", g.model.embed_dim, "Embedding size")->check(CLI::PositiveNumber)->capture_default_str();
    c->add_option("--hidden", g.model.hidden_dim, "Hidden size")->check(CLI::PositiveNumber)->capture_default_str();
    c->add_option("--latent", g.model.latent_dim, "Latent size")->check(CLI::PositiveNumber)->capture_default_str();
    c->add_option("--step", g.model.step, "Central difference step")->check(CLI::PositiveNumber)->capture_default_str();
    c->add_option("--seed", g.model.seed, "Initialization seed")->capture_default_str();
  }
  {
    auto& s = o.serve;
    auto* c = app->add_subcommand("serve", "Run the HTTP/JSON service. Flags override COLORNAME_* variables, which override --config.");
    c->add_option("--config", s.config, "JSON config file")->check(CLI::ExistingFile);
    c->add_option("--host", s.host, "Bind address");
    c->add_option("--port", s.port, "Port")->check(CLI::Range(0, 65535));
    c->add_option("--name2color", s.name2color, "Name-to-color checkpoint")->check(CLI::ExistingFile);
    c->add_option("--color2name", s.color2name, "Color-to-name checkpoint")->check(CLI::ExistingFile);
    c->add_option("--items", s.items, "Turing item file")->check(CLI::ExistingFile);
    c->add_option("--log", s.log, "Judgment log (created if missing)");
    c->add_option("--static", s.static_dir, "Directory served at /")->check(CLI::ExistingDirectory);
    c->add_option("--cors-origin", s.cors_origin, "Access-Control-Allow-Origin value");
  }
  return app;
}

// ---- subcommands ----

inline int cmd_ingest(const IngestOptions& o, std::ostream& out, std::ostream& err) {
  const Source source = parse_source(o.source);
  Dataset all;
  for (const auto& path : o.inputs) {
    LoadReport rep;
    Dataset d = load_pairs(path, source, &rep);
    out << path << ": " << rep.summary() << '\n';
    all.items.insert(all.items.end(), d.items.begin(), d.items.end());
  }
  save_pairs(o.output, all);
  out << "wrote " << all.size() << " pairs to " << o.output << '\n';
  err << "ingest done\n";
  return kExitOk;
}

inline int cmd_split(const SplitOptions& o, std::ostream& out, std::ostream&) {
  double total = 0.0;
  for (double f : o.fractions) {
    if (!(f >= 0.0)) throw std::invalid_argument("fractions must be non-negative");
    total += f;
  }
  if (!(total > 0.0)) throw std::invalid_argument("fractions must not all be zero");
  const std::array<double, 3> fr{o.fractions[0] / total, o.fractions[1] / total, o.fractions[2] / total};
  const Dataset d = load_pairs(o.input, Source::train_pool);
  const DatasetSplit s = split_dataset(d, fr, o.seed);
  std::filesystem::create_directories(o.out_dir);
  const std::filesystem::path dir(o.out_dir);
  save_pairs((dir / "train.csv").string(), s.train);
  save_pairs((dir / "dev.csv").string(), s.dev);
  save_pairs((dir / "test.csv").string(), s.test);
  out << "split\tsize\n"
      << "train\t" << s.train.size() << "\ndev\t" << s.dev.size() << "\ntest\t" << s.test.size() << '\n';
  return kExitOk;
}

inline int cmd_train_n2c(TrainN2COptions o, std::ostream& out, std::ostream& err) {
  o.model.kind = parse_encoder_kind(o.kind);
  const Dataset train = load_pairs(o.train, Source::train_pool);
  const Dataset dev = o.dev.empty() ? Dataset{} : load_pairs(o.dev, Source::train_pool);
  const CharVocab vocab = detail::vocab_for(o.vocab, train, o.min_count);
  err << "training " << o.kind << " on " << train.size() << " names, vocabulary " << vocab.size() << '\n';
  auto result = train_regressor(train, dev, o.model, o.train_cfg, vocab, [&](const RegressorEpoch& e) {
    err << "epoch " << e.epoch << " train_mse " << detail::fixed(e.train_mse)
        << (e.dev_mse ? " dev_mse " + detail::fixed(*e.dev_mse) : std::string()) << " (" << detail::fixed(e.seconds, 1)
        << " s)\n";
  });
  result.model.save(o.out);

  std::ostringstream csv;
  csv << "epoch,train_loss,train_mse,dev_mse\n";
  out << "epoch\ttrain_mse\tdev_mse\n";
  for (const auto& e : result.history) {
    const std::string dev_mse = e.dev_mse ? detail::fixed(*e.dev_mse) : "";
    out << e.epoch << '\t' << detail::fixed(e.train_mse) << '\t' << (dev_mse.empty() ? "-" : dev_mse) << '\n';
    csv << e.epoch << ',' << detail::fixed(e.train_loss, 8) << ',' << detail::fixed(e.train_mse) << ',' << dev_mse
        << '\n';
  }
  out << "best epoch " << result.best_epoch << '\n';
  err << "saved " << o.kind << " to " << o.out << '\n';
  if (!o.csv.empty()) detail::write_text(o.csv, csv.str());
  return kExitOk;
}

inline int cmd_train_c2n(TrainC2NOptions o, std::ostream& out, std::ostream& err) {
  o.model.kind = parse_decoder_kind(o.kind);
  const Dataset train = load_pairs(o.train, Source::train_pool);
  const Dataset dev = o.dev.empty() ? Dataset{} : load_pairs(o.dev, Source::train_pool);
  const CharVocab vocab = detail::vocab_for(o.vocab, train, o.min_count);
  err << "training " << o.kind << " on " << train.size() << " names, vocabulary " << vocab.size() << '\n';
  auto result = train_decoder(train, dev, o.model, o.train_cfg, vocab, [&](const DecoderEpoch& e) {
    err << "epoch " << e.epoch << " train_nll/char " << detail::fixed(e.train_nll_per_char) << " kl/name "
        << detail::fixed(e.train_kl_per_name, 6)
        << (e.dev_perplexity ? " dev_ppl " + detail::fixed(*e.dev_perplexity) : std::string()) << " ("
        << detail::fixed(e.seconds, 1) << " s)\n";
  });
  result.model.save(o.out);

  std::ostringstream csv;
  csv << "epoch,train_nll_per_char,train_kl_per_name,kl_weight,dev_perplexity,dev_kl_per_name\n";
  out << "epoch\ttrain_nll_per_char\ttrain_kl_per_name\tdev_perplexity\n";
  for (const auto& e : result.history) {
    const std::string ppl = e.dev_perplexity ? detail::fixed(*e.dev_perplexity) : "";
    const std::string kl = e.dev_kl_per_name ? detail::fixed(*e.dev_kl_per_name, 6) : "";
    out << e.epoch << '\t' << detail::fixed(e.train_nll_per_char) << '\t' << detail::fixed(e.train_kl_per_name, 6)
        << '\t' << (ppl.empty() ? "-" : ppl) << '\n';
    csv << e.epoch << ',' << detail::fixed(e.train_nll_per_char, 8) << ',' << detail::fixed(e.train_kl_per_name, 8)
        << ',' << detail::fixed(e.kl_weight) << ',' << ppl << ',' << kl << '\n';
  }
  out << "best epoch " << result.best_epoch << '\n';
  err << "saved " << o.kind << " to " << o.out << '\n';
  if (!o.csv.empty()) detail::write_text(o.csv, csv.str());
  return kExitOk;
}

inline int cmd_eval_mse(const EvalOptions& o, std::ostream& out, std::ostream&) {
  const auto m = NameEncoderModel::load(o.model);
  std::ostringstream csv;
  csv << "model,data,n,mse\n";
  out << "model\tdata\tn\tmse\n";
  for (const auto& path : o.data) {
    const Dataset d = load_pairs(path, Source::other);
    const double mse = eval_mse(m, d);
    out << to_string(m.kind()) << '\t' << path << '\t' << d.size() << '\t' << detail::fixed(mse) << '\n';
    csv << to_string(m.kind()) << ',' << colorname::detail::quote_csv(path) << ',' << d.size() << ',' << detail::fixed(mse, 8)
        << '\n';
  }
  if (!o.csv.empty()) detail::write_text(o.csv, csv.str());
  return kExitOk;
}

inline int cmd_eval_ppl(const EvalOptions& o, std::ostream& out, std::ostream&) {
  const auto m = DecoderModel::load(o.model);
  std::ostringstream csv;
  csv << "model,data,names,chars,perplexity,kl_per_name,bound\n";
  out << "model\tdata\tnames\tchars\tperplexity\tkl_per_name\n";
  for (const auto& path : o.data) {
    const Dataset d = load_pairs(path, Source::other);
    const auto r = evaluate_perplexity(m, d, o.seed);
    const double kl = r.total_kl / static_cast<double>(d.size());
    const std::string ppl = detail::fixed(r.perplexity) + (r.upper_bound ? " (ELBO bound)" : "");
    out << to_string(m.kind()) << '\t' << path << '\t' << d.size() << '\t' << r.scored << '\t' << ppl << '\t'
        << detail::fixed(kl, 6) << '\n';
    csv << to_string(m.kind()) << ',' << colorname::detail::quote_csv(path) << ',' << d.size() << ',' << r.scored << ','
        << detail::fixed(r.perplexity, 8) << ',' << detail::fixed(kl, 8) << ',' << (r.upper_bound ? "elbo" : "exact")
        << '\n';
  }
  if (!o.csv.empty()) detail::write_text(o.csv, csv.str());
  return kExitOk;
}

inline int cmd_predict(const PredictOptions& o, std::ostream& out, std::ostream&) {
  const auto m = NameEncoderModel::load(o.model);
  std::vector<std::string> names = o.names;
  if (!o.input.empty()) {
    std::ifstream in(o.input);
    for (std::string line; std::getline(in, line);) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) names.push_back(line);
    }
  }
  if (names.empty()) throw std::invalid_argument("no names given");
  for (const auto& n : names) {
    if (!is_valid_name(n)) throw std::invalid_argument("invalid name '" + n + "'");
  }
  Dataset preds;
  const auto colors = m.predict_batch(names);
  out << "name\tL\ta\tb\thex\n";
  for (std::size_t i = 0; i < names.size(); ++i) {
    const ColorLab& c = colors[i];
    out << names[i] << '\t' << detail::fixed(c.L()) << '\t' << detail::fixed(c.a()) << '\t' << detail::fixed(c.b())
        << '\t' << to_hex(lab_to_rgb(c)) << '\n';
    preds.items.push_back({names[i], c, Source::other});
  }
  if (!o.csv.empty()) save_pairs(o.csv, preds);
  return kExitOk;
}

inline int cmd_trace(const TraceOptions& o, std::ostream& out, std::ostream&) {
  if (!is_valid_name(o.name)) throw std::invalid_argument("invalid name '" + o.name + "'");
  const auto m = NameEncoderModel::load(o.model);
  const CharTrace t = char_trace(o.name, m);
  std::ostringstream csv;
  csv << "length,prefix,L,a,b,hex\n";
  out << "len\tprefix\tL\ta\tb\thex\n";
  for (const auto& s : t.steps) {
    const std::string hex = to_hex(lab_to_rgb(s.lab));
    out << s.length << '\t' << (s.prefix.empty() ? "(empty)" : s.prefix) << '\t' << detail::fixed(s.lab.L()) << '\t'
        << detail::fixed(s.lab.a()) << '\t' << detail::fixed(s.lab.b()) << '\t' << hex << '\n';
    csv << s.length << ',' << colorname::detail::quote_csv(s.prefix) << ',' << detail::fixed(s.lab.L(), 8) << ','
        << detail::fixed(s.lab.a(), 8) << ',' << detail::fixed(s.lab.b(), 8) << ',' << hex << '\n';
  }
  if (!o.csv.empty()) detail::write_text(o.csv, csv.str());
  return kExitOk;
}

inline int cmd_generate(const GenerateOptions& o, std::ostream& out, std::ostream&) {
  if (!(o.temperature > 0.0)) throw std::invalid_argument("temperature must be in (0, 5]");
  const auto m = DecoderModel::load(o.model);
  std::optional<ColorLab> color;
  if (!o.lab.empty()) color = detail::parse_lab_triple(o.lab);
  if (!o.rgb.empty()) color = rgb_to_lab(parse_hex(o.rgb));
  if (uses_color(m.kind()) && !color) throw std::invalid_argument("this model needs --lab or --rgb");
  std::ostringstream csv;
  csv << "index,name\n";
  for (int i = 0; i < o.n; ++i) {
    const std::string name =
        m.sample_name(color, o.temperature, derive_seed(o.seed, static_cast<std::uint64_t>(i)), o.max_length);
    out << name << '\n';
    csv << i << ',' << colorname::detail::quote_csv(name) << '\n';
  }
  if (!o.csv.empty()) detail::write_text(o.csv, csv.str());
  return kExitOk;
}

inline int cmd_analyze(const AnalyzeOptions& o, std::ostream& out, std::ostream&) {
  const auto m = NameEncoderModel::load(o.model);
  std::ostringstream summary, distances, histogram;
  summary << "corpus,tokens,scored,skipped,mean,median,sd,min,max\n";
  distances << "corpus,word,distance\n";
  histogram << "corpus,bin_start,bin_end,count\n";
  out << "corpus\ttokens\tscored\tskipped\tmean\tmedian\tsd\tmin\tmax\n";
  for (const auto& path : o.inputs) {
    std::ifstream in(path, std::ios::binary);
    std::stringstream text;
    text << in.rdbuf();
    const auto tokens = tokenize(text.str());
    const auto r = colorfulness_distribution(tokens, m);
    const std::string corpus = std::filesystem::path(path).stem().string();
    out << corpus << '\t' << tokens.size() << '\t' << r.words.size() << '\t' << r.skipped << '\t'
        << detail::fixed(r.mean, 2) << '\t' << detail::fixed(r.median, 2) << '\t' << detail::fixed(r.stddev, 2) << '\t'
        << detail::fixed(r.min, 2) << '\t' << detail::fixed(r.max, 2) << '\n';
    summary << colorname::detail::quote_csv(corpus) << ',' << tokens.size() << ',' << r.words.size() << ',' << r.skipped << ','
            << detail::fixed(r.mean, 8) << ',' << detail::fixed(r.median, 8) << ',' << detail::fixed(r.stddev, 8)
            << ',' << detail::fixed(r.min, 8) << ',' << detail::fixed(r.max, 8) << '\n';
    for (std::size_t i = 0; i < r.words.size(); ++i) {
      distances << colorname::detail::quote_csv(corpus) << ',' << colorname::detail::quote_csv(r.words[i]) << ','
                << detail::fixed(r.distances[i], 8) << '\n';
    }
    for (std::size_t k = 0; k < r.histogram.counts.size(); ++k) {
      const double lo = static_cast<double>(k) * r.histogram.bin_width;
      const bool last = k + 1 == r.histogram.counts.size();
      histogram << colorname::detail::quote_csv(corpus) << ',' << detail::fixed(lo, 0) << ','
                << (last ? std::string("inf") : detail::fixed(lo + r.histogram.bin_width, 0)) << ','
                << r.histogram.counts[k] << '\n';
    }
  }
  if (!o.csv.empty()) detail::write_text(o.csv, summary.str());
  if (!o.distances.empty()) detail::write_text(o.distances, distances.str());
  if (!o.histogram.empty()) detail::write_text(o.histogram, histogram.str());
  return kExitOk;
}

inline int cmd_turing_sample(const TuringSampleOptions& o, std::ostream& out, std::ostream&) {
  const auto m = NameEncoderModel::load(o.model);
  const Dataset d = load_pairs(o.data, Source::other);
  const auto s = sample_turing_items(d, m, o.n, o.seed, o.tag);
  std::ofstream file(o.out, o.append ? std::ios::app : std::ios::trunc);
  if (!file) throw DataError("cannot write " + o.out);
  for (const auto& it : s.items) file << to_json(it).dump() << '\n';
  out << "sampled " << s.items.size() << " items tagged " << o.tag << " (" << s.resampled
      << " skipped for identical swatches)\n";
  return kExitOk;
}

inline int cmd_turing_report(const TuringReportOptions& o, std::ostream& out, std::ostream&) {
  const auto table = tabulate_preferences(load_judgments(o.log), load_turing_items(o.items));
  out << table.to_text();
  if (!o.csv.empty()) detail::write_text(o.csv, table.to_csv());
  return kExitOk;
}

inline int cmd_gradcheck(const GradcheckOptions& o, std::ostream& out, std::ostream&) {
  bool all = true;
  for (const auto& kind : o.kinds) {
    const auto r = check_model_gradients(kind, o.tolerance, o.model);
    out << (r.passed ? "PASS " : "FAIL ") << kind << " max_rel_error " << std::scientific << std::setprecision(3)
        << r.max_rel_error << " tolerance " << o.tolerance << std::defaultfloat << '\n';
    all = all && r.passed;
  }
  return all ? kExitOk : kExitFailure;
}

inline int cmd_serve(const ServeOptions& o, std::ostream& out, std::ostream& err) {
  ServiceConfig cfg = o.config.empty() ? ServiceConfig{} : ServiceConfig::load(o.config);
  cfg.apply_env();
  if (!o.host.empty()) cfg.host = o.host;
  if (o.port >= 0) cfg.port = o.port;
  if (!o.name2color.empty()) cfg.name2color = o.name2color;
  if (!o.color2name.empty()) cfg.color2name = o.color2name;
  if (!o.items.empty()) cfg.turing_items = o.items;
  if (!o.log.empty()) cfg.judgment_log = o.log;
  if (!o.static_dir.empty()) cfg.static_dir = o.static_dir;
  if (!o.cors_origin.empty()) cfg.cors_origin = o.cors_origin;
  Service service(cfg);
  httplib::Server server;
  out << "listening on http://" << cfg.host << ':' << cfg.port << '\n' << std::flush;
  err << "models: " << service.handle({"GET", "/api/health", {}, ""}).text() << '\n';
  serve(service, server);
  return kExitOk;
}

/// Parses `argv` and runs one subcommand.
inline int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  Options o;
  auto app = make_app(o);
  try {
    app->parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      app->exit(e, out, err);
      return kExitOk;
    }
    err << "error: " << e.what() << "\n\n";
    const CLI::App* sub = app.get();
    for (const auto* s : app->get_subcommands()) sub = s;
    err << sub->help();
    return kExitUsage;
  }
  try {
    const std::string name = app->get_subcommands().front()->get_name();
    if (name == "ingest") return cmd_ingest(o.ingest, out, err);
    if (name == "split") return cmd_split(o.split, out, err);
    if (name == "train-n2c") return cmd_train_n2c(o.train_n2c, out, err);
    if (name == "train-c2n") return cmd_train_c2n(o.train_c2n, out, err);
    if (name == "eval-mse") return cmd_eval_mse(o.eval_mse, out, err);
    if (name == "eval-ppl") return cmd_eval_ppl(o.eval_ppl, out, err);
    if (name == "predict") return cmd_predict(o.predict, out, err);
    if (name == "trace") return cmd_trace(o.trace, out, err);
    if (name == "generate") return cmd_generate(o.generate, out, err);
    if (name == "analyze-corpus") return cmd_analyze(o.analyze, out, err);
    if (name == "turing-sample") return cmd_turing_sample(o.turing_sample, out, err);
    if (name == "turing-report") return cmd_turing_report(o.turing_report, out, err);
    if (name == "gradcheck") return cmd_gradcheck(o.gradcheck, out, err);
    if (name == "serve") return cmd_serve(o.serve, out, err);
    err << "error: unhandled subcommand " << name << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

inline int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data(), out, err);
}

}  // namespace colorname::cli
