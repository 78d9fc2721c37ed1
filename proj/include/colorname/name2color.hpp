#pragma once

// Name -> color regressors.
//
// Recurrent kinds embed each character, run an RNN or a 1/2-layer LSTM over
// [BOS, c1..cn, EOS] and map the top layer's final hidden state through
// y = logistic(W h + b). The n-gram baselines are plain linear regressions on
// bags of character unigrams (and bigrams). Both live in the unit cube and
// reach Lab through unit_to_lab; reported errors are always in Lab units.

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <tuple>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "colorname/colorspace.hpp"
#include "colorname/corpus.hpp"
#include "colorname/nn/adam.hpp"
#include "colorname/nn/cells.hpp"
#include "colorname/nn/checkpoint.hpp"
#include "colorname/nn/param_store.hpp"
#include "colorname/nn/tape.hpp"
#include "colorname/random.hpp"

namespace colorname {

enum class EncoderKind { unigram_linear, bigram_linear, rnn, lstm1, lstm2 };

inline std::string_view to_string(EncoderKind k) {
  switch (k) {
    case EncoderKind::unigram_linear: return "unigram";
    case EncoderKind::bigram_linear: return "bigram";
    case EncoderKind::rnn: return "rnn";
    case EncoderKind::lstm1: return "lstm1";
    case EncoderKind::lstm2: return "lstm2";
  }
  return "?";
}

inline EncoderKind parse_encoder_kind(std::string_view s) {
  if (s == "unigram" || s == "unigram-linear") return EncoderKind::unigram_linear;
  if (s == "bigram" || s == "bigram-linear") return EncoderKind::bigram_linear;
  if (s == "rnn") return EncoderKind::rnn;
  if (s == "lstm1") return EncoderKind::lstm1;
  if (s == "lstm2") return EncoderKind::lstm2;
  throw std::invalid_argument("unknown regressor kind '" + std::string(s) +
                              "' (expected unigram, bigram, rnn, lstm1, lstm2)");
}

inline bool is_recurrent(EncoderKind k) {
  return k == EncoderKind::rnn || k == EncoderKind::lstm1 || k == EncoderKind::lstm2;
}

/// Bag-of-character-n-gram features. Unigram features are indexed by vocab
/// index; bigram features (order 2, including BOS/EOS padding) follow, one per
/// pair observed in the training data.
class NgramFeaturizer {
 public:
  NgramFeaturizer() = default;

  NgramFeaturizer(int order, const CharVocab& vocab, const Dataset& train) : order_(order), unigrams_(vocab.size()) {
    if (order != 1 && order != 2) throw std::invalid_argument("n-gram order must be 1 or 2");
    if (order == 2) {
      std::vector<std::pair<int, int>> pairs;
      for (const auto& item : train.items) {
        const auto seq = encode_name(item.name, vocab);
        for (std::size_t i = 0; i + 1 < seq.size(); ++i) pairs.emplace_back(seq[i], seq[i + 1]);
      }
      std::sort(pairs.begin(), pairs.end());
      pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
      set_bigrams(pairs);
    }
  }

  static NgramFeaturizer from_bigram_list(int order, int vocab_size, const std::vector<std::pair<int, int>>& pairs) {
    NgramFeaturizer f;
    f.order_ = order;
    f.unigrams_ = vocab_size;
    f.set_bigrams(pairs);
    return f;
  }

  int order() const { return order_; }
  std::size_t dimension() const { return static_cast<std::size_t>(unigrams_) + bigrams_.size(); }
  const std::vector<std::pair<int, int>>& bigram_list() const { return bigram_list_; }

  /// Sparse counts; bigrams never seen in training are dropped.
  nn::Bag features(std::string_view name, const CharVocab& vocab) const {
    const auto seq = encode_name(name, vocab);
    return features_of_sequence(seq);
  }

  nn::Bag features_of_sequence(const std::vector<int>& seq) const {
    std::map<int, double> counts;
    for (std::size_t i = 1; i + 1 < seq.size(); ++i) counts[seq[i]] += 1.0;
    if (order_ == 2) {
      for (std::size_t i = 0; i + 1 < seq.size(); ++i) {
        auto it = bigrams_.find({seq[i], seq[i + 1]});
        if (it != bigrams_.end()) counts[it->second] += 1.0;
      }
    }
    return {counts.begin(), counts.end()};
  }

 private:
  void set_bigrams(const std::vector<std::pair<int, int>>& pairs) {
    bigram_list_ = pairs;
    bigrams_.clear();
    for (std::size_t k = 0; k < pairs.size(); ++k) bigrams_.emplace(pairs[k], unigrams_ + static_cast<int>(k));
  }

  int order_ = 1;
  int unigrams_ = 0;
  std::vector<std::pair<int, int>> bigram_list_;
  std::map<std::pair<int, int>, int> bigrams_;
};

/// Feature counts keyed by readable n-gram strings, for inspection and tests.
inline std::map<std::string, double> featurize_ngrams(std::string_view name, const CharVocab& vocab, int order) {
  if (order != 1 && order != 2) throw std::invalid_argument("n-gram order must be 1 or 2");
  const auto seq = encode_name(name, vocab);
  auto label = [&](int i) -> std::string {
    if (i == vocab.bos()) return "<BOS>";
    if (i == vocab.eos()) return "<EOS>";
    if (i == vocab.unk()) return "<UNK>";
    std::string s;
    utf8::append(s, vocab.symbol(i));
    return s;
  };
  std::map<std::string, double> out;
  for (std::size_t i = 1; i + 1 < seq.size(); ++i) out[label(seq[i])] += 1.0;
  if (order == 2) {
    for (std::size_t i = 0; i + 1 < seq.size(); ++i) out["(" + label(seq[i]) + "," + label(seq[i + 1]) + ")"] += 1.0;
  }
  return out;
}

struct EncoderConfig {
  EncoderKind kind = EncoderKind::lstm2;
  int embed_dim = 300;
  int hidden_dim = 300;
};

struct TrainConfig {
  int batch_size = 64;
  int epochs = 20;
  std::uint64_t seed = 42;
  double learning_rate = 1e-3;
  double clip_norm = 5.0;
  int patience = 3;  // epochs without dev improvement before stopping; 0 disables
};

inline nlohmann::json to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size}, {"epochs", c.epochs},       {"seed", c.seed},
          {"learning_rate", c.learning_rate}, {"clip_norm", c.clip_norm}, {"patience", c.patience}};
}

inline void validate(const TrainConfig& c) {
  if (c.batch_size <= 0 || c.epochs < 0 || !(c.learning_rate > 0.0) || c.clip_norm < 0.0 || c.patience < 0) {
    throw std::invalid_argument("invalid training configuration");
  }
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Verifies the embedded vocabulary against its recorded hash.
inline CharVocab vocab_from_header(const nlohmann::json& header) {
  const std::string text = header.at("vocab").get<std::string>();
  CharVocab v = CharVocab::parse(text);
  if (hex64(v.hash()) != header.at("vocab_hash").get<std::string>()) {
    throw nn::CheckpointError("vocabulary hash mismatch in checkpoint");
  }
  return v;
}

class NameEncoderModel {
 public:
  static NameEncoderModel create(const EncoderConfig& cfg, CharVocab vocab, const Dataset& train, std::uint64_t seed) {
    NameEncoderModel m;
    m.config_ = cfg;
    m.vocab_ = std::move(vocab);
    m.seed_ = seed;
    if (!is_recurrent(cfg.kind)) {
      m.featurizer_ = NgramFeaturizer(cfg.kind == EncoderKind::unigram_linear ? 1 : 2, m.vocab_, train);
    }
    m.allocate();
    m.initialize(seed);
    return m;
  }

  EncoderKind kind() const { return config_.kind; }
  const EncoderConfig& config() const { return config_; }
  const CharVocab& vocab() const { return vocab_; }
  const NgramFeaturizer& featurizer() const { return featurizer_; }
  const nn::ParamStore& params() const { return params_; }
  nn::ParamStore& params() { return params_; }
  std::uint64_t seed() const { return seed_; }

  /// Unit-cube predictions (3 x B) for a batch of names.
  nn::Var forward(nn::Tape& t, const std::vector<std::string>& names) const {
    if (names.empty()) throw std::invalid_argument("empty batch");
    if (!is_recurrent(kind())) {
      std::vector<nn::Bag> bags;
      bags.reserve(names.size());
      for (const auto& n : names) bags.push_back(featurizer_.features(n, vocab_));
      nn::Var w = t.parameter(params_, head_w_);
      return nn::add_bias(t, nn::gather_bags(t, w, std::move(bags)), t.parameter(params_, head_b_));
    }
    return head(t, bind(t), encode(t, names));
  }

  /// Final top-layer hidden state for each name (H x B).
  nn::Var encode(nn::Tape& t, const std::vector<std::string>& names) const { return encode(t, bind(t), names); }

  nn::Vector encode_name(std::string_view name) const {
    require_recurrent();
    nn::Tape t;
    return t.value(encode(t, {std::string(name)})).col(0);
  }

  ColorLab predict(std::string_view name) const {
    nn::Tape t;
    const nn::Matrix& y = t.value(forward(t, {std::string(name)}));
    return unit_to_lab(y(0, 0), y(1, 0), y(2, 0));
  }

  std::vector<ColorLab> predict_batch(const std::vector<std::string>& names, std::size_t chunk = 256) const {
    std::vector<ColorLab> out;
    out.reserve(names.size());
    for (std::size_t start = 0; start < names.size(); start += chunk) {
      const std::size_t end = std::min(names.size(), start + chunk);
      std::vector<std::string> batch(names.begin() + static_cast<std::ptrdiff_t>(start),
                                     names.begin() + static_cast<std::ptrdiff_t>(end));
      nn::Tape t;
      const nn::Matrix& y = t.value(forward(t, batch));
      for (Eigen::Index j = 0; j < y.cols(); ++j) out.push_back(unit_to_lab(y(0, j), y(1, j), y(2, j)));
    }
    return out;
  }

  /// Color predicted for every prefix of `name`: entry i is the head applied
  /// to the state reached by reading c1..ci and then EOS, so entry 0 is the
  /// empty prefix and the last entry equals predict(name).
  std::vector<ColorLab> prefix_colors(std::string_view name) const {
    require_recurrent();
    const auto seq = colorname::encode_name(name, vocab_);
    nn::Tape t;
    const Bound b = bind(t);
    std::vector<nn::TapeState> state = initial_state(t, 1);
    std::vector<ColorLab> out;
    for (std::size_t pos = 0; pos + 1 < seq.size(); ++pos) {
      state = step(t, b, state, {seq[pos]}, {true});
      std::vector<nn::TapeState> closed = step(t, b, state, {vocab_.eos()}, {true});
      const nn::Matrix& y = t.value(head(t, b, closed.back().h));
      out.push_back(unit_to_lab(y(0, 0), y(1, 0), y(2, 0)));
    }
    return out;
  }

  nn::Checkpoint to_checkpoint() const {
    nn::Checkpoint ck;
    ck.header = {{"family", "name2color"},
                 {"kind", std::string(to_string(kind()))},
                 {"embed_dim", config_.embed_dim},
                 {"hidden_dim", config_.hidden_dim},
                 {"seed", seed_},
                 {"vocab", vocab_.serialize()},
                 {"vocab_hash", hex64(vocab_.hash())},
                 {"ngram_order", is_recurrent(kind()) ? 0 : featurizer_.order()}};
    if (!train_info_.is_null()) ck.header["training"] = train_info_;
    nn::append_params(ck, params_);
    if (!is_recurrent(kind())) {
      const auto& pairs = featurizer_.bigram_list();
      nn::Matrix list(2, static_cast<Eigen::Index>(pairs.size()));
      for (std::size_t k = 0; k < pairs.size(); ++k) {
        list(0, static_cast<Eigen::Index>(k)) = pairs[k].first;
        list(1, static_cast<Eigen::Index>(k)) = pairs[k].second;
      }
      ck.arrays.emplace_back("ngram.bigrams", std::move(list));
    }
    return ck;
  }

  static NameEncoderModel from_checkpoint(const nn::Checkpoint& ck) {
    const auto& h = ck.header;
    if (h.value("family", "") != "name2color") throw nn::CheckpointError("not a name2color checkpoint");
    NameEncoderModel m;
    m.config_.kind = parse_encoder_kind(h.at("kind").get<std::string>());
    m.config_.embed_dim = h.at("embed_dim").get<int>();
    m.config_.hidden_dim = h.at("hidden_dim").get<int>();
    m.seed_ = h.at("seed").get<std::uint64_t>();
    m.vocab_ = vocab_from_header(h);
    if (h.contains("training")) m.train_info_ = h.at("training");
    if (!is_recurrent(m.kind())) {
      const nn::Matrix& list = ck.array("ngram.bigrams");
      std::vector<std::pair<int, int>> pairs;
      for (Eigen::Index k = 0; k < list.cols(); ++k) {
        pairs.emplace_back(static_cast<int>(list(0, k)), static_cast<int>(list(1, k)));
      }
      m.featurizer_ = NgramFeaturizer::from_bigram_list(h.at("ngram_order").get<int>(), m.vocab_.size(), pairs);
    }
    m.allocate();
    nn::restore_params(ck, m.params_);
    return m;
  }

  void save(const std::string& path) const { nn::save_checkpoint(path, to_checkpoint()); }
  static NameEncoderModel load(const std::string& path) { return from_checkpoint(nn::load_checkpoint(path)); }

  void set_training_info(nlohmann::json info) { train_info_ = std::move(info); }

 private:
  struct Bound {
    nn::Var embed;
    std::vector<nn::LayerVars> layers;
    nn::Var head_w, head_b;
  };

  void require_recurrent() const {
    if (!is_recurrent(kind())) throw std::invalid_argument("operation needs a recurrent regressor");
  }

  int layer_count() const { return kind() == EncoderKind::lstm2 ? 2 : 1; }

  void allocate() {
    const int E = config_.embed_dim, H = config_.hidden_dim;
    if (E <= 0 || H <= 0) throw std::invalid_argument("dimensions must be positive");
    if (!is_recurrent(kind())) {
      head_w_ = params_.add("head.w", 3, static_cast<Eigen::Index>(featurizer_.dimension()));
      head_b_ = params_.add("head.b", 3, 1);
      return;
    }
    embed_ = params_.add("embed", E, vocab_.size());
    for (int l = 0; l < layer_count(); ++l) {
      const int in = l == 0 ? E : H;
      const std::string prefix = "layer" + std::to_string(l);
      if (kind() == EncoderKind::rnn) {
        rnn_layers_.push_back(nn::RnnLayer::create(params_, prefix, in, H));
      } else {
        lstm_layers_.push_back(nn::LstmLayer::create(params_, prefix, in, H));
      }
    }
    head_w_ = params_.add("head.w", 3, H);
    head_b_ = params_.add("head.b", 3, 1);
  }

  void initialize(std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0x1417));
    if (is_recurrent(kind())) nn::init_uniform(params_.value(embed_), 0.1, rng);
    for (const auto& l : rnn_layers_) l.initialize(params_, rng);
    for (const auto& l : lstm_layers_) l.initialize(params_, rng);
    nn::init_glorot_uniform(params_.value(head_w_), rng);
    params_.value(head_b_).setZero();
  }

  Bound bind(nn::Tape& t) const {
    Bound b;
    if (is_recurrent(kind())) b.embed = t.parameter(params_, embed_);
    for (const auto& l : rnn_layers_) b.layers.push_back(nn::bind_vars(t, params_, l));
    for (const auto& l : lstm_layers_) b.layers.push_back(nn::bind_vars(t, params_, l));
    b.head_w = t.parameter(params_, head_w_);
    b.head_b = t.parameter(params_, head_b_);
    return b;
  }

  std::vector<nn::TapeState> initial_state(nn::Tape& t, Eigen::Index batch) const {
    std::vector<nn::TapeState> s;
    const nn::Matrix zero = nn::Matrix::Zero(config_.hidden_dim, batch);
    for (int l = 0; l < layer_count(); ++l) s.push_back({t.constant(zero), t.constant(zero)});
    return s;
  }

  /// Feeds one symbol per column; columns with keep=false hold their state.
  std::vector<nn::TapeState> step(nn::Tape& t, const Bound& b, const std::vector<nn::TapeState>& state,
                                  const std::vector<int>& symbols, const std::vector<bool>& keep) const {
    const bool all = std::all_of(keep.begin(), keep.end(), [](bool k) { return k; });
    std::vector<nn::TapeState> next(state.size());
    nn::Var x = nn::embed(t, b.embed, symbols);
    for (std::size_t l = 0; l < state.size(); ++l) {
      nn::TapeState s;
      if (kind() == EncoderKind::rnn) {
        s.h = nn::rnn_step(t, b.layers[l], x, state[l].h);
        s.c = state[l].c;
      } else {
        s = nn::lstm_step(t, b.layers[l], x, state[l]);
      }
      if (!all) {
        s.h = nn::select_columns(t, keep, s.h, state[l].h);
        if (kind() != EncoderKind::rnn) s.c = nn::select_columns(t, keep, s.c, state[l].c);
      }
      next[l] = s;
      x = s.h;
    }
    return next;
  }

  nn::Var encode(nn::Tape& t, const Bound& b, const std::vector<std::string>& names) const {
    require_recurrent();
    std::vector<std::vector<int>> seqs;
    std::size_t longest = 0;
    for (const auto& n : names) {
      seqs.push_back(colorname::encode_name(n, vocab_));
      longest = std::max(longest, seqs.back().size());
    }
    auto state = initial_state(t, static_cast<Eigen::Index>(names.size()));
    for (std::size_t pos = 0; pos < longest; ++pos) {
      std::vector<int> symbols(names.size());
      std::vector<bool> keep(names.size());
      for (std::size_t j = 0; j < seqs.size(); ++j) {
        keep[j] = pos < seqs[j].size();
        symbols[j] = keep[j] ? seqs[j][pos] : vocab_.eos();
      }
      state = step(t, b, state, symbols, keep);
    }
    return state.back().h;
  }

  nn::Var head(nn::Tape& t, const Bound& b, nn::Var h) const {
    return nn::sigmoid(t, nn::affine(t, b.head_w, h, b.head_b));
  }

  EncoderConfig config_;
  CharVocab vocab_;
  NgramFeaturizer featurizer_;
  nn::ParamStore params_;
  nn::ParamId embed_, head_w_, head_b_;
  std::vector<nn::RnnLayer> rnn_layers_;
  std::vector<nn::LstmLayer> lstm_layers_;
  std::uint64_t seed_ = 0;
  nlohmann::json train_info_;
};

/// Mean over items of the squared Lab distance (summed over L, a, b).
inline double eval_mse(const NameEncoderModel& m, const Dataset& d) {
  if (d.empty()) throw std::invalid_argument("cannot evaluate on an empty dataset");
  std::vector<std::string> names;
  names.reserve(d.size());
  for (const auto& item : d.items) names.push_back(item.name);
  const auto pred = m.predict_batch(names);
  double total = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double dist = lab_distance(pred[i], d.items[i].color);
    total += dist * dist;
  }
  return total / static_cast<double>(d.size());
}

struct RegressorEpoch {
  int epoch = 0;
  double train_loss = 0.0;  // mean per-item squared error in the unit cube
  double train_mse = 0.0;   // same predictions, in Lab units
  std::optional<double> dev_mse;
  double seconds = 0.0;
};

struct RegressorTrainResult {
  NameEncoderModel model;
  std::vector<RegressorEpoch> history;
  int best_epoch = 0;  // 0 = initialization
};

using RegressorEpochCallback = std::function<void(const RegressorEpoch&)>;

namespace detail {

/// Item order independent of load order: sorted by (name, L, a, b).
inline std::vector<std::size_t> canonical_order(const Dataset& d) {
  std::vector<std::size_t> idx(d.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t x, std::size_t y) {
    const auto& a = d.items[x];
    const auto& b = d.items[y];
    return std::make_tuple(a.name, a.color.L(), a.color.a(), a.color.b()) <
           std::make_tuple(b.name, b.color.L(), b.color.a(), b.color.b());
  });
  return idx;
}

}  // namespace detail

/// Adam on mean squared error in the unit cube, with global-norm clipping and
/// early stopping on dev MSE. Returns the parameters of the best dev epoch
/// (or of the last epoch when `dev` is empty).
inline RegressorTrainResult train_regressor(const Dataset& train, const Dataset& dev, const EncoderConfig& cfg,
                                            const TrainConfig& tc, const CharVocab& vocab,
                                            const RegressorEpochCallback& on_epoch = {}) {
  if (train.empty()) throw std::invalid_argument("training set is empty");
  validate(tc);
  RegressorTrainResult result{NameEncoderModel::create(cfg, vocab, train, tc.seed), {}, 0};
  NameEncoderModel& model = result.model;
  model.set_training_info(to_json(tc));
  nn::ParamStore& ps = model.params();
  nn::AdamState adam(ps, {tc.learning_rate});
  const auto order = detail::canonical_order(train);

  std::vector<nn::Matrix> best = ps.values();
  double best_dev = HUGE_VAL;
  int stale = 0;
  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    std::vector<std::size_t> perm = order;
    Rng rng(derive_seed(tc.seed, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(perm);
    double loss_sum = 0.0, lab_sum = 0.0;
    for (std::size_t start = 0; start < perm.size(); start += static_cast<std::size_t>(tc.batch_size)) {
      const std::size_t end = std::min(perm.size(), start + static_cast<std::size_t>(tc.batch_size));
      const auto B = static_cast<Eigen::Index>(end - start);
      std::vector<std::string> names;
      nn::Matrix target(3, B);
      for (std::size_t k = start; k < end; ++k) {
        const auto& item = train.items[perm[k]];
        names.push_back(item.name);
        const auto u = lab_to_unit(item.color);
        for (int r = 0; r < 3; ++r) target(r, static_cast<Eigen::Index>(k - start)) = u[static_cast<std::size_t>(r)];
      }
      nn::Tape t;
      nn::Var pred = model.forward(t, names);
      nn::Var loss = nn::scale(t, nn::squared_error(t, pred, target), 1.0 / static_cast<double>(B));
      const double value = t.value(loss)(0, 0);
      if (!std::isfinite(value)) {
        std::ostringstream os;
        os << "non-finite training loss at epoch " << epoch << "; batch begins with '" << names.front() << "'";
        throw nn::NonFiniteError(os.str());
      }
      const nn::Matrix& y = t.value(pred);
      for (Eigen::Index j = 0; j < B; ++j) {
        const double d = lab_distance(unit_to_lab(y(0, j), y(1, j), y(2, j)),
                                      train.items[perm[start + static_cast<std::size_t>(j)]].color);
        lab_sum += d * d;
      }
      loss_sum += value * static_cast<double>(B);
      t.backward(loss, ps.grads());
      nn::clip_grad_norm(ps, tc.clip_norm);
      nn::adam_step(ps, adam);
    }
    RegressorEpoch rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(train.size());
    rec.train_mse = lab_sum / static_cast<double>(train.size());
    if (!dev.empty()) rec.dev_mse = eval_mse(model, dev);
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    const double score = rec.dev_mse.value_or(-static_cast<double>(epoch));
    if (score < best_dev) {
      best_dev = score;
      best = ps.values();
      result.best_epoch = epoch;
      stale = 0;
    } else if (tc.patience > 0 && ++stale >= tc.patience) {
      break;
    }
  }
  ps.assign_values(best);
  return result;
}

}  // namespace colorname
