#pragma once

// Color -> name generators: character LSTM decoders.
//
//   lm         unconditional; zero initial state.
//   color-lm   a linear map of the unit-cube color gives [pre_h; c0] in R^2H,
//              h0 = tanh(pre_h).
//   vae        latent z ~ q(z) (recognizer sees no color), state from z alone.
//   color-vae  recognizer MLP q(z|x): 3 -> H (tanh) -> [mu; log sigma^2];
//              z = mu + sigma * eps; state from the linear map of [z; x].
//
// Every decoder scores c1..cn and EOS under teacher forcing; BOS is input only.
// VAE kinds train on the negative ELBO with one latent sample per name.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "colorname/colorspace.hpp"
#include "colorname/corpus.hpp"
#include "colorname/name2color.hpp"
#include "colorname/nn/adam.hpp"
#include "colorname/nn/cells.hpp"
#include "colorname/nn/checkpoint.hpp"
#include "colorname/nn/param_store.hpp"
#include "colorname/nn/tape.hpp"
#include "colorname/random.hpp"

namespace colorname {

enum class DecoderKind { lm, color_lm, vae, color_vae };

inline std::string_view to_string(DecoderKind k) {
  switch (k) {
    case DecoderKind::lm: return "lm";
    case DecoderKind::color_lm: return "color-lm";
    case DecoderKind::vae: return "vae";
    case DecoderKind::color_vae: return "color-vae";
  }
  return "?";
}

inline DecoderKind parse_decoder_kind(std::string_view s) {
  if (s == "lm") return DecoderKind::lm;
  if (s == "color-lm") return DecoderKind::color_lm;
  if (s == "vae") return DecoderKind::vae;
  if (s == "color-vae") return DecoderKind::color_vae;
  throw std::invalid_argument("unknown decoder kind '" + std::string(s) + "' (expected lm, color-lm, vae, color-vae)");
}

inline bool is_vae(DecoderKind k) { return k == DecoderKind::vae || k == DecoderKind::color_vae; }
inline bool uses_color(DecoderKind k) { return k == DecoderKind::color_lm || k == DecoderKind::color_vae; }

struct LatentGaussian {
  nn::Vector mean;
  nn::Vector log_variance;
};

/// KL(N(mean, diag(exp(log_variance))) || N(0, I)), closed form.
inline double kl_to_standard_normal(const LatentGaussian& g) {
  if (g.mean.size() != g.log_variance.size()) throw std::invalid_argument("latent mean/variance size mismatch");
  double kl = 0.0;
  for (Eigen::Index i = 0; i < g.mean.size(); ++i) {
    const double lv = g.log_variance(i);
    kl += g.mean(i) * g.mean(i) + std::exp(lv) - lv - 1.0;
  }
  return 0.5 * kl;
}

struct DecoderConfig {
  DecoderKind kind = DecoderKind::color_lm;
  int embed_dim = 300;
  int hidden_dim = 300;
  int latent_dim = 16;
};

struct DecoderTrainConfig {
  int batch_size = 128;
  int epochs = 20;
  std::uint64_t seed = 42;
  double learning_rate = 1e-3;
  double clip_norm = 5.0;
  int patience = 3;
  int kl_warmup_epochs = 0;  // linear 0 -> 1 KL weight over this many epochs; 0 = off
  int vae_samples = 1;       // latent samples per name in the objective
};

inline nlohmann::json to_json(const DecoderTrainConfig& c) {
  return {{"batch_size", c.batch_size},     {"epochs", c.epochs},         {"seed", c.seed},
          {"learning_rate", c.learning_rate}, {"clip_norm", c.clip_norm},   {"patience", c.patience},
          {"kl_warmup_epochs", c.kl_warmup_epochs}, {"vae_samples", c.vae_samples}};
}

struct NllResult {
  double total = 0.0;
  std::size_t scored = 0;  // characters plus EOS
  double per_char() const { return scored ? total / static_cast<double>(scored) : 0.0; }
};

struct ElboResult {
  double elbo = 0.0;            // log-likelihood term minus KL
  double log_likelihood = 0.0;  // log p(name | x, z)
  double kl = 0.0;
  std::size_t scored = 0;
};

/// Per-name input to the batched decoder graph.
struct DecodeItem {
  std::vector<int> symbols;   // [BOS, c1..cn, EOS]
  std::array<double, 3> unit{0.5, 0.5, 0.5};
};

class DecoderModel {
 public:
  static DecoderModel create(const DecoderConfig& cfg, CharVocab vocab, std::uint64_t seed) {
    DecoderModel m;
    m.config_ = cfg;
    m.vocab_ = std::move(vocab);
    m.seed_ = seed;
    m.allocate();
    m.initialize(seed);
    return m;
  }

  DecoderKind kind() const { return config_.kind; }
  const DecoderConfig& config() const { return config_; }
  const CharVocab& vocab() const { return vocab_; }
  const nn::ParamStore& params() const { return params_; }
  nn::ParamStore& params() { return params_; }
  int latent_dim() const { return is_vae(kind()) ? config_.latent_dim : 0; }

  /// Initial (h0, c0) from a color; color-lm only.
  nn::CellState init_from_color(const ColorLab& x) const {
    if (kind() != DecoderKind::color_lm) throw std::invalid_argument("init_from_color needs a color-lm decoder");
    nn::Tape t;
    const Bound b = bind(t);
    nn::TapeState s = initial_state(t, b, unit_matrix({lab_to_unit(x)}), std::nullopt);
    return {t.value(s.h).col(0), t.value(s.c).col(0)};
  }

  /// Approximate posterior q(z|x). The unconditional vae ignores `x`.
  LatentGaussian recognize(const ColorLab& x) const {
    if (!is_vae(kind())) throw std::invalid_argument("recognize needs a VAE decoder");
    nn::Tape t;
    const Bound b = bind(t);
    auto [mu, logvar] = recognizer(t, b, unit_matrix({lab_to_unit(x)}));
    return {t.value(mu).col(0), t.value(logvar).col(0)};
  }

  /// Decoder state before BOS is read. `color` is ignored by unconditional
  /// kinds; `z` is required by VAE kinds.
  nn::CellState initial_state(const std::optional<ColorLab>& color, const std::optional<nn::Vector>& z) const {
    if (uses_color(kind()) && !color) throw std::invalid_argument("this decoder needs a color");
    if (is_vae(kind()) && !z) throw std::invalid_argument("this decoder needs a latent vector");
    nn::Tape t;
    const Bound b = bind(t);
    std::optional<nn::Var> zv;
    if (z) {
      if (z->size() != latent_dim()) throw nn::DimensionError("latent vector has the wrong size");
      zv = t.constant(*z);
    }
    nn::TapeState s = initial_state(t, b, unit_matrix({lab_to_unit(color.value_or(ColorLab{50, 0, 0}))}), zv);
    return {t.value(s.h).col(0), t.value(s.c).col(0)};
  }

  /// Reads `prev` and returns the next-symbol distribution and new state.
  std::pair<nn::Vector, nn::CellState> decoder_step(int prev, const nn::CellState& s) const {
    if (prev < 0 || prev >= vocab_.size()) throw std::out_of_range("symbol index outside the vocabulary");
    auto [logits, next] = step_logits(prev, s);
    return {nn::softmax(logits), next};
  }

  /// Teacher-forced negative log-likelihood of `name`. VAE kinds use `z`
  /// when given and the posterior mean otherwise.
  NllResult sequence_nll(std::string_view name, const std::optional<ColorLab>& color,
                         const std::optional<nn::Vector>& z) const {
    if (uses_color(kind()) && !color) throw std::invalid_argument("this decoder needs a color");
    std::optional<nn::Vector> latent = z;
    if (is_vae(kind()) && !latent) latent = recognize(color.value_or(ColorLab{50, 0, 0})).mean;
    const auto seq = colorname::encode_name(name, vocab_);
    nn::CellState s = initial_state(color, latent);
    NllResult r;
    for (std::size_t pos = 0; pos + 1 < seq.size(); ++pos) {
      auto [logits, next] = step_logits(seq[pos], s);
      const double m = logits.maxCoeff();
      r.total += m + std::log((logits.array() - m).exp().sum()) - logits(seq[pos + 1]);
      ++r.scored;
      s = std::move(next);
    }
    return r;
  }

  /// Single-sample ELBO with the supplied standard-normal noise.
  ElboResult elbo(const ColorLab& x, std::string_view name, const nn::Vector& eps) const {
    if (!is_vae(kind())) throw std::invalid_argument("elbo needs a VAE decoder");
    if (eps.size() != latent_dim()) throw nn::DimensionError("noise vector has the wrong size");
    nn::Tape t;
    const Bound b = bind(t);
    DecodeItem item{colorname::encode_name(name, vocab_), lab_to_unit(x)};
    const Batch batch = make_batch({item});
    nn::Matrix noise = eps;
    const GraphLoss g = batch_loss(t, b, batch, &noise);
    ElboResult r;
    r.log_likelihood = -t.value(g.nll)(0, 0);
    r.kl = t.value(g.kl)(0, 0);
    r.elbo = r.log_likelihood - r.kl;
    r.scored = batch.scored;
    return r;
  }

  /// Ancestral sampling; BOS and UNK are never emitted. VAE kinds draw z from
  /// the prior. Logits are divided by `temperature`.
  std::string sample_name(const std::optional<ColorLab>& color, double temperature, std::uint64_t seed,
                          std::size_t max_len) const {
    if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
    if (uses_color(kind()) && !color) throw std::invalid_argument("this decoder needs a color");
    Rng rng(derive_seed(seed, 0x5A3D1E));
    std::optional<nn::Vector> z;
    if (is_vae(kind())) {
      nn::Vector v(latent_dim());
      for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.normal();
      z = v;
    }
    nn::CellState s = initial_state(color, z);
    std::vector<int> out;
    int prev = vocab_.bos();
    while (out.size() < max_len) {
      auto [logits, next] = step_logits(prev, s);
      s = std::move(next);
      logits(vocab_.bos()) = -HUGE_VAL;
      logits(vocab_.unk()) = -HUGE_VAL;
      const nn::Vector p = nn::softmax(nn::Vector((logits.array() - logits.maxCoeff()) / temperature));
      const double u = rng.uniform();
      int pick = -1;
      double acc = 0.0;
      for (Eigen::Index k = 0; k < p.size(); ++k) {
        if (p(k) <= 0.0) continue;
        acc += p(k);
        pick = static_cast<int>(k);
        if (u < acc) break;
      }
      if (pick == vocab_.eos()) break;
      out.push_back(pick);
      prev = pick;
    }
    return decode_name(out, vocab_);
  }

  /// Argmax decoding. VAE kinds use the prior mean z = 0.
  std::string greedy_name(const std::optional<ColorLab>& color, std::size_t max_len) const {
    if (uses_color(kind()) && !color) throw std::invalid_argument("this decoder needs a color");
    std::optional<nn::Vector> z;
    if (is_vae(kind())) z = nn::Vector::Zero(latent_dim());
    nn::CellState s = initial_state(color, z);
    std::vector<int> out;
    int prev = vocab_.bos();
    while (out.size() < max_len) {
      auto [logits, next] = step_logits(prev, s);
      s = std::move(next);
      logits(vocab_.bos()) = -HUGE_VAL;
      logits(vocab_.unk()) = -HUGE_VAL;
      Eigen::Index pick = 0;
      logits.maxCoeff(&pick);
      if (pick == vocab_.eos()) break;
      out.push_back(static_cast<int>(pick));
      prev = static_cast<int>(pick);
    }
    return decode_name(out, vocab_);
  }

  // ---- batched graph, shared by training and evaluation ----

  struct Batch {
    std::vector<std::vector<int>> inputs;   // per position: symbol read by each column
    std::vector<std::vector<int>> targets;  // per position: symbol scored for each column
    std::vector<std::vector<double>> weights;
    nn::Matrix unit;  // 3 x B
    std::size_t scored = 0;
    Eigen::Index size = 0;
  };

  static Batch make_batch(const std::vector<DecodeItem>& items) {
    Batch b;
    b.size = static_cast<Eigen::Index>(items.size());
    b.unit.resize(3, b.size);
    std::size_t longest = 0;
    for (std::size_t j = 0; j < items.size(); ++j) {
      longest = std::max(longest, items[j].symbols.size());
      for (int r = 0; r < 3; ++r) b.unit(r, static_cast<Eigen::Index>(j)) = items[j].unit[static_cast<std::size_t>(r)];
    }
    for (std::size_t pos = 0; pos + 1 < longest; ++pos) {
      std::vector<int> in(items.size(), 0), tgt(items.size(), 0);
      std::vector<double> w(items.size(), 0.0);
      for (std::size_t j = 0; j < items.size(); ++j) {
        const auto& s = items[j].symbols;
        if (pos + 1 < s.size()) {
          in[j] = s[pos];
          tgt[j] = s[pos + 1];
          w[j] = 1.0;
          ++b.scored;
        } else {
          in[j] = s.back();
        }
      }
      b.inputs.push_back(std::move(in));
      b.targets.push_back(std::move(tgt));
      b.weights.push_back(std::move(w));
    }
    return b;
  }

  struct GraphLoss {
    nn::Var nll;  // summed over the batch
    nn::Var kl;   // summed over the batch; constant 0 for LM kinds
  };

  struct Bound {
    nn::Var embed, out_w, out_b;
    nn::LayerVars lstm;
    nn::Var init_w, init_b;
    nn::Var rec_w1, rec_b1, rec_w2, rec_b2;
  };

  Bound bind(nn::Tape& t) const {
    Bound b;
    b.embed = t.parameter(params_, embed_);
    b.lstm = nn::bind_vars(t, params_, lstm_);
    b.out_w = t.parameter(params_, out_w_);
    b.out_b = t.parameter(params_, out_b_);
    if (kind() != DecoderKind::lm) {
      b.init_w = t.parameter(params_, init_w_);
      b.init_b = t.parameter(params_, init_b_);
    }
    if (is_vae(kind())) {
      b.rec_w1 = t.parameter(params_, rec_w1_);
      b.rec_b1 = t.parameter(params_, rec_b1_);
      b.rec_w2 = t.parameter(params_, rec_w2_);
      b.rec_b2 = t.parameter(params_, rec_b2_);
    }
    return b;
  }

  /// Summed NLL and KL for a batch. `noise` (d_z x B) is required for VAE
  /// kinds.
  GraphLoss batch_loss(nn::Tape& t, const Bound& b, const Batch& batch, const nn::Matrix* noise) const {
    std::optional<nn::Var> z;
    nn::Var kl = t.constant(nn::Matrix::Zero(1, 1));
    if (is_vae(kind())) {
      if (!noise || noise->rows() != latent_dim() || noise->cols() != batch.size) {
        throw nn::DimensionError("VAE batch needs d_z x B noise");
      }
      auto [mu, logvar] = recognizer(t, b, batch.unit);
      nn::Var sigma = nn::exp(t, nn::scale(t, logvar, 0.5));
      z = nn::add(t, mu, nn::hadamard(t, sigma, t.constant(*noise)));
      nn::Var terms = nn::sub(t, nn::add(t, nn::square(t, mu), nn::exp(t, logvar)), logvar);
      kl = nn::scale(t, nn::add_scalar(t, nn::sum(t, terms), -static_cast<double>(latent_dim() * batch.size)), 0.5);
    }
    nn::TapeState s = initial_state(t, b, batch.unit, z);
    nn::Var nll = t.constant(nn::Matrix::Zero(1, 1));
    for (std::size_t pos = 0; pos < batch.inputs.size(); ++pos) {
      nn::Var x = nn::embed(t, b.embed, batch.inputs[pos]);
      s = nn::lstm_step(t, b.lstm, x, s);
      nn::Var logits = nn::affine(t, b.out_w, s.h, b.out_b);
      nll = nn::add(t, nll, nn::softmax_cross_entropy(t, logits, batch.targets[pos], batch.weights[pos]));
    }
    return {nll, kl};
  }

  DecodeItem make_item(const NamedColor& nc) const { return {colorname::encode_name(nc.name, vocab_), lab_to_unit(nc.color)}; }

  nn::Checkpoint to_checkpoint() const {
    nn::Checkpoint ck;
    ck.header = {{"family", "color2name"},
                 {"kind", std::string(to_string(kind()))},
                 {"embed_dim", config_.embed_dim},
                 {"hidden_dim", config_.hidden_dim},
                 {"latent_dim", config_.latent_dim},
                 {"seed", seed_},
                 {"vocab", vocab_.serialize()},
                 {"vocab_hash", hex64(vocab_.hash())}};
    if (!train_info_.is_null()) ck.header["training"] = train_info_;
    nn::append_params(ck, params_);
    return ck;
  }

  static DecoderModel from_checkpoint(const nn::Checkpoint& ck) {
    const auto& h = ck.header;
    if (h.value("family", "") != "color2name") throw nn::CheckpointError("not a color2name checkpoint");
    DecoderModel m;
    m.config_.kind = parse_decoder_kind(h.at("kind").get<std::string>());
    m.config_.embed_dim = h.at("embed_dim").get<int>();
    m.config_.hidden_dim = h.at("hidden_dim").get<int>();
    m.config_.latent_dim = h.at("latent_dim").get<int>();
    m.seed_ = h.at("seed").get<std::uint64_t>();
    m.vocab_ = vocab_from_header(h);
    if (h.contains("training")) m.train_info_ = h.at("training");
    m.allocate();
    nn::restore_params(ck, m.params_);
    return m;
  }

  void save(const std::string& path) const { nn::save_checkpoint(path, to_checkpoint()); }
  static DecoderModel load(const std::string& path) { return from_checkpoint(nn::load_checkpoint(path)); }
  void set_training_info(nlohmann::json info) { train_info_ = std::move(info); }

 private:
  static nn::Matrix unit_matrix(const std::vector<std::array<double, 3>>& colors) {
    nn::Matrix m(3, static_cast<Eigen::Index>(colors.size()));
    for (std::size_t j = 0; j < colors.size(); ++j) {
      for (int r = 0; r < 3; ++r) m(r, static_cast<Eigen::Index>(j)) = colors[j][static_cast<std::size_t>(r)];
    }
    return m;
  }

  void allocate() {
    const int E = config_.embed_dim, H = config_.hidden_dim, V = vocab_.size();
    if (E <= 0 || H <= 0) throw std::invalid_argument("dimensions must be positive");
    if (is_vae(kind()) && config_.latent_dim <= 0) throw std::invalid_argument("latent dimension must be positive");
    embed_ = params_.add("embed", E, V);
    lstm_ = nn::LstmLayer::create(params_, "decoder", E, H);
    out_w_ = params_.add("out.w", V, H);
    out_b_ = params_.add("out.b", V, 1);
    if (is_vae(kind())) {
      const int dz = config_.latent_dim;
      rec_w1_ = params_.add("recognizer.w1", H, 3);
      rec_b1_ = params_.add("recognizer.b1", H, 1);
      rec_w2_ = params_.add("recognizer.w2", 2 * dz, H);
      rec_b2_ = params_.add("recognizer.b2", 2 * dz, 1);
      init_w_ = params_.add("init.w", 2 * H, dz + (kind() == DecoderKind::color_vae ? 3 : 0));
      init_b_ = params_.add("init.b", 2 * H, 1);
    } else if (kind() == DecoderKind::color_lm) {
      init_w_ = params_.add("init.w", 2 * H, 3);
      init_b_ = params_.add("init.b", 2 * H, 1);
    }
  }

  void initialize(std::uint64_t seed) {
    Rng rng(derive_seed(seed, 0xDEC0));
    nn::init_uniform(params_.value(embed_), 0.1, rng);
    lstm_.initialize(params_, rng);
    nn::init_glorot_uniform(params_.value(out_w_), rng);
    params_.value(out_b_).setZero();
    if (kind() != DecoderKind::lm) {
      nn::init_glorot_uniform(params_.value(init_w_), rng);
      params_.value(init_b_).setZero();
    }
    if (is_vae(kind())) {
      nn::init_glorot_uniform(params_.value(rec_w1_), rng);
      params_.value(rec_b1_).setZero();
      nn::init_glorot_uniform(params_.value(rec_w2_), rng);
      params_.value(rec_b2_).setZero();
    }
  }

  std::pair<nn::Var, nn::Var> recognizer(nn::Tape& t, const Bound& b, const nn::Matrix& unit) const {
    nn::Matrix input = unit;
    if (kind() == DecoderKind::vae) input.setZero();
    nn::Var hidden = nn::tanh(t, nn::affine(t, b.rec_w1, t.constant(std::move(input)), b.rec_b1));
    nn::Var out = nn::affine(t, b.rec_w2, hidden, b.rec_b2);
    const Eigen::Index dz = latent_dim();
    return {nn::slice_rows(t, out, 0, dz), nn::slice_rows(t, out, dz, dz)};
  }

  nn::TapeState initial_state(nn::Tape& t, const Bound& b, const nn::Matrix& unit, std::optional<nn::Var> z) const {
    const Eigen::Index H = config_.hidden_dim;
    if (kind() == DecoderKind::lm) {
      const nn::Matrix zero = nn::Matrix::Zero(H, unit.cols());
      return {t.constant(zero), t.constant(zero)};
    }
    nn::Var input;
    switch (kind()) {
      case DecoderKind::color_lm: input = t.constant(unit); break;
      case DecoderKind::vae: input = *z; break;
      case DecoderKind::color_vae: input = nn::concat_rows(t, *z, t.constant(unit)); break;
      case DecoderKind::lm: break;
    }
    nn::Var pre = nn::affine(t, b.init_w, input, b.init_b);
    return {nn::tanh(t, nn::slice_rows(t, pre, 0, H)), nn::slice_rows(t, pre, H, H)};
  }

  std::pair<nn::Vector, nn::CellState> step_logits(int prev, const nn::CellState& s) const {
    nn::Tape t;
    const Bound b = bind(t);
    nn::Var x = nn::embed(t, b.embed, {prev});
    nn::TapeState next = nn::lstm_step(t, b.lstm, x, {t.constant(s.h), t.constant(s.c)});
    nn::Var logits = nn::affine(t, b.out_w, next.h, b.out_b);
    return {t.value(logits).col(0), {t.value(next.h).col(0), t.value(next.c).col(0)}};
  }

  DecoderConfig config_;
  CharVocab vocab_;
  nn::ParamStore params_;
  nn::ParamId embed_, out_w_, out_b_, init_w_, init_b_, rec_w1_, rec_b1_, rec_w2_, rec_b2_;
  nn::LstmLayer lstm_;
  std::uint64_t seed_ = 0;
  nlohmann::json train_info_;
};

enum class PerplexityMode { exact, elbo };

struct PerplexityResult {
  double perplexity = 0.0;
  double total_nll = 0.0;  // or negative ELBO for VAE kinds
  double total_kl = 0.0;
  std::size_t scored = 0;
  bool upper_bound = false;  // true when computed from the ELBO
};

/// Per-character perplexity exp(total NLL / scored symbols). VAE kinds use
/// the ELBO (one seeded latent sample per name), which bounds the exact
/// perplexity from above.
inline PerplexityResult evaluate_perplexity(const DecoderModel& m, const Dataset& d, std::uint64_t seed = 42,
                                            std::size_t chunk = 256) {
  if (d.empty()) throw std::invalid_argument("cannot evaluate perplexity on an empty dataset");
  PerplexityResult r;
  r.upper_bound = is_vae(m.kind());
  Rng rng(derive_seed(seed, 0xE7A1));
  for (std::size_t start = 0; start < d.size(); start += chunk) {
    const std::size_t end = std::min(d.size(), start + chunk);
    std::vector<DecodeItem> items;
    for (std::size_t k = start; k < end; ++k) items.push_back(m.make_item(d.items[k]));
    const auto batch = DecoderModel::make_batch(items);
    nn::Matrix noise;
    if (is_vae(m.kind())) {
      noise.resize(m.latent_dim(), batch.size);
      for (Eigen::Index j = 0; j < noise.cols(); ++j) {
        for (Eigen::Index i = 0; i < noise.rows(); ++i) noise(i, j) = rng.normal();
      }
    }
    nn::Tape t;
    const auto g = m.batch_loss(t, m.bind(t), batch, is_vae(m.kind()) ? &noise : nullptr);
    r.total_kl += t.value(g.kl)(0, 0);
    r.total_nll += t.value(g.nll)(0, 0) + t.value(g.kl)(0, 0);
    r.scored += batch.scored;
  }
  r.perplexity = std::exp(r.total_nll / static_cast<double>(r.scored));
  return r;
}

inline double perplexity(const DecoderModel& m, const Dataset& d, PerplexityMode mode, std::uint64_t seed = 42) {
  if (is_vae(m.kind()) && mode != PerplexityMode::elbo) {
    throw std::invalid_argument("VAE decoders report perplexity from the ELBO");
  }
  return evaluate_perplexity(m, d, seed).perplexity;
}

struct DecoderEpoch {
  int epoch = 0;
  double train_nll_per_char = 0.0;
  double train_kl_per_name = 0.0;
  double kl_weight = 1.0;
  std::optional<double> dev_perplexity;
  std::optional<double> dev_kl_per_name;
  double seconds = 0.0;
};

struct DecoderTrainResult {
  DecoderModel model;
  std::vector<DecoderEpoch> history;
  int best_epoch = 0;
};

using DecoderEpochCallback = std::function<void(const DecoderEpoch&)>;

/// Minibatch Adam on mean per-name NLL (LM kinds) or negative ELBO (VAE
/// kinds). Early stopping and model selection use dev perplexity.
inline DecoderTrainResult train_decoder(const Dataset& train, const Dataset& dev, const DecoderConfig& cfg,
                                        const DecoderTrainConfig& tc, const CharVocab& vocab,
                                        const DecoderEpochCallback& on_epoch = {}) {
  if (train.empty()) throw std::invalid_argument("training set is empty");
  if (tc.batch_size <= 0 || tc.epochs < 0 || !(tc.learning_rate > 0.0) || tc.patience < 0 || tc.vae_samples != 1 ||
      tc.kl_warmup_epochs < 0) {
    throw std::invalid_argument("invalid decoder training configuration");
  }
  DecoderTrainResult result{DecoderModel::create(cfg, vocab, tc.seed), {}, 0};
  DecoderModel& model = result.model;
  model.set_training_info(to_json(tc));
  nn::ParamStore& ps = model.params();
  nn::AdamState adam(ps, {tc.learning_rate});
  const auto order = detail::canonical_order(train);
  std::vector<DecodeItem> all_items;
  all_items.reserve(train.size());
  for (const auto& item : train.items) all_items.push_back(model.make_item(item));

  const std::size_t batches_per_epoch =
      (train.size() + static_cast<std::size_t>(tc.batch_size) - 1) / static_cast<std::size_t>(tc.batch_size);
  std::vector<nn::Matrix> best = ps.values();
  double best_dev = HUGE_VAL;
  int stale = 0;
  std::size_t global_batch = 0;
  for (int epoch = 1; epoch <= tc.epochs; ++epoch) {
    const auto started = std::chrono::steady_clock::now();
    std::vector<std::size_t> perm = order;
    Rng rng(derive_seed(tc.seed, static_cast<std::uint64_t>(epoch)));
    rng.shuffle(perm);
    double nll_sum = 0.0, kl_sum = 0.0, weight = 1.0;
    std::size_t scored = 0;
    for (std::size_t start = 0; start < perm.size(); start += static_cast<std::size_t>(tc.batch_size)) {
      const std::size_t end = std::min(perm.size(), start + static_cast<std::size_t>(tc.batch_size));
      std::vector<DecodeItem> items;
      for (std::size_t k = start; k < end; ++k) items.push_back(all_items[perm[k]]);
      const auto batch = DecoderModel::make_batch(items);
      nn::Matrix noise;
      if (is_vae(model.kind())) {
        noise.resize(model.latent_dim(), batch.size);
        for (Eigen::Index j = 0; j < noise.cols(); ++j) {
          for (Eigen::Index i = 0; i < noise.rows(); ++i) noise(i, j) = rng.normal();
        }
      }
      weight = 1.0;
      if (tc.kl_warmup_epochs > 0) {
        weight = std::min(1.0, static_cast<double>(global_batch + 1) /
                                   static_cast<double>(batches_per_epoch * static_cast<std::size_t>(tc.kl_warmup_epochs)));
      }
      ++global_batch;
      nn::Tape t;
      const auto g = model.batch_loss(t, model.bind(t), batch, is_vae(model.kind()) ? &noise : nullptr);
      nn::Var objective = nn::add(t, g.nll, nn::scale(t, g.kl, weight));
      nn::Var loss = nn::scale(t, objective, 1.0 / static_cast<double>(batch.size));
      const double value = t.value(loss)(0, 0);
      if (!std::isfinite(value)) {
        std::ostringstream os;
        os << "non-finite decoder loss at epoch " << epoch << " (batch starting at item " << perm[start] << ")";
        throw nn::NonFiniteError(os.str());
      }
      nll_sum += t.value(g.nll)(0, 0);
      kl_sum += t.value(g.kl)(0, 0);
      scored += batch.scored;
      t.backward(loss, ps.grads());
      nn::clip_grad_norm(ps, tc.clip_norm);
      nn::adam_step(ps, adam);
    }
    DecoderEpoch rec;
    rec.epoch = epoch;
    rec.train_nll_per_char = nll_sum / static_cast<double>(scored);
    rec.train_kl_per_name = kl_sum / static_cast<double>(train.size());
    rec.kl_weight = weight;
    if (!dev.empty()) {
      const auto p = evaluate_perplexity(model, dev, tc.seed);
      rec.dev_perplexity = p.perplexity;
      rec.dev_kl_per_name = p.total_kl / static_cast<double>(dev.size());
    }
    rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);

    const double score = rec.dev_perplexity.value_or(-static_cast<double>(epoch));
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
