#pragma once

// Finite-difference gradient checks of every trainable model on a downsized
// instance.

#include <string>
#include <string_view>
#include <vector>

#include "colorname/color2name.hpp"
#include "colorname/name2color.hpp"
#include "colorname/nn/grad_check.hpp"

namespace colorname {

struct ModelCheckOptions {
  int embed_dim = 5;
  int hidden_dim = 8;
  int latent_dim = 2;
  std::uint64_t seed = 42;
  double step = 1e-5;
};

/// Names of every model kind accepted by check_model_gradients.
inline std::vector<std::string> checkable_kinds() {
  return {"unigram", "bigram", "rnn", "lstm1", "lstm2", "lm", "color-lm", "vae", "color-vae"};
}

namespace detail {

inline Dataset gradcheck_fixture() {
  Dataset d;
  d.items.push_back({"teal", rgb_to_lab({0, 128, 128}), Source::other});
  d.items.push_back({"Dusty rose", rgb_to_lab({200, 140, 150}), Source::other});
  d.items.push_back({"mud", rgb_to_lab({90, 70, 40}), Source::other});
  return d;
}

/// Perturbs every parameter away from its initialization so zero-initialized
/// biases are exercised too.
inline void jitter(nn::ParamStore& ps, std::uint64_t seed) {
  Rng rng(derive_seed(seed, 0x61AD));
  for (std::size_t i = 0; i < ps.size(); ++i) {
    nn::Matrix& m = ps.value(nn::ParamId{i});
    for (Eigen::Index k = 0; k < m.size(); ++k) m.data()[k] += 0.1 * rng.normal();
  }
}

}  // namespace detail

inline nn::GradCheckReport check_model_gradients(std::string_view kind, double tolerance,
                                                 const ModelCheckOptions& opt = {}) {
  const Dataset data = detail::gradcheck_fixture();
  const CharVocab vocab = build_vocab(data, 1);
  std::vector<std::string> names;
  for (const auto& item : data.items) names.push_back(item.name);

  if (kind == "unigram" || kind == "unigram-linear" || kind == "bigram" || kind == "bigram-linear" ||
      kind == "rnn" || kind == "lstm1" || kind == "lstm2") {
    EncoderConfig cfg{parse_encoder_kind(kind), opt.embed_dim, opt.hidden_dim};
    NameEncoderModel model = NameEncoderModel::create(cfg, vocab, data, opt.seed);
    detail::jitter(model.params(), opt.seed);
    nn::Matrix target(3, static_cast<Eigen::Index>(data.size()));
    for (std::size_t j = 0; j < data.size(); ++j) {
      const auto u = lab_to_unit(data.items[j].color);
      for (int r = 0; r < 3; ++r) target(r, static_cast<Eigen::Index>(j)) = u[static_cast<std::size_t>(r)];
    }
    const nn::LossBuilder loss = [&](nn::Tape& t) {
      return nn::squared_error(t, model.forward(t, names), target);
    };
    return nn::grad_check(model.params(), loss, tolerance, opt.step);
  }

  DecoderConfig cfg{parse_decoder_kind(kind), opt.embed_dim, opt.hidden_dim, opt.latent_dim};
  DecoderModel model = DecoderModel::create(cfg, vocab, opt.seed);
  detail::jitter(model.params(), opt.seed);
  std::vector<DecodeItem> items;
  for (const auto& item : data.items) items.push_back(model.make_item(item));
  const auto batch = DecoderModel::make_batch(items);
  nn::Matrix noise(std::max(1, model.latent_dim()), batch.size);
  Rng rng(derive_seed(opt.seed, 0x7015E));
  for (Eigen::Index k = 0; k < noise.size(); ++k) noise.data()[k] = rng.normal();
  const nn::LossBuilder loss = [&](nn::Tape& t) {
    const auto g = model.batch_loss(t, model.bind(t), batch, is_vae(model.kind()) ? &noise : nullptr);
    return nn::add(t, g.nll, g.kl);
  };
  return nn::grad_check(model.params(), loss, tolerance, opt.step);
}

}  // namespace colorname
