// Acceptance suite: prints one PASS/FAIL line per criterion, with indented
// detail lines under each. Exit status is the number of failed criteria.
//
// Usage: acceptance [criterion-number ...]   (default: all)

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "colorname/analysis.hpp"
#include "colorname/color2name.hpp"
#include "colorname/colorspace.hpp"
#include "colorname/model_check.hpp"
#include "colorname/name2color.hpp"
#include "colorname/service.hpp"

namespace fs = std::filesystem;
using namespace colorname;

namespace {

const std::string kData = COLORNAME_TEST_DATA;
const std::string kCli = COLORNAME_CLI;

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t) { return std::chrono::duration<double>(Clock::now() - t).count(); }

struct Outcome {
  bool pass = true;
  std::vector<std::string> details;

  void check(bool ok, const std::string& what) {
    details.push_back(std::string(ok ? "ok    " : "FAILED") + "  " + what);
    pass = pass && ok;
  }
  void note(const std::string& what) { details.push_back("        " + what); }
};

std::string num(double v, int digits = 4) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(digits) << v;
  return os.str();
}

std::string sci(double v) {
  std::ostringstream os;
  os << std::scientific << std::setprecision(3) << v;
  return os.str();
}

fs::path scratch_dir(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("colorname_acceptance_" + std::to_string(::getpid()) + "_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// ---- 1. color math ----

Outcome color_math() {
  Outcome o;
  const auto start = Clock::now();
  const ColorLab white = rgb_to_lab({255, 255, 255});
  o.check(white.L() == 100.0 && std::abs(white.a()) <= 0.05 && std::abs(white.b()) <= 0.05,
          "white -> (" + num(white.L(), 6) + ", " + num(white.a(), 6) + ", " + num(white.b(), 6) +
              "), |a|,|b| <= 0.05");
  const ColorLab black = rgb_to_lab({0, 0, 0});
  o.check(black.L() == 0.0 && black.a() == 0.0 && black.b() == 0.0,
          "black -> (" + num(black.L(), 6) + ", " + num(black.a(), 6) + ", " + num(black.b(), 6) + ")");
  Rng rng(derive_seed(42, 0xC010));
  int worst = 0;
  for (int i = 0; i < 10000; ++i) {
    const ColorRGB c{static_cast<std::uint8_t>(rng.below(256)), static_cast<std::uint8_t>(rng.below(256)),
                     static_cast<std::uint8_t>(rng.below(256))};
    const ColorRGB back = lab_to_rgb(rgb_to_lab(c));
    worst = std::max({worst, std::abs(back.r - c.r), std::abs(back.g - c.g), std::abs(back.b - c.b)});
  }
  o.check(worst <= 1, "10,000 random RGB -> Lab -> RGB, max channel error " + std::to_string(worst) + " <= 1");
  const double secs = seconds_since(start);
  o.check(secs < 1.0, "runtime " + num(secs, 3) + " s < 1 s");
  return o;
}

// ---- 2. gradient checks ----

Outcome gradient_checks() {
  Outcome o;
  const auto start = Clock::now();
  ModelCheckOptions opt;
  opt.hidden_dim = 8;
  opt.latent_dim = 2;
  for (const char* kind : {"unigram-linear", "rnn", "lstm1", "lstm2", "color-lm", "color-vae"}) {
    const auto r = check_model_gradients(kind, 1e-4, opt);
    std::string what = std::string(kind) + " (H=8";
    if (std::string(kind) == "color-vae") what += ", d_z=2";
    o.check(r.passed && r.max_rel_error < 1e-4, what + ") max relative error " + sci(r.max_rel_error) + " < 1e-4");
  }
  const double secs = seconds_since(start);
  o.check(secs < 120.0, "runtime " + num(secs, 1) + " s < 120 s");
  return o;
}

// ---- 3. overfit oracles ----

Outcome overfit_oracles() {
  Outcome o;
  const auto start = Clock::now();
  const Dataset fixture = load_pairs(kData + "/fixtures/overfit10.csv", Source::other);
  const CharVocab vocab = build_vocab(fixture, 1);

  {
    TrainConfig tc;
    tc.epochs = 500;
    tc.batch_size = 10;
    tc.learning_rate = 1e-2;
    tc.patience = 0;
    int first_below = 0;
    auto r = train_regressor(fixture, {}, {EncoderKind::lstm1, 32, 32}, tc, vocab, [&](const RegressorEpoch& e) {
      if (!first_below && e.train_mse < 25.0) first_below = e.epoch;
    });
    const double mse = eval_mse(r.model, fixture);
    o.check(mse < 25.0, "lstm1 on the 10-pair fixture: train MSE " + num(mse) + " Lab^2 < 25 after 500 epochs");
    o.note("first epoch with running train MSE < 25: " + std::to_string(first_below));
  }

  const std::string memorized = "Haunted milk";
  {
    Dataset one;
    one.items.push_back(fixture.items[2]);
    DecoderTrainConfig tc;
    tc.epochs = 300;
    tc.batch_size = 1;
    tc.learning_rate = 1e-2;
    tc.patience = 0;
    auto r = train_decoder(one, {}, {DecoderKind::lm, 32, 32, 16}, tc, vocab);
    const double ppl = evaluate_perplexity(r.model, one).perplexity;
    o.check(ppl <= 1.05, "single-name LM on '" + one.items[0].name + "': perplexity " + num(ppl, 6) + " <= 1.05");
  }
  {
    DecoderTrainConfig tc;
    tc.epochs = 500;
    tc.batch_size = 10;
    tc.learning_rate = 1e-2;
    tc.patience = 0;
    auto r = train_decoder(fixture, {}, {DecoderKind::color_lm, 32, 32, 16}, tc, vocab);
    int exact = 0;
    std::string target_decoded;
    for (const auto& item : fixture.items) {
      const std::string g = r.model.greedy_name(item.color, 64);
      if (g == item.name) ++exact;
      if (item.name == memorized) target_decoded = g;
    }
    o.check(target_decoded == memorized,
            "color-lm overfit on the fixture: greedy decode of #CDD7B6 gives '" + target_decoded + "'");
    o.note("greedy decodes matching their memorized name: " + std::to_string(exact) + "/10");
  }
  const double secs = seconds_since(start);
  o.check(secs < 300.0, "runtime " + num(secs, 1) + " s < 300 s");
  return o;
}

// ---- desk benchmark shared config ----

struct Desk {
  Dataset train = load_pairs(kData + "/desk/train.csv", Source::train_pool);
  Dataset dev = load_pairs(kData + "/desk/dev.csv", Source::train_pool);
  CharVocab vocab = build_vocab(train);
};

constexpr int kDeskDim = 64;

// ---- 4. regressor ordering ----

Outcome regressor_ordering(const Desk& desk) {
  Outcome o;
  const auto start = Clock::now();
  TrainConfig tc;
  tc.epochs = 30;
  tc.batch_size = 64;
  tc.learning_rate = 3e-3;
  tc.patience = 3;
  std::map<std::string, double> mse;
  for (auto kind : {EncoderKind::bigram_linear, EncoderKind::rnn, EncoderKind::lstm1, EncoderKind::lstm2}) {
    const auto t0 = Clock::now();
    auto r = train_regressor(desk.train, desk.dev, {kind, kDeskDim, kDeskDim}, tc, desk.vocab);
    mse[std::string(to_string(kind))] = eval_mse(r.model, desk.dev);
    o.note(std::string(to_string(kind)) + ": dev MSE " + num(mse[std::string(to_string(kind))], 2) + " (best epoch " +
           std::to_string(r.best_epoch) + ", " + num(seconds_since(t0), 0) + " s)");
  }
  const double bigram = mse["bigram"], rnn = mse["rnn"], lstm1 = mse["lstm1"], lstm2 = mse["lstm2"];
  o.check(lstm2 <= lstm1, "lstm2 " + num(lstm2, 2) + " <= lstm1 " + num(lstm1, 2));
  o.check(lstm1 < rnn, "lstm1 " + num(lstm1, 2) + " < rnn " + num(rnn, 2));
  o.check(rnn < bigram, "rnn " + num(rnn, 2) + " < bigram-linear " + num(bigram, 2));
  o.check(lstm2 <= 0.9 * bigram,
          "lstm2 is " + num(100.0 * (1.0 - lstm2 / bigram), 1) + "% below bigram-linear (>= 10% required)");
  const double secs = seconds_since(start);
  o.check(secs < 1800.0, "runtime " + num(secs / 60.0, 1) + " min < 30 min");
  return o;
}

// ---- 5. decoder ordering ----

Outcome decoder_ordering(const Desk& desk) {
  Outcome o;
  const auto start = Clock::now();
  DecoderTrainConfig tc;
  tc.epochs = 30;
  tc.batch_size = 128;
  tc.learning_rate = 3e-3;
  tc.patience = 3;
  std::map<std::string, double> ppl;
  for (auto kind : {DecoderKind::lm, DecoderKind::color_lm, DecoderKind::color_vae}) {
    const auto t0 = Clock::now();
    auto r = train_decoder(desk.train, desk.dev, {kind, kDeskDim, kDeskDim, 16}, tc, desk.vocab);
    const auto e = evaluate_perplexity(r.model, desk.dev);
    ppl[std::string(to_string(kind))] = e.perplexity;
    o.note(std::string(to_string(kind)) + ": dev perplexity " + num(e.perplexity) +
           (e.upper_bound ? " (ELBO bound, KL/name " + sci(e.total_kl / static_cast<double>(desk.dev.size())) + ")"
                          : "") +
           " (best epoch " + std::to_string(r.best_epoch) + ", " + num(seconds_since(t0), 0) + " s)");
  }
  const double lm = ppl["lm"], clm = ppl["color-lm"], vae = ppl["color-vae"];
  o.check(clm <= 0.99 * lm, "color-lm " + num(clm) + " is " + num(100.0 * (1.0 - clm / lm), 2) +
                                "% below lm " + num(lm) + " (>= 1% required)");
  o.check(vae <= 1.02 * clm, "color-vae " + num(vae) + " <= color-lm x 1.02 = " + num(1.02 * clm));
  const double secs = seconds_since(start);
  o.check(secs < 2700.0, "runtime " + num(secs / 60.0, 1) + " min < 45 min");
  return o;
}

// ---- 6. VAE correctness ----

double log_sum_exp(const std::vector<double>& v) {
  const double m = *std::max_element(v.begin(), v.end());
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

Outcome vae_correctness() {
  Outcome o;
  constexpr double kHalfLog2Pi = 0.91893853320467274178;
  {
    Rng rng(derive_seed(42, 0x4B1));
    double worst = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
      LatentGaussian g{nn::Vector(16), nn::Vector(16)};
      for (int i = 0; i < 16; ++i) {
        g.mean(i) = -2.0 + 4.0 * rng.uniform();
        g.log_variance(i) = -1.0 + 2.0 * rng.uniform();
      }
      double mc = 0.0;
      const int samples = 100000;
      for (int s = 0; s < samples; ++s) {
        double log_q = 0.0, log_p = 0.0;
        for (int i = 0; i < 16; ++i) {
          const double e = rng.normal();
          const double z = g.mean(i) + std::exp(0.5 * g.log_variance(i)) * e;
          log_q += -kHalfLog2Pi - 0.5 * g.log_variance(i) - 0.5 * e * e;
          log_p += -kHalfLog2Pi - 0.5 * z * z;
        }
        mc += log_q - log_p;
      }
      mc /= samples;
      const double closed = kl_to_standard_normal(g);
      worst = std::max(worst, std::abs(mc - closed) / closed);
    }
    o.check(worst < 0.01, "closed-form KL vs 1e5-sample Monte Carlo on 10 random 16-d Gaussians: worst relative gap " +
                              sci(worst) + " < 1%");
  }
  {
    const Dataset fixture = load_pairs(kData + "/fixtures/overfit10.csv", Source::other);
    const CharVocab vocab = build_vocab(fixture, 1);
    Rng rng(derive_seed(42, 0xE1B0));
    int holds = 0;
    double smallest_gap = HUGE_VAL;
    for (int trial = 0; trial < 100; ++trial) {
      DecoderModel m = DecoderModel::create({DecoderKind::color_vae, 5, 8, 2}, vocab, 1000 + trial);
      colorname::detail::jitter(m.params(), static_cast<std::uint64_t>(trial));
      const NamedColor& item = fixture.items[rng.below(fixture.size())];
      const LatentGaussian q = m.recognize(item.color);
      double elbo_sum = 0.0;
      std::vector<double> log_w;
      for (int k = 0; k < 1000; ++k) {
        nn::Vector eps(2);
        for (int i = 0; i < 2; ++i) eps(i) = rng.normal();
        const ElboResult e = m.elbo(item.color, item.name, eps);
        elbo_sum += e.elbo;
        double log_q = 0.0, log_p = 0.0;
        for (int i = 0; i < 2; ++i) {
          const double z = q.mean(i) + std::exp(0.5 * q.log_variance(i)) * eps(i);
          log_q += -kHalfLog2Pi - 0.5 * q.log_variance(i) - 0.5 * eps(i) * eps(i);
          log_p += -kHalfLog2Pi - 0.5 * z * z;
        }
        log_w.push_back(e.log_likelihood + log_p - log_q);
      }
      const double elbo = elbo_sum / 1000.0;
      const double bound = log_sum_exp(log_w) - std::log(1000.0);
      if (elbo <= bound) ++holds;
      smallest_gap = std::min(smallest_gap, bound - elbo);
    }
    o.check(holds == 100, "ELBO <= 1000-sample importance-sampled log-likelihood in " + std::to_string(holds) +
                              "/100 trials (tiny color-vae, H=8, d_z=2)");
    o.note("smallest gap (bound - ELBO): " + sci(smallest_gap));
  }
  return o;
}

// ---- 7. Turing harness ----

Outcome turing_harness() {
  Outcome o;
  const fs::path dir = scratch_dir("turing");
  const Dataset fixture = load_pairs(kData + "/fixtures/overfit10.csv", Source::other);
  const NameEncoderModel model =
      NameEncoderModel::create({EncoderKind::lstm1, 4, 6}, build_vocab(fixture, 1), fixture, 7);

  // Judge j picks "predicted" on item i of dataset d iff (j + 7 i) mod 111 < P[d]. For each item that is exactly
  // P[d] of the 111 judges, so each dataset gets 20 P[d] predicted choices out of 2220.
  const std::vector<std::pair<std::string, std::string>> sets{
      {"Test", "/desk/test.csv"}, {"ggplot2", "/desk/ggplot2.csv"}, {"Paint", "/desk/paint.csv"}};
  const int predicted_judges[3] = {63, 75, 77};
  {
    std::ofstream items(dir / "items.jsonl");
    for (const auto& [tag, file] : sets) {
      const Dataset d = load_pairs(kData + file, Source::other);
      for (const auto& it : sample_turing_items(d, model, 20, 42, tag).items) items << to_json(it).dump() << '\n';
    }
  }
  ServiceConfig cfg;
  cfg.turing_items = (dir / "items.jsonl").string();
  cfg.judgment_log = (dir / "judgments.jsonl").string();
  std::string live_results;
  {
    Service service(cfg);
    const auto items = service.snapshot()->items;
    int posted = 0;
    for (int j = 0; j < 111; ++j) {
      for (std::size_t d = 0; d < 3; ++d) {
        for (int i = 0; i < 20; ++i) {
          const TuringItem& item = items[d * 20 + static_cast<std::size_t>(i)];
          const bool pick_predicted = (j + 7 * i) % 111 < predicted_judges[d];
          const Side actual = item.actual_side;
          const Side side = pick_predicted ? (actual == Side::left ? Side::right : Side::left) : actual;
          const nlohmann::json body = {
              {"judge", "judge-" + std::to_string(j)}, {"item", item.id}, {"choice", std::string(to_string(side))}};
          if (service.handle({"POST", "/api/turing/judge", {}, body.dump()}).status == 201) ++posted;
        }
      }
    }
    o.check(posted == 111 * 60, "posted " + std::to_string(posted) + " judgments (111 judges x 20 items x 3 datasets)");

    httplib::Server server;
    service.bind(server);
    const int port = server.bind_to_any_port("127.0.0.1");
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();
    httplib::Client client("127.0.0.1", port);
    if (auto res = client.Get("/api/turing/results")) live_results = res->body;
    server.stop();
    t.join();
  }

  const auto replay = tabulate_preferences(load_judgments(cfg.judgment_log), load_turing_items(cfg.turing_items));
  const std::string expected_text =
      "Preference              Test   ggplot2     Paint\n"
      "Actual color           43.2%     32.4%     30.6%\n"
      "Predicted color        56.8%     67.6%     69.4%\n"
      "Judgments               2220      2220      2220\n";
  const std::string text = replay.to_text();
  o.check(text == expected_text, "replayed log tabulates to 56.8/67.6/69.4% predicted (63, 75, 77 of 111 judges)");
  std::istringstream lines(text);
  for (std::string line; std::getline(lines, line);) o.note("| " + line);
  bool counts = replay.rows.size() == 3;
  for (std::size_t d = 0; counts && d < 3; ++d) {
    counts = replay.rows[d].predicted == static_cast<std::size_t>(20 * predicted_judges[d]) &&
             replay.rows[d].total() == 2220;
  }
  o.check(counts, "per-dataset counts equal 20 x P predicted of 2220");
  o.check(!live_results.empty() && live_results == replay.to_json().dump(),
          "/api/turing/results over HTTP equals offline tabulate_preferences byte for byte");
  {
    Service restarted(cfg);
    o.check(restarted.handle({"GET", "/api/turing/results", {}, ""}).text() == live_results,
            "a restarted service replays the log to the same results");
  }
  fs::remove_all(dir);
  return o;
}

// ---- 8. determinism ----

struct Run {
  int code = -1;
  std::string out;
};

Run run_cli(const std::string& args) {
  Run r;
  const std::string cmd = "'" + kCli + "' " + args + " 2>/dev/null";
  FILE* p = ::popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = std::fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = ::pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Outcome determinism() {
  Outcome o;
  const std::string train = kData + "/desk/dev.csv";
  const std::string dev = kData + "/fixtures/overfit10.csv";
  const std::string corpus = kData + "/desk/corpora/recipes.txt";
  std::string outputs[2];
  std::map<std::string, std::string> files[2];
  for (int pass = 0; pass < 2; ++pass) {
    const fs::path dir = scratch_dir("det" + std::to_string(pass));
    auto f = [&](const char* name) { return "'" + (dir / name).string() + "'"; };
    const std::vector<std::string> commands{
        "split --input '" + kData + "/desk/pool.csv' --out-dir " + f("split") + " --fractions 10000,1000,1000 --seed 42",
        "train-n2c --train '" + train + "' --dev '" + dev + "' --kind lstm2 --embed 16 --hidden 16 --epochs 2 --seed 9 --out " +
            f("n2c.ckpt") + " --csv " + f("n2c.csv"),
        "train-c2n --train '" + train + "' --dev '" + dev +
            "' --kind color-vae --embed 16 --hidden 16 --latent 4 --epochs 2 --seed 9 --out " + f("c2n.ckpt") +
            " --csv " + f("c2n.csv"),
        "eval-mse --model " + f("n2c.ckpt") + " --data '" + dev + "' --csv " + f("mse.csv"),
        "eval-ppl --model " + f("c2n.ckpt") + " --data '" + dev + "' --seed 3 --csv " + f("ppl.csv"),
        "predict --model " + f("n2c.ckpt") + " 'deep blue' moss --csv " + f("pred.csv"),
        "trace --model " + f("n2c.ckpt") + " --name 'deep blue' --csv " + f("trace.csv"),
        "generate --model " + f("c2n.ckpt") + " --lab 50,0,0 --n 5 --seed 7 --csv " + f("gen.csv"),
        "analyze-corpus --model " + f("n2c.ckpt") + " --input '" + corpus + "' --distances " + f("dist.csv"),
        "turing-sample --model " + f("n2c.ckpt") + " --data '" + dev + "' --tag Test --n 5 --seed 4 --out " +
            f("items.jsonl"),
    };
    for (const auto& c : commands) {
      const Run r = run_cli(c);
      if (r.code != 0) o.check(false, "command failed (exit " + std::to_string(r.code) + "): colorname " + c);
      outputs[pass] += "$ " + c.substr(0, c.find(' ')) + "\n" + r.out;
    }
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
      if (entry.is_regular_file()) files[pass][fs::relative(entry.path(), dir).string()] = slurp(entry.path());
    }
    fs::remove_all(dir);
  }
  o.check(outputs[0] == outputs[1], "stdout reports of 10 commands identical across two runs");
  o.check(files[0].size() == 14 && files[0] == files[1],
          std::to_string(files[0].size()) + " output files (checkpoints, CSVs, item file) byte-identical across two runs");
  return o;
}

struct Criterion {
  std::string title;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  std::unique_ptr<Desk> desk;
  auto need_desk = [&]() -> const Desk& {
    if (!desk) desk = std::make_unique<Desk>();
    return *desk;
  };
  const std::vector<Criterion> criteria{
      {"Color math", color_math},
      {"Gradient checks", gradient_checks},
      {"Overfit oracles", overfit_oracles},
      {"Regressor ordering at desk scale", [&] { return regressor_ordering(need_desk()); }},
      {"Decoder ordering at desk scale", [&] { return decoder_ordering(need_desk()); }},
      {"VAE correctness", vae_correctness},
      {"Turing harness", turing_harness},
      {"Determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!only.empty() && !only.count(static_cast<int>(i + 1))) continue;
    const auto start = Clock::now();
    Outcome out;
    try {
      out = criteria[i].run();
    } catch (const std::exception& e) {
      out.check(false, std::string("exception: ") + e.what());
    }
    std::cout << (out.pass ? "PASS" : "FAIL") << "  [" << i + 1 << "] " << criteria[i].title << "  ("
              << num(seconds_since(start), 1) << " s)\n";
    for (const auto& d : out.details) std::cout << "      " << d << '\n';
    std::cout << std::flush;
    if (!out.pass) ++failed;
  }
  return failed;
}
