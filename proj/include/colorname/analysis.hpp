#pragma once

// Analyses over a trained regressor: per-character traces, colorfulness of
// text corpora, text colorization, and the color Turing test (item sampling,
// judgment records and preference tables).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <map>
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
#include "colorname/random.hpp"
#include "colorname/utf8.hpp"

namespace colorname {

// ---- tokenization ----

/// Maximal runs of letters; everything else separates. Case is preserved and
/// invalid UTF-8 bytes act as separators.
inline std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
  };
  std::size_t i = 0;
  while (i < text.size()) {
    const auto lead = static_cast<unsigned char>(text[i]);
    const std::size_t len = lead < 0x80 ? 1 : lead >= 0xF0 ? 4 : lead >= 0xE0 ? 3 : lead >= 0xC0 ? 2 : 1;
    const std::string_view chunk = text.substr(i, std::min(len, text.size() - i));
    if (chunk.size() == len && utf8::is_valid(chunk)) {
      const char32_t cp = utf8::decode(chunk)[0];
      if (utf8::is_letter(cp)) {
        current.append(chunk);
      } else {
        flush();
      }
      i += len;
    } else {
      flush();
      ++i;
    }
  }
  flush();
  return out;
}

// ---- traces ----

struct TraceStep {
  std::string prefix;
  std::size_t length = 0;  // characters consumed
  ColorLab lab;
};

struct CharTrace {
  std::string name;
  std::vector<TraceStep> steps;  // length + 1 entries, starting at the empty prefix
};

inline CharTrace char_trace(std::string_view name, const NameEncoderModel& m) {
  const auto colors = m.prefix_colors(name);
  const std::u32string chars = utf8::decode(name);
  CharTrace t{std::string(name), {}};
  for (std::size_t i = 0; i < colors.size(); ++i) {
    t.steps.push_back({utf8::encode(chars.substr(0, i)), i, colors[i]});
  }
  return t;
}

// ---- colorfulness ----

inline constexpr double kHistogramBinWidth = 5.0;
inline constexpr double kHistogramMax = 260.0;

struct Histogram {
  double bin_width = kHistogramBinWidth;
  double max = kHistogramMax;
  std::vector<std::size_t> counts;  // bin k holds [k*w, (k+1)*w); values past max land in the last bin

  Histogram() : counts(static_cast<std::size_t>(kHistogramMax / kHistogramBinWidth), 0) {}

  void add(double v) {
    auto k = static_cast<std::size_t>(std::max(0.0, v) / bin_width);
    counts[std::min(k, counts.size() - 1)] += 1;
  }

  std::size_t nonempty_bins() const {
    return static_cast<std::size_t>(std::count_if(counts.begin(), counts.end(), [](std::size_t c) { return c > 0; }));
  }
};

struct ColorfulnessReport {
  std::vector<std::string> words;  // scored tokens, in input order
  std::vector<double> distances;   // parallel to `words`
  std::size_t skipped = 0;
  Histogram histogram;
  double mean = 0.0;
  double median = 0.0;
  double stddev = 0.0;
  double min = 0.0;
  double max = 0.0;
};

/// A token is scored when it is a valid name with at least one character the
/// model's vocabulary knows.
inline bool is_scorable(std::string_view token, const CharVocab& vocab) {
  if (!is_valid_name(token)) return false;
  for (char32_t cp : utf8::decode(token)) {
    if (vocab.index_of(cp) != vocab.unk()) return true;
  }
  return false;
}

/// Distance of each word's predicted color from middle gray.
inline ColorfulnessReport colorfulness_distribution(const std::vector<std::string>& tokens,
                                                    const NameEncoderModel& m) {
  ColorfulnessReport r;
  for (const auto& t : tokens) {
    if (is_scorable(t, m.vocab())) {
      r.words.push_back(t);
    } else {
      ++r.skipped;
    }
  }
  const auto predicted = m.predict_batch(r.words);
  for (const auto& c : predicted) {
    const double d = lab_distance(c, gray_reference());
    r.distances.push_back(d);
    r.histogram.add(d);
  }
  if (r.distances.empty()) return r;
  std::vector<double> sorted = r.distances;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  double sum = 0.0;
  for (double d : r.distances) sum += d;
  r.mean = sum / static_cast<double>(n);
  double ss = 0.0;
  for (double d : r.distances) ss += (d - r.mean) * (d - r.mean);
  r.stddev = std::sqrt(ss / static_cast<double>(n));
  r.median = n % 2 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  r.min = sorted.front();
  r.max = sorted.back();
  return r;
}

struct ColoredWord {
  std::string word;
  ColorRGB rgb;
};

/// Every token of `text` with the display color of its predicted Lab value.
inline std::vector<ColoredWord> colorize_text(std::string_view text, const NameEncoderModel& m) {
  const auto words = tokenize(text);
  std::vector<ColoredWord> out;
  std::vector<std::string> names;
  for (const auto& w : words) {
    if (is_valid_name(w)) names.push_back(w);
  }
  const auto colors = m.predict_batch(names);
  std::size_t k = 0;
  for (const auto& w : words) {
    const ColorLab c = is_valid_name(w) ? colors[k++] : gray_reference();
    out.push_back({w, lab_to_rgb(c)});
  }
  return out;
}

// ---- Turing test ----

enum class Choice { actual, predicted };
enum class Side { left, right };

inline std::string_view to_string(Choice c) { return c == Choice::actual ? "actual" : "predicted"; }
inline std::string_view to_string(Side s) { return s == Side::left ? "left" : "right"; }

inline Choice parse_choice(std::string_view s) {
  if (s == "actual") return Choice::actual;
  if (s == "predicted") return Choice::predicted;
  throw std::invalid_argument("choice must be 'actual' or 'predicted'");
}

inline Side parse_side(std::string_view s) {
  if (s == "left") return Side::left;
  if (s == "right") return Side::right;
  throw std::invalid_argument("side must be 'left' or 'right'");
}

struct TuringItem {
  std::string id;
  std::string name;
  ColorLab actual;
  ColorLab predicted;
  std::string dataset;
  Side actual_side = Side::left;

  Choice choice_for(Side picked) const { return picked == actual_side ? Choice::actual : Choice::predicted; }
  ColorLab color_on(Side s) const { return s == actual_side ? actual : predicted; }
};

struct JudgmentRecord {
  std::string item;
  std::string judge;
  Choice choice = Choice::actual;
  std::optional<Side> side;  // what the judge clicked, when known
  std::string timestamp;     // ISO-8601 UTC
};

class UnknownItemError : public std::invalid_argument {
 public:
  explicit UnknownItemError(const std::string& id) : std::invalid_argument("unknown Turing item '" + id + "'") {}
};

inline nlohmann::json lab_json(const ColorLab& c) {
  return {{"lab", {c.L(), c.a(), c.b()}}, {"rgb", to_hex(lab_to_rgb(c))}};
}

inline ColorLab lab_from_json(const nlohmann::json& j) {
  const auto& v = j.at("lab");
  return {v.at(0).get<double>(), v.at(1).get<double>(), v.at(2).get<double>()};
}

inline nlohmann::json to_json(const TuringItem& it) {
  return {{"id", it.id},
          {"name", it.name},
          {"dataset", it.dataset},
          {"actual", lab_json(it.actual)},
          {"predicted", lab_json(it.predicted)},
          {"actual_side", std::string(to_string(it.actual_side))}};
}

inline TuringItem turing_item_from_json(const nlohmann::json& j) {
  return {j.at("id").get<std::string>(),          j.at("name").get<std::string>(),
          lab_from_json(j.at("actual")),          lab_from_json(j.at("predicted")),
          j.at("dataset").get<std::string>(),     parse_side(j.at("actual_side").get<std::string>())};
}

inline nlohmann::json to_json(const JudgmentRecord& r) {
  nlohmann::json j = {{"item", r.item}, {"judge", r.judge}, {"choice", std::string(to_string(r.choice))},
                      {"timestamp", r.timestamp}};
  if (r.side) j["side"] = std::string(to_string(*r.side));
  return j;
}

inline JudgmentRecord judgment_from_json(const nlohmann::json& j) {
  JudgmentRecord r;
  r.item = j.at("item").get<std::string>();
  r.judge = j.at("judge").get<std::string>();
  r.choice = parse_choice(j.at("choice").get<std::string>());
  if (j.contains("side")) r.side = parse_side(j.at("side").get<std::string>());
  r.timestamp = j.value("timestamp", "");
  return r;
}

/// One JSON object per line; blank lines are ignored.
template <class T, class Parse>
std::vector<T> read_json_lines(std::istream& in, Parse parse, const std::string& what) {
  std::vector<T> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(parse(nlohmann::json::parse(line)));
    } catch (const std::exception& e) {
      throw DataError(what + " line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

inline std::vector<TuringItem> read_turing_items(std::istream& in) {
  return read_json_lines<TuringItem>(in, turing_item_from_json, "Turing items");
}

inline std::vector<JudgmentRecord> read_judgments(std::istream& in) {
  return read_json_lines<JudgmentRecord>(in, judgment_from_json, "judgment log");
}

inline std::vector<TuringItem> load_turing_items(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  return read_turing_items(in);
}

inline std::vector<JudgmentRecord> load_judgments(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot read " + path);
  return read_judgments(in);
}

inline std::string utc_timestamp(std::chrono::system_clock::time_point t = std::chrono::system_clock::now()) {
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(t.time_since_epoch()).count();
  const std::time_t secs = static_cast<std::time_t>(ms / 1000);
  std::tm tm{};
  gmtime_r(&secs, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms % 1000));
  return out;
}

struct TuringSample {
  std::vector<TuringItem> items;
  std::size_t resampled = 0;  // candidates skipped because both swatches render identically
};

/// Draws `n` distinct items without replacement. Candidates whose predicted
/// and actual colors round to the same RGB are skipped and counted.
inline TuringSample sample_turing_items(const Dataset& d, const NameEncoderModel& m, std::size_t n, std::uint64_t seed,
                                        const std::string& dataset_tag) {
  if (d.size() < n) {
    throw std::invalid_argument("dataset has " + std::to_string(d.size()) + " items, fewer than the " +
                                std::to_string(n) + " requested");
  }
  std::vector<std::size_t> order(d.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(seed, fnv1a(dataset_tag)));
  rng.shuffle(order);
  TuringSample s;
  for (std::size_t idx : order) {
    if (s.items.size() == n) break;
    const auto& item = d.items[idx];
    const ColorLab predicted = m.predict(item.name);
    if (lab_to_rgb(predicted) == lab_to_rgb(item.color)) {
      ++s.resampled;
      continue;
    }
    char id[32];
    std::snprintf(id, sizeof id, "-%03zu", s.items.size() + 1);
    s.items.push_back({dataset_tag + id, item.name, item.color, predicted, dataset_tag,
                       rng.coin() ? Side::left : Side::right});
  }
  if (s.items.size() < n) {
    throw std::invalid_argument("only " + std::to_string(s.items.size()) + " items with distinguishable swatches");
  }
  return s;
}

struct PreferenceRow {
  std::string dataset;
  std::size_t actual = 0;
  std::size_t predicted = 0;

  std::size_t total() const { return actual + predicted; }
};

/// Percentage rounded half up to one decimal, computed in integers so that
/// ties are exact: 63/111 -> 56.8.
inline double rounded_percent(std::size_t count, std::size_t total) {
  if (total == 0) return 0.0;
  const std::uint64_t tenths = (2000ULL * count + total) / (2ULL * total);
  return static_cast<double>(tenths) / 10.0;
}

struct PreferenceTable {
  std::vector<PreferenceRow> rows;  // one per dataset, in item-file order

  double actual_percent(const PreferenceRow& r) const { return rounded_percent(r.actual, r.total()); }
  double predicted_percent(const PreferenceRow& r) const { return rounded_percent(r.predicted, r.total()); }

  nlohmann::json to_json() const {
    nlohmann::json datasets = nlohmann::json::array();
    for (const auto& r : rows) {
      datasets.push_back({{"dataset", r.dataset},
                          {"actual", r.actual},
                          {"predicted", r.predicted},
                          {"total", r.total()},
                          {"actual_percent", actual_percent(r)},
                          {"predicted_percent", predicted_percent(r)}});
    }
    return {{"datasets", datasets}};
  }

  /// Two preference rows by dataset columns, plus the judgment counts.
  std::string to_text() const {
    std::ostringstream os;
    auto pct = [](double v) {
      std::ostringstream s;
      s << std::fixed << std::setprecision(1) << v << '%';
      return s.str();
    };
    os << std::left << std::setw(18) << "Preference";
    for (const auto& r : rows) os << std::right << std::setw(10) << r.dataset;
    os << '\n' << std::left << std::setw(18) << "Actual color";
    for (const auto& r : rows) os << std::right << std::setw(10) << pct(actual_percent(r));
    os << '\n' << std::left << std::setw(18) << "Predicted color";
    for (const auto& r : rows) os << std::right << std::setw(10) << pct(predicted_percent(r));
    os << '\n' << std::left << std::setw(18) << "Judgments";
    for (const auto& r : rows) os << std::right << std::setw(10) << r.total();
    os << '\n';
    return os.str();
  }

  std::string to_csv() const {
    std::ostringstream os;
    os << "dataset,actual,predicted,total,actual_percent,predicted_percent\n";
    for (const auto& r : rows) {
      os << detail::quote_csv(r.dataset) << ',' << r.actual << ',' << r.predicted << ',' << r.total() << ','
         << std::fixed << std::setprecision(1) << actual_percent(r) << ',' << predicted_percent(r) << '\n';
    }
    return os.str();
  }
};

/// Counts judgments per dataset. Every dataset present in `items` gets a
/// column, even with no judgments.
inline PreferenceTable tabulate_preferences(const std::vector<JudgmentRecord>& judgments,
                                            const std::vector<TuringItem>& items) {
  PreferenceTable t;
  std::map<std::string, std::size_t> row_of;
  std::map<std::string, std::size_t> dataset_of_item;
  for (const auto& it : items) {
    auto [pos, inserted] = row_of.emplace(it.dataset, t.rows.size());
    if (inserted) t.rows.push_back({it.dataset, 0, 0});
    dataset_of_item[it.id] = pos->second;
  }
  for (const auto& j : judgments) {
    auto it = dataset_of_item.find(j.item);
    if (it == dataset_of_item.end()) throw UnknownItemError(j.item);
    auto& row = t.rows[it->second];
    (j.choice == Choice::actual ? row.actual : row.predicted) += 1;
  }
  return t;
}

/// Stable per-judge presentation order over item indices.
inline std::vector<std::size_t> judge_permutation(std::string_view judge, std::size_t item_count) {
  std::vector<std::size_t> order(item_count);
  for (std::size_t i = 0; i < item_count; ++i) order[i] = i;
  Rng rng(derive_seed(fnv1a(judge), 0x7E57));
  rng.shuffle(order);
  return order;
}

}  // namespace colorname
