#pragma once

// Dataset ingestion, splitting, held-out overlap filtering and the character
// vocabulary.
//
// Input files are UTF-8 CSV with a `name,hex` header. Names may contain
// commas when quoted ("..."), with "" as an escaped quote.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <vector>

#include "colorname/colorspace.hpp"
#include "colorname/random.hpp"
#include "colorname/utf8.hpp"

namespace colorname {

inline constexpr std::size_t kMaxNameLength = 256;

enum class Source { train_pool, ggplot2, paint, other };

inline std::string_view to_string(Source s) {
  switch (s) {
    case Source::train_pool: return "train-pool";
    case Source::ggplot2: return "ggplot2";
    case Source::paint: return "paint";
    case Source::other: return "other";
  }
  return "other";
}

inline Source parse_source(std::string_view s) {
  if (s == "train-pool") return Source::train_pool;
  if (s == "ggplot2") return Source::ggplot2;
  if (s == "paint") return Source::paint;
  if (s == "other") return Source::other;
  throw std::invalid_argument("unknown source '" + std::string(s) +
                              "' (expected train-pool, ggplot2, paint, other)");
}

struct NamedColor {
  std::string name;
  ColorLab color;
  Source source = Source::other;

  friend bool operator==(const NamedColor&, const NamedColor&) = default;
};

struct Dataset {
  std::vector<NamedColor> items;
  std::string split;

  std::size_t size() const { return items.size(); }
  bool empty() const { return items.empty(); }
};

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// True when the name is acceptable as a training name: valid UTF-8,
/// not blank, at most kMaxNameLength scalar values.
inline bool is_valid_name(std::string_view name) {
  if (name.empty()) return false;
  std::u32string chars;
  try {
    chars = utf8::decode(name);
  } catch (const std::invalid_argument&) {
    return false;
  }
  if (chars.size() > kMaxNameLength) return false;
  return std::any_of(chars.begin(), chars.end(), [](char32_t c) {
    return !(c == U' ' || c == U'\t' || c == U'\r' || c == U'\n' || c == 0xA0 || c == 0x3000);
  });
}

namespace detail {

/// Splits one CSV record into fields. Returns nullopt on unbalanced quotes.
inline std::optional<std::vector<std::string>> split_csv_line(std::string_view line) {
  std::vector<std::string> fields(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"') {
        if (i + 1 < line.size() && line[i + 1] == '"') {
          fields.back() += '"';
          ++i;
        } else {
          quoted = false;
        }
      } else {
        fields.back() += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      fields.emplace_back();
    } else {
      fields.back() += c;
    }
  }
  if (quoted) return std::nullopt;
  return fields;
}

inline std::string quote_csv(std::string_view field) {
  if (field.find_first_of(",\"\n\r") == std::string_view::npos) return std::string(field);
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

inline std::string trim_ascii(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace detail

/// Parses one `name,hex` record; nullopt when malformed.
inline std::optional<NamedColor> parse_record(std::string_view line, Source source) {
  if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
  auto fields = detail::split_csv_line(line);
  if (!fields || fields->size() != 2) return std::nullopt;
  const std::string& name = (*fields)[0];
  if (!is_valid_name(name)) return std::nullopt;
  try {
    return NamedColor{name, rgb_to_lab(parse_hex(detail::trim_ascii((*fields)[1]))), source};
  } catch (const std::invalid_argument&) {
    return std::nullopt;
  }
}

struct LoadReport {
  std::size_t records = 0;  // data lines seen, header and blank lines excluded
  std::size_t loaded = 0;
  std::size_t malformed = 0;
  std::vector<std::string> examples;  // "line N: <text>" for the first few

  std::string summary() const {
    std::ostringstream os;
    os << loaded << " loaded, " << malformed << " malformed of " << records << " records";
    for (const auto& e : examples) os << "\n  " << e;
    return os.str();
  }
};

/// Fraction of malformed lines above which loading aborts.
inline constexpr double kMaxMalformedFraction = 0.01;
inline constexpr std::uint64_t kDefaultMinCount = 20;

inline Dataset read_pairs(std::istream& in, Source source, LoadReport* report = nullptr) {
  LoadReport local;
  LoadReport& rep = report ? *report : local;
  rep = {};
  Dataset ds;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line_no == 1 && line.rfind("\xEF\xBB\xBF", 0) == 0) line.erase(0, 3);
    if (detail::trim_ascii(line).empty()) continue;
    if (line_no == 1) {
      std::string head = detail::trim_ascii(line);
      std::transform(head.begin(), head.end(), head.begin(),
                     [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
      if (head == "name,hex") continue;
    }
    ++rep.records;
    if (auto rec = parse_record(line, source)) {
      ds.items.push_back(std::move(*rec));
      ++rep.loaded;
    } else {
      ++rep.malformed;
      if (rep.examples.size() < 10) {
        rep.examples.push_back("line " + std::to_string(line_no) + ": " + line);
      }
    }
  }
  if (rep.records > 0 &&
      static_cast<double>(rep.malformed) > kMaxMalformedFraction * static_cast<double>(rep.records)) {
    throw DataError("too many malformed records: " + rep.summary());
  }
  return ds;
}

inline Dataset load_pairs(const std::string& path, Source source, LoadReport* report = nullptr) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  Dataset ds = read_pairs(in, source, report);
  ds.split = path;
  return ds;
}

inline void write_pairs(std::ostream& out, const Dataset& d) {
  out << "name,hex\n";
  for (const auto& item : d.items) {
    out << detail::quote_csv(item.name) << ',' << to_hex(lab_to_rgb(item.color)) << '\n';
  }
}

inline void save_pairs(const std::string& path, const Dataset& d) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  write_pairs(out, d);
}

struct DatasetSplit {
  Dataset train;
  Dataset dev;
  Dataset test;
};

/// Part sizes by the largest-remainder rule, so each differs from its exact
/// share by less than one item.
inline std::array<std::size_t, 3> split_sizes(std::size_t n, const std::array<double, 3>& fractions) {
  double total = 0.0;
  for (double f : fractions) {
    if (!(f >= 0.0) || !std::isfinite(f)) throw std::invalid_argument("split fractions must be non-negative");
    total += f;
  }
  if (std::abs(total - 1.0) > 1e-9) throw std::invalid_argument("split fractions must sum to 1");
  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (int i = 0; i < 3; ++i) {
    const double exact = fractions[i] * static_cast<double>(n);
    sizes[i] = static_cast<std::size_t>(std::floor(exact));
    remainder[i] = exact - std::floor(exact);
    assigned += sizes[i];
  }
  while (assigned < n) {
    int best = 0;
    for (int i = 1; i < 3; ++i) {
      if (remainder[i] > remainder[best]) best = i;
    }
    ++sizes[best];
    remainder[best] = -1.0;
    ++assigned;
  }
  return sizes;
}

/// Seeded shuffle, then contiguous partition into train/dev/test.
inline DatasetSplit split_dataset(const Dataset& d, const std::array<double, 3>& fractions,
                                  std::uint64_t seed) {
  if (d.empty()) throw std::invalid_argument("cannot split an empty dataset");
  const auto sizes = split_sizes(d.size(), fractions);
  std::vector<std::size_t> order(d.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(derive_seed(seed, 0x5D117));
  rng.shuffle(order);

  DatasetSplit out;
  out.train.split = "train";
  out.dev.split = "dev";
  out.test.split = "test";
  Dataset* parts[3] = {&out.train, &out.dev, &out.test};
  std::size_t pos = 0;
  for (int p = 0; p < 3; ++p) {
    parts[p]->items.reserve(sizes[p]);
    for (std::size_t k = 0; k < sizes[p]; ++k) parts[p]->items.push_back(d.items[order[pos++]]);
  }
  return out;
}

/// Keeps held-out items whose exact name never occurs in `train`.
inline Dataset filter_overlap(const Dataset& held, const Dataset& train) {
  std::unordered_set<std::string> seen;
  seen.reserve(train.size());
  for (const auto& item : train.items) seen.insert(item.name);
  Dataset out;
  out.split = held.split;
  for (const auto& item : held.items) {
    if (!seen.contains(item.name)) out.items.push_back(item);
  }
  return out;
}

/// Character vocabulary. Regular symbols occupy indices [0, n) in codepoint
/// order; UNK, BOS and EOS follow at n, n+1, n+2.
class CharVocab {
 public:
  CharVocab() : CharVocab(std::vector<std::pair<char32_t, std::uint64_t>>{}) {}

  explicit CharVocab(std::vector<std::pair<char32_t, std::uint64_t>> symbols,
                     std::array<std::uint64_t, 3> special_counts = {0, 0, 0})
      : symbols_(std::move(symbols)), special_counts_(special_counts) {
    std::sort(symbols_.begin(), symbols_.end());
    for (std::size_t i = 0; i < symbols_.size(); ++i) {
      if (i > 0 && symbols_[i].first == symbols_[i - 1].first) {
        throw std::invalid_argument("duplicate symbol in vocabulary");
      }
      index_.emplace(symbols_[i].first, static_cast<int>(i));
    }
  }

  int size() const { return static_cast<int>(symbols_.size()) + 3; }
  int symbol_count() const { return static_cast<int>(symbols_.size()); }
  int unk() const { return symbol_count(); }
  int bos() const { return symbol_count() + 1; }
  int eos() const { return symbol_count() + 2; }
  bool is_special(int index) const { return index >= symbol_count(); }

  int index_of(char32_t c) const {
    auto it = index_.find(c);
    return it == index_.end() ? unk() : it->second;
  }

  char32_t symbol(int index) const {
    if (index < 0 || index >= symbol_count()) throw std::out_of_range("not a regular vocabulary symbol");
    return symbols_[static_cast<std::size_t>(index)].first;
  }

  std::uint64_t count(int index) const {
    if (index < 0 || index >= size()) throw std::out_of_range("vocabulary index out of range");
    if (index < symbol_count()) return symbols_[static_cast<std::size_t>(index)].second;
    return special_counts_[static_cast<std::size_t>(index - symbol_count())];
  }

  /// Plain-text form: a version line, a size line, then
  /// `index<TAB>token<TAB>count` where token is U+XXXX or <UNK>/<BOS>/<EOS>.
  std::string serialize() const {
    std::ostringstream os;
    os << "charvocab v1\nsize " << size() << '\n';
    char buf[16];
    for (int i = 0; i < size(); ++i) {
      os << i << '\t';
      if (i < symbol_count()) {
        std::snprintf(buf, sizeof buf, "U+%04X", static_cast<unsigned>(symbol(i)));
        os << buf;
      } else {
        static constexpr const char* kNames[] = {"<UNK>", "<BOS>", "<EOS>"};
        os << kNames[i - symbol_count()];
      }
      os << '\t' << count(i) << '\n';
    }
    return os.str();
  }

  static CharVocab parse(std::string_view text) {
    std::istringstream in{std::string(text)};
    std::string line;
    if (!std::getline(in, line) || line != "charvocab v1") throw DataError("not a charvocab v1 file");
    int n = 0;
    if (!std::getline(in, line) || std::sscanf(line.c_str(), "size %d", &n) != 1 || n < 3) {
      throw DataError("bad vocabulary size line");
    }
    std::vector<std::pair<char32_t, std::uint64_t>> symbols;
    std::array<std::uint64_t, 3> specials{};
    for (int i = 0; i < n; ++i) {
      if (!std::getline(in, line)) throw DataError("truncated vocabulary");
      std::istringstream row(line);
      int index = -1;
      std::string token;
      std::uint64_t cnt = 0;
      if (!(row >> index >> token >> cnt) || index != i) throw DataError("bad vocabulary row: " + line);
      if (i < n - 3) {
        unsigned cp = 0;
        if (std::sscanf(token.c_str(), "U+%X", &cp) != 1) throw DataError("bad vocabulary token: " + token);
        symbols.emplace_back(static_cast<char32_t>(cp), cnt);
      } else {
        static constexpr const char* kNames[] = {"<UNK>", "<BOS>", "<EOS>"};
        if (token != kNames[i - (n - 3)]) throw DataError("bad special token: " + token);
        specials[static_cast<std::size_t>(i - (n - 3))] = cnt;
      }
    }
    CharVocab v(std::move(symbols), specials);
    if (v.serialize() != text) throw DataError("vocabulary is not in canonical form");
    return v;
  }

  std::uint64_t hash() const { return fnv1a(serialize()); }

  void save(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write " + path);
    out << serialize();
  }

  static CharVocab load(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot read " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse(ss.str());
  }

  friend bool operator==(const CharVocab& x, const CharVocab& y) {
    return x.symbols_ == y.symbols_ && x.special_counts_ == y.special_counts_;
  }

 private:
  std::vector<std::pair<char32_t, std::uint64_t>> symbols_;
  std::array<std::uint64_t, 3> special_counts_;
  std::map<char32_t, int> index_;
};

/// Characters seen at least `min_count` times get their own index; rarer
/// characters are folded into UNK.
inline CharVocab build_vocab(const Dataset& d, std::uint64_t min_count = kDefaultMinCount) {
  if (d.empty()) throw std::invalid_argument("cannot build a vocabulary from an empty dataset");
  std::map<char32_t, std::uint64_t> counts;
  for (const auto& item : d.items) {
    for (char32_t c : utf8::decode(item.name)) ++counts[c];
  }
  std::vector<std::pair<char32_t, std::uint64_t>> kept;
  std::uint64_t unk = 0;
  for (const auto& [c, n] : counts) {
    if (n >= min_count) {
      kept.emplace_back(c, n);
    } else {
      unk += n;
    }
  }
  const std::uint64_t names = d.size();
  return CharVocab(std::move(kept), {unk, names, names});
}

/// [BOS, c1, ..., cn, EOS].
inline std::vector<int> encode_name(std::string_view name, const CharVocab& v) {
  if (name.empty()) throw std::invalid_argument("cannot encode an empty name");
  const std::u32string chars = utf8::decode(name);
  std::vector<int> out;
  out.reserve(chars.size() + 2);
  out.push_back(v.bos());
  for (char32_t c : chars) out.push_back(v.index_of(c));
  out.push_back(v.eos());
  return out;
}

/// Inverse of encode_name; BOS/EOS are dropped and UNK becomes U+FFFD.
inline std::string decode_name(const std::vector<int>& indices, const CharVocab& v) {
  std::string out;
  for (int i : indices) {
    if (i == v.bos() || i == v.eos()) continue;
    utf8::append(out, i == v.unk() ? char32_t{0xFFFD} : v.symbol(i));
  }
  return out;
}

}  // namespace colorname
