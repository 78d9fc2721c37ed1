#include "colorname/analysis.hpp"

#include <gtest/gtest.h>

#include <set>
#include <sstream>

namespace colorname {
namespace {

Dataset names_only(std::initializer_list<const char*> names) {
  Dataset d;
  for (const char* n : names) d.items.push_back({n, {50, 0, 0}, Source::other});
  return d;
}

// Every name maps to the same color, given in Lab.
NameEncoderModel constant_model(const Dataset& d, ColorLab c) {
  auto m = NameEncoderModel::create({EncoderKind::lstm1, 3, 4}, build_vocab(d, 1), d, 7);
  m.params().value(m.params().find("head.w")).setZero();
  auto& b = m.params().value(m.params().find("head.b"));
  const auto u = lab_to_unit(c);
  for (int r = 0; r < 3; ++r) b(r, 0) = u[static_cast<std::size_t>(r)];
  return m;
}

TEST(Tokenize, SplitsOnNonLetters) {
  EXPECT_EQ(tokenize("Deep blue-sea, 42 don't!"),
            (std::vector<std::string>{"Deep", "blue", "sea", "don", "t"}));
}

TEST(Tokenize, KeepsUnicodeLettersAndCase) {
  EXPECT_EQ(tokenize("Café  CRÈME"), (std::vector<std::string>{"Café", "CRÈME"}));
}

TEST(Tokenize, InvalidBytesSeparate) {
  const std::string s = std::string("ab") + '\xff' + "cd" + '\xc3';
  EXPECT_EQ(tokenize(s), (std::vector<std::string>{"ab", "cd"}));
}

TEST(Tokenize, EmptyAndSeparatorOnly) {
  EXPECT_TRUE(tokenize("").empty());
  EXPECT_TRUE(tokenize(" 12 -- !").empty());
}

TEST(CharTrace, OneStepPerPrefix) {
  const Dataset d = names_only({"deep blue"});
  const auto m = constant_model(d, {30, 10, -40});
  const auto t = char_trace("deep", m);
  ASSERT_EQ(t.steps.size(), 5u);
  EXPECT_EQ(t.steps[0].prefix, "");
  EXPECT_EQ(t.steps[2].prefix, "de");
  EXPECT_EQ(t.steps[4].prefix, "deep");
  EXPECT_EQ(t.steps[4].length, 4u);
  EXPECT_EQ(t.steps.back().lab, m.predict("deep"));
}

TEST(CharTrace, MultibytePrefixesStayWhole) {
  const Dataset d = names_only({"é"});
  const auto m = constant_model(d, {50, 0, 0});
  const auto t = char_trace("éé", m);
  ASSERT_EQ(t.steps.size(), 3u);
  EXPECT_EQ(t.steps[1].prefix, "é");
}

TEST(Histogram, BinEdgesAndOverflow) {
  Histogram h;
  ASSERT_EQ(h.counts.size(), 52u);
  h.add(0.0);
  h.add(4.999);
  h.add(5.0);
  h.add(259.9);
  h.add(1000.0);
  EXPECT_EQ(h.counts[0], 2u);
  EXPECT_EQ(h.counts[1], 1u);
  EXPECT_EQ(h.counts[51], 2u);
  EXPECT_EQ(h.nonempty_bins(), 3u);
}

TEST(Colorfulness, ConstantModelGivesConstantDistance) {
  const Dataset d = names_only({"abc"});
  const ColorLab c{50, 20, 0};
  const auto m = constant_model(d, c);
  const auto r = colorfulness_distribution({"a", "bc", "cab"}, m);
  const double expected = lab_distance(m.predict("a"), gray_reference());
  ASSERT_EQ(r.distances.size(), 3u);
  EXPECT_NEAR(r.mean, expected, 1e-9);
  EXPECT_NEAR(r.median, expected, 1e-9);
  EXPECT_NEAR(r.stddev, 0.0, 1e-9);
  EXPECT_DOUBLE_EQ(r.min, r.max);
  EXPECT_EQ(r.histogram.counts[static_cast<std::size_t>(expected / 5.0)], 3u);
}

TEST(Colorfulness, SkipsUnscorableTokens) {
  const Dataset d = names_only({"abc"});
  const auto m = constant_model(d, {50, 0, 0});
  const auto r = colorfulness_distribution({"a", "xyz", "", std::string(300, 'a'), "ax"}, m);
  EXPECT_EQ(r.words, (std::vector<std::string>{"a", "ax"}));
  EXPECT_EQ(r.skipped, 3u);
}

TEST(Colorfulness, EmptyInputHasZeroStats) {
  const Dataset d = names_only({"abc"});
  const auto r = colorfulness_distribution({}, constant_model(d, {50, 0, 0}));
  EXPECT_TRUE(r.distances.empty());
  EXPECT_EQ(r.mean, 0.0);
}

TEST(Colorize, EveryTokenGetsAColor) {
  const Dataset d = names_only({"red"});
  const auto m = constant_model(d, rgb_to_lab({200, 30, 30}));
  const auto words = colorize_text("red, red wine!", m);
  ASSERT_EQ(words.size(), 3u);
  EXPECT_EQ(words[2].word, "wine");
  EXPECT_EQ(words[0].rgb, lab_to_rgb(m.predict("red")));
}

TEST(Percent, RoundsIndependentlyPerRow) {
  EXPECT_DOUBLE_EQ(rounded_percent(63, 111), 56.8);
  EXPECT_DOUBLE_EQ(rounded_percent(48, 111), 43.2);
  EXPECT_DOUBLE_EQ(rounded_percent(1, 16), 6.3);  // 6.25 rounds half up
  EXPECT_DOUBLE_EQ(rounded_percent(0, 5), 0.0);
  EXPECT_DOUBLE_EQ(rounded_percent(5, 5), 100.0);
  EXPECT_DOUBLE_EQ(rounded_percent(0, 0), 0.0);
}

std::vector<TuringItem> three_items() {
  return {{"test-001", "moss", {40, -10, 30}, {42, -12, 28}, "test", Side::left},
          {"test-002", "sky", {70, -5, -30}, {65, 0, -20}, "test", Side::right},
          {"paint-001", "mud", {30, 5, 20}, {35, 5, 15}, "paint", Side::left}};
}

TEST(Turing, ChoiceFollowsTheActualSide) {
  const auto items = three_items();
  EXPECT_EQ(items[0].choice_for(Side::left), Choice::actual);
  EXPECT_EQ(items[0].choice_for(Side::right), Choice::predicted);
  EXPECT_EQ(items[1].choice_for(Side::left), Choice::predicted);
  EXPECT_EQ(items[1].color_on(Side::right), items[1].actual);
}

TEST(Turing, TabulatesPerDatasetInItemOrder) {
  const auto items = three_items();
  std::vector<JudgmentRecord> js{{"test-001", "j1", Choice::predicted, Side::right, ""},
                                 {"test-002", "j1", Choice::actual, Side::right, ""},
                                 {"test-001", "j2", Choice::predicted, std::nullopt, ""}};
  const auto t = tabulate_preferences(js, items);
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[0].dataset, "test");
  EXPECT_EQ(t.rows[0].actual, 1u);
  EXPECT_EQ(t.rows[0].predicted, 2u);
  EXPECT_EQ(t.rows[1].dataset, "paint");
  EXPECT_EQ(t.rows[1].total(), 0u);
  EXPECT_DOUBLE_EQ(t.actual_percent(t.rows[0]), 33.3);
  EXPECT_DOUBLE_EQ(t.predicted_percent(t.rows[0]), 66.7);
}

TEST(Turing, UnknownItemIsAnError) {
  std::vector<JudgmentRecord> js{{"nope", "j1", Choice::actual, std::nullopt, ""}};
  EXPECT_THROW(tabulate_preferences(js, three_items()), UnknownItemError);
}

TEST(Turing, TableTextHasBothPreferenceRows) {
  const auto items = three_items();
  std::vector<JudgmentRecord> js;
  for (int i = 0; i < 63; ++i) js.push_back({"test-001", "j" + std::to_string(i), Choice::predicted, {}, ""});
  for (int i = 0; i < 48; ++i) js.push_back({"test-002", "k" + std::to_string(i), Choice::actual, {}, ""});
  const std::string text = tabulate_preferences(js, items).to_text();
  EXPECT_NE(text.find("Actual color"), std::string::npos);
  EXPECT_NE(text.find("43.2%"), std::string::npos);
  EXPECT_NE(text.find("Predicted color"), std::string::npos);
  EXPECT_NE(text.find("56.8%"), std::string::npos);
  EXPECT_LT(text.find("Actual color"), text.find("Predicted color"));
}

TEST(Turing, JsonLinesRoundTrip) {
  std::ostringstream items_out, log_out;
  for (const auto& it : three_items()) items_out << to_json(it).dump() << '\n';
  const JudgmentRecord r{"test-002", "judge ü", Choice::actual, Side::right, "2024-01-01T00:00:00.000Z"};
  log_out << to_json(r).dump() << "\n\n";
  std::istringstream items_in(items_out.str()), log_in(log_out.str());
  const auto items = read_turing_items(items_in);
  ASSERT_EQ(items.size(), 3u);
  EXPECT_EQ(items[1].id, "test-002");
  EXPECT_EQ(items[1].actual_side, Side::right);
  EXPECT_EQ(items[1].actual, three_items()[1].actual);
  const auto log = read_judgments(log_in);
  ASSERT_EQ(log.size(), 1u);
  EXPECT_EQ(log[0].judge, "judge ü");
  EXPECT_EQ(log[0].side, Side::right);
  EXPECT_EQ(log[0].timestamp, r.timestamp);
}

TEST(Turing, MalformedLogLineIsReported) {
  std::istringstream in("{\"item\":\"a\",\"judge\":\"b\",\"choice\":\"actual\"}\n{oops\n");
  try {
    read_judgments(in);
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("line 2"), std::string::npos);
  }
}

Dataset palette(std::size_t n) {
  Dataset d;
  for (std::size_t i = 0; i < n; ++i) {
    d.items.push_back({"c" + std::string(1, static_cast<char>('a' + i % 26)) + std::to_string(i),
                       rgb_to_lab({static_cast<std::uint8_t>(i * 7 % 256), 100, 50}), Source::other});
  }
  return d;
}

TEST(Turing, SamplingIsSeededAndWithoutReplacement) {
  const Dataset d = palette(60);
  const auto m = constant_model(d, {50, 0, 0});
  const auto a = sample_turing_items(d, m, 20, 42, "test");
  const auto b = sample_turing_items(d, m, 20, 42, "test");
  const auto c = sample_turing_items(d, m, 20, 43, "test");
  ASSERT_EQ(a.items.size(), 20u);
  std::set<std::string> names;
  for (std::size_t i = 0; i < a.items.size(); ++i) {
    EXPECT_EQ(a.items[i].name, b.items[i].name);
    EXPECT_EQ(a.items[i].actual_side, b.items[i].actual_side);
    names.insert(a.items[i].name);
  }
  EXPECT_EQ(names.size(), 20u);
  bool differs = false;
  for (std::size_t i = 0; i < 20; ++i) differs |= a.items[i].name != c.items[i].name;
  EXPECT_TRUE(differs);
  EXPECT_EQ(a.items[0].id, "test-001");
}

TEST(Turing, IdenticalSwatchesAreSkipped) {
  Dataset d = palette(5);
  const auto m = constant_model(d, {50, 0, 0});
  d.items.push_back({"gray", rgb_to_lab(lab_to_rgb(m.predict("gray"))), Source::other});
  const auto s = sample_turing_items(d, m, 5, 1, "test");
  EXPECT_EQ(s.resampled, 1u);
  for (const auto& it : s.items) EXPECT_NE(it.name, "gray");
  EXPECT_THROW(sample_turing_items(d, m, 6, 1, "test"), std::invalid_argument);
}

TEST(Turing, TooSmallDatasetThrows) {
  const Dataset d = palette(3);
  EXPECT_THROW(sample_turing_items(d, constant_model(d, {50, 0, 0}), 4, 1, "x"), std::invalid_argument);
}

TEST(Turing, JudgePermutationIsStable) {
  const auto a = judge_permutation("alice", 20);
  EXPECT_EQ(a, judge_permutation("alice", 20));
  EXPECT_NE(a, judge_permutation("bob", 20));
  std::vector<std::size_t> sorted = a;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < 20; ++i) EXPECT_EQ(sorted[i], i);
}

TEST(Turing, TimestampIsIsoUtc) {
  const auto t = std::chrono::system_clock::time_point(std::chrono::milliseconds(1700000000123));
  EXPECT_EQ(utc_timestamp(t), "2023-11-14T22:13:20.123Z");
}

}  // namespace
}  // namespace colorname
