#include "praise/scoring.hpp"

#include <cmath>
#include <string>
#include <vector>

#include "gtest/gtest.h"
#include "praise/errors.hpp"
#include "praise/rng.hpp"
#include "test_support.hpp"

namespace {

using praise::exact_match;
using praise::normalize;
using praise::token_f1;

struct HandCase {
  const char* pred;
  const char* gold;
  double em;
  double f1;
};

// Worked by hand from the normalization rules: lowercase, punctuation deleted
// without leaving a boundary, articles dropped, EM over token order, F1 over
// the token multiset.
const HandCase kHandCases[] = {
    {"Paris", "paris.", 1.0, 1.0},
    {"Paris", "London", 0.0, 0.0},
    {"the Paris", "Paris", 1.0, 1.0},
    {"the cat sat", "cat", 0.0, 2.0 / 3.0},
    {"", "cat", 0.0, 0.0},
    {"cat", "", 0.0, 0.0},
    {"", "", 1.0, 1.0},
    {"a cat", "an cat", 1.0, 1.0},
    {"cat cat", "cat", 0.0, 2.0 / 3.0},
    {"cat", "cat cat", 0.0, 2.0 / 3.0},
    {"cat dog", "dog cat", 0.0, 1.0},
    {"the quick brown fox", "quick fox", 0.0, 0.8},
    {"New York City", "new york", 0.0, 0.8},
    {"U.S.A.", "USA", 1.0, 1.0},
    {"don't", "dont", 1.0, 1.0},
    {"1,000", "1000", 1.0, 1.0},
    {"cat!!!", "cat", 1.0, 1.0},
    {"the the the", "x", 0.0, 0.0},
    {"cat dog bird", "dog", 0.0, 0.5},
    {"alpha beta", "beta gamma", 0.0, 0.5},
    {"a b c d", "c d a b", 0.0, 1.0},  // the article "a" drops from both sides
    {"apple apple banana", "apple banana banana", 0.0, 2.0 / 3.0},
    {"  spaced   out  ", "spaced out", 1.0, 1.0},
    {"Answer: Paris", "paris", 0.0, 2.0 / 3.0},
    {"42", "42.0", 0.0, 0.0},  // "42.0" normalizes to the single token "420"
};

TEST(Scoring, HandComputedTable) {
  for (const HandCase& c : kHandCases) {
    EXPECT_NEAR(exact_match(c.pred, c.gold), c.em, 1e-4)
        << "pred='" << c.pred << "' gold='" << c.gold << "'";
    EXPECT_NEAR(token_f1(c.pred, c.gold), c.f1, 1e-4)
        << "pred='" << c.pred << "' gold='" << c.gold << "'";
  }
}

TEST(Scoring, NormalizeRules) {
  EXPECT_EQ(normalize("The U.S.A., in 1999!").tokens,
            (std::vector<std::string>{"usa", "in", "1999"}));
  EXPECT_EQ(normalize("a an the").tokens, std::vector<std::string>{});
  EXPECT_EQ(normalize("than").tokens, std::vector<std::string>{"than"});
  EXPECT_EQ(normalize("tab\tand\nnewline").tokens,
            (std::vector<std::string>{"tab", "and", "newline"}));
  // Non-ASCII bytes are deleted like punctuation.
  EXPECT_EQ(normalize("caf\xc3\xa9").tokens, std::vector<std::string>{"caf"});
  EXPECT_EQ(normalize("").tokens, std::vector<std::string>{});
}

// Surface rewrites that normalization must erase: case, punctuation bytes,
// article words, whitespace runs.
std::string obfuscate(praise::Rng& rng, const std::vector<std::string>& tokens) {
  static const char* punct[] = {".", ",", "!", "'", ":", ";", "?"};
  static const char* articles[] = {"a", "an", "the"};
  std::string out;
  for (const std::string& tok : tokens) {
    if (rng.below_int(3) == 0) {
      out += articles[rng.below_int(3)];
      out += ' ';
    }
    std::string t = tok;
    for (char& ch : t) {
      if (ch >= 'a' && ch <= 'z' && rng.below_int(2) == 0) {
        ch = static_cast<char>(ch - 'a' + 'A');
      }
    }
    if (rng.below_int(3) == 0) {
      t.insert(static_cast<std::size_t>(rng.below_int(static_cast<int>(t.size()) + 1)),
               punct[rng.below_int(7)]);
    }
    out += t;
    out += rng.below_int(4) == 0 ? "  " : " ";
  }
  if (rng.below_int(3) == 0) out += punct[rng.below_int(7)];
  return out;
}

std::vector<std::string> random_answer_tokens(praise::Rng& rng) {
  static const char* pool[] = {"cat", "dog", "paris", "blue", "42", "kimo",
                               "x1",  "ra",  "zz",    "bird", "sun"};
  std::vector<std::string> out;
  const int n = 1 + rng.below_int(4);
  for (int i = 0; i < n; ++i) out.push_back(pool[rng.below_int(11)]);
  return out;
}

TEST(Scoring, NormalizationInvariantSurfacesScoreOne) {
  praise::Rng rng(808ull);
  for (int i = 0; i < 2000; ++i) {
    const auto tokens = random_answer_tokens(rng);
    const std::string va = obfuscate(rng, tokens);
    const std::string vb = obfuscate(rng, tokens);
    ASSERT_DOUBLE_EQ(exact_match(va, vb), 1.0) << "a='" << va << "' b='" << vb << "'";
    ASSERT_DOUBLE_EQ(token_f1(va, vb), 1.0) << "a='" << va << "' b='" << vb << "'";
  }
}

TEST(Scoring, ExactMatchImpliesPerfectF1AndNeverExceedsIt) {
  praise::Rng rng(515151ull);
  for (int i = 0; i < 10000; ++i) {
    const std::string pred =
        rng.below_int(10) == 0 ? "" : obfuscate(rng, random_answer_tokens(rng));
    const std::string gold =
        rng.below_int(10) == 0 ? "" : obfuscate(rng, random_answer_tokens(rng));
    const double em = exact_match(pred, gold);
    const double f1 = token_f1(pred, gold);
    ASSERT_TRUE(em == 0.0 || em == 1.0);
    ASSERT_GE(f1, 0.0);
    ASSERT_LE(f1, 1.0);
    ASSERT_LE(em, f1 + 1e-12) << "pred='" << pred << "' gold='" << gold << "'";
    if (em == 1.0) {
      ASSERT_DOUBLE_EQ(f1, 1.0) << "pred='" << pred << "' gold='" << gold << "'";
    }
  }
}

TEST(Scoring, SymmetryOfF1) {
  praise::Rng rng(2222ull);
  for (int i = 0; i < 2000; ++i) {
    const std::string x = obfuscate(rng, random_answer_tokens(rng));
    const std::string y = obfuscate(rng, random_answer_tokens(rng));
    ASSERT_DOUBLE_EQ(token_f1(x, y), token_f1(y, x));
  }
}

TEST(Scoring, MetricNamesRoundTrip) {
  using praise::metric_from_name;
  using praise::metric_name;
  using praise::ScoreMetric;
  EXPECT_EQ(metric_from_name("em"), ScoreMetric::ExactMatch);
  EXPECT_EQ(metric_from_name("f1"), ScoreMetric::TokenF1);
  EXPECT_EQ(metric_name(ScoreMetric::ExactMatch), "em");
  EXPECT_EQ(metric_name(ScoreMetric::TokenF1), "f1");
  EXPECT_THROW(metric_from_name("bleu"), praise::ValidationError);
  EXPECT_DOUBLE_EQ(praise::score_answer("cat hat", "cat", ScoreMetric::ExactMatch), 0.0);
  EXPECT_NEAR(praise::score_answer("cat hat", "cat", ScoreMetric::TokenF1), 2.0 / 3.0,
              1e-12);
}

}  // namespace
