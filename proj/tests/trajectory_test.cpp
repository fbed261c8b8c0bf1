#include "praise/trajectory.hpp"

#include <string>
#include <vector>

#include "gtest/gtest.h"
#include "json.hpp"
#include "praise/errors.hpp"
#include "praise/rng.hpp"
#include "test_support.hpp"

namespace {

using praise::parse_trajectory;
using praise::Segment;
using praise::SegmentKind;
using praise::serialize;
using praise::Trajectory;

Trajectory minimal() {
  Trajectory t;
  t.query = "who";
  t.segments.emplace_back(SegmentKind::Think, "plan");
  t.segments.emplace_back(SegmentKind::Answer, "paris");
  return t;
}

TEST(TrajectoryParse, RoundTripIsByteExact) {
  praise::Rng rng(20260819ull);
  for (int i = 0; i < 1000; ++i) {
    const Trajectory traj = test_support::random_trajectory(rng);
    const std::string tagged = serialize(traj);
    const Trajectory back = parse_trajectory(tagged, traj.query);
    ASSERT_EQ(serialize(back), tagged) << "i=" << i;
    ASSERT_EQ(back.query, traj.query);
    ASSERT_EQ(back.leading_gap, traj.leading_gap);
    ASSERT_EQ(back.segments.size(), traj.segments.size()) << "i=" << i;
    for (std::size_t k = 0; k < traj.segments.size(); ++k) {
      ASSERT_EQ(back.segments[k].kind, traj.segments[k].kind);
      ASSERT_EQ(back.segments[k].origin, traj.segments[k].origin);
      ASSERT_EQ(back.segments[k].text, traj.segments[k].text);
      ASSERT_EQ(back.segments[k].trailing_gap, traj.segments[k].trailing_gap);
    }
  }
}

TEST(TrajectoryParse, StrayAngleBracketIsContent) {
  const Trajectory t =
      parse_trajectory("<think>a < b <notatag> c</think><answer>y</answer>", "q");
  ASSERT_EQ(t.segments.size(), 2u);
  EXPECT_EQ(t.segments[0].text, "a < b <notatag> c");
}

TEST(TrajectoryParse, GapsSurviveExactly) {
  const std::string tagged = "\t <think>a</think>\n\n<answer>y</answer>  ";
  const Trajectory t = parse_trajectory(tagged, "q");
  EXPECT_EQ(t.leading_gap, "\t ");
  EXPECT_EQ(t.segments[0].trailing_gap, "\n\n");
  EXPECT_EQ(t.segments[1].trailing_gap, "  ");
  EXPECT_EQ(serialize(t), tagged);
}

// One fixed example per mutation class, so the class -> error mapping is
// visible in full without running the generator.
TEST(TrajectoryParse, DocumentedErrorExamples) {
  using praise::GrammarViolationError;
  using praise::MalformedTagError;
  using praise::MissingAnswerError;
  EXPECT_THROW(parse_trajectory("<thonk>plan</think><answer>y</answer>", "q"),
               MalformedTagError);
  EXPECT_THROW(parse_trajectory("<think>plan<answer>y</answer>", "q"),
               MalformedTagError);
  EXPECT_THROW(parse_trajectory("<think>plan</search><answer>y</answer>", "q"),
               MalformedTagError);
  EXPECT_THROW(parse_trajectory("<think>plan</think>junk<answer>y</answer>", "q"),
               MalformedTagError);
  EXPECT_THROW(parse_trajectory("</think><think>plan</think><answer>y</answer>", "q"),
               MalformedTagError);
  EXPECT_THROW(parse_trajectory("<think>plan</think>", "q"), MissingAnswerError);
  EXPECT_THROW(parse_trajectory(
                   "<search>q</search><result>r</result><think>t</think>"
                   "<answer>y</answer>",
                   "q"),
               GrammarViolationError);
  EXPECT_THROW(parse_trajectory("<think> </think><answer>y</answer>", "q"),
               GrammarViolationError);
  EXPECT_THROW(parse_trajectory(
                   "<think>a</think><search>b</search><result>c</result>"
                   "<result>c</result><think>d</think><answer>y</answer>",
                   "q"),
               GrammarViolationError);
  EXPECT_THROW(
      parse_trajectory("<think>a</think><answer>y</answer><think>z</think>", "q"),
      GrammarViolationError);
}

TEST(TrajectoryParse, RandomMutantsRaiseDocumentedErrors) {
  praise::Rng rng(7151ull);
  for (int rep = 0; rep < 20; ++rep) {
    for (int k = 0; k < test_support::kMutationKindCount; ++k) {
      const auto kind = static_cast<test_support::MutationKind>(k);
      const std::string mutant = test_support::make_mutant(rng, kind);
      ASSERT_TRUE(test_support::mutant_raises_documented_error(mutant, kind))
          << "rep=" << rep << " kind=" << test_support::mutation_name(kind)
          << "\nmutant: " << mutant;
    }
  }
}

TEST(TrajectoryPrefixes, OracleAgainstSegmentLayout) {
  praise::Rng rng(99ull);
  for (int i = 0; i < 200; ++i) {
    const Trajectory traj = test_support::random_trajectory(rng);
    const auto prefixes = praise::extract_prefixes(traj);
    const int turns = traj.turns();
    ASSERT_EQ(static_cast<int>(prefixes.size()), turns + 1);
    EXPECT_TRUE(prefixes[0].triples.empty());
    for (int t = 0; t <= turns; ++t) {
      ASSERT_EQ(prefixes[static_cast<std::size_t>(t)].query, traj.query);
      ASSERT_EQ(prefixes[static_cast<std::size_t>(t)].turns_included(), t);
      for (int j = 0; j < t; ++j) {
        const auto& triple = prefixes[static_cast<std::size_t>(t)].triples[static_cast<std::size_t>(j)];
        const std::size_t base = static_cast<std::size_t>(3 * j);
        EXPECT_EQ(triple.think, traj.segments[base].text);
        EXPECT_EQ(triple.search, traj.segments[base + 1].text);
        EXPECT_EQ(triple.result, traj.segments[base + 2].text);
      }
    }
  }
}

Trajectory two_turn_fixture(const std::string& result_text) {
  Trajectory t;
  t.query = "q";
  t.segments.emplace_back(SegmentKind::Think, "a b c");
  t.segments.emplace_back(SegmentKind::Search, "d e");
  t.segments.emplace_back(SegmentKind::Result, result_text);
  t.segments.emplace_back(SegmentKind::Think, "f g h");
  t.segments.emplace_back(SegmentKind::Search, "i j");
  t.segments.emplace_back(SegmentKind::Result, result_text);
  t.segments.emplace_back(SegmentKind::Think, "k l m");
  t.segments.emplace_back(SegmentKind::Answer, "n o");
  return t;
}

TEST(TrajectoryMarkers, HandComputedPositions) {
  // Policy stream: think(3) search(2) think(3) search(2) think(3) answer(2).
  const auto m = praise::segment_markers(two_turn_fixture("r1 r2 r3 r4"));
  ASSERT_EQ(m.search_ends.size(), 2u);
  EXPECT_EQ(m.search_ends[0], 4);
  EXPECT_EQ(m.search_ends[1], 9);
  EXPECT_EQ(m.answer_end, 14);
  EXPECT_EQ(m.stream_length, 15);
}

TEST(TrajectoryMarkers, ResultTokensNeverShiftMarkers) {
  const auto short_r = praise::segment_markers(two_turn_fixture("r"));
  const auto long_r =
      praise::segment_markers(two_turn_fixture("r r r r r r r r r"));
  EXPECT_EQ(short_r.search_ends, long_r.search_ends);
  EXPECT_EQ(short_r.answer_end, long_r.answer_end);
  EXPECT_EQ(short_r.stream_length, long_r.stream_length);
}

TEST(TrajectoryMarkers, RandomShapeInvariants) {
  praise::Rng rng(3511ull);
  for (int i = 0; i < 200; ++i) {
    const Trajectory traj = test_support::random_trajectory(rng);
    const auto m = praise::segment_markers(traj);
    ASSERT_EQ(static_cast<int>(m.search_ends.size()), traj.turns());
    int prev = -1;
    for (const int pos : m.search_ends) {
      ASSERT_GT(pos, prev);
      prev = pos;
    }
    ASSERT_EQ(m.answer_end, m.stream_length - 1);
    int policy_tokens = 0;
    for (const Segment& s : traj.segments) {
      if (s.origin == praise::Origin::Policy) {
        policy_tokens += static_cast<int>(praise::split_text(s.text).size());
      }
    }
    ASSERT_EQ(m.stream_length, policy_tokens);
  }
}

TEST(TrajectoryAccessors, AnswerAndTurns) {
  const Trajectory t = two_turn_fixture("r");
  EXPECT_EQ(t.turns(), 2);
  EXPECT_EQ(t.answer_segment().text, "n o");
  Trajectory m = minimal();
  m.segments.back().text = "paris done";
  EXPECT_EQ(m.final_answer(), "paris");
  m.segments.pop_back();
  EXPECT_THROW(m.answer_segment(), praise::MissingAnswerError);
}

TEST(TrajectoryRecordJson, RoundTripPreservesFields) {
  praise::Rng rng(424242ull);
  for (int i = 0; i < 200; ++i) {
    praise::TrajectoryRecord rec;
    rec.trajectory = test_support::random_trajectory(rng);
    rec.gold_answer = test_support::random_words(rng, 1, 3);
    if (rng.below_int(2) == 0) {
      std::vector<std::string> pa;
      for (int t = 0; t <= rec.trajectory.turns(); ++t) {
        pa.push_back(test_support::random_words(rng, 1, 2));
      }
      rec.prefix_answers = pa;
    }
    const nlohmann::json j = praise::record_to_json(rec);
    const praise::TrajectoryRecord back = praise::record_from_json(j);
    ASSERT_EQ(back.trajectory.query, rec.trajectory.query);
    ASSERT_EQ(back.gold_answer, rec.gold_answer);
    ASSERT_EQ(back.prefix_answers, rec.prefix_answers);
    ASSERT_EQ(back.trajectory.segments.size(), rec.trajectory.segments.size());
    for (std::size_t k = 0; k < rec.trajectory.segments.size(); ++k) {
      ASSERT_EQ(back.trajectory.segments[k].kind, rec.trajectory.segments[k].kind);
      ASSERT_EQ(back.trajectory.segments[k].origin, rec.trajectory.segments[k].origin);
      ASSERT_EQ(back.trajectory.segments[k].text, rec.trajectory.segments[k].text);
    }
  }
}

TEST(TrajectoryRecordJson, RejectsBadShapes) {
  praise::TrajectoryRecord rec;
  rec.trajectory = minimal();
  rec.gold_answer = "paris";
  nlohmann::json good = praise::record_to_json(rec);

  nlohmann::json extra = good;
  extra["extra"] = 1;
  EXPECT_THROW(praise::record_from_json(extra), praise::ValidationError);

  nlohmann::json no_query = good;
  no_query.erase("query");
  EXPECT_THROW(praise::record_from_json(no_query), praise::ValidationError);

  nlohmann::json bad_gold = good;
  bad_gold["gold_answer"] = 5;
  EXPECT_THROW(praise::record_from_json(bad_gold), praise::ValidationError);

  nlohmann::json bad_segs = good;
  bad_segs["segments"] = "nope";
  EXPECT_THROW(praise::record_from_json(bad_segs), praise::ValidationError);

  nlohmann::json bad_origin = good;
  bad_origin["segments"][0]["origin"] = "martian";
  EXPECT_THROW(praise::record_from_json(bad_origin), praise::ValidationError);

  nlohmann::json bad_kind = good;
  bad_kind["segments"][0]["kind"] = "ponder";
  EXPECT_THROW(praise::record_from_json(bad_kind), praise::ValidationError);

  nlohmann::json bad_pa = good;
  bad_pa["prefix_answers"] = {1, 2};
  EXPECT_THROW(praise::record_from_json(bad_pa), praise::ValidationError);

  // Origin strings are honored, then checked against the segment kind.
  nlohmann::json wrong_origin = good;
  wrong_origin["segments"][0]["origin"] = "environment";
  EXPECT_THROW(praise::record_from_json(wrong_origin), praise::GrammarViolationError);

  // The grammar is enforced on deserialization too.
  nlohmann::json no_answer = good;
  no_answer["segments"].erase(1);
  EXPECT_THROW(praise::record_from_json(no_answer), praise::MissingAnswerError);

  EXPECT_NO_THROW(praise::record_from_json(good));
}

}  // namespace
