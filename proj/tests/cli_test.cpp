// Drives the installed binary as a subprocess: exit codes, artifact layout,
// determinism, and the no-partial-output guarantees around exit code 2.

#include <sys/wait.h>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "gtest/gtest.h"
#include "json.hpp"
#include "praise/praise.hpp"

#ifndef PRAISE_CLI_PATH
#error "PRAISE_CLI_PATH must point at the praise binary"
#endif

namespace {

namespace fs = std::filesystem;

struct RunResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    static std::atomic<int> counter{0};
    dir_ = fs::temp_directory_path() /
           ("praise_cli_" + std::to_string(::getpid()) + "_" +
            std::to_string(counter.fetch_add(1)));
    fs::create_directories(dir_);
  }
  void TearDown() override {
    std::error_code ec;
    fs::remove_all(dir_, ec);
  }

  fs::path path(const std::string& name) const { return dir_ / name; }

  // env_prefix like "PRAISE_SEED=7 " rides on the shell invocation.
  RunResult run(const std::string& args, const std::string& env_prefix = "") const {
    const fs::path out = dir_ / "stdout.txt";
    const fs::path err = dir_ / "stderr.txt";
    const std::string cmd = env_prefix + "\"" PRAISE_CLI_PATH "\" " + args + " > \"" +
                            out.string() + "\" 2> \"" + err.string() + "\"";
    const int raw = std::system(cmd.c_str());
    RunResult r;
    r.exit_code = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.out = slurp(out);
    r.err = slurp(err);
    return r;
  }

  fs::path dir_;
};

TEST_F(CliTest, HelpListsEverySubcommand) {
  const RunResult r = run("--help");
  EXPECT_EQ(r.exit_code, 0);
  for (const char* name :
       {"train", "make-world", "score-trajectories", "eval", "gradcheck"}) {
    EXPECT_NE(r.out.find(name), std::string::npos) << name;
  }
}

TEST_F(CliTest, SubcommandHelpListsFlags) {
  const RunResult train = run("train --help");
  EXPECT_EQ(train.exit_code, 0);
  for (const char* flag : {"--config", "--set", "--seed", "--output-dir"}) {
    EXPECT_NE(train.out.find(flag), std::string::npos) << flag;
  }
  const RunResult eval = run("eval --help");
  EXPECT_EQ(eval.exit_code, 0);
  for (const char* flag : {"--checkpoint", "--world", "--tasks", "--hops", "--seed",
                           "--max-turns", "--think-budget", "--search-budget",
                           "--answer-budget", "--top-k", "--disable-retrieval",
                           "--dump-trajectories"}) {
    EXPECT_NE(eval.out.find(flag), std::string::npos) << flag;
  }
  EXPECT_EQ(eval.out.find("--temperature"), std::string::npos);
  const RunResult score = run("score-trajectories --help");
  EXPECT_EQ(score.exit_code, 0);
  for (const char* flag : {"--in", "--out", "--alpha", "--metric", "--gold-field",
                           "--checkpoint", "--world", "--answer-budget",
                           "--temperature", "--seed"}) {
    EXPECT_NE(score.out.find(flag), std::string::npos) << flag;
  }
}

TEST_F(CliTest, UsageErrorsExitOne) {
  EXPECT_EQ(run("").exit_code, 1);
  EXPECT_EQ(run("frobnicate").exit_code, 1);
  EXPECT_EQ(run("train --bogus-flag 3").exit_code, 1);
  EXPECT_EQ(run("make-world").exit_code, 1);  // --out is required
}

TEST_F(CliTest, MakeWorldIsDeterministic) {
  const std::string a = path("a.tsv").string();
  const std::string b = path("b.tsv").string();
  const std::string c = path("c.tsv").string();
  const std::string base = "make-world --seed 7 --entities 12 --relations 3 --facts 40";
  EXPECT_EQ(run(base + " --out \"" + a + "\"").exit_code, 0);
  EXPECT_EQ(run(base + " --out \"" + b + "\"").exit_code, 0);
  EXPECT_EQ(run("make-world --seed 8 --entities 12 --relations 3 --facts 40 --out \"" +
                c + "\"").exit_code, 0);
  const std::string text_a = slurp(path("a.tsv"));
  EXPECT_EQ(text_a, slurp(path("b.tsv")));
  EXPECT_NE(text_a, slurp(path("c.tsv")));
  EXPECT_EQ(text_a.rfind("praise-world v1", 0), 0u);
  // Infeasible counts are a validation failure, and the file must not appear.
  const RunResult bad =
      run("make-world --entities 2 --relations 1 --facts 100 --out \"" +
          path("d.tsv").string() + "\"");
  EXPECT_EQ(bad.exit_code, 2);
  EXPECT_FALSE(fs::exists(path("d.tsv")));
}

std::string tiny_train_sets() {
  return " --set world_entities=12 --set world_relations=3 --set world_facts=40"
         " --set train_tasks=8 --set eval_tasks=4 --set train_batches=2"
         " --set warmup_steps=2 --set batch_size=4 --set ppo_epochs=1"
         " --set minibatch_entries=16 --set embed_dim=4 --set context_window=16"
         " --set hidden_dims=16 --set max_turns=2 --set think_budget=2"
         " --set search_budget=8 --set answer_budget=4";
}

TEST_F(CliTest, TrainValidationFailuresLeaveNoOutputDir) {
  const std::string out = path("run").string();
  const RunResult no_dir = run("train" + tiny_train_sets());
  EXPECT_EQ(no_dir.exit_code, 2);
  EXPECT_NE(no_dir.err.find("output_dir"), std::string::npos);

  const RunResult bad_alpha =
      run("train --output-dir \"" + out + "\"" + tiny_train_sets() + " --set alpha=-1");
  EXPECT_EQ(bad_alpha.exit_code, 2);
  EXPECT_FALSE(fs::exists(path("run")));

  const RunResult bad_key =
      run("train --output-dir \"" + out + "\"" + tiny_train_sets() + " --set alpa=0.5");
  EXPECT_EQ(bad_key.exit_code, 2);
  EXPECT_NE(bad_key.err.find("alpa"), std::string::npos);
  EXPECT_FALSE(fs::exists(path("run")));
}

TEST_F(CliTest, TrainWritesArtifactsAndRerunsByteIdentically) {
  const std::string cmd_tail = tiny_train_sets() + " --set checkpoint_every=1";
  const RunResult first =
      run("train --output-dir \"" + path("run1").string() + "\"" + cmd_tail);
  ASSERT_EQ(first.exit_code, 0) << first.err;
  EXPECT_NE(first.out.find("optimizer_steps="), std::string::npos);
  EXPECT_NE(first.out.find("final_eval em="), std::string::npos);
  for (const char* name : {"config.txt", "world.tsv", "metrics.csv",
                           "checkpoint_0001.txt", "checkpoint_final.txt"}) {
    EXPECT_TRUE(fs::exists(path("run1") / name)) << name;
  }
  EXPECT_EQ(slurp(path("run1") / "config.txt").rfind("praise-config v1", 0), 0u);
  const std::string metrics = slurp(path("run1") / "metrics.csv");
  EXPECT_EQ(metrics.rfind(std::string(praise::kMetricsHeader), 0), 0u);

  const RunResult second =
      run("train --output-dir \"" + path("run2").string() + "\"" + cmd_tail);
  ASSERT_EQ(second.exit_code, 0) << second.err;
  EXPECT_EQ(metrics, slurp(path("run2") / "metrics.csv"));
  EXPECT_EQ(slurp(path("run1") / "checkpoint_final.txt"),
            slurp(path("run2") / "checkpoint_final.txt"));
  EXPECT_EQ(slurp(path("run1") / "world.tsv"), slurp(path("run2") / "world.tsv"));
}

TEST_F(CliTest, SeedPrecedenceFlagOverSetOverEnvOverFile) {
  std::ofstream cfg(path("seed.cfg"));
  cfg << "praise-config v1\nseed = 5\n";
  cfg.close();
  const std::string fast =
      tiny_train_sets() + " --set train_batches=0 --set warmup_steps=0"
                          " --set train_tasks=1 --set eval_tasks=1";
  auto seed_in_echo = [&](const std::string& run_name, const std::string& extra,
                          const std::string& env) {
    const std::string out = path(run_name).string();
    const RunResult r = run("train --config \"" + path("seed.cfg").string() +
                            "\" --output-dir \"" + out + "\"" + fast + extra, env);
    EXPECT_EQ(r.exit_code, 0) << r.err;
    const std::string echo = slurp(path(run_name) / "config.txt");
    const std::size_t at = echo.find("\nseed = ");
    if (at == std::string::npos) return std::string("<no seed line>");
    const std::size_t end = echo.find('\n', at + 1);
    return echo.substr(at + 8, end - (at + 8));
  };
  EXPECT_EQ(seed_in_echo("r_file", "", ""), "5");
  EXPECT_EQ(seed_in_echo("r_env", "", "PRAISE_SEED=7 "), "7");
  EXPECT_EQ(seed_in_echo("r_set", " --set seed=9", "PRAISE_SEED=7 "), "9");
  EXPECT_EQ(seed_in_echo("r_flag", " --set seed=9 --seed 11", "PRAISE_SEED=7 "), "11");
  const RunResult bad = run("train --output-dir \"" + path("r_bad").string() + "\"" +
                            fast, "PRAISE_SEED=nope ");
  EXPECT_EQ(bad.exit_code, 2);
  EXPECT_NE(bad.err.find("PRAISE_SEED"), std::string::npos);
}

praise::TrajectoryRecord two_turn_record() {
  using praise::Segment;
  using praise::SegmentKind;
  praise::TrajectoryRecord rec;
  rec.trajectory.query = "q";
  auto& segs = rec.trajectory.segments;
  segs.emplace_back(SegmentKind::Think, "t1");
  segs.emplace_back(SegmentKind::Search, "s1 s1");
  segs.emplace_back(SegmentKind::Result, "r1");
  segs.emplace_back(SegmentKind::Think, "t2");
  segs.emplace_back(SegmentKind::Search, "s2 s2");
  segs.emplace_back(SegmentKind::Result, "r2");
  segs.emplace_back(SegmentKind::Think, "t3");
  segs.emplace_back(SegmentKind::Answer, "paris");
  rec.gold_answer = "paris";
  rec.prefix_answers = std::vector<std::string>{"", "wrong", "paris"};
  return rec;
}

praise::TrajectoryRecord zero_turn_record() {
  using praise::Segment;
  using praise::SegmentKind;
  praise::TrajectoryRecord rec;
  rec.trajectory.query = "q2";
  rec.trajectory.segments.emplace_back(SegmentKind::Think, "t");
  rec.trajectory.segments.emplace_back(SegmentKind::Answer, "x");
  rec.gold_answer = "y";
  rec.prefix_answers = std::vector<std::string>{""};
  return rec;
}

TEST_F(CliTest, ScoreTrajectoriesMatchesHandComputedAnnotations) {
  {
    std::ofstream in(path("in.jsonl"));
    in << praise::record_to_json(two_turn_record()).dump() << "\n";
    in << praise::record_to_json(zero_turn_record()).dump() << "\n";
  }
  const std::string base = "score-trajectories --in \"" + path("in.jsonl").string() +
                           "\" --out \"" + path("out.jsonl").string() +
                           "\" --metric em";
  const RunResult r = run(base);
  ASSERT_EQ(r.exit_code, 0) << r.err;
  // Stream: t1(0) s1(1,2) t2(3) s2(4,5) t3(6) paris(7); em scores v=[0,0,1] u=1.
  const std::string expected =
      R"({"alpha":0.5,"r_proc":[0.0,0.5],"reused":[{"answer":"","reward":0.0,"t":0},)"
      R"({"answer":"wrong","reward":0.0,"t":1},{"answer":"paris","reward":1.0,"t":2}],)"
      R"("token_rewards":[[2,0.0],[5,0.5],[7,1.0]],"u":1.0,"v":[0.0,0.0,1.0]})"
      "\n"
      R"({"alpha":0.5,"r_proc":[],"reused":[{"answer":"","reward":0.0,"t":0}],)"
      R"("token_rewards":[[1,0.0]],"u":0.0,"v":[0.0]})"
      "\n";
  EXPECT_EQ(slurp(path("out.jsonl")), expected);

  // Idempotent: a rerun rewrites the same bytes.
  ASSERT_EQ(run(base).exit_code, 0);
  EXPECT_EQ(slurp(path("out.jsonl")), expected);
}

TEST_F(CliTest, ScoreTrajectoriesSchemaErrorsAreLineNumberedAndAtomic) {
  nlohmann::json bad = praise::record_to_json(two_turn_record());
  bad["prefix_answers"] = {"only one"};
  {
    std::ofstream in(path("in.jsonl"));
    in << praise::record_to_json(two_turn_record()).dump() << "\n";
    in << praise::record_to_json(zero_turn_record()).dump() << "\n";
    in << bad.dump() << "\n";
  }
  const RunResult r = run("score-trajectories --in \"" + path("in.jsonl").string() +
                          "\" --out \"" + path("out.jsonl").string() + "\"");
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find("line 3"), std::string::npos);
  EXPECT_FALSE(fs::exists(path("out.jsonl")));

  {
    std::ofstream in(path("in2.jsonl"));
    in << praise::record_to_json(zero_turn_record()).dump() << "\n";
    in << "\n";
  }
  const RunResult blank = run("score-trajectories --in \"" + path("in2.jsonl").string() +
                              "\" --out \"" + path("out2.jsonl").string() + "\"");
  EXPECT_EQ(blank.exit_code, 2);
  EXPECT_NE(blank.err.find("line 2"), std::string::npos);
  EXPECT_FALSE(fs::exists(path("out2.jsonl")));

  nlohmann::json no_answers = praise::record_to_json(zero_turn_record());
  no_answers.erase("prefix_answers");
  {
    std::ofstream in(path("in3.jsonl"));
    in << no_answers.dump() << "\n";
  }
  const RunResult missing =
      run("score-trajectories --in \"" + path("in3.jsonl").string() + "\" --out \"" +
          path("out3.jsonl").string() + "\"");
  EXPECT_EQ(missing.exit_code, 2);
  EXPECT_NE(missing.err.find("no prefix_answers"), std::string::npos);
  EXPECT_FALSE(fs::exists(path("out3.jsonl")));
}

TEST_F(CliTest, ScoreTrajectoriesHonorsGoldField) {
  nlohmann::json j = praise::record_to_json(two_turn_record());
  j["gold"] = j["gold_answer"];
  j.erase("gold_answer");
  {
    std::ofstream in(path("in.jsonl"));
    in << j.dump() << "\n";
  }
  const RunResult r = run("score-trajectories --in \"" + path("in.jsonl").string() +
                          "\" --out \"" + path("out.jsonl").string() +
                          "\" --metric em --gold-field gold");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_NE(slurp(path("out.jsonl")).find("\"u\":1.0"), std::string::npos);
}

struct EvalFixtureFiles {
  fs::path world;
  fs::path checkpoint;
};

EvalFixtureFiles write_eval_fixture(const fs::path& dir) {
  EvalFixtureFiles files{dir / "world.tsv", dir / "ck.txt"};
  const praise::KnowledgeBase kb = praise::generate_world(7, 12, 3, 40);
  {
    std::ofstream out(files.world);
    praise::save_world(kb, out);
  }
  praise::NetworkConfig ncfg;
  ncfg.vocab_size = praise::build_vocabulary(kb).size();
  ncfg.embed_dim = 3;
  ncfg.context_window = 8;
  ncfg.hidden_dims = {8};
  const praise::ParameterStore store = praise::ParameterStore::init(ncfg, 3);
  const praise::OptimizerState opt =
      praise::OptimizerState::init(store.values.size(), 1e-3);
  {
    std::ofstream out(files.checkpoint);
    praise::save_checkpoint(out, store, opt);
  }
  return files;
}

TEST_F(CliTest, EvalRunsAndDumpsParseableTrajectories) {
  const EvalFixtureFiles files = write_eval_fixture(dir_);
  const RunResult r = run("eval --checkpoint \"" + files.checkpoint.string() +
                          "\" --world \"" + files.world.string() +
                          "\" --tasks 3 --seed 5 --dump-trajectories \"" +
                          path("dump.jsonl").string() + "\"");
  ASSERT_EQ(r.exit_code, 0) << r.err;
  EXPECT_NE(r.out.find("tasks=3 mean_em="), std::string::npos);
  std::ifstream dump(path("dump.jsonl"));
  std::string line;
  int lines = 0;
  while (std::getline(dump, line)) {
    ++lines;
    const praise::TrajectoryRecord rec =
        praise::record_from_json(nlohmann::json::parse(line));
    EXPECT_FALSE(rec.gold_answer.empty());
  }
  EXPECT_EQ(lines, 3);
}

TEST_F(CliTest, EvalRejectsVocabMismatchWithoutDump) {
  const EvalFixtureFiles files = write_eval_fixture(dir_);
  const praise::KnowledgeBase other = praise::generate_world(7, 13, 3, 40);
  {
    std::ofstream out(path("other.tsv"));
    praise::save_world(other, out);
  }
  const RunResult r = run("eval --checkpoint \"" + files.checkpoint.string() +
                          "\" --world \"" + path("other.tsv").string() +
                          "\" --tasks 3 --dump-trajectories \"" +
                          path("dump.jsonl").string() + "\"");
  EXPECT_EQ(r.exit_code, 2);
  EXPECT_NE(r.err.find("vocab"), std::string::npos);
  EXPECT_FALSE(fs::exists(path("dump.jsonl")));

  const RunResult missing = run("eval --checkpoint \"" + path("nope.txt").string() +
                                "\" --world \"" + files.world.string() + "\"");
  EXPECT_EQ(missing.exit_code, 3);  // unopenable file is an I/O failure
}

TEST_F(CliTest, GradcheckPassesAndDetectsInjectedFault) {
  const RunResult pass = run("gradcheck --seed 3");
  ASSERT_EQ(pass.exit_code, 0) << pass.out;
  EXPECT_NE(pass.out.find("gradcheck: PASS"), std::string::npos);
  const RunResult again = run("gradcheck --seed 3");
  EXPECT_EQ(again.out, pass.out);

  const RunResult fault = run("gradcheck --seed 3 --inject-fault 10");
  EXPECT_EQ(fault.exit_code, 3);
  EXPECT_NE(fault.out.find("gradcheck: FAIL"), std::string::npos);
}

}  // namespace
