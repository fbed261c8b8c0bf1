#include "praise/config.hpp"

#include <sstream>
#include <string>
#include <vector>

#include "gtest/gtest.h"
#include "praise/errors.hpp"

namespace {

using praise::apply_config_value;
using praise::parse_config;
using praise::render_config;
using praise::RunConfig;
using praise::TrainMode;

RunConfig parse_text(const std::string& text) {
  std::istringstream is(text);
  return parse_config(is);
}

// Every field off its default, including values that stress float echoing.
RunConfig scrambled() {
  RunConfig rc;
  rc.train.alpha = 0.30000000000000004;  // 0.1 + 0.2, needs all 17 digits
  rc.train.epsilon = 0.15;
  rc.train.gamma = 0.97;
  rc.train.lambda = 0.9;
  rc.train.learning_rate = 1e-4;
  rc.train.warmup_learning_rate = 2.5e-3;
  rc.train.batch_size = 7;
  rc.train.ppo_epochs = 3;
  rc.train.minibatch_entries = 5;
  rc.train.metric = praise::ScoreMetric::ExactMatch;
  rc.train.mode = TrainMode::FrozenEvaluator;
  rc.train.normalize_advantages = true;
  rc.train.value_loss_coef = 0.25;
  rc.train.entropy_coef = 0.01;
  rc.train.seed = 18446744073709551615ULL;
  rc.train.warmup_steps = 12;
  rc.train.rollout.max_turns = 3;
  rc.train.rollout.think_budget = 4;
  rc.train.rollout.search_budget = 9;
  rc.train.rollout.answer_budget = 6;
  rc.train.rollout.retrieval_top_k = 2;
  rc.train.rollout.temperature = 0.7;
  rc.train.rollout.disable_retrieval = true;
  rc.embed_dim = 6;
  rc.context_window = 24;
  rc.hidden_dims = {20, 10, 5};
  rc.activation = praise::Activation::Relu;
  rc.world_seed = 99;
  rc.world_entities = 12;
  rc.world_relations = 3;
  rc.world_facts = 40;
  rc.task_hops = 1;
  rc.train_tasks = 9;
  rc.eval_tasks = 4;
  rc.task_seed = 21;
  rc.eval_seed = 22;
  rc.train_batches = 2;
  rc.eval_every = 1;
  rc.checkpoint_every = 2;
  rc.output_dir = "runs/exp one";
  return rc;
}

TEST(ConfigFormat, RenderParseRoundTrip) {
  const RunConfig rc = scrambled();
  const std::string text = render_config(rc);
  const RunConfig back = parse_text(text);
  EXPECT_EQ(render_config(back), text);
  EXPECT_DOUBLE_EQ(back.train.alpha, rc.train.alpha);
  EXPECT_DOUBLE_EQ(back.train.learning_rate, rc.train.learning_rate);
  EXPECT_EQ(back.train.seed, rc.train.seed);
  EXPECT_EQ(back.train.mode, TrainMode::FrozenEvaluator);
  EXPECT_EQ(back.train.metric, praise::ScoreMetric::ExactMatch);
  EXPECT_TRUE(back.train.normalize_advantages);
  EXPECT_TRUE(back.train.rollout.disable_retrieval);
  EXPECT_EQ(back.hidden_dims, (std::vector<int>{20, 10, 5}));
  EXPECT_EQ(back.activation, praise::Activation::Relu);
  EXPECT_EQ(back.output_dir, "runs/exp one");
}

TEST(ConfigFormat, HeaderOnlyYieldsDefaults) {
  const RunConfig rc = parse_text("praise-config v1\n");
  const RunConfig fresh;
  EXPECT_EQ(render_config(rc), render_config(fresh));
  EXPECT_DOUBLE_EQ(rc.train.alpha, 0.5);
  EXPECT_EQ(rc.train.mode, TrainMode::Joint);
  EXPECT_FALSE(rc.train.normalize_advantages);
  EXPECT_EQ(rc.embed_dim, 12);
  EXPECT_EQ(rc.context_window, 32);
  EXPECT_EQ(rc.hidden_dims, (std::vector<int>{48, 48}));
  EXPECT_EQ(rc.train_batches, 60);
  EXPECT_EQ(rc.eval_every, 0);
}

TEST(ConfigFormat, CommentsBlanksAndPaddingAreTolerated) {
  const RunConfig rc = parse_text(
      "# run notes\n"
      "\n"
      "  praise-config v1  # versioned header\n"
      "alpha=0.25# tight\n"
      "   batch_size   =   9   \n"
      "\t\n"
      "mode = no_process_reward\n");
  EXPECT_DOUBLE_EQ(rc.train.alpha, 0.25);
  EXPECT_EQ(rc.train.batch_size, 9);
  EXPECT_EQ(rc.train.mode, TrainMode::NoProcessReward);
}

TEST(ConfigFormat, RejectsStructuralProblems) {
  EXPECT_THROW(parse_text(""), praise::ValidationError);
  EXPECT_THROW(parse_text("# only comments\n"), praise::ValidationError);
  EXPECT_THROW(parse_text("alpha = 0.5\n"), praise::ValidationError);  // header missing
  EXPECT_THROW(parse_text("praise-config v2\n"), praise::ValidationError);
  EXPECT_THROW(parse_text("praise-config v1\nalpha\n"), praise::ValidationError);
  EXPECT_THROW(parse_text("praise-config v1\n= 3\n"), praise::ValidationError);
  EXPECT_THROW(parse_text("praise-config v1\nalpha = 1\nalpha = 2\n"),
               praise::ValidationError);
  EXPECT_THROW(parse_text("praise-config v1\nalhpa = 1\n"), praise::ValidationError);
}

TEST(ConfigFormat, RejectsMalformedValues) {
  EXPECT_THROW(parse_text("praise-config v1\nbatch_size = 2x\n"), praise::ValidationError);
  EXPECT_THROW(parse_text("praise-config v1\nbatch_size = \n"), praise::ValidationError);
  EXPECT_THROW(parse_text("praise-config v1\nbatch_size = 3000000000\n"),
               praise::ValidationError);
  EXPECT_THROW(parse_text("praise-config v1\nseed = -3\n"), praise::ValidationError);
  EXPECT_THROW(parse_text("praise-config v1\nalpha = zero\n"), praise::ValidationError);
  EXPECT_THROW(parse_text("praise-config v1\nalpha = 0.5oops\n"), praise::ValidationError);
  EXPECT_THROW(parse_text("praise-config v1\ndisable_retrieval = yes\n"),
               praise::ValidationError);
  EXPECT_THROW(parse_text("praise-config v1\nhidden_dims = 48,,48\n"),
               praise::ValidationError);
  EXPECT_THROW(parse_text("praise-config v1\nhidden_dims = \n"), praise::ValidationError);
  EXPECT_THROW(parse_text("praise-config v1\nmode = offline\n"), praise::ValidationError);
  EXPECT_THROW(parse_text("praise-config v1\nmetric = bleu\n"), praise::ValidationError);
  EXPECT_THROW(parse_text("praise-config v1\nactivation = gelu\n"),
               praise::ValidationError);
}

TEST(ConfigFormat, ApplyValueHitsNestedFields) {
  RunConfig rc;
  apply_config_value(rc, "warmup_learning_rate", "0.007");
  apply_config_value(rc, "rollout_temperature", "0.3");
  apply_config_value(rc, "retrieval_top_k", "5");
  apply_config_value(rc, "output_dir", "out");
  EXPECT_DOUBLE_EQ(rc.train.warmup_learning_rate, 0.007);
  EXPECT_DOUBLE_EQ(rc.train.rollout.temperature, 0.3);
  EXPECT_EQ(rc.train.rollout.retrieval_top_k, 5);
  EXPECT_EQ(rc.output_dir, "out");
  EXPECT_THROW(apply_config_value(rc, "turbo", "1"), praise::ValidationError);
}

TEST(RunConfigValidation, DelegatesAndChecksOwnFields) {
  RunConfig rc = scrambled();
  EXPECT_NO_THROW(rc.validate());
  rc.embed_dim = 0;
  EXPECT_THROW(rc.validate(), praise::ValidationError);
  rc = scrambled();
  rc.hidden_dims = {};
  EXPECT_THROW(rc.validate(), praise::ValidationError);
  rc = scrambled();
  rc.hidden_dims = {16, 0};
  EXPECT_THROW(rc.validate(), praise::ValidationError);
  rc = scrambled();
  rc.train_batches = -1;
  EXPECT_THROW(rc.validate(), praise::ValidationError);
  rc = scrambled();
  rc.train.alpha = -1.0;  // nested TrainConfig reached through validate()
  EXPECT_THROW(rc.validate(), praise::ValidationError);
}

RunConfig tiny_run_config() {
  RunConfig rc;
  rc.train.batch_size = 4;
  rc.train.ppo_epochs = 1;
  rc.train.minibatch_entries = 16;
  rc.train.warmup_steps = 3;
  rc.train.rollout.max_turns = 2;
  rc.train.rollout.think_budget = 2;
  rc.train.rollout.search_budget = 8;
  rc.train.rollout.answer_budget = 4;
  rc.embed_dim = 4;
  rc.context_window = 16;
  rc.hidden_dims = {16};
  rc.world_seed = 7;
  rc.world_entities = 12;
  rc.world_relations = 3;
  rc.world_facts = 40;
  rc.train_tasks = 8;
  rc.eval_tasks = 4;
  rc.train_batches = 2;
  return rc;
}

TEST(TrainRun, ProducesRowsEvalsAndCheckpoints) {
  RunConfig rc = tiny_run_config();
  rc.eval_every = 1;
  rc.checkpoint_every = 1;
  std::ostringstream log;
  int final_calls = 0;
  int periodic_calls = 0;
  std::size_t param_count = 0;
  const praise::RunOutcome out = praise::train_run(
      rc, &log,
      [&](int batch, bool final, const praise::ParameterStore& store,
          const praise::OptimizerState& opt) {
        (final ? final_calls : periodic_calls) += 1;
        if (final) EXPECT_EQ(batch, rc.train_batches);
        param_count = store.values.size();
        EXPECT_EQ(opt.m.size(), store.values.size());
      },
      [&](const praise::TrainContext& ctx) {
        EXPECT_GT(ctx.vocab.size(), 11);
        EXPECT_EQ(static_cast<int>(ctx.kb.entity_names.size()), 12);
      });
  EXPECT_EQ(out.optimizer_steps, static_cast<int>(out.rows.size()));
  EXPECT_GT(out.optimizer_steps, 0);
  EXPECT_EQ(final_calls, 1);
  EXPECT_EQ(periodic_calls, rc.train_batches);
  EXPECT_GT(param_count, 0u);
  const std::string text = log.str();
  EXPECT_NE(text.find("eval batch=0 "), std::string::npos);
  EXPECT_NE(text.find("eval batch=1 "), std::string::npos);
  EXPECT_NE(text.find("final=1"), std::string::npos);
}

TEST(TrainRun, IsDeterministicAcrossRuns) {
  const RunConfig rc = tiny_run_config();
  const praise::RunOutcome a = praise::train_run(rc);
  const praise::RunOutcome b = praise::train_run(rc);
  ASSERT_EQ(a.rows.size(), b.rows.size());
  for (std::size_t i = 0; i < a.rows.size(); ++i) {
    EXPECT_DOUBLE_EQ(a.rows[i].actor_loss, b.rows[i].actor_loss);
    EXPECT_DOUBLE_EQ(a.rows[i].critic_loss, b.rows[i].critic_loss);
  }
  EXPECT_DOUBLE_EQ(a.final_eval.mean_em, b.final_eval.mean_em);
  EXPECT_DOUBLE_EQ(a.final_eval.mean_f1, b.final_eval.mean_f1);
  EXPECT_DOUBLE_EQ(a.initial_eval.mean_f1, b.initial_eval.mean_f1);
}

TEST(TrainRun, FrozenEvaluatorModeRunsWithWarmupSnapshot) {
  RunConfig rc = tiny_run_config();
  rc.train.mode = TrainMode::FrozenEvaluator;
  EXPECT_NO_THROW(praise::train_run(rc));
}

TEST(TrainRun, RejectsInvalidConfig) {
  RunConfig rc = tiny_run_config();
  rc.train_batches = -1;
  EXPECT_THROW(praise::train_run(rc), praise::ValidationError);
}

}  // namespace
