#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "praise/errors.hpp"
#include "praise/nn.hpp"
#include "praise/policy.hpp"
#include "praise/ppo.hpp"
#include "praise/rewards.hpp"
#include "praise/rng.hpp"
#include "praise/scoring.hpp"
#include "praise/search_env.hpp"
#include "praise/trajectory.hpp"

namespace praise {

// joint: shared policy, prefix answers from the current snapshot, reused
//   samples train both modes.
// frozen_evaluator: prefix answers come from the post-warmup snapshot and
//   reused samples are excluded from updates.
// no_process_reward: alpha forced to 0 (outcome-only main reward) but reuse
//   stays on.
// no_prefix_evaluator: no prefix answering at all; plain outcome-only PPO.
enum class TrainMode { Joint, FrozenEvaluator, NoProcessReward, NoPrefixEvaluator };

inline std::string_view train_mode_name(TrainMode m) {
  switch (m) {
    case TrainMode::Joint: return "joint";
    case TrainMode::FrozenEvaluator: return "frozen_evaluator";
    case TrainMode::NoProcessReward: return "no_process_reward";
    case TrainMode::NoPrefixEvaluator: return "no_prefix_evaluator";
  }
  throw ShapeMismatchError("bad TrainMode");
}

inline TrainMode train_mode_from_name(std::string_view name) {
  if (name == "joint") return TrainMode::Joint;
  if (name == "frozen_evaluator") return TrainMode::FrozenEvaluator;
  if (name == "no_process_reward") return TrainMode::NoProcessReward;
  if (name == "no_prefix_evaluator") return TrainMode::NoPrefixEvaluator;
  throw ValidationError("unknown mode: " + std::string(name));
}

struct TrainConfig {
  double alpha = 0.5;
  double epsilon = 0.2;
  double gamma = 1.0;
  double lambda = 0.95;
  double learning_rate = 3e-4;
  double warmup_learning_rate = 3e-3;
  int batch_size = 16;
  int ppo_epochs = 4;
  int minibatch_entries = 16;
  ScoreMetric metric = ScoreMetric::TokenF1;
  TrainMode mode = TrainMode::Joint;
  // Raw advantages by default: minibatch renormalization rescales the exact
  // alpha-weighted reward deltas and can amplify near-zero advantages of
  // evidence-poor reused samples into full-strength suppression.
  bool normalize_advantages = false;
  double value_loss_coef = 0.5;
  double entropy_coef = 0.0;
  std::uint64_t seed = 1;
  int warmup_steps = 0;
  RolloutOptions rollout;

  void validate() const {
    if (!(alpha >= 0.0)) throw ValidationError("alpha must be >= 0");
    if (!(epsilon > 0.0 && epsilon < 1.0)) {
      throw ValidationError("epsilon must be in (0, 1)");
    }
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ValidationError("gamma must be in [0, 1]");
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
      throw ValidationError("lambda must be in [0, 1]");
    }
    if (!(learning_rate > 0.0)) throw ValidationError("learning_rate must be > 0");
    if (!(warmup_learning_rate > 0.0)) {
      throw ValidationError("warmup_learning_rate must be > 0");
    }
    if (batch_size < 1) throw ValidationError("batch_size must be >= 1");
    if (ppo_epochs < 1) throw ValidationError("ppo_epochs must be >= 1");
    if (minibatch_entries < 1) throw ValidationError("minibatch_entries must be >= 1");
    if (!(value_loss_coef >= 0.0)) throw ValidationError("value_loss_coef must be >= 0");
    if (!(entropy_coef >= 0.0)) throw ValidationError("entropy_coef must be >= 0");
    if (warmup_steps < 0) throw ValidationError("warmup_steps must be >= 0");
    rollout.validate();
  }
};

enum class EntryKind { Main, Reused };

// One trainable sequence: the policy-token stream of a rollout (Main) or of a
// prefix answer (Reused), with per-position rewards and collection-time
// values. Forced (non-sampled) positions are masked from both losses.
struct BufferEntry {
  EntryKind kind = EntryKind::Main;
  std::vector<int> full_ids;
  std::vector<StreamToken> stream;
  std::vector<double> rewards;
  std::vector<double> values;
  AdvantageEstimates gae;
  // metrics bookkeeping (Main entries only)
  double em = 0.0;
  double f1 = 0.0;
  double outcome = 0.0;
  int turns = 0;
  double abs_proc_sum = 0.0;
  int proc_count = 0;
};

struct BatchStats {
  double mean_em = 0.0;
  double mean_f1 = 0.0;
  double mean_turns = 0.0;
  double mean_outcome_reward = 0.0;
  double mean_abs_process_reward = 0.0;
  int main_entries = 0;
  int reused_entries = 0;
};

// One CSV row per optimizer step. Batch-level statistics repeat across the
// rows of that batch.
struct StepMetrics {
  int step = 0;
  double mean_em = 0.0;
  double mean_f1 = 0.0;
  double mean_turns = 0.0;
  double mean_outcome_reward = 0.0;
  double mean_abs_process_reward = 0.0;
  double clip_fraction = 0.0;
  double actor_loss = 0.0;
  double critic_loss = 0.0;
  std::uint64_t seed = 0;
};

inline constexpr std::string_view kMetricsHeader =
    "step,mean_em,mean_f1,mean_turns,mean_outcome_reward,mean_abs_process_reward,"
    "clip_fraction,actor_loss,critic_loss,seed";

inline void write_metrics_csv(std::ostream& os, std::span<const StepMetrics> rows) {
  os << kMetricsHeader << "\n";
  char buf[512];
  for (const StepMetrics& r : rows) {
    std::snprintf(buf, sizeof buf,
                  "%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%llu", r.step,
                  r.mean_em, r.mean_f1, r.mean_turns, r.mean_outcome_reward,
                  r.mean_abs_process_reward, r.clip_fraction, r.actor_loss,
                  r.critic_loss, static_cast<unsigned long long>(r.seed));
    os << buf << "\n";
  }
  if (!os) throw IoError("failed writing metrics csv");
}

// Everything the loop needs that is not parameters: the net geometry, the
// world, its vocabulary, and (in frozen_evaluator mode) the evaluator
// snapshot.
struct TrainContext {
  Network net;
  Vocabulary vocab;
  KnowledgeBase kb;
  std::optional<std::vector<double>> frozen_eval_params;

  TrainContext(NetworkConfig cfg, Vocabulary v, KnowledgeBase k)
      : net(std::move(cfg)), vocab(std::move(v)), kb(std::move(k)) {}
};

namespace detail {

inline std::span<const int> context_before(const std::vector<int>& full_ids,
                                           int position) {
  return std::span<const int>(full_ids.data(), static_cast<std::size_t>(position));
}

// Per-token PPO terms. clipped is the gradient-zeroing condition:
// (A > 0 and ratio > 1 + eps) or (A < 0 and ratio < 1 - eps).
struct PpoTokenTerms {
  double actor_term = 0.0;  // -min(ratio * A, clamp(ratio) * A)
  double critic_se = 0.0;   // (value - return)^2
  double entropy = 0.0;
  double ratio = 1.0;
  double new_logprob = 0.0;
  double value = 0.0;
  bool clipped = false;
};

inline PpoTokenTerms ppo_token_terms(const Network& net, std::span<const double> params,
                                     std::span<const int> context, int id,
                                     double old_logprob, double advantage, double ret,
                                     double epsilon, ForwardTrace& trace) {
  net.forward(params, context, trace);
  PpoTokenTerms t;
  t.new_logprob = net.log_prob(trace, id);
  const double diff = t.new_logprob - old_logprob;
  t.ratio = (diff == 0.0) ? 1.0 : std::exp(diff);
  const double lo = 1.0 - epsilon;
  const double hi = 1.0 + epsilon;
  const double clamped = t.ratio < lo ? lo : (t.ratio > hi ? hi : t.ratio);
  const double unclipped = t.ratio * advantage;
  const double clipped_term = clamped * advantage;
  t.actor_term = -(unclipped < clipped_term ? unclipped : clipped_term);
  t.clipped = (advantage > 0.0 && t.ratio > hi) || (advantage < 0.0 && t.ratio < lo);
  t.value = trace.value;
  t.critic_se = (trace.value - ret) * (trace.value - ret);
  for (const double p : trace.probs) {
    if (p > 0.0) t.entropy -= p * std::log(p);
  }
  return t;
}

// Same terms, plus gradient accumulation for the combined objective
// mean(actor) + value_coef * mean(critic) - entropy_coef * mean(entropy),
// where inv_n carries the mean.
inline PpoTokenTerms ppo_token_grad(const Network& net, std::span<const double> params,
                                    std::span<const int> context, int id,
                                    double old_logprob, double advantage, double ret,
                                    double epsilon, double inv_n, double value_coef,
                                    double entropy_coef, ForwardTrace& trace,
                                    std::vector<double>& dlogits,
                                    std::span<double> grad) {
  const PpoTokenTerms t = ppo_token_terms(net, params, context, id, old_logprob,
                                          advantage, ret, epsilon, trace);
  dlogits.assign(trace.probs.size(), 0.0);
  if (!t.clipped && advantage != 0.0) {
    const double w = advantage * t.ratio * inv_n;
    for (std::size_t v = 0; v < dlogits.size(); ++v) dlogits[v] = w * trace.probs[v];
    dlogits[static_cast<std::size_t>(id)] -= w;
  }
  if (entropy_coef > 0.0) {
    const double c = entropy_coef * inv_n;
    for (std::size_t v = 0; v < dlogits.size(); ++v) {
      const double p = trace.probs[v];
      if (p > 0.0) dlogits[v] += c * p * (std::log(p) + t.entropy);
    }
  }
  const double dv = value_coef * 2.0 * (t.value - ret) * inv_n;
  net.backward(params, trace, dlogits, dv, grad);
  return t;
}

}  // namespace detail

// Rolls out one batch of tasks and builds the training buffer per the active
// mode. Main-entry token rewards come from assign_token_rewards over the
// rollout's markers; reused entries carry v_t at their final position.
inline std::vector<BufferEntry> collect_batch(const TrainContext& ctx,
                                              const TrainConfig& cfg,
                                              std::span<const TaskInstance> tasks,
                                              std::span<const double> params,
                                              std::uint64_t batch_seed,
                                              BatchStats* stats_out) {
  std::vector<BufferEntry> buffer;
  BatchStats stats;
  double proc_abs_total = 0.0;
  int proc_total = 0;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    const TaskInstance& task = tasks[i];
    const std::uint64_t task_seed = Rng::mix(batch_seed, 0x100000ULL + i);
    RolloutResult roll = rollout_search(ctx.net, params, ctx.vocab, ctx.kb, task.query,
                                        cfg.rollout, task_seed);
    const std::string final_answer = roll.trajectory.final_answer();
    const SegmentMarkers markers = segment_markers(roll.trajectory);
    if (markers.stream_length != static_cast<int>(roll.stream.size())) {
      throw ShapeMismatchError("marker stream length disagrees with rollout stream");
    }

    BufferEntry main;
    main.kind = EntryKind::Main;
    main.em = exact_match(final_answer, task.gold_answer);
    main.f1 = token_f1(final_answer, task.gold_answer);
    main.turns = roll.trajectory.turns();

    std::vector<AnswerSample> prefix_samples;
    PrefixScores scores;
    if (cfg.mode == TrainMode::NoPrefixEvaluator) {
      scores.v.assign(static_cast<std::size_t>(roll.trajectory.turns()) + 1, 0.0);
      scores.u = score_answer(final_answer, task.gold_answer, cfg.metric);
    } else {
      const std::vector<PrefixState> prefixes = extract_prefixes(roll.trajectory);
      std::span<const double> eval_params = params;
      if (cfg.mode == TrainMode::FrozenEvaluator) {
        if (!ctx.frozen_eval_params) {
          throw ValidationError("frozen_evaluator mode needs an evaluator snapshot");
        }
        eval_params = *ctx.frozen_eval_params;
      }
      // Prefix answers are sampled at the collection temperature, like any
      // other behavior the buffer will train on. Greedy decoding here turns
      // reused samples into pure argmax suppression: a wrong mode gets pushed
      // down every batch while the right token is never sampled, so the
      // answer head erodes instead of learning contrastively.
      std::vector<std::string> answers;
      for (std::size_t t = 0; t < prefixes.size(); ++t) {
        prefix_samples.push_back(answer_from_prefix(ctx.net, eval_params, ctx.vocab,
                                                    prefixes[t], cfg.rollout,
                                                    Rng::mix(task_seed, 0x2000ULL + t)));
        answers.push_back(prefix_samples.back().answer_text);
      }
      scores = compute_prefix_scores(answers, final_answer, task.gold_answer, cfg.metric);
    }

    const double effective_alpha =
        (cfg.mode == TrainMode::NoProcessReward) ? 0.0 : cfg.alpha;
    const ProcessRewards proc = compute_process_rewards(scores, effective_alpha);
    const TokenRewardVector trv = assign_token_rewards(markers, proc, scores.u);

    main.outcome = scores.u;
    for (const double r : proc.r) {
      main.abs_proc_sum += std::abs(r);
      main.proc_count += 1;
    }
    main.full_ids = std::move(roll.full_ids);
    main.stream = std::move(roll.stream);
    main.values = std::move(roll.stream_values);
    main.rewards = trv.dense();
    if (main.rewards.size() != main.stream.size()) {
      throw ShapeMismatchError("token rewards do not align with the stream");
    }
    proc_abs_total += main.abs_proc_sum;
    proc_total += main.proc_count;
    stats.mean_em += main.em;
    stats.mean_f1 += main.f1;
    stats.mean_turns += main.turns;
    stats.mean_outcome_reward += main.outcome;
    stats.main_entries += 1;
    buffer.push_back(std::move(main));

    // Reused prefix-answer samples train the evaluator path; excluded when
    // the evaluator is frozen or absent.
    if (cfg.mode == TrainMode::Joint || cfg.mode == TrainMode::NoProcessReward) {
      for (std::size_t t = 0; t < prefix_samples.size(); ++t) {
        AnswerSample& a = prefix_samples[t];
        BufferEntry reused;
        reused.kind = EntryKind::Reused;
        reused.full_ids = std::move(a.full_ids);
        reused.stream = std::move(a.stream);
        reused.values = std::move(a.stream_values);
        reused.rewards.assign(reused.stream.size(), 0.0);
        if (reused.rewards.empty()) {
          throw ShapeMismatchError("reused sample with empty stream");
        }
        reused.rewards.back() = scores.v[t];
        stats.reused_entries += 1;
        buffer.push_back(std::move(reused));
      }
    }
  }
  if (stats.main_entries > 0) {
    stats.mean_em /= stats.main_entries;
    stats.mean_f1 /= stats.main_entries;
    stats.mean_turns /= stats.main_entries;
    stats.mean_outcome_reward /= stats.main_entries;
  }
  stats.mean_abs_process_reward = proc_total > 0 ? proc_abs_total / proc_total : 0.0;

  for (BufferEntry& e : buffer) {
    e.gae = compute_gae(e.rewards, e.values, cfg.gamma, cfg.lambda);
  }
  if (stats_out) *stats_out = stats;
  return buffer;
}

// Filled for the first minibatch of the first ppo_epoch when requested:
// on-policy identity instrumentation.
struct UpdateProbe {
  bool filled = false;
  double max_abs_ratio_minus_one = 0.0;
  double actor_loss = 0.0;
  double mean_advantage = 0.0;  // over the advantages the loss actually used
};

// ppo_epochs passes of minibatched clipped-PPO updates over the buffer.
// Advantages and returns stay fixed at their collection values; each
// minibatch recomputes logprobs and values, takes one combined Adam step
// (actor + value_loss_coef * critic - entropy_coef * entropy), and appends
// one metrics row.
inline void ppo_update(const TrainContext& ctx, const TrainConfig& cfg,
                       std::vector<BufferEntry>& buffer, std::vector<double>& params,
                       OptimizerState& opt, std::uint64_t update_seed,
                       const BatchStats& stats, std::vector<StepMetrics>& rows,
                       int& global_step, UpdateProbe* probe = nullptr) {
  if (buffer.empty()) return;
  const std::size_t total = ctx.net.layout().total;
  if (params.size() != total) throw ShapeMismatchError("param size mismatch");
  std::vector<double> grad(total, 0.0);
  ForwardTrace trace;

  for (int epoch = 0; epoch < cfg.ppo_epochs; ++epoch) {
    std::vector<std::size_t> order(buffer.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng shuffle_rng(Rng::mix(update_seed, 0x3000ULL + static_cast<std::uint64_t>(epoch)));
    shuffle_rng.shuffle(order);

    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(cfg.minibatch_entries)) {
      const std::size_t end =
          std::min(order.size(), start + static_cast<std::size_t>(cfg.minibatch_entries));

      struct TokenRef {
        const BufferEntry* entry;
        std::size_t k;
      };
      std::vector<TokenRef> tokens;
      for (std::size_t oi = start; oi < end; ++oi) {
        const BufferEntry& e = buffer[order[oi]];
        for (std::size_t k = 0; k < e.stream.size(); ++k) {
          if (e.stream[k].sampled) tokens.push_back(TokenRef{&e, k});
        }
      }
      if (tokens.empty()) continue;
      const double n = static_cast<double>(tokens.size());

      std::vector<double> adv(tokens.size());
      for (std::size_t j = 0; j < tokens.size(); ++j) {
        adv[j] = tokens[j].entry->gae.advantages[tokens[j].k];
      }
      if (cfg.normalize_advantages) {
        double mean = 0.0;
        for (const double a : adv) mean += a;
        mean /= n;
        double var = 0.0;
        for (const double a : adv) var += (a - mean) * (a - mean);
        const double stddev = std::sqrt(var / n);
        for (double& a : adv) a = (a - mean) / (stddev + 1e-8);
      }

      std::fill(grad.begin(), grad.end(), 0.0);
      double actor_sum = 0.0;
      double critic_sum = 0.0;
      double max_ratio_dev = 0.0;
      std::size_t clip_count = 0;
      std::vector<double> dlogits;

      for (std::size_t j = 0; j < tokens.size(); ++j) {
        const BufferEntry& e = *tokens[j].entry;
        const StreamToken& st = e.stream[tokens[j].k];
        const detail::PpoTokenTerms t = detail::ppo_token_grad(
            ctx.net, params, detail::context_before(e.full_ids, st.position), st.id,
            st.logprob, adv[j], e.gae.returns[tokens[j].k], cfg.epsilon, 1.0 / n,
            cfg.value_loss_coef, cfg.entropy_coef, trace, dlogits, grad);
        actor_sum += t.actor_term;
        critic_sum += t.critic_se;
        clip_count += t.clipped ? 1 : 0;
        max_ratio_dev = std::max(max_ratio_dev, std::abs(t.ratio - 1.0));
      }

      adam_step(params, grad, opt);
      global_step += 1;

      StepMetrics row;
      row.step = global_step;
      row.mean_em = stats.mean_em;
      row.mean_f1 = stats.mean_f1;
      row.mean_turns = stats.mean_turns;
      row.mean_outcome_reward = stats.mean_outcome_reward;
      row.mean_abs_process_reward = stats.mean_abs_process_reward;
      row.clip_fraction = static_cast<double>(clip_count) / n;
      row.actor_loss = actor_sum / n;
      row.critic_loss = critic_sum / n;
      row.seed = cfg.seed;
      rows.push_back(row);

      if (probe && !probe->filled) {
        probe->filled = true;
        probe->max_abs_ratio_minus_one = max_ratio_dev;
        probe->actor_loss = actor_sum / n;
        double ma = 0.0;
        for (const double a : adv) ma += a;
        probe->mean_advantage = ma / n;
      }
    }
  }
}

// One collected-and-updated batch; returns the number of optimizer steps.
inline int train_one_batch(const TrainContext& ctx, const TrainConfig& cfg,
                           std::span<const TaskInstance> tasks,
                           std::vector<double>& params, OptimizerState& opt,
                           std::uint64_t batch_seed, std::vector<StepMetrics>& rows,
                           int& global_step, UpdateProbe* probe = nullptr) {
  BatchStats stats;
  std::vector<BufferEntry> buffer =
      collect_batch(ctx, cfg, tasks, params, batch_seed, &stats);
  const int before = global_step;
  ppo_update(ctx, cfg, buffer, params, opt, Rng::mix(batch_seed, 0xBBULL), stats, rows,
             global_step, probe);
  return global_step - before;
}

// One full pass over the dataset in seeded-shuffled batch_size chunks.
struct EpochResult {
  std::vector<StepMetrics> rows;
  BatchStats last_batch;
  int malformed_rollouts = 0;  // scaffolded decoding keeps this at zero
  int batches = 0;
};

inline EpochResult run_praise_epoch(const TrainContext& ctx, const TrainConfig& cfg,
                                    std::span<const TaskInstance> dataset,
                                    std::vector<double>& params, OptimizerState& opt,
                                    int epoch_index, int& global_step) {
  cfg.validate();
  if (dataset.empty()) throw ValidationError("dataset must not be empty");
  EpochResult out;
  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(Rng::mix(cfg.seed, 0x4000ULL + static_cast<std::uint64_t>(epoch_index)));
  rng.shuffle(order);
  std::vector<TaskInstance> batch;
  for (std::size_t start = 0; start < order.size();
       start += static_cast<std::size_t>(cfg.batch_size)) {
    const std::size_t end =
        std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
    batch.clear();
    for (std::size_t i = start; i < end; ++i) batch.push_back(dataset[order[i]]);
    BatchStats stats;
    std::vector<BufferEntry> buffer = collect_batch(
        ctx, cfg, batch, params,
        Rng::mix(cfg.seed, (static_cast<std::uint64_t>(epoch_index) << 20) + start),
        &stats);
    ppo_update(ctx, cfg, buffer, params, opt,
               Rng::mix(cfg.seed, (static_cast<std::uint64_t>(epoch_index) << 21) + start),
               stats, out.rows, global_step);
    out.last_batch = stats;
    out.batches += 1;
  }
  return out;
}

// Supervised warmup: clones scripted-oracle behavior in both prompt modes.
// Stands in for a pretrained base model; kept short so learning headroom
// remains for the RL phase. Uses its own fresh Adam state.
inline void run_warmup(const TrainContext& ctx, const TrainConfig& cfg,
                       std::span<const TaskInstance> dataset,
                       std::vector<double>& params) {
  if (cfg.warmup_steps <= 0) return;
  if (dataset.empty()) throw ValidationError("dataset must not be empty");
  OptimizerState opt = OptimizerState::init(params.size(), cfg.warmup_learning_rate);
  std::vector<std::size_t> order(dataset.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng rng(Rng::mix(cfg.seed, 0x77757055ULL));  // "wup"
  rng.shuffle(order);
  std::vector<double> grad(params.size(), 0.0);
  std::size_t cursor = 0;
  std::vector<NllSample> samples;
  for (int step = 0; step < cfg.warmup_steps; ++step) {
    samples.clear();
    for (int b = 0; b < cfg.batch_size; ++b) {
      const TaskInstance& task = dataset[order[cursor]];
      cursor = (cursor + 1) % order.size();
      const std::uint64_t task_seed = Rng::mix(cfg.seed, 0x5000ULL + cursor);
      const RolloutResult roll = rollout_scripted(ScriptedBehavior::Oracle, ctx.kb,
                                                  ctx.vocab, task.query, cfg.rollout,
                                                  task_seed);
      for (const StreamToken& st : roll.stream) {
        NllSample s;
        s.context.assign(roll.full_ids.begin(), roll.full_ids.begin() + st.position);
        s.target = st.id;
        samples.push_back(std::move(s));
      }
      const std::vector<PrefixState> prefixes = extract_prefixes(roll.trajectory);
      for (const PrefixState& prefix : prefixes) {
        const std::string answer =
            scripted_answer_from_prefix(ScriptedBehavior::Oracle, prefix, ctx.kb, 0);
        std::vector<int> ctx_ids = ctx.vocab.encode(render_answer_prompt(prefix));
        ctx_ids.push_back(ctx.vocab.tag_id(open_tag(SegmentKind::Answer)));
        std::vector<int> targets = ctx.vocab.encode(answer);
        targets.push_back(Vocabulary::kTerminatorId);
        for (const int t : targets) {
          NllSample s;
          s.context = ctx_ids;
          s.target = t;
          samples.push_back(std::move(s));
          ctx_ids.push_back(t);
        }
      }
    }
    const double w = 1.0 / static_cast<double>(samples.size());
    for (NllSample& s : samples) s.weight = w;
    std::fill(grad.begin(), grad.end(), 0.0);
    weighted_nll_backward(ctx.net, params, samples, grad);
    adam_step(params, grad, opt);
  }
}

struct EvalResult {
  double mean_em = 0.0;
  double mean_f1 = 0.0;
  double mean_turns = 0.0;
};

// Greedy (temperature 0) rollouts over a task set. When sink is given, each
// rollout is appended to it as a TrajectoryRecord.
inline EvalResult evaluate(const TrainContext& ctx, std::span<const double> params,
                           std::span<const TaskInstance> tasks,
                           const RolloutOptions& opts, std::uint64_t seed,
                           std::vector<TrajectoryRecord>* sink = nullptr) {
  if (tasks.empty()) throw ValidationError("evaluation needs at least one task");
  RolloutOptions greedy = opts;
  greedy.temperature = 0.0;
  EvalResult out;
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    RolloutResult roll =
        rollout_search(ctx.net, params, ctx.vocab, ctx.kb, tasks[i].query, greedy,
                       Rng::mix(seed, 0x6000ULL + i));
    const std::string answer = roll.trajectory.final_answer();
    out.mean_em += exact_match(answer, tasks[i].gold_answer);
    out.mean_f1 += token_f1(answer, tasks[i].gold_answer);
    out.mean_turns += roll.trajectory.turns();
    if (sink) {
      TrajectoryRecord rec;
      rec.trajectory = std::move(roll.trajectory);
      rec.gold_answer = tasks[i].gold_answer;
      sink->push_back(std::move(rec));
    }
  }
  const double n = static_cast<double>(tasks.size());
  out.mean_em /= n;
  out.mean_f1 /= n;
  out.mean_turns /= n;
  return out;
}

}  // namespace praise
