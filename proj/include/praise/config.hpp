#pragma once

#include <cstdint>
#include <cstdio>
#include <functional>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "praise/errors.hpp"
#include "praise/nn.hpp"
#include "praise/trainer.hpp"

namespace praise {

inline constexpr std::string_view kConfigHeader = "praise-config v1";

// Full description of a training run: optimizer and PPO settings, rollout
// budgets, network geometry, world and task generation, and run cadence.
struct RunConfig {
  TrainConfig train;

  int embed_dim = 12;
  int context_window = 32;
  std::vector<int> hidden_dims = {48, 48};
  Activation activation = Activation::Tanh;

  std::uint64_t world_seed = 7;
  int world_entities = 50;
  int world_relations = 5;
  int world_facts = 300;

  int task_hops = 2;
  int train_tasks = 500;
  int eval_tasks = 200;
  std::uint64_t task_seed = 11;
  std::uint64_t eval_seed = 13;

  int train_batches = 60;
  int eval_every = 0;        // 0: evaluate only before and after training
  int checkpoint_every = 0;  // 0: only the final checkpoint
  std::string output_dir;

  void validate() const {
    train.validate();
    if (embed_dim < 1) throw ValidationError("embed_dim must be >= 1");
    if (context_window < 1) throw ValidationError("context_window must be >= 1");
    if (hidden_dims.empty()) throw ValidationError("hidden_dims must not be empty");
    for (const int h : hidden_dims) {
      if (h < 1) throw ValidationError("hidden_dims entries must be >= 1");
    }
    if (world_entities < 1 || world_relations < 1 || world_facts < 1) {
      throw ValidationError("world counts must be >= 1");
    }
    if (task_hops < 1) throw ValidationError("task_hops must be >= 1");
    if (train_tasks < 1 || eval_tasks < 1) {
      throw ValidationError("task counts must be >= 1");
    }
    if (train_batches < 0) throw ValidationError("train_batches must be >= 0");
    if (eval_every < 0 || checkpoint_every < 0) {
      throw ValidationError("cadence values must be >= 0");
    }
  }
};

namespace detail {

inline std::string trim(std::string_view s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && is_space_char(s[a])) ++a;
  while (b > a && is_space_char(s[b - 1])) --b;
  return std::string(s.substr(a, b - a));
}

inline long long parse_ll(const std::string& key, const std::string& val) {
  std::size_t used = 0;
  long long x = 0;
  try {
    x = std::stoll(val, &used);
  } catch (const std::exception&) {
    throw ValidationError("bad integer for " + key + ": " + val);
  }
  if (used != val.size()) throw ValidationError("bad integer for " + key + ": " + val);
  return x;
}

inline int parse_int(const std::string& key, const std::string& val) {
  const long long x = parse_ll(key, val);
  if (x < -2147483648LL || x > 2147483647LL) {
    throw ValidationError("integer out of range for " + key + ": " + val);
  }
  return static_cast<int>(x);
}

inline std::uint64_t parse_u64(const std::string& key, const std::string& val) {
  std::size_t used = 0;
  std::uint64_t x = 0;
  try {
    x = std::stoull(val, &used);
  } catch (const std::exception&) {
    throw ValidationError("bad unsigned integer for " + key + ": " + val);
  }
  if (used != val.size() || val.front() == '-') {
    throw ValidationError("bad unsigned integer for " + key + ": " + val);
  }
  return x;
}

inline double parse_double(const std::string& key, const std::string& val) {
  std::size_t used = 0;
  double x = 0.0;
  try {
    x = std::stod(val, &used);
  } catch (const std::exception&) {
    throw ValidationError("bad number for " + key + ": " + val);
  }
  if (used != val.size()) throw ValidationError("bad number for " + key + ": " + val);
  return x;
}

inline bool parse_bool(const std::string& key, const std::string& val) {
  if (val == "true") return true;
  if (val == "false") return false;
  throw ValidationError("bad boolean for " + key + ": " + val + " (use true/false)");
}

inline std::vector<int> parse_int_list(const std::string& key, const std::string& val) {
  std::vector<int> out;
  std::size_t start = 0;
  while (start <= val.size()) {
    const std::size_t comma = val.find(',', start);
    const std::string part = trim(
        val.substr(start, comma == std::string::npos ? std::string::npos : comma - start));
    if (part.empty()) throw ValidationError("bad integer list for " + key + ": " + val);
    out.push_back(parse_int(key, part));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  if (out.empty()) throw ValidationError("bad integer list for " + key + ": " + val);
  return out;
}

}  // namespace detail

// Assigns one key. Unknown keys are rejected, never ignored: a typo must
// fail loudly instead of silently training with a default.
inline void apply_config_value(RunConfig& rc, const std::string& key,
                               const std::string& val) {
  using detail::parse_bool;
  using detail::parse_double;
  using detail::parse_int;
  using detail::parse_int_list;
  using detail::parse_u64;
  TrainConfig& t = rc.train;
  if (key == "alpha") {
    t.alpha = parse_double(key, val);
  } else if (key == "epsilon") {
    t.epsilon = parse_double(key, val);
  } else if (key == "gamma") {
    t.gamma = parse_double(key, val);
  } else if (key == "lambda") {
    t.lambda = parse_double(key, val);
  } else if (key == "learning_rate") {
    t.learning_rate = parse_double(key, val);
  } else if (key == "warmup_learning_rate") {
    t.warmup_learning_rate = parse_double(key, val);
  } else if (key == "batch_size") {
    t.batch_size = parse_int(key, val);
  } else if (key == "ppo_epochs") {
    t.ppo_epochs = parse_int(key, val);
  } else if (key == "minibatch_entries") {
    t.minibatch_entries = parse_int(key, val);
  } else if (key == "metric") {
    t.metric = metric_from_name(val);
  } else if (key == "mode") {
    t.mode = train_mode_from_name(val);
  } else if (key == "normalize_advantages") {
    t.normalize_advantages = parse_bool(key, val);
  } else if (key == "value_loss_coef") {
    t.value_loss_coef = parse_double(key, val);
  } else if (key == "entropy_coef") {
    t.entropy_coef = parse_double(key, val);
  } else if (key == "seed") {
    t.seed = parse_u64(key, val);
  } else if (key == "warmup_steps") {
    t.warmup_steps = parse_int(key, val);
  } else if (key == "max_turns") {
    t.rollout.max_turns = parse_int(key, val);
  } else if (key == "think_budget") {
    t.rollout.think_budget = parse_int(key, val);
  } else if (key == "search_budget") {
    t.rollout.search_budget = parse_int(key, val);
  } else if (key == "answer_budget") {
    t.rollout.answer_budget = parse_int(key, val);
  } else if (key == "retrieval_top_k") {
    t.rollout.retrieval_top_k = parse_int(key, val);
  } else if (key == "rollout_temperature") {
    t.rollout.temperature = parse_double(key, val);
  } else if (key == "disable_retrieval") {
    t.rollout.disable_retrieval = parse_bool(key, val);
  } else if (key == "embed_dim") {
    rc.embed_dim = parse_int(key, val);
  } else if (key == "context_window") {
    rc.context_window = parse_int(key, val);
  } else if (key == "hidden_dims") {
    rc.hidden_dims = parse_int_list(key, val);
  } else if (key == "activation") {
    rc.activation = activation_from_name(val);
  } else if (key == "world_seed") {
    rc.world_seed = parse_u64(key, val);
  } else if (key == "world_entities") {
    rc.world_entities = parse_int(key, val);
  } else if (key == "world_relations") {
    rc.world_relations = parse_int(key, val);
  } else if (key == "world_facts") {
    rc.world_facts = parse_int(key, val);
  } else if (key == "task_hops") {
    rc.task_hops = parse_int(key, val);
  } else if (key == "train_tasks") {
    rc.train_tasks = parse_int(key, val);
  } else if (key == "eval_tasks") {
    rc.eval_tasks = parse_int(key, val);
  } else if (key == "task_seed") {
    rc.task_seed = parse_u64(key, val);
  } else if (key == "eval_seed") {
    rc.eval_seed = parse_u64(key, val);
  } else if (key == "train_batches") {
    rc.train_batches = parse_int(key, val);
  } else if (key == "eval_every") {
    rc.eval_every = parse_int(key, val);
  } else if (key == "checkpoint_every") {
    rc.checkpoint_every = parse_int(key, val);
  } else if (key == "output_dir") {
    rc.output_dir = val;
  } else {
    throw ValidationError("unknown config key: " + key);
  }
}

// Parses the versioned key = value format. '#' starts a comment; keys may
// appear at most once per file.
inline RunConfig parse_config(std::istream& is) {
  std::string line;
  bool saw_header = false;
  RunConfig rc;
  std::map<std::string, bool> seen;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    const std::string t = detail::trim(line);
    if (t.empty()) continue;
    if (!saw_header) {
      if (t != kConfigHeader) {
        throw ValidationError("config must start with '" + std::string(kConfigHeader) +
                              "' (line " + std::to_string(line_no) + ")");
      }
      saw_header = true;
      continue;
    }
    const std::size_t eq = t.find('=');
    if (eq == std::string::npos) {
      throw ValidationError("expected key = value on line " + std::to_string(line_no));
    }
    const std::string key = detail::trim(t.substr(0, eq));
    const std::string val = detail::trim(t.substr(eq + 1));
    if (key.empty()) throw ValidationError("empty key on line " + std::to_string(line_no));
    if (seen[key]) {
      throw ValidationError("duplicate config key: " + key + " (line " +
                            std::to_string(line_no) + ")");
    }
    seen[key] = true;
    apply_config_value(rc, key, val);
  }
  if (!saw_header) throw ValidationError("empty config: missing header line");
  return rc;
}

// Canonical echo of every key with its resolved value. Written next to run
// outputs so a run is reproducible from its artifacts alone.
inline std::string render_config(const RunConfig& rc) {
  std::ostringstream os;
  char buf[64];
  const auto num = [&buf](double x) {
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return std::string(buf);
  };
  const TrainConfig& t = rc.train;
  os << kConfigHeader << "\n";
  os << "alpha = " << num(t.alpha) << "\n";
  os << "epsilon = " << num(t.epsilon) << "\n";
  os << "gamma = " << num(t.gamma) << "\n";
  os << "lambda = " << num(t.lambda) << "\n";
  os << "learning_rate = " << num(t.learning_rate) << "\n";
  os << "warmup_learning_rate = " << num(t.warmup_learning_rate) << "\n";
  os << "batch_size = " << t.batch_size << "\n";
  os << "ppo_epochs = " << t.ppo_epochs << "\n";
  os << "minibatch_entries = " << t.minibatch_entries << "\n";
  os << "metric = " << metric_name(t.metric) << "\n";
  os << "mode = " << train_mode_name(t.mode) << "\n";
  os << "normalize_advantages = " << (t.normalize_advantages ? "true" : "false") << "\n";
  os << "value_loss_coef = " << num(t.value_loss_coef) << "\n";
  os << "entropy_coef = " << num(t.entropy_coef) << "\n";
  os << "seed = " << t.seed << "\n";
  os << "warmup_steps = " << t.warmup_steps << "\n";
  os << "max_turns = " << t.rollout.max_turns << "\n";
  os << "think_budget = " << t.rollout.think_budget << "\n";
  os << "search_budget = " << t.rollout.search_budget << "\n";
  os << "answer_budget = " << t.rollout.answer_budget << "\n";
  os << "retrieval_top_k = " << t.rollout.retrieval_top_k << "\n";
  os << "rollout_temperature = " << num(t.rollout.temperature) << "\n";
  os << "disable_retrieval = " << (t.rollout.disable_retrieval ? "true" : "false") << "\n";
  os << "embed_dim = " << rc.embed_dim << "\n";
  os << "context_window = " << rc.context_window << "\n";
  os << "hidden_dims = ";
  for (std::size_t i = 0; i < rc.hidden_dims.size(); ++i) {
    os << (i ? "," : "") << rc.hidden_dims[i];
  }
  os << "\n";
  os << "activation = " << activation_name(rc.activation) << "\n";
  os << "world_seed = " << rc.world_seed << "\n";
  os << "world_entities = " << rc.world_entities << "\n";
  os << "world_relations = " << rc.world_relations << "\n";
  os << "world_facts = " << rc.world_facts << "\n";
  os << "task_hops = " << rc.task_hops << "\n";
  os << "train_tasks = " << rc.train_tasks << "\n";
  os << "eval_tasks = " << rc.eval_tasks << "\n";
  os << "task_seed = " << rc.task_seed << "\n";
  os << "eval_seed = " << rc.eval_seed << "\n";
  os << "train_batches = " << rc.train_batches << "\n";
  os << "eval_every = " << rc.eval_every << "\n";
  os << "checkpoint_every = " << rc.checkpoint_every << "\n";
  os << "output_dir = " << rc.output_dir << "\n";
  return os.str();
}

struct RunOutcome {
  EvalResult initial_eval;
  EvalResult final_eval;
  std::vector<StepMetrics> rows;
  int optimizer_steps = 0;
};

// Builds the world and tasks, initializes and warms up the policy, runs
// train_batches PPO batches (epoch-wrapped over the shuffled train set), and
// evaluates greedily on the held-out set before and after.
inline RunOutcome train_run(
    const RunConfig& rc, std::ostream* log = nullptr,
    const std::function<void(int, bool, const ParameterStore&, const OptimizerState&)>&
        checkpoint_cb = {},
    const std::function<void(const TrainContext&)>& setup_cb = {}) {
  rc.validate();
  KnowledgeBase kb =
      generate_world(rc.world_seed, rc.world_entities, rc.world_relations, rc.world_facts);
  Vocabulary vocab = build_vocabulary(kb);
  NetworkConfig ncfg;
  ncfg.vocab_size = vocab.size();
  ncfg.embed_dim = rc.embed_dim;
  ncfg.context_window = rc.context_window;
  ncfg.hidden_dims = rc.hidden_dims;
  ncfg.activation = rc.activation;
  TrainContext ctx(ncfg, std::move(vocab), std::move(kb));
  if (setup_cb) setup_cb(ctx);

  const std::vector<TaskInstance> train_tasks =
      generate_tasks(ctx.kb, rc.train_tasks, rc.task_hops, rc.task_seed);
  const std::vector<TaskInstance> eval_tasks =
      generate_tasks(ctx.kb, rc.eval_tasks, rc.task_hops, rc.eval_seed);

  ParameterStore store = ParameterStore::init(ncfg, rc.train.seed);
  run_warmup(ctx, rc.train, train_tasks, store.values);
  if (rc.train.mode == TrainMode::FrozenEvaluator) {
    ctx.frozen_eval_params = store.values;
  }
  OptimizerState opt = OptimizerState::init(store.values.size(), rc.train.learning_rate);

  RunOutcome out;
  out.initial_eval = evaluate(ctx, store.values, eval_tasks, rc.train.rollout,
                              Rng::mix(rc.train.seed, 0xE0ULL));
  if (log) {
    *log << "eval batch=0 mean_em=" << out.initial_eval.mean_em
         << " mean_f1=" << out.initial_eval.mean_f1
         << " mean_turns=" << out.initial_eval.mean_turns << "\n";
  }

  std::vector<std::size_t> order(train_tasks.size());
  std::size_t cursor = order.size();  // forces a shuffle on the first batch
  int epoch = 0;
  int global_step = 0;
  std::vector<TaskInstance> batch;
  for (int b = 0; b < rc.train_batches; ++b) {
    if (cursor >= order.size()) {
      for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
      Rng rng(Rng::mix(rc.train.seed, 0x4000ULL + static_cast<std::uint64_t>(epoch)));
      rng.shuffle(order);
      cursor = 0;
      ++epoch;
    }
    const std::size_t end =
        std::min(order.size(), cursor + static_cast<std::size_t>(rc.train.batch_size));
    batch.clear();
    for (std::size_t i = cursor; i < end; ++i) batch.push_back(train_tasks[order[i]]);
    cursor = end;
    train_one_batch(ctx, rc.train, batch, store.values, opt,
                    Rng::mix(rc.train.seed, 0x7000ULL + static_cast<std::uint64_t>(b)),
                    out.rows, global_step);
    if (rc.eval_every > 0 && (b + 1) % rc.eval_every == 0 && log) {
      const EvalResult ev = evaluate(ctx, store.values, eval_tasks, rc.train.rollout,
                                     Rng::mix(rc.train.seed, 0xE2ULL));
      *log << "eval batch=" << (b + 1) << " mean_em=" << ev.mean_em
           << " mean_f1=" << ev.mean_f1 << " mean_turns=" << ev.mean_turns << "\n";
    }
    if (checkpoint_cb && rc.checkpoint_every > 0 && (b + 1) % rc.checkpoint_every == 0) {
      checkpoint_cb(b + 1, false, store, opt);
    }
  }

  out.final_eval = evaluate(ctx, store.values, eval_tasks, rc.train.rollout,
                            Rng::mix(rc.train.seed, 0xE1ULL));
  out.optimizer_steps = global_step;
  if (log) {
    *log << "eval batch=" << rc.train_batches << " mean_em=" << out.final_eval.mean_em
         << " mean_f1=" << out.final_eval.mean_f1
         << " mean_turns=" << out.final_eval.mean_turns << " final=1\n";
  }
  if (checkpoint_cb) checkpoint_cb(rc.train_batches, true, store, opt);
  return out;
}

}  // namespace praise
