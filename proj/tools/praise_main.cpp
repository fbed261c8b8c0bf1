// Command-line surface for the prefix-reuse training stack: world generation,
// training runs, offline reward annotation, evaluation, and gradient checks.
//
// Exit codes: 0 success, 1 usage error, 2 validation error (no output files
// are created on this path), 3 runtime failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "praise/praise.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitRuntime = 3;

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return std::string(buf);
}

// Bad inputs (configs, schemas, incompatible files) are validation failures;
// I/O and internal errors are runtime failures.
int classify(const praise::Error& e) {
  if (dynamic_cast<const praise::IoError*>(&e)) return kExitRuntime;
  if (dynamic_cast<const praise::ShapeMismatchError*>(&e)) return kExitRuntime;
  if (dynamic_cast<const praise::GenerationStalledError*>(&e)) return kExitRuntime;
  return kExitValidation;
}

std::uint64_t parse_seed_value(const std::string& text, const std::string& origin) {
  try {
    return praise::detail::parse_u64(origin, text);
  } catch (const praise::ValidationError&) {
    throw praise::ValidationError(origin + " must be an unsigned integer, got '" +
                                  text + "'");
  }
}

// Seed precedence: --seed flag > --set seed=... > PRAISE_SEED > config file >
// default. The env var is applied before --set so explicit flags win.
void apply_env_seed(praise::RunConfig& rc) {
  const char* env = std::getenv("PRAISE_SEED");
  if (env == nullptr || *env == '\0') return;
  rc.train.seed = parse_seed_value(env, "PRAISE_SEED");
}

praise::RunConfig resolve_run_config(const std::string& config_path,
                                     const std::vector<std::string>& sets,
                                     const std::optional<std::uint64_t>& seed_flag,
                                     const std::string& output_dir_flag) {
  praise::RunConfig rc;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw praise::IoError("cannot open config file: " + config_path);
    rc = praise::parse_config(in);
  }
  apply_env_seed(rc);
  for (const std::string& kv : sets) {
    const std::size_t eq = kv.find('=');
    if (eq == std::string::npos) {
      throw praise::ValidationError("--set expects key=value, got '" + kv + "'");
    }
    praise::apply_config_value(rc, praise::detail::trim(kv.substr(0, eq)),
                               praise::detail::trim(kv.substr(eq + 1)));
  }
  if (seed_flag) rc.train.seed = *seed_flag;
  if (!output_dir_flag.empty()) rc.output_dir = output_dir_flag;
  return rc;
}

std::pair<praise::ParameterStore, praise::OptimizerState> load_checkpoint_file(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw praise::IoError("cannot open checkpoint: " + path);
  return praise::load_checkpoint(in);
}

praise::KnowledgeBase load_world_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw praise::IoError("cannot open world file: " + path);
  return praise::load_world(in);
}

void require_vocab_match(const praise::ParameterStore& store,
                         const praise::Vocabulary& vocab) {
  if (store.config.vocab_size != vocab.size()) {
    throw praise::ValidationError(
        "checkpoint vocab size " + std::to_string(store.config.vocab_size) +
        " does not match world vocab size " + std::to_string(vocab.size()));
  }
}

struct TrainArgs {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string output_dir;
};

int cmd_train(const TrainArgs& args) {
  praise::RunConfig rc =
      resolve_run_config(args.config_path, args.sets, args.seed, args.output_dir);
  rc.validate();
  if (rc.output_dir.empty()) {
    throw praise::ValidationError(
        "output_dir must be set (config key output_dir or --output-dir)");
  }

  // Everything that can reject the config runs before any file is created.
  const std::filesystem::path out_dir(rc.output_dir);
  praise::KnowledgeBase kb = praise::generate_world(rc.world_seed, rc.world_entities,
                                                    rc.world_relations, rc.world_facts);
  praise::generate_task(kb, rc.task_hops, rc.train.seed);

  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw praise::IoError("cannot create output directory: " + rc.output_dir);
  {
    std::ofstream cfg_out(out_dir / "config.txt");
    if (!cfg_out) throw praise::IoError("cannot write config echo");
    cfg_out << praise::render_config(rc);
  }
  {
    std::ofstream world_out(out_dir / "world.tsv");
    if (!world_out) throw praise::IoError("cannot write world file");
    praise::save_world(kb, world_out);
  }

  const auto checkpoint_cb = [&](int batch_index, bool final,
                                 const praise::ParameterStore& store,
                                 const praise::OptimizerState& opt) {
    char name[64];
    if (final) {
      std::snprintf(name, sizeof(name), "checkpoint_final.txt");
    } else {
      std::snprintf(name, sizeof(name), "checkpoint_%04d.txt", batch_index);
    }
    std::ofstream ck(out_dir / name);
    if (!ck) throw praise::IoError("cannot write checkpoint");
    praise::save_checkpoint(ck, store, opt);
  };

  praise::RunOutcome outcome = praise::train_run(rc, &std::cout, checkpoint_cb);

  {
    std::ofstream metrics(out_dir / "metrics.csv");
    if (!metrics) throw praise::IoError("cannot write metrics file");
    praise::write_metrics_csv(metrics, outcome.rows);
  }

  std::cout << "optimizer_steps=" << outcome.optimizer_steps << "\n";
  std::cout << "initial_eval em=" << fmt_double(outcome.initial_eval.mean_em)
            << " f1=" << fmt_double(outcome.initial_eval.mean_f1)
            << " turns=" << fmt_double(outcome.initial_eval.mean_turns) << "\n";
  std::cout << "final_eval em=" << fmt_double(outcome.final_eval.mean_em)
            << " f1=" << fmt_double(outcome.final_eval.mean_f1)
            << " turns=" << fmt_double(outcome.final_eval.mean_turns) << "\n";
  std::cout << "wrote " << (out_dir / "metrics.csv").string() << "\n";
  return kExitOk;
}

struct MakeWorldArgs {
  std::uint64_t seed = 7;
  int entities = 50;
  int relations = 5;
  int facts = 300;
  std::string out_path;
};

int cmd_make_world(const MakeWorldArgs& args) {
  praise::KnowledgeBase kb =
      praise::generate_world(args.seed, args.entities, args.relations, args.facts);
  std::ofstream out(args.out_path);
  if (!out) throw praise::IoError("cannot open output file: " + args.out_path);
  praise::save_world(kb, out);
  std::cout << "wrote " << args.out_path << " entities=" << args.entities
            << " relations=" << args.relations << " facts=" << kb.facts.size() << "\n";
  return kExitOk;
}

struct ScoreArgs {
  std::string in_path;
  std::string out_path;
  double alpha = 0.5;
  std::string metric = "f1";
  std::string gold_field = "gold_answer";
  std::string checkpoint_path;
  std::string world_path;
  int answer_budget = 8;
  double temperature = 0.0;
  std::uint64_t seed = 1;
};

int cmd_score_trajectories(const ScoreArgs& args) {
  const praise::ScoreMetric metric = praise::metric_from_name(args.metric);
  if (args.alpha < 0.0) throw praise::NegativeAlphaError("alpha must be >= 0");
  if (!args.checkpoint_path.empty() && args.world_path.empty()) {
    throw praise::ValidationError("--checkpoint requires --world");
  }

  std::optional<praise::ParameterStore> store;
  std::optional<praise::Vocabulary> vocab;
  std::optional<praise::Network> net;
  if (!args.checkpoint_path.empty()) {
    store = load_checkpoint_file(args.checkpoint_path).first;
    praise::KnowledgeBase kb = load_world_file(args.world_path);
    vocab = praise::build_vocabulary(kb);
    require_vocab_match(*store, *vocab);
    net.emplace(store->config);
  }

  std::ifstream in(args.in_path);
  if (!in) throw praise::IoError("cannot open input file: " + args.in_path);

  praise::RolloutOptions ropt;
  ropt.answer_budget = args.answer_budget;
  ropt.temperature = args.temperature;

  // All lines are parsed and scored before the output file is created, so a
  // schema violation anywhere leaves no partial output behind.
  std::vector<std::string> out_lines;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (praise::detail::trim(line).empty()) {
      throw praise::ValidationError("line " + std::to_string(line_no) +
                                    ": blank lines are not allowed");
    }
    try {
      nlohmann::json j = nlohmann::json::parse(line);
      if (args.gold_field != "gold_answer") {
        if (!j.is_object() || !j.contains(args.gold_field)) {
          throw praise::ValidationError("missing gold field '" + args.gold_field + "'");
        }
        j["gold_answer"] = j[args.gold_field];
        j.erase(args.gold_field);
      }
      praise::TrajectoryRecord rec = praise::record_from_json(j);

      const std::vector<praise::PrefixState> prefixes =
          praise::extract_prefixes(rec.trajectory);
      std::vector<std::string> answers;
      if (rec.prefix_answers) {
        answers = *rec.prefix_answers;
        if (answers.size() != prefixes.size()) {
          throw praise::ValidationError(
              "prefix_answers has " + std::to_string(answers.size()) +
              " entries, trajectory has " + std::to_string(prefixes.size()) +
              " prefixes");
        }
      } else if (net) {
        for (std::size_t t = 0; t < prefixes.size(); ++t) {
          praise::AnswerSample s = praise::answer_from_prefix(
              *net, store->values, *vocab, prefixes[t], ropt,
              praise::Rng::mix(args.seed,
                               0x5343ULL + 1000 * static_cast<std::uint64_t>(line_no) +
                                   static_cast<std::uint64_t>(t)));
          answers.push_back(s.answer_text);
        }
      } else {
        throw praise::ValidationError(
            "record has no prefix_answers and no --checkpoint was given");
      }

      const praise::PrefixScores scores = praise::compute_prefix_scores(
          answers, rec.trajectory.final_answer(), rec.gold_answer, metric);
      const praise::ProcessRewards proc =
          praise::compute_process_rewards(scores, args.alpha);
      const praise::SegmentMarkers markers = praise::segment_markers(rec.trajectory);
      const praise::TokenRewardVector trv =
          praise::assign_token_rewards(markers, proc, scores.u);
      const std::vector<praise::ReusedSample> reused =
          praise::build_reused_samples(prefixes, answers, scores);
      out_lines.push_back(
          praise::annotation_to_json(scores, proc, trv, reused).dump());
    } catch (const nlohmann::json::exception& e) {
      throw praise::ValidationError("line " + std::to_string(line_no) +
                                    ": invalid JSON: " + e.what());
    } catch (const praise::IoError&) {
      throw;
    } catch (const praise::Error& e) {
      throw praise::ValidationError("line " + std::to_string(line_no) + ": " +
                                    e.what());
    }
  }

  std::ofstream out(args.out_path);
  if (!out) throw praise::IoError("cannot open output file: " + args.out_path);
  for (const std::string& l : out_lines) out << l << "\n";
  std::cout << "annotated " << out_lines.size() << " records -> " << args.out_path
            << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string checkpoint_path;
  std::string world_path;
  int tasks = 200;
  int hops = 2;
  std::uint64_t seed = 13;
  int max_turns = 2;
  int think_budget = 2;
  int search_budget = 16;
  int answer_budget = 8;
  int top_k = 3;
  bool disable_retrieval = false;
  std::string dump_path;
};

int cmd_eval(const EvalArgs& args) {
  auto loaded = load_checkpoint_file(args.checkpoint_path);
  praise::KnowledgeBase kb = load_world_file(args.world_path);
  praise::Vocabulary vocab = praise::build_vocabulary(kb);
  require_vocab_match(loaded.first, vocab);
  if (args.tasks < 1) throw praise::ValidationError("--tasks must be >= 1");

  praise::RolloutOptions ropt;
  ropt.max_turns = args.max_turns;
  ropt.think_budget = args.think_budget;
  ropt.search_budget = args.search_budget;
  ropt.answer_budget = args.answer_budget;
  ropt.retrieval_top_k = args.top_k;
  ropt.temperature = 0.0;  // evaluate() decodes greedily regardless
  ropt.disable_retrieval = args.disable_retrieval;
  ropt.validate();

  const std::vector<praise::TaskInstance> tasks =
      praise::generate_tasks(kb, args.tasks, args.hops, args.seed);
  praise::TrainContext ctx(loaded.first.config, std::move(vocab), std::move(kb));
  std::vector<praise::TrajectoryRecord> dumped;
  praise::EvalResult r =
      praise::evaluate(ctx, loaded.first.values, tasks, ropt, args.seed,
                       args.dump_path.empty() ? nullptr : &dumped);
  if (!args.dump_path.empty()) {
    std::ofstream dump(args.dump_path);
    if (!dump) throw praise::IoError("cannot open dump file: " + args.dump_path);
    for (const praise::TrajectoryRecord& rec : dumped) {
      dump << praise::record_to_json(rec).dump() << "\n";
    }
  }
  std::cout << "tasks=" << tasks.size() << " mean_em=" << fmt_double(r.mean_em)
            << " mean_f1=" << fmt_double(r.mean_f1)
            << " mean_turns=" << fmt_double(r.mean_turns) << "\n";
  return kExitOk;
}

struct GradcheckArgs {
  std::uint64_t seed = 1;
  int seeds = 1;
  double tolerance = 1e-4;
  long long inject_fault = -1;
};

int cmd_gradcheck(const GradcheckArgs& args) {
  if (args.seeds < 1) throw praise::ValidationError("--seeds must be >= 1");
  if (args.tolerance <= 0.0) throw praise::ValidationError("--tolerance must be > 0");
  bool all_pass = true;
  for (int s = 0; s < args.seeds; ++s) {
    praise::GradCheckOptions opt;
    opt.seed = args.seed + static_cast<std::uint64_t>(s);
    opt.tolerance = args.tolerance;
    opt.inject_fault = args.inject_fault;
    const std::vector<praise::GradCheckCase> cases = praise::run_gradient_checks(opt);
    for (const praise::GradCheckCase& c : cases) {
      std::cout << "seed=" << opt.seed << " case=" << c.name
                << " max_rel_error=" << fmt_double(c.report.max_rel_error)
                << " coord=" << c.report.worst_index
                << " analytic=" << fmt_double(c.report.analytic_at_worst)
                << " numeric=" << fmt_double(c.report.numeric_at_worst) << " "
                << (c.report.pass ? "pass" : "FAIL") << "\n";
      all_pass = all_pass && c.report.pass;
    }
  }
  std::cout << (all_pass ? "gradcheck: PASS" : "gradcheck: FAIL") << "\n";
  return all_pass ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prefix-reuse search-policy training harness"};
  app.require_subcommand(1);

  TrainArgs train_args;
  CLI::App* train = app.add_subcommand(
      "train", "Train a policy from a config file and write metrics, checkpoints, "
               "and the resolved config into the output directory");
  train->add_option("--config", train_args.config_path,
                    "Run config file (praise-config v1); defaults used when omitted")
      ->capture_default_str();
  train->add_option("--set", train_args.sets,
                    "Override a config key, e.g. --set alpha=0.5 (repeatable; "
                    "applied after the config file and PRAISE_SEED)")
      ->capture_default_str();
  train->add_option("--seed", train_args.seed,
                    "Training seed; wins over --set seed=... and PRAISE_SEED");
  train->add_option("--output-dir", train_args.output_dir,
                    "Output directory; wins over the output_dir config key")
      ->capture_default_str();

  MakeWorldArgs mw_args;
  CLI::App* mw = app.add_subcommand("make-world",
                                    "Generate a knowledge base and write it to a file");
  mw->add_option("--seed", mw_args.seed, "World seed")->capture_default_str();
  mw->add_option("--entities", mw_args.entities, "Entity count")->capture_default_str();
  mw->add_option("--relations", mw_args.relations, "Relation count")
      ->capture_default_str();
  mw->add_option("--facts", mw_args.facts, "Fact count")->capture_default_str();
  mw->add_option("--out", mw_args.out_path, "Output world file")->required();

  ScoreArgs score_args;
  CLI::App* score = app.add_subcommand(
      "score-trajectories",
      "Read trajectory-record JSONL and write one reward-annotation JSON line per "
      "input line, order preserved");
  score->add_option("--in", score_args.in_path, "Input JSONL file")->required();
  score->add_option("--out", score_args.out_path, "Output JSONL file")->required();
  score->add_option("--alpha", score_args.alpha, "Process-reward weight (>= 0)")
      ->capture_default_str();
  score->add_option("--metric", score_args.metric, "Scoring metric: em or f1")
      ->capture_default_str();
  score->add_option("--gold-field", score_args.gold_field,
                    "JSON field holding the gold answer")
      ->capture_default_str();
  score->add_option("--checkpoint", score_args.checkpoint_path,
                    "Checkpoint used to generate prefix answers for records that "
                    "lack prefix_answers")
      ->capture_default_str();
  score->add_option("--world", score_args.world_path,
                    "World file matching the checkpoint (required with --checkpoint)")
      ->capture_default_str();
  score->add_option("--answer-budget", score_args.answer_budget,
                    "Content-token budget for generated prefix answers")
      ->capture_default_str();
  score->add_option("--temperature", score_args.temperature,
                    "Sampling temperature for generated prefix answers (0 = greedy)")
      ->capture_default_str();
  score->add_option("--seed", score_args.seed, "Seed for generated prefix answers")
      ->capture_default_str();

  EvalArgs eval_args;
  CLI::App* eval = app.add_subcommand(
      "eval", "Evaluate a checkpoint on generated tasks (search mode rollouts)");
  eval->add_option("--checkpoint", eval_args.checkpoint_path, "Checkpoint file")
      ->required();
  eval->add_option("--world", eval_args.world_path, "World file")->required();
  eval->add_option("--tasks", eval_args.tasks, "Number of evaluation tasks")
      ->capture_default_str();
  eval->add_option("--hops", eval_args.hops, "Chain length per task")
      ->capture_default_str();
  eval->add_option("--seed", eval_args.seed, "Task generation and rollout seed")
      ->capture_default_str();
  eval->add_option("--max-turns", eval_args.max_turns, "Search turns per rollout")
      ->capture_default_str();
  eval->add_option("--think-budget", eval_args.think_budget,
                   "Content-token budget per think segment")
      ->capture_default_str();
  eval->add_option("--search-budget", eval_args.search_budget,
                   "Content-token budget per search segment")
      ->capture_default_str();
  eval->add_option("--answer-budget", eval_args.answer_budget,
                   "Content-token budget for the answer segment")
      ->capture_default_str();
  eval->add_option("--top-k", eval_args.top_k, "Retrieved facts per search")
      ->capture_default_str();
  eval->add_flag("--disable-retrieval", eval_args.disable_retrieval,
                 "Replace every retrieval result with 'none'")
      ->capture_default_str();
  eval->add_option("--dump-trajectories", eval_args.dump_path,
                   "Also write each rollout as a trajectory-record JSON line")
      ->capture_default_str();

  GradcheckArgs gc_args;
  CLI::App* gc = app.add_subcommand(
      "gradcheck", "Check analytic training gradients against central finite "
                   "differences on small random networks");
  gc->add_option("--seed", gc_args.seed, "First seed")->capture_default_str();
  gc->add_option("--seeds", gc_args.seeds, "Number of consecutive seeds to run")
      ->capture_default_str();
  gc->add_option("--tolerance", gc_args.tolerance, "Max relative error to pass")
      ->capture_default_str();
  gc->add_option("--inject-fault", gc_args.inject_fault,
                 "Perturb this analytic-gradient coordinate to prove the check "
                 "detects faults (-1 = off)")
      ->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (train->parsed()) return cmd_train(train_args);
    if (mw->parsed()) return cmd_make_world(mw_args);
    if (score->parsed()) return cmd_score_trajectories(score_args);
    if (eval->parsed()) return cmd_eval(eval_args);
    if (gc->parsed()) return cmd_gradcheck(gc_args);
  } catch (const praise::Error& e) {
    const int code = classify(e);
    std::cerr << "error: " << e.what() << "\n";
    return code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}
