#include "edl/experiment.hpp"

#include <filesystem>
#include <fstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "edl/agents.hpp"

namespace edl {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void write_reward_curve(const fs::path& path, const std::string& counter_name,
                        const std::vector<double>& curve) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << counter_name << ",mean_reward\n";
  for (std::size_t i = 0; i < curve.size(); ++i) out << fmt::format("{},{}\n", i, curve[i]);
}

void write_episodes(const fs::path& path, const std::vector<EpisodeRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (const auto& r : records) out << episode_to_json(r).dump() << '\n';
}

void check_resume(const Checkpoint& ckpt, const ExperimentConfig& cfg) {
  if (ckpt.mode != mode_name(cfg.mode)) {
    throw CheckpointError("checkpoint mode " + ckpt.mode + " does not match config mode " +
                          mode_name(cfg.mode));
  }
}

RunSummary run_tabular(const ExperimentConfig& cfg, const RunOptions& opt) {
  const World world = make_world(cfg);
  const TabularGame game{&world, make_vocab(cfg), cfg.rounds};
  auto schedule = make_schedule(cfg);
  const auto eps = make_eps_config(cfg);
  TabularState state{QTable(cfg.table_init), QTable(cfg.table_init), {}, 0};
  if (opt.resume) {
    check_resume(*opt.resume, cfg);
    state = tabular_from_checkpoint(*opt.resume);
  }
  if (opt.stop_after >= 0) schedule.max_iterations = std::min(schedule.max_iterations, opt.stop_after);
  const fs::path out(cfg.out);
  MetricsLog log(cfg.out, static_cast<std::size_t>(state.iteration));
  state = train_alternating(game, schedule, eps, std::move(state), [&](const TabularState& s) {
    const double r = s.reward_curve.back();
    nlohmann::ordered_json row;
    row["iteration"] = s.iteration - 1;
    row["updated"] = updated_side(schedule, s.iteration - 1) == Side::Q ? "q" : "a";
    row["mean_reward"] = r;
    row["accuracy"] = (r + 1.0) / 2.0;
    log.append(row);
    save_checkpoint((out / "checkpoint.bin").string(), tabular_checkpoint(cfg, s));
    spdlog::info("iteration {} greedy mean reward {:.4f}", s.iteration - 1, r);
  });
  write_reward_curve(out / "reward_curve.csv", "iteration", state.reward_curve);
  TableQuestioner q(game, state.q_table);
  TableAnswerer a(game, state.a_table);
  const auto instances = world.enumerate_instances();
  const auto recs = play_all(world, q, a, instances, cfg.rounds);
  write_episodes(out / "episodes.jsonl", recs);
  RunSummary sum;
  sum.completed = state.iteration;
  sum.accuracy = task_accuracy(world, recs);
  sum.mean_return = 2.0 * sum.accuracy - 1.0;
  return sum;
}

RunSummary run_neural(const ExperimentConfig& cfg, const RunOptions& opt) {
  const World world = make_world(cfg);
  const Vocabulary vocab = make_vocab(cfg);
  const TrainConfig tc = make_train_config(cfg);
  NeuralRun run = opt.resume ? neural_from_checkpoint(*opt.resume, world, vocab)
                             : init_run(tc, world, vocab);
  if (opt.resume) check_resume(*opt.resume, cfg);
  const fs::path out(cfg.out);
  MetricsLog log(cfg.out, static_cast<std::size_t>(run.epoch));
  const auto corpus = generate_oracle_corpus(world, vocab, tc.rounds, tc.seed);
  int end = tc.sl_epochs + tc.rl_epochs;
  if (opt.stop_after >= 0) end = std::min(end, opt.stop_after);
  while (run.epoch < end) {
    const auto m = run_epoch(tc, world, vocab, corpus, run);
    log.append(epoch_metrics_to_json(m));
    save_checkpoint((out / "checkpoint.bin").string(), neural_checkpoint(cfg, run));
    spdlog::info("epoch {} {} k={} return={:.4f} acc={:.4f} prank={:.2f}", m.epoch, m.phase,
                 m.k, m.mean_return, m.accuracy, m.percentile_rank);
  }
  std::vector<double> curve;
  {
    std::ifstream in(out / "metrics.jsonl");
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty()) curve.push_back(nlohmann::json::parse(line).at("mean_return").get<double>());
    }
  }
  write_reward_curve(out / "reward_curve.csv", "epoch", curve);
  auto oracle = ScriptedProtocol::oracle(world, vocab);
  Rng unused(0);
  std::vector<EpisodeRecord> recs;
  for (const auto& inst : world.enumerate_instances()) {
    recs.push_back(rollout_neural(run.agents, world, inst, tc.rounds, 0, oracle,
                                  Sampling::Greedy, unused).record);
  }
  write_episodes(out / "episodes.jsonl", recs);
  RunSummary sum;
  sum.completed = run.epoch;
  sum.accuracy = task_accuracy(world, recs);
  for (const auto& r : recs) sum.mean_return += episode_return(r.rewards);
  sum.mean_return /= static_cast<double>(recs.size());
  return sum;
}

}  // namespace

RunSummary run_experiment(const ExperimentConfig& raw, const RunOptions& options) {
  validate(raw);
  const auto cfg = resolve(raw);
  fs::create_directories(cfg.out);
  write_text(fs::path(cfg.out) / "config.cfg", config_to_text(cfg));
  return cfg.mode == Mode::Tabular ? run_tabular(cfg, options) : run_neural(cfg, options);
}

LoadedAgents::LoadedAgents(const Checkpoint& ckpt)
    : cfg_(resolve(checkpoint_config(ckpt))), world_(make_world(cfg_)), vocab_(make_vocab(cfg_)) {
  validate(cfg_);
  if (cfg_.mode == Mode::Tabular) {
    tables_ = std::make_unique<TabularState>(tabular_from_checkpoint(ckpt));
    const TabularGame game{&world_, vocab_, cfg_.rounds};
    questioner_ = std::make_unique<TableQuestioner>(game, tables_->q_table);
    answerer_ = std::make_unique<TableAnswerer>(game, tables_->a_table);
  } else {
    nets_ = std::make_unique<NeuralAgents>(neural_from_checkpoint(ckpt, world_, vocab_).agents);
    questioner_ = std::make_unique<NeuralQuestioner>(world_, nets_->q);
    answerer_ = std::make_unique<NeuralAnswerer>(world_, nets_->a);
  }
}

int LoadedAgents::rank_of_truth(const EpisodeRecord& record) const {
  int better = 0;
  int tied = 0;
  if (cfg_.mode == Mode::Tabular) {
    QState qs = initial_q_state(record.instance.task, cfg_.rounds);
    for (const auto& r : record.rounds) qs = advance_q_state(qs, r);
    const auto key = q_state_key(qs, vocab_);
    const int truth = world_.correct_pair(record.instance).index;
    const double v = tables_->q_table.value(key, truth);
    for (int p = 0; p < world_.num_prediction_pairs(); ++p) {
      if (p == truth) continue;
      const double o = tables_->q_table.value(key, p);
      better += o > v;
      tied += o == v;
    }
  } else {
    const auto& pred = record.predictions.back();
    const double d = distance(world_.target_vector(record.instance.image), pred);
    for (const auto& img : world_.images()) {
      if (img == record.instance.image) continue;
      const double o = distance(world_.target_vector(img), pred);
      better += o < d;
      tied += o == d;
    }
  }
  return 1 + better + tied;
}

EvalReport evaluate_agents(LoadedAgents& agents) {
  const auto& world = agents.world();
  const auto instances = world.enumerate_instances();
  auto recs = play_all(world, agents.questioner(), agents.answerer(), instances, agents.rounds());
  EvalReport rep;
  rep.accuracy = task_accuracy(world, recs);
  for (const auto& r : recs) rep.mean_return += episode_return(r.rewards);
  rep.mean_return /= static_cast<double>(recs.size());
  if (agents.mode() == Mode::Neural) {
    rep.retrieval = retrieval_curve(world, recs, world.images());
  }
  std::vector<int> ranks;
  for (const auto& r : recs) ranks.push_back(agents.rank_of_truth(r));
  const std::vector<int> ks{1, 5, 10};
  rep.ranking = ranking_metrics(ranks, ks);
  return rep;
}

void write_eval_outputs(const std::string& dir, const EvalReport& report) {
  fs::create_directories(dir);
  nlohmann::ordered_json j;
  j["accuracy"] = report.accuracy;
  j["mean_return"] = report.mean_return;
  j["mrr"] = report.ranking.mrr;
  j["mean_rank"] = report.ranking.mean_rank;
  for (const auto& [k, v] : report.ranking.recall_at) j[fmt::format("recall@{}", k)] = v;
  if (report.retrieval) {
    auto rounds = nlohmann::ordered_json::array();
    for (const auto& p : report.retrieval->rounds) rounds.push_back({p.mean, p.std_error});
    j["retrieval"] = rounds;
    write_retrieval_csv((fs::path(dir) / "retrieval.csv").string(), *report.retrieval);
    write_text(fs::path(dir) / "plot_retrieval.py", retrieval_plot_script("retrieval.csv"));
  }
  write_text(fs::path(dir) / "eval.json", j.dump(2) + "\n");
}

AnalysisReport analyze_agents(LoadedAgents& agents) {
  const auto& world = agents.world();
  const auto instances = world.enumerate_instances();
  const auto recs =
      play_all(world, agents.questioner(), agents.answerer(), instances, agents.rounds());
  AnalysisReport rep;
  rep.protocol = protocol_report(world, agents.vocab(), recs);
  rep.injective = answer_map_injective(world, recs);
  rep.accuracy = task_accuracy(world, recs);
  return rep;
}

}  // namespace edl
