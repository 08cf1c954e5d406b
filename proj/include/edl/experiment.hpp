#pragma once

// Runs a configured experiment into its output directory and evaluates or
// analyzes checkpoints.
//
// A training run writes: config.cfg (resolved), metrics.jsonl, metrics.csv,
// reward_curve.csv, checkpoint.bin (latest, every epoch or iteration) and
// episodes.jsonl (greedy dialogs of the final agents).

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "edl/config.hpp"
#include "edl/evaluation.hpp"
#include "edl/io.hpp"
#include "edl/policy.hpp"

namespace edl {

struct RunOptions {
  std::optional<Checkpoint> resume;
  /// Stop once this many epochs/iterations are complete (-1: run to the end).
  int stop_after = -1;
};

struct RunSummary {
  int completed = 0;  // epochs or iterations
  double accuracy = 0.0;
  double mean_return = 0.0;
};

RunSummary run_experiment(const ExperimentConfig& cfg, const RunOptions& options = {});

/// Trained agents rebuilt from a checkpoint, usable as Questioner/Answerer.
class LoadedAgents {
 public:
  explicit LoadedAgents(const Checkpoint& ckpt);

  const ExperimentConfig& config() const { return cfg_; }
  const World& world() const { return world_; }
  const Vocabulary& vocab() const { return vocab_; }
  int rounds() const { return cfg_.rounds; }
  Mode mode() const { return cfg_.mode; }
  Questioner& questioner() { return *questioner_; }
  Answerer& answerer() { return *answerer_; }

  /// 1-based rank of the correct answer among all candidates: prediction
  /// pairs by final Q-value (tabular) or images by distance (neural).
  /// Ties count against the agent.
  int rank_of_truth(const EpisodeRecord& record) const;

 private:
  ExperimentConfig cfg_;
  World world_;
  Vocabulary vocab_;
  std::unique_ptr<TabularState> tables_;
  std::unique_ptr<NeuralAgents> nets_;
  std::unique_ptr<Questioner> questioner_;
  std::unique_ptr<Answerer> answerer_;
};

struct EvalReport {
  double accuracy = 0.0;
  double mean_return = 0.0;
  std::optional<RetrievalCurve> retrieval;  // neural only
  RankingMetrics ranking;
};

EvalReport evaluate_agents(LoadedAgents& agents);
/// Writes eval.json, plus retrieval.csv and plot_retrieval.py in neural mode.
void write_eval_outputs(const std::string& dir, const EvalReport& report);

struct AnalysisReport {
  ProtocolReport protocol;
  std::vector<bool> injective;  // per task
  double accuracy = 0.0;
};

AnalysisReport analyze_agents(LoadedAgents& agents);

}  // namespace edl
