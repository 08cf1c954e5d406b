#pragma once

// Supervised pretraining on oracle dialogs followed by REINFORCE with a
// supervised regressor, curriculum annealing, Adam and ablation freezes.

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "edl/agents.hpp"
#include "edl/nets.hpp"
#include "edl/rng.hpp"
#include "edl/world.hpp"

namespace edl {

struct CurriculumSchedule {
  int k_start = 9;
  int anneal_every = 1;

  /// max(0, k_start - rl_epoch / anneal_every)
  int k_for_epoch(int rl_epoch) const;
};

struct AblationFlags {
  bool freeze_q = false;
  bool freeze_a = false;
  bool freeze_f = false;
  bool multi_task = false;
  double sl_weight = 1.0;
  double rl_weight = 10.0;

  void validate() const;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double clamp = 5.0;
};

struct AdamMoments {
  Vec m;
  Vec v;
  std::int64_t step = 0;
};

struct AdamState {
  AdamConfig cfg;
  std::map<std::string, AdamMoments> moments;  // by block name
};

/// Clamps every gradient coordinate to [-bound, bound].
void clamp_gradient(ParamBlock& block, double bound);

/// Non-finite check (throws naming the block), clamp, bias-corrected Adam
/// step, then zeroes the gradient.
void adam_update(AdamState& state, ParamBlock& block);

enum class ParamGroup { Q, F, A };
/// "q." blocks are theta_Q, "f." blocks theta_f, "a." blocks theta_A.
ParamGroup group_of(const ParamBlock& block);
bool is_frozen(const AblationFlags& flags, const ParamBlock& block);

struct CorpusDialog {
  Instance instance;
  std::vector<Round> rounds;
};

struct OracleCorpus {
  std::vector<CorpusDialog> dialogs;
};

/// One scripted dialog per instance (Q symbol k asks attribute k, the answer
/// is the value index), in an order shuffled by the seed.
OracleCorpus generate_oracle_corpus(const World& world, const Vocabulary& vocab, int rounds,
                                    std::uint64_t protocol_seed);

struct StepStats {
  double sl_loss = 0.0;     // nll_q + nll_a + regression (means)
  double nll_q = 0.0;
  double nll_a = 0.0;
  double regression = 0.0;  // mean squared error per prediction
  double surrogate = 0.0;   // -sum_t r_t (log pi_Q + log pi_A), batch mean
  double mean_return = 0.0;
  int sampled_rounds = 0;
  bool skipped = false;
};

/// Teacher-forced MLE on both agents plus regression, one Adam step on the
/// blocks not frozen by `flags`. Throws on an empty batch.
StepStats supervised_step(NeuralAgents& agents, const World& world,
                          std::span<const CorpusDialog> batch, AdamState& adam,
                          const AblationFlags& flags = {});

/// Policy-gradient step over sampled rounds (reward-weighted log-probs),
/// teacher-forced NLL on curriculum rounds, regression on every prediction.
/// With multi_task the supervised loss of `sl_batch` is added with sl_weight
/// and the policy term is scaled by rl_weight. One Adam step.
StepStats reinforce_step(NeuralAgents& agents, const World& world,
                         std::span<const NeuralEpisode> episodes, AdamState& adam,
                         const AblationFlags& flags,
                         std::span<const CorpusDialog> sl_batch = {});

struct TrainConfig {
  int rounds = 10;
  int embed_dim = 16;
  int hidden_dim = 32;
  double init_scale = 0.3;
  int batch_size = 32;
  int sl_epochs = 200;
  int rl_epochs = 20;
  double corpus_fraction = 1.0;
  CurriculumSchedule curriculum;
  AdamConfig optim;
  AblationFlags ablation;
  std::uint64_t seed = 1;
};

struct EpochMetrics {
  int epoch = 0;
  std::string phase;  // "sl" or "rl"
  int k = 0;
  double mean_return = 0.0;      // greedy, all instances
  double accuracy = 0.0;         // greedy, all instances
  double percentile_rank = 0.0;  // greedy, final round
  StepStats train;               // batch means over the epoch
};

struct NeuralRun {
  NeuralAgents agents;
  AdamState adam;
  Rng rng;
  int epoch = 0;  // epochs completed
};

NeuralRun init_run(const TrainConfig& cfg, const World& world, const Vocabulary& vocab);

/// Dialogs available for supervision: the first ceil(fraction * N) of the corpus.
std::span<const CorpusDialog> corpus_subset(const OracleCorpus& corpus, double fraction);

/// Greedy play over every instance.
EpochMetrics evaluate_greedy(const NeuralAgents& agents, const World& world, int rounds);

/// Runs the next epoch (SL while epoch < sl_epochs, then RL).
EpochMetrics run_epoch(const TrainConfig& cfg, const World& world, const Vocabulary& vocab,
                       const OracleCorpus& corpus, NeuralRun& run);

void train(const TrainConfig& cfg, const World& world, const Vocabulary& vocab,
           NeuralRun& run, const std::function<void(const EpochMetrics&, const NeuralRun&)>& on_epoch = {});

}  // namespace edl
