#pragma once

// Neural agent pair, sampled/greedy dialog rollouts and the adapters that let
// evaluation and the REPL drive the networks through the policy interfaces.

#include <vector>

#include "edl/dialog.hpp"
#include "edl/nets.hpp"
#include "edl/policy.hpp"
#include "edl/rng.hpp"
#include "edl/world.hpp"

namespace edl {

struct NeuralAgents {
  QBotNet q;
  ABotNet a;

  explicit NeuralAgents(const NetDims& dims = {}) : q(dims), a(dims) {}
};

NetDims dims_for(const World& world, const Vocabulary& vocab, int embed, int hidden);

/// Block-wise argmax of y_hat on the task's two attributes.
PredictionPair pair_from_prediction(const World& world, const TaskSpec& task,
                                    const TargetVector& prediction);
/// Image whose target vector is nearest to the prediction (lowest id on ties).
int nearest_image(const World& world, const TargetVector& prediction);

struct NeuralEpisode {
  EpisodeRecord record;
  int k = 0;  // rounds 1..k were teacher-forced by the oracle
};

enum class Sampling { Sample, Greedy };

/// Rounds 1..k follow the oracle protocol, later rounds are drawn from the
/// policies (or taken greedily). Predictions y_hat_0..y_hat_T and per-round
/// rewards are always filled in.
NeuralEpisode rollout_neural(const NeuralAgents& agents, const World& world,
                             const Instance& instance, int rounds, int k,
                             ScriptedProtocol& oracle, Sampling sampling, Rng& rng);

class NeuralQuestioner final : public Questioner {
 public:
  NeuralQuestioner(const World& world, const QBotNet& net) : world_(&world), net_(&net) {}
  int ask(const QState& state) override;
  PredictionPair guess(const QState& state) override;
  std::optional<TargetVector> predict(const QState& state) override;

 private:
  const World* world_;
  const QBotNet* net_;
};

class NeuralAnswerer final : public Answerer {
 public:
  NeuralAnswerer(const World& world, const ABotNet& net) : world_(&world), net_(&net) {}
  int answer(const AState& state) override;

 private:
  const World* world_;
  const ABotNet* net_;
};

}  // namespace edl
