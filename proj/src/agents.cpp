#include "edl/agents.hpp"

#include <limits>
#include <stdexcept>

namespace edl {

NetDims dims_for(const World& world, const Vocabulary& vocab, int embed, int hidden) {
  NetDims d;
  d.q_vocab = vocab.q_size;
  d.a_vocab = vocab.a_size;
  d.tasks = world.num_tasks();
  d.target_dim = world.target_dim();
  d.embed = embed;
  d.hidden = hidden;
  return d;
}

PredictionPair pair_from_prediction(const World& world, const TaskSpec& task,
                                    const TargetVector& prediction) {
  const int nv = world.values_per_attribute();
  auto block_argmax = [&](int kind) {
    int best = 0;
    for (int v = 1; v < nv; ++v) {
      if (prediction[kind * nv + v] > prediction[kind * nv + best]) best = v;
    }
    return world.value(kind, best);
  };
  return world.pair(block_argmax(task.first), block_argmax(task.second));
}

int nearest_image(const World& world, const TargetVector& prediction) {
  int best = -1;
  double best_d = std::numeric_limits<double>::infinity();
  for (const auto& img : world.images()) {
    const double d = distance(world.target_vector(img), prediction);
    if (d < best_d) {
      best_d = d;
      best = img.id;
    }
  }
  return best;
}

NeuralEpisode rollout_neural(const NeuralAgents& agents, const World& world,
                             const Instance& instance, int rounds, int k,
                             ScriptedProtocol& oracle, Sampling sampling, Rng& rng) {
  if (k < 0 || k > rounds) throw std::invalid_argument("rollout_neural: k outside [0, T]");
  NeuralEpisode ep;
  ep.k = k;
  auto& rec = ep.record;
  rec.instance = instance;
  const auto y = world.target_vector(instance.image);
  QTape qt = q_begin(agents.q, instance.task.id);
  ATape at = a_begin(agents.a, y);
  QState qs = initial_q_state(instance.task, rounds);
  AState as = initial_a_state(instance.image, rounds);
  rec.predictions.push_back(qt.predictions.back());
  auto pick = [&](const Vec& probs) {
    return sampling == Sampling::Greedy ? greedy_symbol(probs) : sample_symbol(probs, rng);
  };
  for (int t = 0; t < rounds; ++t) {
    const bool forced = t < k;
    const int q_tok = forced ? oracle.ask(qs) : pick(qt.probs.back());
    const std::vector<Symbol> question{Symbol{Side::Q, q_tok}};
    as = pose_question(as, question);
    a_ask(agents.a, at, question);
    const int a_tok = forced ? oracle.answer(as) : pick(at.probs.back());
    const Round round = Round::single(q_tok, a_tok);
    a_complete(agents.a, at, round);
    q_extend(agents.q, qt, round);
    qs = advance_q_state(qs, round);
    as = advance_a_state(as, round);
    rec.rounds.push_back(round);
    rec.predictions.push_back(qt.predictions.back());
    rec.rewards.push_back(round_reward(y, rec.predictions[t], rec.predictions[t + 1]));
  }
  rec.final_guess = pair_from_prediction(world, instance.task, rec.predictions.back());
  rec.guessed_image = nearest_image(world, rec.predictions.back());
  return ep;
}

int NeuralQuestioner::ask(const QState& state) {
  return greedy_symbol(q_forward(*net_, state).question_probs);
}

PredictionPair NeuralQuestioner::guess(const QState& state) {
  return pair_from_prediction(*world_, state.prompt, q_forward(*net_, state).prediction);
}

std::optional<TargetVector> NeuralQuestioner::predict(const QState& state) {
  return q_forward(*net_, state).prediction;
}

int NeuralAnswerer::answer(const AState& state) {
  return greedy_symbol(a_forward(*net_, *world_, state).answer_probs);
}

}  // namespace edl
