#include "edl/policy.hpp"

#include <stdexcept>

namespace edl {

EpisodeRecord play_dialog(const World& world, const Instance& instance,
                          Questioner& q, Answerer& a, int rounds) {
  EpisodeRecord rec;
  rec.instance = instance;
  QState qs = initial_q_state(instance.task, rounds);
  AState as = initial_a_state(instance.image, rounds);
  const TargetVector y_gt = world.target_vector(instance.image);

  auto y0 = q.predict(qs);
  if (y0) rec.predictions.push_back(*y0);
  for (int t = 0; t < rounds; ++t) {
    const int q_tok = q.ask(qs);
    as = pose_question(as, {Symbol{Side::Q, q_tok}});
    const int a_tok = a.answer(as);
    const Round round = Round::single(q_tok, a_tok);
    qs = advance_q_state(qs, round);
    as = advance_a_state(as, round);
    rec.rounds.push_back(round);
    if (y0) {
      rec.predictions.push_back(q.predict(qs).value());
      const auto& prev = rec.predictions[rec.predictions.size() - 2];
      rec.rewards.push_back(round_reward(y_gt, prev, rec.predictions.back()));
    }
  }
  rec.final_guess = q.guess(qs);
  if (!y0) {
    rec.rewards.assign(rounds, 0.0);
    rec.rewards.back() = world.check_prediction(instance, *rec.final_guess) ? 1.0 : -1.0;
  }
  return rec;
}

ScriptedProtocol::ScriptedProtocol(const World& world, const Vocabulary& vocab,
                                   std::vector<int> symbol_for_attribute,
                                   std::vector<std::vector<int>> answer_for_value)
    : world_(&world),
      vocab_(vocab),
      symbol_for_attribute_(std::move(symbol_for_attribute)),
      answer_for_value_(std::move(answer_for_value)) {
  const int n_attr = world.num_attributes();
  const int n_val = world.values_per_attribute();
  if (static_cast<int>(symbol_for_attribute_.size()) != n_attr ||
      static_cast<int>(answer_for_value_.size()) != n_attr) {
    throw std::invalid_argument("scripted protocol: one entry per attribute needed");
  }
  attribute_for_symbol_.assign(vocab.q_size, -1);
  for (int k = 0; k < n_attr; ++k) {
    const int s = symbol_for_attribute_[k];
    vocab.validate(Symbol{Side::Q, s});
    if (attribute_for_symbol_[s] != -1) {
      throw std::invalid_argument("scripted protocol: question symbols must be distinct");
    }
    attribute_for_symbol_[s] = k;
  }
  value_for_answer_.assign(n_attr, std::vector<int>(vocab.a_size, -1));
  for (int k = 0; k < n_attr; ++k) {
    if (static_cast<int>(answer_for_value_[k].size()) != n_val) {
      throw std::invalid_argument("scripted protocol: one answer per value needed");
    }
    for (int v = 0; v < n_val; ++v) {
      const int s = answer_for_value_[k][v];
      vocab.validate(Symbol{Side::A, s});
      if (value_for_answer_[k][s] != -1) {
        throw std::invalid_argument("scripted protocol: answers must be distinct per attribute");
      }
      value_for_answer_[k][s] = v;
    }
  }
}

ScriptedProtocol ScriptedProtocol::oracle(const World& world, const Vocabulary& vocab) {
  std::vector<int> symbols(world.num_attributes());
  std::vector<std::vector<int>> answers(world.num_attributes());
  for (int k = 0; k < world.num_attributes(); ++k) {
    symbols[k] = k;
    for (int v = 0; v < world.values_per_attribute(); ++v) answers[k].push_back(v);
  }
  return ScriptedProtocol(world, vocab, std::move(symbols), std::move(answers));
}

int ScriptedProtocol::attribute_for_round(const TaskSpec& task, int round) const {
  std::vector<int> order{task.first, task.second};
  for (int k = 0; k < world_->num_attributes(); ++k) {
    if (k != task.first && k != task.second) order.push_back(k);
  }
  return order[round % order.size()];
}

int ScriptedProtocol::ask(const QState& state) {
  const int round = static_cast<int>(state.history.size());
  return symbol_for_attribute_[attribute_for_round(state.prompt, round)];
}

std::vector<int> ScriptedProtocol::decode(const QState& state) const {
  std::vector<int> known(world_->num_attributes(), -1);
  for (const auto& r : state.history) {
    const int k = attribute_for_symbol_[r.q_token()];
    if (k < 0) continue;
    const int v = value_for_answer_[k][r.a_token()];
    if (v >= 0) known[k] = v;
  }
  return known;
}

PredictionPair ScriptedProtocol::guess(const QState& state) {
  const auto known = decode(state);
  const int f = state.prompt.first;
  const int s = state.prompt.second;
  return world_->pair(world_->value(f, std::max(known[f], 0)),
                      world_->value(s, std::max(known[s], 0)));
}

std::optional<TargetVector> ScriptedProtocol::predict(const QState& state) {
  const auto known = decode(state);
  const int n_val = world_->values_per_attribute();
  TargetVector y(world_->target_dim(), 0.0);
  for (int k = 0; k < world_->num_attributes(); ++k) {
    for (int v = 0; v < n_val; ++v) {
      y[k * n_val + v] = known[k] < 0 ? 1.0 / n_val : (known[k] == v ? 1.0 : 0.0);
    }
  }
  return y;
}

int ScriptedProtocol::answer(const AState& state) {
  if (!state.pending_question) {
    throw std::logic_error("scripted answerer: no pending question");
  }
  const int k = attribute_for_symbol_[state.pending_question->at(0).token];
  if (k < 0) return 0;
  return answer_for_value_[k][state.image.values[k]];
}

int RandomGuesser::ask(const QState&) { return rng_.below(vocab_.q_size); }

PredictionPair RandomGuesser::guess(const QState&) {
  return world_->pair_from_index(rng_.below(world_->num_prediction_pairs()));
}

}  // namespace edl
