#include "edl/tabular.hpp"

#include <stdexcept>

namespace edl {
namespace {

constexpr std::uint64_t kLengthRadix = 16;

std::uint64_t history_code(std::uint64_t seed, const std::vector<Round>& history,
                           const Vocabulary& vocab) {
  const auto per_round = static_cast<std::uint64_t>(vocab.q_size * vocab.a_size);
  std::uint64_t h = seed;
  for (const auto& r : history) {
    h = h * per_round + static_cast<std::uint64_t>(r.q_token() * vocab.a_size + r.a_token());
  }
  return h;
}

Instance instance_of(const World& world, const EpisodeRecord& ep) {
  return world.instance(ep.instance.image.id, ep.instance.task.id);
}

}  // namespace

StateKey q_state_key(const QState& state, const Vocabulary& vocab) {
  if (state.history.size() >= kLengthRadix) {
    throw std::out_of_range("q_state_key: history too long");
  }
  const auto h = history_code(static_cast<std::uint64_t>(state.prompt.id),
                              state.history, vocab);
  return StateKey{h * kLengthRadix + state.history.size()};
}

StateKey a_state_key(const AState& state, const Vocabulary& vocab) {
  if (state.history.size() >= kLengthRadix) {
    throw std::out_of_range("a_state_key: history too long");
  }
  auto h = history_code(static_cast<std::uint64_t>(state.image.id),
                        state.history, vocab);
  const auto pending = state.pending_question
                           ? static_cast<std::uint64_t>(state.pending_question->at(0).token + 1)
                           : 0;
  h = h * static_cast<std::uint64_t>(vocab.q_size + 1) + pending;
  return StateKey{h * kLengthRadix + state.history.size()};
}

const std::vector<QEntry>* QTable::find(StateKey key) const {
  auto it = rows_.find(key.value);
  return it == rows_.end() ? nullptr : &it->second;
}

std::vector<QEntry>& QTable::row(StateKey key, int n_actions) {
  auto [it, inserted] = rows_.try_emplace(key.value);
  if (inserted) {
    it->second.assign(n_actions, QEntry{init_value_, 0});
  } else if (static_cast<int>(it->second.size()) != n_actions) {
    throw std::logic_error("q-table: action count changed for a state");
  }
  return it->second;
}

double QTable::value(StateKey key, int action) const {
  const auto* r = find(key);
  return r ? r->at(action).q : init_value_;
}

int QTable::argmax(StateKey key, int n_actions) const {
  const auto* r = find(key);
  if (!r) return 0;
  int best = 0;
  for (int i = 1; i < n_actions; ++i) {
    if ((*r)[i].q > (*r)[best].q) best = i;
  }
  return best;
}

int select_action(const QTable& table, StateKey state, int n_actions,
                  const EpsGreedyConfig& cfg, ActionMode mode, Rng& rng) {
  if (n_actions < 1) throw std::invalid_argument("select_action: no actions");
  const int greedy = table.argmax(state, n_actions);
  if (mode == ActionMode::Greedy || n_actions == 1) return greedy;
  if (rng.uniform() < cfg.greedy_prob) return greedy;
  const int other = rng.below(n_actions - 1);
  return other < greedy ? other : other + 1;
}

EpisodeRecord rollout_tabular(const TabularGame& game, const Instance& instance,
                              const QTable& q_table, const QTable& a_table,
                              const EpsGreedyConfig& cfg, ActionMode mode, Rng& rng) {
  const auto& vocab = game.vocab;
  EpisodeRecord rec;
  rec.instance = instance;
  QState qs = initial_q_state(instance.task, game.rounds);
  AState as = initial_a_state(instance.image, game.rounds);
  for (int t = 0; t < game.rounds; ++t) {
    const int q = select_action(q_table, q_state_key(qs, vocab), vocab.q_size, cfg, mode, rng);
    as = pose_question(as, {Symbol{Side::Q, q}});
    const int a = select_action(a_table, a_state_key(as, vocab), vocab.a_size, cfg, mode, rng);
    const Round round = Round::single(q, a);
    qs = advance_q_state(qs, round);
    as = advance_a_state(as, round);
    rec.rounds.push_back(round);
  }
  const int pair = select_action(q_table, q_state_key(qs, vocab),
                                 game.world->num_prediction_pairs(), cfg, mode, rng);
  rec.final_guess = game.world->pair_from_index(pair);
  rec.rewards.assign(game.rounds, 0.0);
  rec.rewards.back() = game.world->check_prediction(instance, *rec.final_guess) ? 1.0 : -1.0;
  return rec;
}

std::vector<TableStep> episode_steps(const TabularGame& game,
                                     const EpisodeRecord& ep, Side side) {
  if (static_cast<int>(ep.rounds.size()) != game.rounds || !ep.final_guess) {
    throw std::invalid_argument("episode_steps: incomplete tabular episode");
  }
  const auto& vocab = game.vocab;
  const Instance inst = instance_of(*game.world, ep);
  std::vector<TableStep> steps;
  QState qs = initial_q_state(inst.task, game.rounds);
  AState as = initial_a_state(inst.image, game.rounds);
  for (const auto& round : ep.rounds) {
    if (side == Side::Q) {
      steps.push_back({q_state_key(qs, vocab), round.q_token(), vocab.q_size});
    }
    as = pose_question(as, round.question);
    if (side == Side::A) {
      steps.push_back({a_state_key(as, vocab), round.a_token(), vocab.a_size});
    }
    qs = advance_q_state(qs, round);
    as = advance_a_state(as, round);
  }
  if (side == Side::Q) {
    steps.push_back({q_state_key(qs, vocab), ep.final_guess->index,
                     game.world->num_prediction_pairs()});
  }
  return steps;
}

void mc_update(QTable& table, const TabularGame& game, const EpisodeRecord& ep,
               Side side) {
  const double ret = episode_return(ep.rewards);
  for (const auto& step : episode_steps(game, ep, side)) {
    auto& e = table.row(step.state, step.n_actions).at(step.action);
    e.visits += 1;
    e.q += (ret - e.q) / static_cast<double>(e.visits);
  }
}

Side updated_side(const AlternatingSchedule& schedule, int iteration) {
  const bool first = iteration % 2 == 0;
  if (schedule.first_updated == Side::Q) return first ? Side::Q : Side::A;
  return first ? Side::A : Side::Q;
}

double greedy_mean_reward(const TabularGame& game, const QTable& q_table,
                          const QTable& a_table) {
  const EpsGreedyConfig unused;
  Rng rng(0);
  double total = 0.0;
  const auto instances = game.world->enumerate_instances();
  for (const auto& inst : instances) {
    const auto rec = rollout_tabular(game, inst, q_table, a_table, unused,
                                     ActionMode::Greedy, rng);
    total += episode_return(rec.rewards);
  }
  return total / static_cast<double>(instances.size());
}

TabularState train_alternating(const TabularGame& game,
                               const AlternatingSchedule& schedule,
                               const EpsGreedyConfig& cfg, TabularState state,
                               const std::function<void(const TabularState&)>& on_iteration) {
  if (schedule.episodes_per_iteration <= 0) {
    throw std::invalid_argument("episodes_per_iteration must be positive");
  }
  if (!(cfg.greedy_prob > 0.0 && cfg.greedy_prob <= 1.0)) {
    throw std::invalid_argument("greedy_prob must lie in (0, 1]");
  }
  const int n_instances = game.world->num_instances();
  while (state.iteration < schedule.max_iterations) {
    if (!state.reward_curve.empty() && state.reward_curve.back() >= 1.0) break;
    const Side side = updated_side(schedule, state.iteration);
    QTable& learner = side == Side::Q ? state.q_table : state.a_table;
    for (int e = 0; e < schedule.episodes_per_iteration; ++e) {
      Rng rng = Rng::stream(cfg.rng_seed, {static_cast<std::uint64_t>(state.iteration),
                                           static_cast<std::uint64_t>(e)});
      const Instance inst = game.world->instance(rng.below(n_instances));
      const auto ep = rollout_tabular(game, inst, state.q_table, state.a_table, cfg,
                                      ActionMode::Explore, rng);
      mc_update(learner, game, ep, side);
    }
    state.reward_curve.push_back(greedy_mean_reward(game, state.q_table, state.a_table));
    state.iteration += 1;
    if (on_iteration) on_iteration(state);
  }
  return state;
}

int TableQuestioner::ask(const QState& state) {
  return table_->argmax(q_state_key(state, game_.vocab), game_.vocab.q_size);
}

PredictionPair TableQuestioner::guess(const QState& state) {
  return game_.world->pair_from_index(
      table_->argmax(q_state_key(state, game_.vocab), game_.world->num_prediction_pairs()));
}

int TableAnswerer::answer(const AState& state) {
  return table_->argmax(a_state_key(state, game_.vocab), game_.vocab.a_size);
}

std::pair<QTable, QTable> tables_from_protocol(const TabularGame& game,
                                               ScriptedProtocol& protocol) {
  const auto& vocab = game.vocab;
  const World& world = *game.world;
  QTable q_table;
  QTable a_table;
  auto mark = [](std::vector<QEntry>& row, int action) {
    row.at(action) = QEntry{1.0, 1};
  };
  // Every history of every length up to T, as token sequences.
  std::vector<std::vector<Round>> histories{{}};
  for (std::size_t begin = 0; begin < histories.size(); ++begin) {
    if (static_cast<int>(histories[begin].size()) == game.rounds) continue;
    for (int q = 0; q < vocab.q_size; ++q) {
      for (int a = 0; a < vocab.a_size; ++a) {
        auto h = histories[begin];
        h.push_back(Round::single(q, a));
        histories.push_back(std::move(h));
      }
    }
  }
  for (const auto& task : world.tasks()) {
    for (const auto& h : histories) {
      const QState qs{task, h, game.rounds};
      const auto key = q_state_key(qs, vocab);
      if (static_cast<int>(h.size()) == game.rounds) {
        mark(q_table.row(key, world.num_prediction_pairs()), protocol.guess(qs).index);
      } else {
        mark(q_table.row(key, vocab.q_size), protocol.ask(qs));
      }
    }
  }
  for (const auto& img : world.images()) {
    for (const auto& h : histories) {
      if (static_cast<int>(h.size()) == game.rounds) continue;
      for (int q = 0; q < vocab.q_size; ++q) {
        const AState as{img, h, std::vector<Symbol>{Symbol{Side::Q, q}}, game.rounds};
        mark(a_table.row(a_state_key(as, vocab), vocab.a_size), protocol.answer(as));
      }
    }
  }
  return {std::move(q_table), std::move(a_table)};
}

}  // namespace edl
