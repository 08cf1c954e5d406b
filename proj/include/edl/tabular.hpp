#pragma once

// Tabular Q-value agents trained by Monte-Carlo return averaging under
// epsilon-greedy exploration, alternating which agent learns each iteration.

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "edl/dialog.hpp"
#include "edl/policy.hpp"
#include "edl/rng.hpp"
#include "edl/world.hpp"

namespace edl {

/// Injective integer code of an observed state:
///   h = seed; for each round h = h * (|V_Q| * |V_A|) + q * |V_A| + a
/// with seed = task id (Q-bot) or image id (A-bot). The A-bot code then
/// appends the pending question as h = h * (|V_Q| + 1) + (q + 1 or 0).
/// key = h * 16 + history length.
struct StateKey {
  std::uint64_t value = 0;
  friend auto operator<=>(const StateKey&, const StateKey&) = default;
};

StateKey q_state_key(const QState& state, const Vocabulary& vocab);
StateKey a_state_key(const AState& state, const Vocabulary& vocab);

struct QEntry {
  double q = 0.0;
  std::int64_t visits = 0;
  friend bool operator==(const QEntry&, const QEntry&) = default;
};

class QTable {
 public:
  explicit QTable(double init_value = 0.0) : init_value_(init_value) {}

  double init_value() const { return init_value_; }
  bool contains(StateKey key) const { return rows_.contains(key.value); }
  /// Existing row, or nullptr when the state has never been updated.
  const std::vector<QEntry>* find(StateKey key) const;
  std::vector<QEntry>& row(StateKey key, int n_actions);
  double value(StateKey key, int action) const;
  /// Lowest-index argmax; action 0 for unseen states.
  int argmax(StateKey key, int n_actions) const;

  const std::map<std::uint64_t, std::vector<QEntry>>& rows() const { return rows_; }
  std::map<std::uint64_t, std::vector<QEntry>>& mutable_rows() { return rows_; }

  friend bool operator==(const QTable&, const QTable&) = default;

 private:
  double init_value_;
  std::map<std::uint64_t, std::vector<QEntry>> rows_;
};

struct EpsGreedyConfig {
  double greedy_prob = 0.6;
  std::uint64_t rng_seed = 1;
};

enum class ActionMode { Explore, Greedy };

/// Explore: argmax with probability greedy_prob, each other action with
/// (1 - greedy_prob) / (n_actions - 1). Greedy: argmax.
int select_action(const QTable& table, StateKey state, int n_actions,
                  const EpsGreedyConfig& cfg, ActionMode mode, Rng& rng);

struct TabularGame {
  const World* world;
  Vocabulary vocab;
  int rounds = 2;
};

/// One (state, action) decision taken by an agent during an episode.
struct TableStep {
  StateKey state;
  int action = 0;
  int n_actions = 0;
};

/// T rounds of single-symbol exchange followed by Q-bot's choice among all
/// prediction pairs; +1/-1 terminal reward in the last reward slot.
EpisodeRecord rollout_tabular(const TabularGame& game, const Instance& instance,
                              const QTable& q_table, const QTable& a_table,
                              const EpsGreedyConfig& cfg, ActionMode mode, Rng& rng);

/// Decisions the given side took in the episode, in order.
std::vector<TableStep> episode_steps(const TabularGame& game,
                                     const EpisodeRecord& episode, Side side);

/// Running-mean update of every (state, action) the side took, toward the
/// undiscounted episode return.
void mc_update(QTable& table, const TabularGame& game,
               const EpisodeRecord& episode, Side side);

struct AlternatingSchedule {
  int episodes_per_iteration = 10000;
  int max_iterations = 100;
  Side first_updated = Side::Q;
};

struct TabularState {
  QTable q_table;
  QTable a_table;
  std::vector<double> reward_curve;
  int iteration = 0;  // iterations completed
};

/// Side whose table learns during the given iteration.
Side updated_side(const AlternatingSchedule& schedule, int iteration);

/// Greedy-policy mean terminal reward over every instance.
double greedy_mean_reward(const TabularGame& game, const QTable& q_table,
                          const QTable& a_table);

/// Runs alternating training from `state` until max_iterations or a greedy
/// mean reward of 1.0. `on_iteration` fires after every iteration.
TabularState train_alternating(
    const TabularGame& game, const AlternatingSchedule& schedule,
    const EpsGreedyConfig& cfg, TabularState state,
    const std::function<void(const TabularState&)>& on_iteration = {});

/// Greedy adapters over trained tables.
class TableQuestioner final : public Questioner {
 public:
  TableQuestioner(const TabularGame& game, const QTable& table)
      : game_(game), table_(&table) {}
  int ask(const QState& state) override;
  PredictionPair guess(const QState& state) override;

 private:
  TabularGame game_;
  const QTable* table_;
};

class TableAnswerer final : public Answerer {
 public:
  TableAnswerer(const TabularGame& game, const QTable& table)
      : game_(game), table_(&table) {}
  int answer(const AState& state) override;

 private:
  TabularGame game_;
  const QTable* table_;
};

/// Tables whose greedy policies play the given scripted protocol.
std::pair<QTable, QTable> tables_from_protocol(const TabularGame& game,
                                               ScriptedProtocol& protocol);

}  // namespace edl
