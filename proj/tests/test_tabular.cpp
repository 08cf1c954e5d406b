#include "doctest.h"

#include <map>
#include <set>
#include <stdexcept>

#include "edl/evaluation.hpp"
#include "edl/tabular.hpp"

using namespace edl;

namespace {

TabularState fresh_state() { return TabularState{QTable(0.0), QTable(0.0), {}, 0}; }

struct Fixture {
  World world;
  Vocabulary vocab;
  TabularGame game{&world, vocab, 2};
};

}  // namespace

TEST_SUITE("tabular") {

TEST_CASE("epsilon-greedy action law") {
  QTable table;
  const StateKey key{7};
  auto& row = table.row(key, 3);
  row[1].q = 0.5;
  const EpsGreedyConfig cfg{0.6, 1};
  Rng rng(99);
  std::vector<int> counts(3, 0);
  const int n = 1000000;
  for (int i = 0; i < n; ++i) counts[select_action(table, key, 3, cfg, ActionMode::Explore, rng)]++;
  CHECK(std::abs(counts[0] / double(n) - 0.2) <= 0.005);
  CHECK(std::abs(counts[1] / double(n) - 0.6) <= 0.005);
  CHECK(std::abs(counts[2] / double(n) - 0.2) <= 0.005);
}

TEST_CASE("select_action edge cases") {
  QTable table;
  const EpsGreedyConfig cfg;
  Rng rng(1);
  for (int i = 0; i < 100; ++i) {
    CHECK(select_action(table, StateKey{3}, 1, cfg, ActionMode::Explore, rng) == 0);
  }
  table.row(StateKey{4}, 5);
  CHECK(select_action(table, StateKey{4}, 5, cfg, ActionMode::Greedy, rng) == 0);
  CHECK_THROWS_AS(select_action(table, StateKey{4}, 0, cfg, ActionMode::Greedy, rng),
                  std::invalid_argument);
}

TEST_CASE("state keys") {
  Fixture f;
  std::set<std::uint64_t> round1, final_keys;
  for (const auto& task : f.world.tasks()) {
    const QState q0 = initial_q_state(task, 2);
    round1.insert(q_state_key(q0, f.vocab).value);
    for (int q1 = 0; q1 < 3; ++q1)
      for (int a1 = 0; a1 < 4; ++a1)
        for (int q2 = 0; q2 < 3; ++q2)
          for (int a2 = 0; a2 < 4; ++a2) {
            const QState s = advance_q_state(advance_q_state(q0, Round::single(q1, a1)),
                                             Round::single(q2, a2));
            final_keys.insert(q_state_key(s, f.vocab).value);
          }
  }
  CHECK(round1.size() == 6);
  CHECK(final_keys.size() == 864);
  CHECK(final_keys.size() == 6u * 3 * 4 * 3 * 4);

  std::set<std::uint64_t> a_keys;
  int a_states = 0;
  for (const auto& img : f.world.images()) {
    const AState a0 = initial_a_state(img, 2);
    for (int q1 = 0; q1 < 3; ++q1) {
      a_keys.insert(a_state_key(pose_question(a0, {Symbol{Side::Q, q1}}), f.vocab).value);
      ++a_states;
      for (int a1 = 0; a1 < 4; ++a1)
        for (int q2 = 0; q2 < 3; ++q2) {
          const AState s = pose_question(advance_a_state(pose_question(a0, {Symbol{Side::Q, q1}}),
                                                         Round::single(q1, a1)),
                                         {Symbol{Side::Q, q2}});
          a_keys.insert(a_state_key(s, f.vocab).value);
          ++a_states;
        }
    }
  }
  CHECK(a_keys.size() == static_cast<std::size_t>(a_states));
}

TEST_CASE("rollouts") {
  Fixture f;
  QTable q, a;
  const EpsGreedyConfig cfg;
  Rng r(2);
  for (int i = 0; i < 200; ++i) {
    const auto ep = rollout_tabular(f.game, f.world.instance(r.below(384)), q, a, cfg,
                                    ActionMode::Explore, r);
    mc_update(q, f.game, ep, Side::Q);
    mc_update(a, f.game, ep, Side::A);
  }
  for (const auto& inst : f.world.enumerate_instances()) {
    Rng r1(1), r2(77);
    const auto e1 = rollout_tabular(f.game, inst, q, a, cfg, ActionMode::Greedy, r1);
    const auto e2 = rollout_tabular(f.game, inst, q, a, cfg, ActionMode::Greedy, r2);
    CHECK(e1.rounds == e2.rounds);
    CHECK(e1.final_guess == e2.final_guess);
    CHECK(e1.rounds.size() == 2);
    CHECK(e1.rewards.size() == 2);
    CHECK(e1.rewards[0] == 0.0);
    CHECK((e1.rewards[1] == 1.0 || e1.rewards[1] == -1.0));
    CHECK(e1.predictions.empty());
  }
}

TEST_CASE("running-mean update") {
  Fixture f;
  QTable q, a;
  const Instance inst = f.world.instance(0);
  EpisodeRecord ep;
  ep.instance = inst;
  ep.rounds = {Round::single(0, 1), Round::single(1, 2)};
  ep.final_guess = f.world.correct_pair(inst);
  ep.rewards = {0.0, 1.0};
  mc_update(q, f.game, ep, Side::Q);
  const auto steps = episode_steps(f.game, ep, Side::Q);
  REQUIRE(steps.size() == 3);
  const auto& e = q.row(steps.back().state, steps.back().n_actions)[steps.back().action];
  CHECK(e.q == 1.0);
  CHECK(e.visits == 1);
  ep.rewards = {0.0, -1.0};
  mc_update(q, f.game, ep, Side::Q);
  CHECK(q.value(steps.back().state, steps.back().action) == 0.0);
  CHECK(q.find(steps.back().state)->at(steps.back().action).visits == 2);
  CHECK(a.rows().empty());
}

TEST_CASE("estimates equal the mean of credited returns") {
  Fixture f;
  QTable q, a;
  std::map<std::pair<std::uint64_t, int>, std::vector<double>> credited;
  const EpsGreedyConfig cfg;
  Rng r(12);
  for (int i = 0; i < 3000; ++i) {
    const auto ep = rollout_tabular(f.game, f.world.instance(r.below(8)), q, a, cfg,
                                    ActionMode::Explore, r);
    mc_update(q, f.game, ep, Side::Q);
    for (const auto& s : episode_steps(f.game, ep, Side::Q)) {
      credited[{s.state.value, s.action}].push_back(episode_return(ep.rewards));
    }
  }
  for (const auto& [key, returns] : credited) {
    double mean = 0.0;
    for (double x : returns) mean += x;
    mean /= static_cast<double>(returns.size());
    const auto& e = q.find(StateKey{key.first})->at(key.second);
    CHECK(e.q == doctest::Approx(mean).epsilon(1e-12));
    CHECK(e.visits == static_cast<std::int64_t>(returns.size()));
  }
}

TEST_CASE("alternating training") {
  Fixture f;
  const AlternatingSchedule sched{500, 4, Side::Q};
  const EpsGreedyConfig cfg{0.6, 9};
  std::vector<TabularState> trace;
  const auto s1 = train_alternating(f.game, sched, cfg, fresh_state(),
                                    [&](const TabularState& s) { trace.push_back(s); });
  const auto s2 = train_alternating(f.game, sched, cfg, fresh_state());
  CHECK(s1.q_table == s2.q_table);
  CHECK(s1.a_table == s2.a_table);
  CHECK(s1.reward_curve == s2.reward_curve);
  REQUIRE(trace.size() == 4);
  CHECK(trace[0].a_table.rows().empty());
  CHECK(trace[1].q_table == trace[0].q_table);
  CHECK(trace[2].a_table == trace[1].a_table);
  CHECK(trace[3].q_table == trace[2].q_table);
  CHECK(updated_side(sched, 0) == Side::Q);
  CHECK(updated_side(sched, 1) == Side::A);

  // resuming from an intermediate state gives the same end point
  const auto resumed = train_alternating(f.game, sched, cfg, trace[1]);
  CHECK(resumed.q_table == s1.q_table);
  CHECK(resumed.reward_curve == s1.reward_curve);
}

TEST_CASE("reward baselines before learning") {
  Fixture f;
  // Lowest-index ties make untrained tables always guess pair 0, which pairs
  // two values of the same attribute and is never correct.
  CHECK(greedy_mean_reward(f.game, QTable{}, QTable{}) == -1.0);
  double expected = 0.0;
  const Instance inst = f.world.instance(17);
  for (int p = 0; p < 144; ++p) {
    expected += f.world.check_prediction(inst, f.world.pair_from_index(p)) ? 1.0 : -1.0;
  }
  expected /= 144.0;
  CHECK(expected == doctest::Approx(2.0 / 144.0 - 1.0));
  CHECK(expected == doctest::Approx(-0.986).epsilon(1e-3));
}

TEST_CASE("oracle tables are optimal with injective answer maps") {
  Fixture f;
  auto oracle = ScriptedProtocol::oracle(f.world, f.vocab);
  const auto [q, a] = tables_from_protocol(f.game, oracle);
  CHECK(greedy_mean_reward(f.game, q, a) == 1.0);
  TableQuestioner tq(f.game, q);
  TableAnswerer ta(f.game, a);
  const auto instances = f.world.enumerate_instances();
  const auto recs = play_all(f.world, tq, ta, instances, 2);
  CHECK(task_accuracy(f.world, recs) == 1.0);
  for (bool ok : answer_map_injective(f.world, recs)) CHECK(ok);
}

}
