#include "doctest.h"

#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include "edl/evaluation.hpp"
#include "edl/trainer.hpp"

using namespace edl;

namespace {

struct Setup {
  World world;
  Vocabulary vocab;
  NetDims dims = dims_for(world, vocab, 16, 32);
};

NeuralAgents make_agents(const Setup& s, std::uint64_t seed, double scale) {
  NeuralAgents agents(s.dims);
  if (scale > 0.0) {
    Rng rng(seed);
    agents.q.init_uniform(rng, scale);
    agents.a.init_uniform(rng, scale);
  }
  return agents;
}

std::vector<Vec> snapshot(const ParamSet& ps) {
  std::vector<Vec> out;
  for (const auto& b : ps.blocks()) out.push_back(b.values);
  return out;
}

double log_prob_question(const NeuralAgents& agents, const World& world, const EpisodeRecord& rec,
                         std::size_t t) {
  const auto tr = dialog_forward(agents.q, agents.a, world, rec.instance, rec.rounds);
  return std::log(tr.q.probs[t][rec.rounds[t].q_token()]);
}

}  // namespace

TEST_SUITE("trainer") {

TEST_CASE("adam basics") {
  ParamBlock blk("q.test", {3});
  blk.grad = {0.5, -2.0, 0.0};
  AdamState adam{AdamConfig{}, {}};
  adam_update(adam, blk);
  CHECK(blk.values[0] == doctest::Approx(-1e-3).epsilon(1e-4));
  CHECK(blk.values[1] == doctest::Approx(1e-3).epsilon(1e-4));
  CHECK(blk.values[2] == 0.0);
  CHECK(adam.moments["q.test"].step == 1);
  for (double g : blk.grad) CHECK(g == 0.0);
  adam_update(adam, blk);
  CHECK(adam.moments["q.test"].step == 2);

  blk.grad = {7.3, -9.0, 1.0};
  clamp_gradient(blk, 5.0);
  CHECK(blk.grad == Vec{5.0, -5.0, 1.0});

  blk.grad = {0.0, std::numeric_limits<double>::quiet_NaN(), 0.0};
  try {
    adam_update(adam, blk);
    FAIL("expected a throw");
  } catch (const std::runtime_error& e) {
    CHECK(std::string(e.what()).find("q.test") != std::string::npos);
  }
}

TEST_CASE("block groups and freezes") {
  CHECK(group_of(ParamBlock("q.history.W", {1})) == ParamGroup::Q);
  CHECK(group_of(ParamBlock("f.b", {1})) == ParamGroup::F);
  CHECK(group_of(ParamBlock("a.answer.b", {1})) == ParamGroup::A);
  CHECK_THROWS(group_of(ParamBlock("x", {1})));
  AblationFlags all{true, true, true};
  CHECK_THROWS(all.validate());
  AblationFlags neg;
  neg.sl_weight = -1.0;
  CHECK_THROWS(neg.validate());
}

TEST_CASE("curriculum schedule") {
  const CurriculumSchedule c{9, 1};
  for (int e = 0; e <= 9; ++e) CHECK(c.k_for_epoch(e) == 9 - e);
  CHECK(c.k_for_epoch(15) == 0);
  const CurriculumSchedule slow{4, 3};
  CHECK(slow.k_for_epoch(2) == 4);
  CHECK(slow.k_for_epoch(3) == 3);
  CHECK_THROWS(CurriculumSchedule{4, 0}.k_for_epoch(1));
}

TEST_CASE("oracle corpus") {
  Setup s;
  const auto c1 = generate_oracle_corpus(s.world, s.vocab, 10, 7);
  const auto c2 = generate_oracle_corpus(s.world, s.vocab, 10, 7);
  const auto c3 = generate_oracle_corpus(s.world, s.vocab, 10, 8);
  REQUIRE(c1.dialogs.size() == 384);
  std::set<int> ids;
  bool same_order = true;
  for (std::size_t i = 0; i < c1.dialogs.size(); ++i) {
    ids.insert(c1.dialogs[i].instance.id);
    CHECK(c1.dialogs[i].instance.id == c2.dialogs[i].instance.id);
    CHECK(c1.dialogs[i].rounds == c2.dialogs[i].rounds);
    same_order = same_order && c1.dialogs[i].instance.id == c3.dialogs[i].instance.id;
  }
  CHECK(ids.size() == 384);
  CHECK_FALSE(same_order);
  for (const auto& d : c1.dialogs) {
    REQUIRE(d.rounds.size() == 10);
    CHECK(d.rounds[0].q_token() == d.instance.task.first);
    CHECK(d.rounds[1].q_token() == d.instance.task.second);
    CHECK(d.rounds[0].a_token() == d.instance.image.values[d.instance.task.first]);
  }
  auto oracle = ScriptedProtocol::oracle(s.world, s.vocab);
  const auto inst = s.world.enumerate_instances();
  CHECK(task_accuracy(s.world, oracle, oracle, inst, 10) == 1.0);

  CHECK(corpus_subset(c1, 0.25).size() == 96);
  CHECK(corpus_subset(c1, 1.0).size() == 384);
  CHECK_THROWS(corpus_subset(c1, 0.0));
}

TEST_CASE("uniform agents have the closed-form supervised loss") {
  Setup s;
  auto agents = make_agents(s, 0, 0.0);
  const auto corpus = generate_oracle_corpus(s.world, s.vocab, 10, 1);
  AdamState adam{AdamConfig{}, {}};
  const auto st = supervised_step(agents, s.world, std::span(corpus.dialogs).first(8), adam);
  CHECK(st.nll_q == doctest::Approx(std::log(3.0)));
  CHECK(st.nll_a == doctest::Approx(std::log(4.0)));
  CHECK(st.regression == doctest::Approx(3.0));
  CHECK(st.sl_loss == doctest::Approx(std::log(3.0) + std::log(4.0) + 3.0));
  CHECK_THROWS_AS(supervised_step(agents, s.world, {}, adam), std::invalid_argument);
}

TEST_CASE("supervised steps overfit a single batch") {
  Setup s;
  auto agents = make_agents(s, 3, 0.3);
  const auto corpus = generate_oracle_corpus(s.world, s.vocab, 10, 1);
  const auto batch = std::span(corpus.dialogs).first(32);
  AdamState adam{AdamConfig{}, {}};
  double prev = supervised_step(agents, s.world, batch, adam).sl_loss;
  for (int i = 0; i < 10; ++i) {
    const double cur = supervised_step(agents, s.world, batch, adam).sl_loss;
    CHECK(cur < prev);
    prev = cur;
  }
}

TEST_CASE("frozen blocks stay bit-identical") {
  Setup s;
  const auto corpus = generate_oracle_corpus(s.world, s.vocab, 10, 1);
  const auto batch = std::span(corpus.dialogs).first(16);
  for (int which = 0; which < 3; ++which) {
    auto agents = make_agents(s, 4, 0.3);
    AblationFlags flags;
    flags.freeze_q = which == 0;
    flags.freeze_a = which == 1;
    flags.freeze_f = which == 2;
    const auto q0 = snapshot(agents.q);
    const auto a0 = snapshot(agents.a);
    AdamState adam{AdamConfig{}, {}};
    for (int i = 0; i < 3; ++i) supervised_step(agents, s.world, batch, adam, flags);
    const auto q1 = snapshot(agents.q);
    const auto a1 = snapshot(agents.a);
    for (std::size_t b = 0; b < q0.size(); ++b) {
      const auto g = group_of(agents.q.blocks()[b]);
      const bool frozen = (g == ParamGroup::Q && flags.freeze_q) || (g == ParamGroup::F && flags.freeze_f);
      CHECK((q0[b] == q1[b]) == frozen);
    }
    for (std::size_t b = 0; b < a0.size(); ++b) CHECK((a0[b] == a1[b]) == flags.freeze_a);
  }
}

TEST_CASE("neural rollouts") {
  Setup s;
  const auto agents = make_agents(s, 5, 0.3);
  auto oracle = ScriptedProtocol::oracle(s.world, s.vocab);
  Rng rng(2);
  const Instance inst = s.world.instance(123);
  const auto forced = rollout_neural(agents, s.world, inst, 10, 10, oracle, Sampling::Sample, rng);
  const auto corpus = generate_oracle_corpus(s.world, s.vocab, 10, 1);
  for (const auto& d : corpus.dialogs) {
    if (d.instance.id == inst.id) CHECK(forced.record.rounds == d.rounds);
  }
  const auto free = rollout_neural(agents, s.world, inst, 10, 0, oracle, Sampling::Sample, rng);
  for (const auto* ep : {&forced, &free}) {
    const auto& r = ep->record;
    REQUIRE(r.rounds.size() == 10);
    REQUIRE(r.predictions.size() == 11);
    REQUIRE(r.rewards.size() == 10);
    const auto y = s.world.target_vector(inst.image);
    CHECK(episode_return(r.rewards) ==
          doctest::Approx(distance(y, r.predictions.front()) - distance(y, r.predictions.back())));
  }
  Rng r1(9);
  Rng r2(9);
  const auto g1 = rollout_neural(agents, s.world, inst, 10, 0, oracle, Sampling::Greedy, r1);
  rollout_neural(agents, s.world, inst, 10, 0, oracle, Sampling::Sample, r2);
  const auto g3 = rollout_neural(agents, s.world, inst, 10, 0, oracle, Sampling::Greedy, r2);
  CHECK(g1.record.rounds == g3.record.rounds);
}

TEST_CASE("zero rewards leave the question and answer heads unchanged") {
  Setup s;
  auto agents = make_agents(s, 6, 0.3);
  auto oracle = ScriptedProtocol::oracle(s.world, s.vocab);
  Rng rng(1);
  std::vector<NeuralEpisode> eps;
  for (int i = 0; i < 8; ++i) {
    auto ep = rollout_neural(agents, s.world, s.world.instance(i * 40), 10, 0, oracle,
                             Sampling::Sample, rng);
    std::fill(ep.record.rewards.begin(), ep.record.rewards.end(), 0.0);
    eps.push_back(ep);
  }
  const auto qw = agents.q.block("q.question.W").values;
  const auto qb = agents.q.block("q.question.b").values;
  const auto a0 = snapshot(agents.a);
  const auto fb = agents.q.block("f.b").values;
  AdamState adam{AdamConfig{}, {}};
  const auto st = reinforce_step(agents, s.world, eps, adam, {});
  CHECK_FALSE(st.skipped);
  CHECK(agents.q.block("q.question.W").values == qw);
  CHECK(agents.q.block("q.question.b").values == qb);
  CHECK(snapshot(agents.a) == a0);
  CHECK(agents.q.block("f.b").values != fb);
}

TEST_CASE("positive reward raises the log-probability of the sampled question") {
  Setup s;
  auto agents = make_agents(s, 7, 0.3);
  auto oracle = ScriptedProtocol::oracle(s.world, s.vocab);
  Rng rng(3);
  auto ep = rollout_neural(agents, s.world, s.world.instance(50), 3, 0, oracle, Sampling::Sample, rng);
  ep.record.rewards = {1.0, 0.0, 0.0};
  const double before = log_prob_question(agents, s.world, ep.record, 0);
  AdamConfig cfg;
  cfg.lr = 1e-4;
  AdamState adam{cfg, {}};
  AblationFlags freeze_f;
  freeze_f.freeze_f = true;
  reinforce_step(agents, s.world, std::span(&ep, 1), adam, freeze_f);
  CHECK(log_prob_question(agents, s.world, ep.record, 0) > before);
}

TEST_CASE("reinforce with no sampled rounds is skipped") {
  Setup s;
  auto agents = make_agents(s, 8, 0.3);
  auto oracle = ScriptedProtocol::oracle(s.world, s.vocab);
  Rng rng(1);
  std::vector<NeuralEpisode> eps{
      rollout_neural(agents, s.world, s.world.instance(0), 4, 4, oracle, Sampling::Sample, rng)};
  const auto q0 = snapshot(agents.q);
  AdamState adam{AdamConfig{}, {}};
  const auto st = reinforce_step(agents, s.world, eps, adam, {});
  CHECK(st.skipped);
  CHECK(snapshot(agents.q) == q0);
  CHECK(reinforce_step(agents, s.world, {}, adam, {}).skipped);
}

TEST_CASE("multi-task steps report both loss terms") {
  Setup s;
  auto agents = make_agents(s, 9, 0.3);
  auto oracle = ScriptedProtocol::oracle(s.world, s.vocab);
  const auto corpus = generate_oracle_corpus(s.world, s.vocab, 10, 1);
  Rng rng(1);
  std::vector<NeuralEpisode> eps;
  for (int i = 0; i < 8; ++i) {
    eps.push_back(rollout_neural(agents, s.world, s.world.instance(i), 10, 0, oracle,
                                 Sampling::Sample, rng));
  }
  AblationFlags flags;
  flags.freeze_q = true;
  flags.multi_task = true;
  AdamState adam{AdamConfig{}, {}};
  const auto q0 = snapshot(agents.q);
  const auto st = reinforce_step(agents, s.world, eps, adam, flags, std::span(corpus.dialogs).first(8));
  CHECK(st.nll_q > 0.0);
  CHECK(st.nll_a > 0.0);
  CHECK(st.surrogate != 0.0);
  const auto q1 = snapshot(agents.q);
  for (std::size_t b = 0; b < q0.size(); ++b) {
    if (group_of(agents.q.blocks()[b]) == ParamGroup::Q) CHECK(q0[b] == q1[b]);
  }
}

TEST_CASE("epochs are deterministic given the seed") {
  Setup s;
  TrainConfig cfg;
  cfg.rounds = 3;
  cfg.sl_epochs = 1;
  cfg.rl_epochs = 1;
  cfg.curriculum.k_start = 2;
  cfg.seed = 11;
  const auto corpus = generate_oracle_corpus(s.world, s.vocab, cfg.rounds, cfg.seed);
  auto r1 = init_run(cfg, s.world, s.vocab);
  auto r2 = init_run(cfg, s.world, s.vocab);
  for (int e = 0; e < 2; ++e) {
    const auto m1 = run_epoch(cfg, s.world, s.vocab, corpus, r1);
    const auto m2 = run_epoch(cfg, s.world, s.vocab, corpus, r2);
    CHECK(m1.phase == (e == 0 ? "sl" : "rl"));
    CHECK(m1.mean_return == m2.mean_return);
    CHECK(m1.train.sl_loss == m2.train.sl_loss);
  }
  CHECK(snapshot(r1.agents.q) == snapshot(r2.agents.q));
  CHECK(snapshot(r1.agents.a) == snapshot(r2.agents.a));
}

}
