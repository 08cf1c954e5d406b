#include "edl/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <spdlog/spdlog.h>

#include "edl/evaluation.hpp"
#include "edl/policy.hpp"

namespace edl {

int CurriculumSchedule::k_for_epoch(int rl_epoch) const {
  if (anneal_every < 1) throw std::invalid_argument("anneal_every must be >= 1");
  return std::max(0, k_start - rl_epoch / anneal_every);
}

void AblationFlags::validate() const {
  if (freeze_q && freeze_a && freeze_f) {
    throw std::invalid_argument("ablation: at most two of freeze_q, freeze_a, freeze_f");
  }
  if (!(sl_weight >= 0.0) || !(rl_weight >= 0.0)) {
    throw std::invalid_argument("ablation: loss weights must be non-negative");
  }
}

void clamp_gradient(ParamBlock& block, double bound) {
  for (double& g : block.grad) g = std::clamp(g, -bound, bound);
}

void adam_update(AdamState& state, ParamBlock& block) {
  for (double g : block.grad) {
    if (!std::isfinite(g)) {
      throw std::runtime_error("non-finite gradient in block '" + block.name + "'");
    }
  }
  clamp_gradient(block, state.cfg.clamp);
  auto& mo = state.moments[block.name];
  if (mo.m.size() != block.size()) {
    if (!mo.m.empty()) throw std::logic_error("adam: moment shape mismatch for " + block.name);
    mo.m.assign(block.size(), 0.0);
    mo.v.assign(block.size(), 0.0);
  }
  const auto& c = state.cfg;
  mo.step += 1;
  const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(mo.step));
  const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(mo.step));
  for (std::size_t i = 0; i < block.size(); ++i) {
    const double g = block.grad[i];
    mo.m[i] = c.beta1 * mo.m[i] + (1.0 - c.beta1) * g;
    mo.v[i] = c.beta2 * mo.v[i] + (1.0 - c.beta2) * g * g;
    const double mhat = mo.m[i] / bc1;
    const double vhat = mo.v[i] / bc2;
    block.values[i] -= c.lr * mhat / (std::sqrt(vhat) + c.epsilon);
    block.grad[i] = 0.0;
  }
}

ParamGroup group_of(const ParamBlock& block) {
  if (block.name.starts_with("q.")) return ParamGroup::Q;
  if (block.name.starts_with("f.")) return ParamGroup::F;
  if (block.name.starts_with("a.")) return ParamGroup::A;
  throw std::invalid_argument("block '" + block.name + "' belongs to no agent");
}

bool is_frozen(const AblationFlags& flags, const ParamBlock& block) {
  switch (group_of(block)) {
    case ParamGroup::Q: return flags.freeze_q;
    case ParamGroup::F: return flags.freeze_f;
    case ParamGroup::A: return flags.freeze_a;
  }
  return false;
}

OracleCorpus generate_oracle_corpus(const World& world, const Vocabulary& vocab, int rounds,
                                    std::uint64_t protocol_seed) {
  auto oracle = ScriptedProtocol::oracle(world, vocab);
  OracleCorpus corpus;
  for (const auto& inst : world.enumerate_instances()) {
    QState qs = initial_q_state(inst.task, rounds);
    AState as = initial_a_state(inst.image, rounds);
    CorpusDialog d{inst, {}};
    for (int t = 0; t < rounds; ++t) {
      const int q = oracle.ask(qs);
      as = pose_question(as, {Symbol{Side::Q, q}});
      const Round r = Round::single(q, oracle.answer(as));
      qs = advance_q_state(qs, r);
      as = advance_a_state(as, r);
      d.rounds.push_back(r);
    }
    corpus.dialogs.push_back(std::move(d));
  }
  Rng rng(protocol_seed);
  rng.shuffle(corpus.dialogs);
  return corpus;
}

namespace {

void apply_update(NeuralAgents& agents, AdamState& adam, const AblationFlags& flags) {
  for (ParamSet* ps : {static_cast<ParamSet*>(&agents.q), static_cast<ParamSet*>(&agents.a)}) {
    for (auto& blk : ps->blocks()) {
      if (is_frozen(flags, blk)) {
        std::fill(blk.grad.begin(), blk.grad.end(), 0.0);
      } else {
        adam_update(adam, blk);
      }
    }
  }
}

// Accumulates the batch-mean supervised loss times `scale`; returns its terms.
StepStats accumulate_supervised(NeuralAgents& agents, const World& world,
                                std::span<const CorpusDialog> batch, double scale) {
  StepStats st;
  const double b = static_cast<double>(batch.size());
  for (const auto& d : batch) {
    const std::size_t n = d.rounds.size();
    if (n == 0) throw std::invalid_argument("supervised step: dialog without rounds");
    const double wt = scale / (b * static_cast<double>(n));
    const double wr = scale / (b * static_cast<double>(n + 1));
    DialogLoss loss{d.instance, d.rounds, Vec(n, wt), Vec(n, wt), Vec(n + 1, wr)};
    const auto v = dialog_loss_backward(agents.q, agents.a, world, loss);
    st.nll_q -= std::accumulate(v.log_pq.begin(), v.log_pq.end(), 0.0) / (b * n);
    st.nll_a -= std::accumulate(v.log_pa.begin(), v.log_pa.end(), 0.0) / (b * n);
    st.regression += std::accumulate(v.sq_err.begin(), v.sq_err.end(), 0.0) / (b * (n + 1));
  }
  st.sl_loss = st.nll_q + st.nll_a + st.regression;
  return st;
}

}  // namespace

StepStats supervised_step(NeuralAgents& agents, const World& world,
                          std::span<const CorpusDialog> batch, AdamState& adam,
                          const AblationFlags& flags) {
  if (batch.empty()) throw std::invalid_argument("supervised_step: empty batch");
  agents.q.zero_grad();
  agents.a.zero_grad();
  const auto st = accumulate_supervised(agents, world, batch, 1.0);
  apply_update(agents, adam, flags);
  return st;
}

StepStats reinforce_step(NeuralAgents& agents, const World& world,
                         std::span<const NeuralEpisode> episodes, AdamState& adam,
                         const AblationFlags& flags, std::span<const CorpusDialog> sl_batch) {
  StepStats st;
  int sampled = 0;
  for (const auto& ep : episodes) sampled += static_cast<int>(ep.record.rounds.size()) - ep.k;
  if (episodes.empty() || sampled == 0) {
    spdlog::warn("reinforce_step: no sampled rounds, skipping update");
    st.skipped = true;
    return st;
  }
  agents.q.zero_grad();
  agents.a.zero_grad();
  const double b = static_cast<double>(episodes.size());
  const double rl_scale = flags.multi_task ? flags.rl_weight : 1.0;
  int forced_rounds = 0;
  for (const auto& ep : episodes) {
    const auto& rec = ep.record;
    const std::size_t n = rec.rounds.size();
    DialogLoss loss{rec.instance, rec.rounds, Vec(n), Vec(n), Vec(n + 1, 1.0 / b)};
    for (std::size_t t = 0; t < n; ++t) {
      const bool forced = static_cast<int>(t) < ep.k;
      const double w = forced ? 1.0 / b : rl_scale * rec.rewards[t] / b;
      loss.q_weight[t] = w;
      loss.a_weight[t] = w;
    }
    const auto v = dialog_loss_backward(agents.q, agents.a, world, loss);
    for (std::size_t t = 0; t < n; ++t) {
      if (static_cast<int>(t) < ep.k) {
        st.nll_q -= v.log_pq[t];
        st.nll_a -= v.log_pa[t];
        ++forced_rounds;
      } else {
        st.surrogate -= rec.rewards[t] * (v.log_pq[t] + v.log_pa[t]) / b;
      }
    }
    st.regression += std::accumulate(v.sq_err.begin(), v.sq_err.end(), 0.0) / (b * (n + 1));
    st.mean_return += episode_return(rec.rewards) / b;
  }
  if (forced_rounds > 0) {
    st.nll_q /= forced_rounds;
    st.nll_a /= forced_rounds;
  }
  if (flags.multi_task && !sl_batch.empty()) {
    const auto sl = accumulate_supervised(agents, world, sl_batch, flags.sl_weight);
    st.nll_q = sl.nll_q;
    st.nll_a = sl.nll_a;
  }
  st.sl_loss = st.nll_q + st.nll_a + st.regression;
  st.sampled_rounds = sampled;
  apply_update(agents, adam, flags);
  return st;
}

NeuralRun init_run(const TrainConfig& cfg, const World& world, const Vocabulary& vocab) {
  const auto dims = dims_for(world, vocab, cfg.embed_dim, cfg.hidden_dim);
  NeuralRun run{NeuralAgents(dims), AdamState{cfg.optim, {}}, Rng(cfg.seed), 0};
  run.agents.q.init_uniform(run.rng, cfg.init_scale);
  run.agents.a.init_uniform(run.rng, cfg.init_scale);
  return run;
}

std::span<const CorpusDialog> corpus_subset(const OracleCorpus& corpus, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) {
    throw std::invalid_argument("corpus_fraction must lie in (0, 1]");
  }
  const auto n = static_cast<std::size_t>(
      std::ceil(fraction * static_cast<double>(corpus.dialogs.size()) - 1e-9));
  return std::span(corpus.dialogs).first(std::max<std::size_t>(1, n));
}

EpochMetrics evaluate_greedy(const NeuralAgents& agents, const World& world, int rounds) {
  EpochMetrics m;
  const auto oracle_vocab = Vocabulary{agents.q.dims().q_vocab, agents.a.dims().a_vocab};
  auto oracle = ScriptedProtocol::oracle(world, oracle_vocab);
  Rng unused(0);
  const auto instances = world.enumerate_instances();
  const auto pool = world.images();
  std::vector<EpisodeRecord> recs;
  for (const auto& inst : instances) {
    recs.push_back(
        rollout_neural(agents, world, inst, rounds, 0, oracle, Sampling::Greedy, unused).record);
  }
  for (const auto& r : recs) {
    m.mean_return += episode_return(r.rewards);
    m.percentile_rank += percentile_rank(world, r.predictions.back(), r.instance.image, pool);
  }
  m.mean_return /= static_cast<double>(recs.size());
  m.percentile_rank /= static_cast<double>(recs.size());
  m.accuracy = task_accuracy(world, recs);
  return m;
}

namespace {

void add_stats(StepStats& acc, const StepStats& s, double w) {
  acc.sl_loss += w * s.sl_loss;
  acc.nll_q += w * s.nll_q;
  acc.nll_a += w * s.nll_a;
  acc.regression += w * s.regression;
  acc.surrogate += w * s.surrogate;
  acc.mean_return += w * s.mean_return;
  acc.sampled_rounds += s.sampled_rounds;
}

}  // namespace

EpochMetrics run_epoch(const TrainConfig& cfg, const World& world, const Vocabulary& vocab,
                       const OracleCorpus& corpus, NeuralRun& run) {
  cfg.ablation.validate();
  if (cfg.batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  const auto subset = corpus_subset(corpus, cfg.corpus_fraction);
  StepStats acc;
  EpochMetrics m;
  if (run.epoch < cfg.sl_epochs) {
    m.phase = "sl";
    m.k = cfg.rounds;
    std::vector<int> order(subset.size());
    std::iota(order.begin(), order.end(), 0);
    run.rng.shuffle(order);
    const int batches = static_cast<int>((order.size() + cfg.batch_size - 1) / cfg.batch_size);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::vector<CorpusDialog> batch;
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i) {
        batch.push_back(subset[order[i]]);
      }
      add_stats(acc, supervised_step(run.agents, world, batch, run.adam), 1.0 / batches);
    }
  } else {
    m.phase = "rl";
    m.k = std::min(cfg.rounds, cfg.curriculum.k_for_epoch(run.epoch - cfg.sl_epochs));
    auto oracle = ScriptedProtocol::oracle(world, vocab);
    std::vector<char> supervised(world.num_instances(), 0);
    for (const auto& d : subset) supervised[d.instance.id] = 1;
    std::vector<int> order(world.num_instances());
    std::iota(order.begin(), order.end(), 0);
    run.rng.shuffle(order);
    const int batches = static_cast<int>((order.size() + cfg.batch_size - 1) / cfg.batch_size);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      std::vector<NeuralEpisode> eps;
      for (std::size_t i = start; i < std::min(order.size(), start + cfg.batch_size); ++i) {
        const Instance inst = world.instance(order[i]);
        const int k = supervised[inst.id] ? m.k : 0;
        eps.push_back(rollout_neural(run.agents, world, inst, cfg.rounds, k, oracle,
                                     Sampling::Sample, run.rng));
      }
      std::vector<CorpusDialog> sl_batch;
      if (cfg.ablation.multi_task) {
        for (int i = 0; i < cfg.batch_size; ++i) {
          sl_batch.push_back(subset[run.rng.below(static_cast<int>(subset.size()))]);
        }
      }
      add_stats(acc, reinforce_step(run.agents, world, eps, run.adam, cfg.ablation, sl_batch),
                1.0 / batches);
    }
  }
  const auto eval = evaluate_greedy(run.agents, world, cfg.rounds);
  m.epoch = run.epoch;
  m.mean_return = eval.mean_return;
  m.accuracy = eval.accuracy;
  m.percentile_rank = eval.percentile_rank;
  m.train = acc;
  run.epoch += 1;
  return m;
}

void train(const TrainConfig& cfg, const World& world, const Vocabulary& vocab, NeuralRun& run,
           const std::function<void(const EpochMetrics&, const NeuralRun&)>& on_epoch) {
  const auto corpus = generate_oracle_corpus(world, vocab, cfg.rounds, cfg.seed);
  while (run.epoch < cfg.sl_epochs + cfg.rl_epochs) {
    const auto m = run_epoch(cfg, world, vocab, corpus, run);
    spdlog::info("epoch {} {} k={} return={:.4f} acc={:.4f} prank={:.2f}", m.epoch, m.phase, m.k,
                 m.mean_return, m.accuracy, m.percentile_rank);
    if (on_epoch) on_epoch(m, run);
  }
}

}  // namespace edl
