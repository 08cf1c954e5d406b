#pragma once

// Greedy agent interfaces used by evaluation, analysis and the play REPL,
// plus the hand-scripted protocol family and a uniform-random guesser.

#include <optional>
#include <vector>

#include "edl/dialog.hpp"
#include "edl/rng.hpp"
#include "edl/world.hpp"

namespace edl {

class Questioner {
 public:
  virtual ~Questioner() = default;
  virtual int ask(const QState& state) = 0;
  virtual PredictionPair guess(const QState& state) = 0;
  /// Image-representation estimate y_hat for the state, when the agent has one.
  virtual std::optional<TargetVector> predict(const QState&) {
    return std::nullopt;
  }
};

class Answerer {
 public:
  virtual ~Answerer() = default;
  virtual int answer(const AState& state) = 0;
};

/// Plays one full dialog. Agents with a feature prediction get per-round
/// rewards r_t = d(y_{t-1}) - d(y_t); otherwise the terminal +1/-1 reward is
/// stored in the last reward slot.
EpisodeRecord play_dialog(const World& world, const Instance& instance,
                          Questioner& q, Answerer& a, int rounds);

/// Fixed protocol: a question symbol per attribute and, per attribute, an
/// answer symbol per value.
class ScriptedProtocol final : public Questioner, public Answerer {
 public:
  /// symbol_for_attribute[k] is the Q token asking for attribute k;
  /// answer_for_value[k][v] the A token reporting value v of attribute k.
  ScriptedProtocol(const World& world, const Vocabulary& vocab,
                   std::vector<int> symbol_for_attribute,
                   std::vector<std::vector<int>> answer_for_value);

  /// Q token k asks attribute k; the answer is the value index.
  static ScriptedProtocol oracle(const World& world, const Vocabulary& vocab);

  /// Attribute asked at a 0-based round: task.first, task.second, then the
  /// remaining attributes in index order, cycling.
  int attribute_for_round(const TaskSpec& task, int round) const;

  int ask(const QState& state) override;
  PredictionPair guess(const QState& state) override;
  /// Posterior mean: one-hot on decoded attributes, uniform on the rest.
  std::optional<TargetVector> predict(const QState& state) override;
  int answer(const AState& state) override;

  const std::vector<int>& symbol_for_attribute() const { return symbol_for_attribute_; }
  const std::vector<std::vector<int>>& answer_for_value() const { return answer_for_value_; }

 private:
  /// Decoded value per attribute, -1 if unknown.
  std::vector<int> decode(const QState& state) const;

  const World* world_;
  Vocabulary vocab_;
  std::vector<int> symbol_for_attribute_;
  std::vector<std::vector<int>> answer_for_value_;
  std::vector<int> attribute_for_symbol_;
  std::vector<std::vector<int>> value_for_answer_;
};

/// Asks uniformly random questions and guesses a uniformly random pair.
class RandomGuesser final : public Questioner {
 public:
  RandomGuesser(const World& world, const Vocabulary& vocab, std::uint64_t seed)
      : world_(&world), vocab_(vocab), rng_(seed) {}
  int ask(const QState& state) override;
  PredictionPair guess(const QState& state) override;

 private:
  const World* world_;
  Vocabulary vocab_;
  Rng rng_;
};

/// Always answers token 0.
class ConstantAnswerer final : public Answerer {
 public:
  int answer(const AState&) override { return 0; }
};

}  // namespace edl
