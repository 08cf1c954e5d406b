#pragma once

// Game mechanics shared by every policy representation: observed states,
// dialog history, the per-round reward and the episode-return identity.

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "edl/world.hpp"

namespace edl {

enum class Side { Q, A };

struct Symbol {
  Side side = Side::Q;
  int token = 0;

  friend bool operator==(const Symbol&, const Symbol&) = default;
};

struct Vocabulary {
  int q_size = 3;
  int a_size = 4;

  int size(Side side) const { return side == Side::Q ? q_size : a_size; }
  /// Q tokens display as X, Y, Z, ... and A tokens as 1, 2, 3, ...
  std::string label(Symbol s) const;
  /// Parses a display label; throws std::invalid_argument if out of vocabulary.
  Symbol parse(Side side, const std::string& text) const;
  void validate(Symbol s) const;
};

struct Round {
  std::vector<Symbol> question;
  std::vector<Symbol> answer;

  static Round single(int q_token, int a_token);
  int q_token() const { return question.at(0).token; }
  int a_token() const { return answer.at(0).token; }

  friend bool operator==(const Round&, const Round&) = default;
};

struct QState {
  TaskSpec prompt;
  std::vector<Round> history;
  int max_rounds = 2;

  friend bool operator==(const QState&, const QState&) = default;
};

struct AState {
  SynthImage image;
  std::vector<Round> history;
  std::optional<std::vector<Symbol>> pending_question;
  int max_rounds = 2;

  friend bool operator==(const AState&, const AState&) = default;
};

struct EpisodeRecord {
  Instance instance;
  std::vector<Round> rounds;
  /// y_hat_0 .. y_hat_T; empty for tabular episodes.
  std::vector<TargetVector> predictions;
  /// r_1 .. r_T. Tabular episodes carry the terminal reward in the last slot.
  std::vector<double> rewards;
  std::optional<PredictionPair> final_guess;
  int guessed_image = -1;
};

/// Squared Euclidean distance.
double distance(std::span<const double> a, std::span<const double> b);

/// distance(y_prev, y_gt) - distance(y_curr, y_gt)
double round_reward(std::span<const double> y_gt, std::span<const double> y_prev,
                    std::span<const double> y_curr);

double episode_return(std::span<const double> rewards);

/// Checks sum(rewards) == distance(y_0, y_gt) - distance(y_T, y_gt) within
/// 1e-9. Throws std::invalid_argument on a record without T+1 predictions.
bool verify_telescoping(const EpisodeRecord& record, const TargetVector& y_gt);

QState initial_q_state(const TaskSpec& prompt, int max_rounds);
AState initial_a_state(const SynthImage& image, int max_rounds);

QState advance_q_state(const QState& state, const Round& round);
AState pose_question(const AState& state, std::vector<Symbol> question);
/// Appends a completed round. If a question is pending it must match.
AState advance_a_state(const AState& state, const Round& round);

}  // namespace edl
