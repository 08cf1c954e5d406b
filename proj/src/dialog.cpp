#include "edl/dialog.hpp"

#include <cctype>
#include <cmath>
#include <stdexcept>

namespace edl {

std::string Vocabulary::label(Symbol s) const {
  validate(s);
  if (s.side == Side::A) return std::to_string(s.token + 1);
  if (q_size <= 3) return std::string(1, static_cast<char>('X' + s.token));
  return "Q" + std::to_string(s.token);
}

Symbol Vocabulary::parse(Side side, const std::string& text) const {
  for (int t = 0; t < size(side); ++t) {
    const Symbol s{side, t};
    const std::string l = label(s);
    if (text == l) return s;
    if (l.size() == 1 && text.size() == 1 &&
        std::toupper(static_cast<unsigned char>(text[0])) == l[0]) {
      return s;
    }
  }
  throw std::invalid_argument("'" + text + "' is not in the " +
                              (side == Side::Q ? "question" : "answer") +
                              " vocabulary");
}

void Vocabulary::validate(Symbol s) const {
  if (s.token < 0 || s.token >= size(s.side)) {
    throw std::out_of_range("symbol token outside its vocabulary");
  }
}

Round Round::single(int q_token, int a_token) {
  return Round{{Symbol{Side::Q, q_token}}, {Symbol{Side::A, a_token}}};
}

double distance(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw std::invalid_argument("distance: dimension mismatch");
  }
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double diff = a[i] - b[i];
    d += diff * diff;
  }
  return d;
}

double round_reward(std::span<const double> y_gt, std::span<const double> y_prev,
                    std::span<const double> y_curr) {
  return distance(y_prev, y_gt) - distance(y_curr, y_gt);
}

double episode_return(std::span<const double> rewards) {
  double sum = 0.0;
  for (double r : rewards) sum += r;
  return sum;
}

bool verify_telescoping(const EpisodeRecord& record, const TargetVector& y_gt) {
  if (record.predictions.size() != record.rewards.size() + 1) {
    throw std::invalid_argument(
        "verify_telescoping: record needs exactly one more prediction than "
        "rewards");
  }
  const double total = episode_return(record.rewards);
  const double expected = distance(record.predictions.front(), y_gt) -
                          distance(record.predictions.back(), y_gt);
  return std::abs(total - expected) <= 1e-9;
}

QState initial_q_state(const TaskSpec& prompt, int max_rounds) {
  if (max_rounds < 1) throw std::invalid_argument("max_rounds must be >= 1");
  return QState{prompt, {}, max_rounds};
}

AState initial_a_state(const SynthImage& image, int max_rounds) {
  if (max_rounds < 1) throw std::invalid_argument("max_rounds must be >= 1");
  return AState{image, {}, std::nullopt, max_rounds};
}

QState advance_q_state(const QState& state, const Round& round) {
  if (static_cast<int>(state.history.size()) >= state.max_rounds) {
    throw std::logic_error("advance_q_state: dialog already has T rounds");
  }
  QState next = state;
  next.history.push_back(round);
  return next;
}

AState pose_question(const AState& state, std::vector<Symbol> question) {
  if (static_cast<int>(state.history.size()) >= state.max_rounds) {
    throw std::logic_error("pose_question: dialog already has T rounds");
  }
  if (state.pending_question) {
    throw std::logic_error("pose_question: a question is already pending");
  }
  AState next = state;
  next.pending_question = std::move(question);
  return next;
}

AState advance_a_state(const AState& state, const Round& round) {
  if (static_cast<int>(state.history.size()) >= state.max_rounds) {
    throw std::logic_error("advance_a_state: dialog already has T rounds");
  }
  if (state.pending_question && *state.pending_question != round.question) {
    throw std::logic_error("advance_a_state: round does not answer the pending "
                           "question");
  }
  AState next = state;
  next.history.push_back(round);
  next.pending_question.reset();
  return next;
}

}  // namespace edl
