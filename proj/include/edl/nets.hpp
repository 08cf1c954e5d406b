#pragma once

// Small recurrent Q-bot / A-bot networks with a hand-written reverse pass.
//
// Q-bot:  F_t  = fact_cell over the tokens of round t (q tokens, then a tokens), h = 0
//         S_t  = history_cell(S_{t-1}, [task_emb; F_t]),  F_0 = 0
//         pi_Q(q_{t+1}) = softmax(question_head(S_t)),  y_hat_t = f(S_t)
// A-bot:  Q^A_t = question_cell over the tokens of q_t
//         S^A_t = history_cell(S^A_{t-1}, [image_emb; Q^A_t; F^A_{t-1}])
//         pi_A(a_t) = softmax(answer_head(S^A_t))

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "edl/dialog.hpp"
#include "edl/rng.hpp"
#include "edl/world.hpp"

namespace edl {

using Vec = std::vector<double>;

struct ParamBlock {
  std::string name;
  std::vector<int> shape;
  Vec values;
  Vec grad;

  ParamBlock(std::string name, std::vector<int> shape);
  std::size_t size() const { return values.size(); }
  int rows() const { return shape.at(0); }
  int cols() const { return shape.size() > 1 ? shape[1] : 1; }
};

struct NetDims {
  int q_vocab = 3;
  int a_vocab = 4;
  int tasks = 6;
  int target_dim = 12;
  int embed = 16;
  int hidden = 32;

  friend bool operator==(const NetDims&, const NetDims&) = default;
};

/// Ordered, named collection of parameter blocks.
class ParamSet {
 public:
  std::vector<ParamBlock>& blocks() { return blocks_; }
  const std::vector<ParamBlock>& blocks() const { return blocks_; }
  ParamBlock& block(std::string_view name);
  const ParamBlock& block(std::string_view name) const;
  std::size_t num_params() const;
  void zero_grad();
  /// Uniform in [-scale, scale], block by block in declaration order.
  void init_uniform(Rng& rng, double scale);
  void fill(double value);

 protected:
  int add(std::string name, std::vector<int> shape);
  std::vector<ParamBlock> blocks_;
};

/// h' = tanh(W [h; x] + b) with W of shape hidden x (hidden + input).
struct RecurrentCell {
  int w = -1;
  int b = -1;
  int input_dim = 0;
  int hidden_dim = 0;
};

/// Inputs x_0..x_{n-1} and states h_0..h_n of one cell run.
struct CellTrace {
  std::vector<Vec> inputs;
  std::vector<Vec> states;
};

class QBotNet : public ParamSet {
 public:
  explicit QBotNet(const NetDims& dims = {});
  const NetDims& dims() const { return dims_; }

  int embed_q, embed_a, embed_task;
  RecurrentCell fact_cell, history_cell;
  int question_w, question_b;
  int regressor_w, regressor_b;

 private:
  NetDims dims_;
};

class ABotNet : public ParamSet {
 public:
  explicit ABotNet(const NetDims& dims = {});
  const NetDims& dims() const { return dims_; }

  int embed_q, embed_a;
  int image_w, image_b;
  RecurrentCell question_cell, fact_cell, history_cell;
  int answer_w, answer_b;

 private:
  NetDims dims_;
};

struct QTape {
  int task = 0;
  std::vector<Round> rounds;
  std::vector<CellTrace> facts;  // one per completed round
  CellTrace history;             // states[t + 1] = S_t
  std::vector<Vec> probs;        // question distribution from S_t
  std::vector<Vec> predictions;  // y_hat_t

  int steps() const { return static_cast<int>(probs.size()); }
  const Vec& state(int t) const { return history.states.at(t + 1); }
};

struct ATape {
  Vec image_input;
  Vec image_embedding;
  std::vector<Round> rounds;
  std::vector<std::vector<Symbol>> posed;
  std::vector<CellTrace> questions;  // one per posed question
  std::vector<CellTrace> facts;      // one per completed round
  CellTrace history;
  std::vector<Vec> probs;            // answer distribution per posed question

  int asked() const { return static_cast<int>(questions.size()); }
};

QTape q_begin(const QBotNet& net, int task_id);
void q_extend(const QBotNet& net, QTape& tape, const Round& round);

ATape a_begin(const ABotNet& net, const TargetVector& image_input);
void a_ask(const ABotNet& net, ATape& tape, const std::vector<Symbol>& question);
void a_complete(const ABotNet& net, ATape& tape, const Round& round);

struct QOutput {
  Vec question_probs;
  Vec hidden;
  TargetVector prediction;
  QTape tape;
};

struct AOutput {
  Vec answer_probs;
  Vec hidden;
  ATape tape;
};

QOutput q_forward(const QBotNet& net, const QState& state);
/// Throws std::invalid_argument when no question is pending.
AOutput a_forward(const ABotNet& net, const World& world, const AState& state);

/// Loss gradients per step; an empty entry means no gradient there.
struct QGrad {
  std::vector<Vec> dlogits;  // indexed by t, from S_t
  std::vector<Vec> dpred;    // indexed by t, on y_hat_t
};

struct AGrad {
  std::vector<Vec> dlogits;  // indexed by posed question
};

/// Accumulates parameter gradients (adds into ParamBlock::grad).
void q_backward(QBotNet& net, const QTape& tape, const QGrad& grad);
void a_backward(ABotNet& net, const ATape& tape, const AGrad& grad);

Vec softmax(std::span<const double> logits);
/// Categorical draw; throws if the input is not a distribution within 1e-6.
int sample_symbol(std::span<const double> probs, Rng& rng);
/// Argmax, lowest index on ties.
int greedy_symbol(std::span<const double> probs);

/// Scalar loss over one teacher-forced dialog:
///   sum_t -q_weight[t-1] log pi_Q(q_t)  + sum_t -a_weight[t-1] log pi_A(a_t)
///   + sum_{t=0..T} reg_weight[t] ||y_hat_t - y||^2
/// Supervised losses use unit weights, the policy-gradient surrogate uses
/// the per-round rewards held constant.
struct DialogLoss {
  Instance instance;
  std::vector<Round> rounds;
  std::vector<double> q_weight;
  std::vector<double> a_weight;
  std::vector<double> reg_weight;
};

struct DialogTapes {
  QTape q;
  ATape a;
};

DialogTapes dialog_forward(const QBotNet& q, const ABotNet& a, const World& world,
                           const Instance& instance, const std::vector<Round>& rounds);
double dialog_loss(const QBotNet& q, const ABotNet& a, const World& world,
                   const DialogLoss& loss);
struct DialogLossValue {
  double total = 0.0;
  Vec log_pq;  // log pi_Q(q_t), per round
  Vec log_pa;  // log pi_A(a_t), per round
  Vec sq_err;  // ||y_hat_t - y||^2, t = 0..T
};

/// Loss value and per-round terms; gradients are accumulated into both nets.
DialogLossValue dialog_loss_backward(QBotNet& q, ABotNet& a, const World& world,
                            const DialogLoss& loss);

/// Loss-only evaluation of the same dialog loss in extended precision,
/// computed without tapes.
long double reference_dialog_loss(const QBotNet& q, const ABotNet& a, const World& world,
                                  const DialogLoss& loss);

struct FdReport {
  double max_rel_error = 0.0;
  std::string worst_block;
  int worst_index = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Central differences of reference_dialog_loss over every parameter of both
/// nets against dialog_loss_backward; error = |a - n| / max(1e-8, |n|).
FdReport fd_check(QBotNet& q, ABotNet& a, const World& world,
                  const DialogLoss& loss, double h);

}  // namespace edl
