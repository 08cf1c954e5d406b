#include "edl/nets.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace edl {
namespace {

// y += W x for row-major W (rows x cols).
void matvec_add(const ParamBlock& w, std::span<const double> x, Vec& y) {
  const int cols = w.cols();
  for (int i = 0; i < w.rows(); ++i) {
    const double* row = w.values.data() + static_cast<std::size_t>(i) * cols;
    double s = 0.0;
    for (int j = 0; j < cols; ++j) s += row[j] * x[j];
    y[i] += s;
  }
}

// dx += W^T dy; dW += dy x^T.
void matvec_backward(ParamBlock& w, std::span<const double> x,
                     std::span<const double> dy, Vec* dx) {
  const int cols = w.cols();
  for (int i = 0; i < w.rows(); ++i) {
    const double g = dy[i];
    if (g == 0.0) continue;
    const double* row = w.values.data() + static_cast<std::size_t>(i) * cols;
    double* grow = w.grad.data() + static_cast<std::size_t>(i) * cols;
    for (int j = 0; j < cols; ++j) {
      grow[j] += g * x[j];
      if (dx) (*dx)[j] += g * row[j];
    }
  }
}

Vec affine(const ParamBlock& w, const ParamBlock& b, std::span<const double> x) {
  Vec y = b.values;
  matvec_add(w, x, y);
  return y;
}

void affine_backward(ParamBlock& w, ParamBlock& b, std::span<const double> x,
                     std::span<const double> dy, Vec* dx) {
  for (std::size_t i = 0; i < dy.size(); ++i) b.grad[i] += dy[i];
  matvec_backward(w, x, dy, dx);
}

std::span<const double> row_of(const ParamBlock& p, int r) {
  return {p.values.data() + static_cast<std::size_t>(r) * p.cols(),
          static_cast<std::size_t>(p.cols())};
}

void add_to_row(ParamBlock& p, int r, std::span<const double> g) {
  double* dst = p.grad.data() + static_cast<std::size_t>(r) * p.cols();
  for (std::size_t j = 0; j < g.size(); ++j) dst[j] += g[j];
}

Vec concat(std::initializer_list<std::span<const double>> parts) {
  Vec out;
  for (auto p : parts) out.insert(out.end(), p.begin(), p.end());
  return out;
}

CellTrace start_trace(int hidden) {
  CellTrace tr;
  tr.states.emplace_back(hidden, 0.0);
  return tr;
}

void cell_step(const ParamSet& ps, const RecurrentCell& cell, CellTrace& tr, Vec x) {
  const auto& w = ps.blocks()[cell.w];
  const auto& b = ps.blocks()[cell.b];
  const Vec hx = concat({tr.states.back(), x});
  Vec h = affine(w, b, hx);
  for (double& v : h) v = std::tanh(v);
  tr.inputs.push_back(std::move(x));
  tr.states.push_back(std::move(h));
}

// dstates[k] is the external gradient on states[k] (k >= 1; entry 0 unused,
// empty entries mean zero). Returns the gradient on each input.
std::vector<Vec> cell_backward(ParamSet& ps, const RecurrentCell& cell,
                               const CellTrace& tr, const std::vector<Vec>& dstates) {
  auto& w = ps.blocks()[cell.w];
  auto& b = ps.blocks()[cell.b];
  const int n = static_cast<int>(tr.inputs.size());
  const int hd = cell.hidden_dim;
  std::vector<Vec> dx(n);
  Vec dh(hd, 0.0);
  for (int k = n; k >= 1; --k) {
    if (k < static_cast<int>(dstates.size()) && !dstates[k].empty()) {
      for (int i = 0; i < hd; ++i) dh[i] += dstates[k][i];
    }
    const Vec& h = tr.states[k];
    Vec da(hd);
    for (int i = 0; i < hd; ++i) da[i] = dh[i] * (1.0 - h[i] * h[i]);
    const Vec hx = concat({tr.states[k - 1], tr.inputs[k - 1]});
    Vec dhx(hx.size(), 0.0);
    affine_backward(w, b, hx, da, &dhx);
    dh.assign(dhx.begin(), dhx.begin() + hd);
    dx[k - 1].assign(dhx.begin() + hd, dhx.end());
  }
  return dx;
}

RecurrentCell make_cell(int w, int b, int input, int hidden) {
  return RecurrentCell{w, b, input, hidden};
}

// Embedding rows of a round's tokens, q tokens first.
std::vector<std::pair<int, int>> round_tokens(const Round& r, int embed_q, int embed_a) {
  std::vector<std::pair<int, int>> out;
  for (const auto& s : r.question) out.emplace_back(embed_q, s.token);
  for (const auto& s : r.answer) out.emplace_back(embed_a, s.token);
  return out;
}

CellTrace encode_tokens(const ParamSet& ps, const RecurrentCell& cell,
                        const std::vector<std::pair<int, int>>& tokens) {
  CellTrace tr = start_trace(cell.hidden_dim);
  for (const auto& [blk, tok] : tokens) {
    const auto& e = ps.blocks()[blk];
    if (tok < 0 || tok >= e.rows()) throw std::out_of_range("token outside vocabulary");
    const auto r = row_of(e, tok);
    cell_step(ps, cell, tr, Vec(r.begin(), r.end()));
  }
  return tr;
}

void encode_tokens_backward(ParamSet& ps, const RecurrentCell& cell, const CellTrace& tr,
                            const std::vector<std::pair<int, int>>& tokens,
                            std::span<const double> dfinal) {
  std::vector<Vec> ds(tr.states.size());
  ds.back().assign(dfinal.begin(), dfinal.end());
  const auto dx = cell_backward(ps, cell, tr, ds);
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    add_to_row(ps.blocks()[tokens[i].first], tokens[i].second, dx[i]);
  }
}

bool all_zero(const Vec& v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return x == 0.0; });
}

}  // namespace

ParamBlock::ParamBlock(std::string n, std::vector<int> s)
    : name(std::move(n)), shape(std::move(s)) {
  std::size_t count = 1;
  for (int d : shape) {
    if (d <= 0) throw std::invalid_argument("param block '" + name + "': bad shape");
    count *= static_cast<std::size_t>(d);
  }
  values.assign(count, 0.0);
  grad.assign(count, 0.0);
}

ParamBlock& ParamSet::block(std::string_view name) {
  for (auto& b : blocks_) {
    if (b.name == name) return b;
  }
  throw std::out_of_range("no parameter block named '" + std::string(name) + "'");
}

const ParamBlock& ParamSet::block(std::string_view name) const {
  return const_cast<ParamSet*>(this)->block(name);
}

std::size_t ParamSet::num_params() const {
  std::size_t n = 0;
  for (const auto& b : blocks_) n += b.size();
  return n;
}

void ParamSet::zero_grad() {
  for (auto& b : blocks_) std::fill(b.grad.begin(), b.grad.end(), 0.0);
}

void ParamSet::init_uniform(Rng& rng, double scale) {
  for (auto& b : blocks_) {
    for (double& v : b.values) v = rng.uniform(-scale, scale);
  }
}

void ParamSet::fill(double value) {
  for (auto& b : blocks_) std::fill(b.values.begin(), b.values.end(), value);
}

int ParamSet::add(std::string name, std::vector<int> shape) {
  blocks_.emplace_back(std::move(name), std::move(shape));
  return static_cast<int>(blocks_.size()) - 1;
}

QBotNet::QBotNet(const NetDims& d) : dims_(d) {
  const int e = d.embed, h = d.hidden;
  embed_q = add("q.embed_q", {d.q_vocab, e});
  embed_a = add("q.embed_a", {d.a_vocab, e});
  embed_task = add("q.embed_task", {d.tasks, e});
  fact_cell = make_cell(add("q.fact.W", {h, h + e}), add("q.fact.b", {h}), e, h);
  history_cell = make_cell(add("q.history.W", {h, h + e + h}), add("q.history.b", {h}),
                           e + h, h);
  question_w = add("q.question.W", {d.q_vocab, h});
  question_b = add("q.question.b", {d.q_vocab});
  regressor_w = add("f.W", {d.target_dim, h});
  regressor_b = add("f.b", {d.target_dim});
}

ABotNet::ABotNet(const NetDims& d) : dims_(d) {
  const int e = d.embed, h = d.hidden;
  embed_q = add("a.embed_q", {d.q_vocab, e});
  embed_a = add("a.embed_a", {d.a_vocab, e});
  image_w = add("a.image.W", {e, d.target_dim});
  image_b = add("a.image.b", {e});
  question_cell = make_cell(add("a.question.W", {h, h + e}), add("a.question.b", {h}), e, h);
  fact_cell = make_cell(add("a.fact.W", {h, h + e}), add("a.fact.b", {h}), e, h);
  history_cell = make_cell(add("a.history.W", {h, h + e + 2 * h}),
                           add("a.history.b", {h}), e + 2 * h, h);
  answer_w = add("a.answer.W", {d.a_vocab, h});
  answer_b = add("a.answer.b", {d.a_vocab});
}

namespace {

void q_emit(const QBotNet& net, QTape& tape) {
  const Vec& s = tape.history.states.back();
  const auto& bl = net.blocks();
  tape.probs.push_back(softmax(affine(bl[net.question_w], bl[net.question_b], s)));
  tape.predictions.push_back(affine(bl[net.regressor_w], bl[net.regressor_b], s));
}

}  // namespace

QTape q_begin(const QBotNet& net, int task_id) {
  const auto& emb = net.blocks()[net.embed_task];
  if (task_id < 0 || task_id >= emb.rows()) throw std::out_of_range("q_begin: task id");
  QTape tape;
  tape.task = task_id;
  tape.history = start_trace(net.dims().hidden);
  const Vec zero_fact(net.dims().hidden, 0.0);
  cell_step(net, net.history_cell, tape.history, concat({row_of(emb, task_id), zero_fact}));
  q_emit(net, tape);
  return tape;
}

void q_extend(const QBotNet& net, QTape& tape, const Round& round) {
  tape.facts.push_back(
      encode_tokens(net, net.fact_cell, round_tokens(round, net.embed_q, net.embed_a)));
  tape.rounds.push_back(round);
  const auto& emb = net.blocks()[net.embed_task];
  cell_step(net, net.history_cell, tape.history,
            concat({row_of(emb, tape.task), tape.facts.back().states.back()}));
  q_emit(net, tape);
}

ATape a_begin(const ABotNet& net, const TargetVector& image_input) {
  if (static_cast<int>(image_input.size()) != net.dims().target_dim) {
    throw std::invalid_argument("a_begin: image vector dimension");
  }
  ATape tape;
  tape.image_input = image_input;
  tape.image_embedding = affine(net.blocks()[net.image_w], net.blocks()[net.image_b], image_input);
  tape.history = start_trace(net.dims().hidden);
  return tape;
}

void a_ask(const ABotNet& net, ATape& tape, const std::vector<Symbol>& question) {
  if (tape.facts.size() != tape.questions.size()) {
    throw std::logic_error("a_ask: previous round not completed");
  }
  std::vector<std::pair<int, int>> toks;
  for (const auto& s : question) toks.emplace_back(net.embed_q, s.token);
  tape.questions.push_back(encode_tokens(net, net.question_cell, toks));
  tape.posed.push_back(question);
  const Vec zero(net.dims().hidden, 0.0);
  const Vec& prev_fact = tape.facts.empty() ? zero : tape.facts.back().states.back();
  cell_step(net, net.history_cell, tape.history,
            concat({tape.image_embedding, tape.questions.back().states.back(), prev_fact}));
  const auto& bl = net.blocks();
  tape.probs.push_back(
      softmax(affine(bl[net.answer_w], bl[net.answer_b], tape.history.states.back())));
}

void a_complete(const ABotNet& net, ATape& tape, const Round& round) {
  if (tape.facts.size() + 1 != tape.questions.size()) {
    throw std::logic_error("a_complete: no open question");
  }
  tape.facts.push_back(
      encode_tokens(net, net.fact_cell, round_tokens(round, net.embed_q, net.embed_a)));
  tape.rounds.push_back(round);
}

QOutput q_forward(const QBotNet& net, const QState& state) {
  QTape tape = q_begin(net, state.prompt.id);
  for (const auto& r : state.history) q_extend(net, tape, r);
  QOutput out;
  out.question_probs = tape.probs.back();
  out.hidden = tape.history.states.back();
  out.prediction = tape.predictions.back();
  out.tape = std::move(tape);
  return out;
}

AOutput a_forward(const ABotNet& net, const World& world, const AState& state) {
  if (!state.pending_question) {
    throw std::invalid_argument("a_forward: no pending question");
  }
  ATape tape = a_begin(net, world.target_vector(state.image));
  for (const auto& r : state.history) {
    a_ask(net, tape, r.question);
    a_complete(net, tape, r);
  }
  a_ask(net, tape, *state.pending_question);
  AOutput out;
  out.answer_probs = tape.probs.back();
  out.hidden = tape.history.states.back();
  out.tape = std::move(tape);
  return out;
}

void q_backward(QBotNet& net, const QTape& tape, const QGrad& grad) {
  const int steps = tape.steps();
  if (static_cast<int>(grad.dlogits.size()) > steps ||
      static_cast<int>(grad.dpred.size()) > steps) {
    throw std::invalid_argument("q_backward: gradient has more steps than the tape");
  }
  auto& bl = net.blocks();
  const int hd = net.dims().hidden;
  const int e = net.dims().embed;
  std::vector<Vec> ds(steps + 1);
  bool any = false;
  for (int t = 0; t < steps; ++t) {
    Vec d(hd, 0.0);
    bool used = false;
    if (t < static_cast<int>(grad.dlogits.size()) && !grad.dlogits[t].empty() &&
        !all_zero(grad.dlogits[t])) {
      affine_backward(bl[net.question_w], bl[net.question_b], tape.state(t),
                      grad.dlogits[t], &d);
      used = true;
    }
    if (t < static_cast<int>(grad.dpred.size()) && !grad.dpred[t].empty() &&
        !all_zero(grad.dpred[t])) {
      affine_backward(bl[net.regressor_w], bl[net.regressor_b], tape.state(t),
                      grad.dpred[t], &d);
      used = true;
    }
    if (used) {
      ds[t + 1] = std::move(d);
      any = true;
    }
  }
  if (!any) return;
  const auto dx = cell_backward(net, net.history_cell, tape.history, ds);
  for (int t = 0; t < steps; ++t) {
    add_to_row(bl[net.embed_task], tape.task, std::span(dx[t]).first(e));
    if (t == 0) continue;
    encode_tokens_backward(net, net.fact_cell, tape.facts[t - 1],
                           round_tokens(tape.rounds[t - 1], net.embed_q, net.embed_a),
                           std::span(dx[t]).subspan(e));
  }
}

void a_backward(ABotNet& net, const ATape& tape, const AGrad& grad) {
  const int n = tape.asked();
  if (static_cast<int>(grad.dlogits.size()) > n) {
    throw std::invalid_argument("a_backward: gradient has more steps than the tape");
  }
  auto& bl = net.blocks();
  const int hd = net.dims().hidden;
  const int e = net.dims().embed;
  std::vector<Vec> ds(n + 1);
  bool any = false;
  for (int j = 0; j < static_cast<int>(grad.dlogits.size()); ++j) {
    if (grad.dlogits[j].empty() || all_zero(grad.dlogits[j])) continue;
    Vec d(hd, 0.0);
    affine_backward(bl[net.answer_w], bl[net.answer_b], tape.history.states[j + 1],
                    grad.dlogits[j], &d);
    ds[j + 1] = std::move(d);
    any = true;
  }
  if (!any) return;
  const auto dx = cell_backward(net, net.history_cell, tape.history, ds);
  Vec dimg(e, 0.0);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < e; ++i) dimg[i] += dx[j][i];
    std::vector<std::pair<int, int>> qtoks;
    for (const auto& s : tape.posed[j]) qtoks.emplace_back(net.embed_q, s.token);
    encode_tokens_backward(net, net.question_cell, tape.questions[j], qtoks,
                           std::span(dx[j]).subspan(e, hd));
    if (j > 0) {
      encode_tokens_backward(net, net.fact_cell, tape.facts[j - 1],
                             round_tokens(tape.rounds[j - 1], net.embed_q, net.embed_a),
                             std::span(dx[j]).subspan(e + hd, hd));
    }
  }
  affine_backward(bl[net.image_w], bl[net.image_b], tape.image_input, dimg, nullptr);
}

Vec softmax(std::span<const double> logits) {
  if (logits.empty()) throw std::invalid_argument("softmax: empty input");
  const double m = *std::max_element(logits.begin(), logits.end());
  Vec p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    p[i] = std::exp(logits[i] - m);
    z += p[i];
  }
  for (double& v : p) v /= z;
  return p;
}

namespace {

void check_distribution(std::span<const double> probs) {
  if (probs.empty()) throw std::invalid_argument("empty distribution");
  double s = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0)) throw std::invalid_argument("distribution has a negative entry");
    s += p;
  }
  if (std::abs(s - 1.0) > 1e-6) throw std::invalid_argument("distribution does not sum to 1");
}

}  // namespace

int sample_symbol(std::span<const double> probs, Rng& rng) {
  check_distribution(probs);
  return rng.categorical(probs);
}

int greedy_symbol(std::span<const double> probs) {
  check_distribution(probs);
  return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

DialogTapes dialog_forward(const QBotNet& q, const ABotNet& a, const World& world,
                           const Instance& instance, const std::vector<Round>& rounds) {
  DialogTapes t{q_begin(q, instance.task.id), a_begin(a, world.target_vector(instance.image))};
  for (const auto& r : rounds) {
    a_ask(a, t.a, r.question);
    a_complete(a, t.a, r);
    q_extend(q, t.q, r);
  }
  return t;
}

namespace {

void check_loss_shape(const DialogLoss& loss) {
  const auto n = loss.rounds.size();
  if (loss.q_weight.size() != n || loss.a_weight.size() != n ||
      loss.reg_weight.size() != n + 1) {
    throw std::invalid_argument("dialog loss: weight vectors do not match the rounds");
  }
}

double loss_from_tapes(const DialogTapes& t, const TargetVector& y, const DialogLoss& loss) {
  double total = 0.0;
  for (std::size_t i = 0; i < loss.rounds.size(); ++i) {
    if (loss.q_weight[i] != 0.0) {
      total -= loss.q_weight[i] * std::log(t.q.probs[i][loss.rounds[i].q_token()]);
    }
    if (loss.a_weight[i] != 0.0) {
      total -= loss.a_weight[i] * std::log(t.a.probs[i][loss.rounds[i].a_token()]);
    }
  }
  for (std::size_t i = 0; i <= loss.rounds.size(); ++i) {
    if (loss.reg_weight[i] != 0.0) total += loss.reg_weight[i] * distance(t.q.predictions[i], y);
  }
  return total;
}

// d(-w log p_k)/dlogits = w (p - e_k)
Vec nll_grad(const Vec& p, int k, double w) {
  Vec g(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) g[i] = w * p[i];
  g[k] -= w;
  return g;
}

}  // namespace

double dialog_loss(const QBotNet& q, const ABotNet& a, const World& world,
                   const DialogLoss& loss) {
  check_loss_shape(loss);
  const auto t = dialog_forward(q, a, world, loss.instance, loss.rounds);
  return loss_from_tapes(t, world.target_vector(loss.instance.image), loss);
}

DialogLossValue dialog_loss_backward(QBotNet& q, ABotNet& a, const World& world,
                                     const DialogLoss& loss) {
  check_loss_shape(loss);
  const auto t = dialog_forward(q, a, world, loss.instance, loss.rounds);
  const auto y = world.target_vector(loss.instance.image);
  const std::size_t n = loss.rounds.size();
  QGrad qg;
  AGrad ag;
  qg.dlogits.resize(n + 1);
  qg.dpred.resize(n + 1);
  ag.dlogits.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (loss.q_weight[i] != 0.0) {
      qg.dlogits[i] = nll_grad(t.q.probs[i], loss.rounds[i].q_token(), loss.q_weight[i]);
    }
    if (loss.a_weight[i] != 0.0) {
      ag.dlogits[i] = nll_grad(t.a.probs[i], loss.rounds[i].a_token(), loss.a_weight[i]);
    }
  }
  for (std::size_t i = 0; i <= n; ++i) {
    if (loss.reg_weight[i] == 0.0) continue;
    Vec d(y.size());
    for (std::size_t j = 0; j < y.size(); ++j) {
      d[j] = 2.0 * loss.reg_weight[i] * (t.q.predictions[i][j] - y[j]);
    }
    qg.dpred[i] = std::move(d);
  }
  q_backward(q, t.q, qg);
  a_backward(a, t.a, ag);
  DialogLossValue v;
  v.total = loss_from_tapes(t, y, loss);
  for (std::size_t i = 0; i < n; ++i) {
    v.log_pq.push_back(std::log(t.q.probs[i][loss.rounds[i].q_token()]));
    v.log_pa.push_back(std::log(t.a.probs[i][loss.rounds[i].a_token()]));
  }
  for (std::size_t i = 0; i <= n; ++i) v.sq_err.push_back(distance(t.q.predictions[i], y));
  return v;
}

namespace {

// Loss-only evaluation, written independently of the tape code and templated
// on the scalar type so that finite differences can run in long double.
template <typename S>
struct RefEval {
  const ParamBlock* bumped = nullptr;
  std::size_t index = 0;
  S delta = 0;

  S p(const ParamBlock& b, std::size_t i) const {
    S v = static_cast<S>(b.values[i]);
    if (&b == bumped && i == index) v += delta;
    return v;
  }

  std::vector<S> affine(const ParamBlock& w, const ParamBlock& b,
                        const std::vector<S>& x) const {
    std::vector<S> y(w.rows());
    for (int i = 0; i < w.rows(); ++i) {
      S s = p(b, i);
      for (int j = 0; j < w.cols(); ++j) s += p(w, static_cast<std::size_t>(i) * w.cols() + j) * x[j];
      y[i] = s;
    }
    return y;
  }

  std::vector<S> row(const ParamBlock& b, int r) const {
    std::vector<S> out(b.cols());
    for (int j = 0; j < b.cols(); ++j) out[j] = p(b, static_cast<std::size_t>(r) * b.cols() + j);
    return out;
  }

  std::vector<S> step(const ParamSet& ps, const RecurrentCell& c, const std::vector<S>& h,
                      const std::vector<S>& x) const {
    std::vector<S> hx = h;
    hx.insert(hx.end(), x.begin(), x.end());
    auto out = affine(ps.blocks()[c.w], ps.blocks()[c.b], hx);
    for (auto& v : out) v = std::tanh(v);
    return out;
  }

  std::vector<S> encode(const ParamSet& ps, const RecurrentCell& c,
                        const std::vector<std::pair<int, int>>& toks) const {
    std::vector<S> h(c.hidden_dim, S(0));
    for (const auto& [blk, tok] : toks) h = step(ps, c, h, row(ps.blocks()[blk], tok));
    return h;
  }

  static S log_softmax_at(const std::vector<S>& z, int k) {
    S m = z[0];
    for (const auto& v : z) m = std::max(m, v);
    S sum = 0;
    for (const auto& v : z) sum += std::exp(v - m);
    return z[k] - m - std::log(sum);
  }

  static std::vector<S> cat(std::vector<S> a, const std::vector<S>& b) {
    a.insert(a.end(), b.begin(), b.end());
    return a;
  }

  S loss(const QBotNet& q, const ABotNet& a, const World& world, const DialogLoss& L) const {
    const auto& qb = q.blocks();
    const auto& ab = a.blocks();
    const auto y = world.target_vector(L.instance.image);
    S total = 0;
    auto reg = [&](const std::vector<S>& s, std::size_t t) {
      if (L.reg_weight[t] == 0.0) return;
      const auto pred = affine(qb[q.regressor_w], qb[q.regressor_b], s);
      S d = 0;
      for (std::size_t j = 0; j < y.size(); ++j) d += (pred[j] - y[j]) * (pred[j] - y[j]);
      total += static_cast<S>(L.reg_weight[t]) * d;
    };
    const int hd = q.dims().hidden;
    const auto task = row(qb[q.embed_task], L.instance.task.id);
    std::vector<S> sq = step(q, q.history_cell, std::vector<S>(hd, S(0)),
                             cat(task, std::vector<S>(hd, S(0))));
    std::vector<S> img(y.begin(), y.end());
    const auto img_emb = affine(ab[a.image_w], ab[a.image_b], img);
    std::vector<S> sa(a.dims().hidden, S(0));
    std::vector<S> fa(a.dims().hidden, S(0));
    reg(sq, 0);
    for (std::size_t t = 0; t < L.rounds.size(); ++t) {
      const Round& r = L.rounds[t];
      if (L.q_weight[t] != 0.0) {
        const auto z = affine(qb[q.question_w], qb[q.question_b], sq);
        total -= static_cast<S>(L.q_weight[t]) * log_softmax_at(z, r.q_token());
      }
      std::vector<std::pair<int, int>> qt;
      for (const auto& s : r.question) qt.emplace_back(a.embed_q, s.token);
      sa = step(a, a.history_cell, sa, cat(cat(img_emb, encode(a, a.question_cell, qt)), fa));
      if (L.a_weight[t] != 0.0) {
        const auto z = affine(ab[a.answer_w], ab[a.answer_b], sa);
        total -= static_cast<S>(L.a_weight[t]) * log_softmax_at(z, r.a_token());
      }
      fa = encode(a, a.fact_cell, round_tokens(r, a.embed_q, a.embed_a));
      sq = step(q, q.history_cell, sq,
                cat(task, encode(q, q.fact_cell, round_tokens(r, q.embed_q, q.embed_a))));
      reg(sq, t + 1);
    }
    return total;
  }
};

}  // namespace

long double reference_dialog_loss(const QBotNet& q, const ABotNet& a, const World& world,
                                  const DialogLoss& loss) {
  check_loss_shape(loss);
  return RefEval<long double>{}.loss(q, a, world, loss);
}

FdReport fd_check(QBotNet& q, ABotNet& a, const World& world, const DialogLoss& loss,
                  double h) {
  if (!(h > 0.0)) throw std::invalid_argument("fd_check: h must be positive");
  check_loss_shape(loss);
  q.zero_grad();
  a.zero_grad();
  dialog_loss_backward(q, a, world, loss);
  FdReport rep;
  auto scan = [&](ParamSet& ps) {
    for (auto& blk : ps.blocks()) {
      for (std::size_t i = 0; i < blk.size(); ++i) {
        RefEval<long double> ev{&blk, i, static_cast<long double>(h)};
        const long double up = ev.loss(q, a, world, loss);
        ev.delta = -static_cast<long double>(h);
        const long double down = ev.loss(q, a, world, loss);
        const double numeric = static_cast<double>((up - down) / (2.0L * h));
        const double err = std::abs(blk.grad[i] - numeric) / std::max(1e-8, std::abs(numeric));
        if (err > rep.max_rel_error || rep.worst_index < 0) {
          rep.max_rel_error = err;
          rep.worst_block = blk.name;
          rep.worst_index = static_cast<int>(i);
          rep.analytic = blk.grad[i];
          rep.numeric = numeric;
        }
      }
    }
  };
  scan(q);
  scan(a);
  q.zero_grad();
  a.zero_grad();
  return rep;
}

}  // namespace edl
