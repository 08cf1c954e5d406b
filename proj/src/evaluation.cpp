#include "edl/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <fmt/format.h>

namespace edl {

double percentile_rank(const World& world, const TargetVector& prediction,
                       const SynthImage& true_image, std::span<const SynthImage> pool) {
  if (pool.size() < 2) throw std::invalid_argument("percentile_rank: pool needs two images");
  if (std::find(pool.begin(), pool.end(), true_image) == pool.end()) {
    throw std::invalid_argument("percentile_rank: true image not in pool");
  }
  const double d_true = distance(world.target_vector(true_image), prediction);
  double rank = 1.0;
  for (const auto& img : pool) {
    if (img == true_image) continue;
    const double d = distance(world.target_vector(img), prediction);
    if (d < d_true) {
      rank += 1.0;
    } else if (d == d_true) {
      rank += 0.5;
    }
  }
  const double n = static_cast<double>(pool.size());
  return 100.0 * (n - rank) / (n - 1.0);
}

std::vector<EpisodeRecord> play_all(const World& world, Questioner& q, Answerer& a,
                                    std::span<const Instance> instances, int rounds) {
  std::vector<EpisodeRecord> out;
  out.reserve(instances.size());
  for (const auto& inst : instances) out.push_back(play_dialog(world, inst, q, a, rounds));
  return out;
}

RetrievalCurve retrieval_curve(const World& world, std::span<const EpisodeRecord> records,
                               std::span<const SynthImage> pool) {
  if (records.empty()) throw std::invalid_argument("retrieval_curve: no records");
  const std::size_t steps = records.front().predictions.size();
  if (steps == 0) throw std::invalid_argument("retrieval_curve: records carry no predictions");
  RetrievalCurve curve;
  for (std::size_t t = 0; t < steps; ++t) {
    std::vector<double> xs;
    xs.reserve(records.size());
    for (const auto& r : records) {
      if (r.predictions.size() != steps) {
        throw std::invalid_argument("retrieval_curve: records differ in length");
      }
      xs.push_back(percentile_rank(world, r.predictions[t], r.instance.image, pool));
    }
    const double n = static_cast<double>(xs.size());
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= n;
    double ss = 0.0;
    for (double x : xs) ss += (x - mean) * (x - mean);
    const double se = xs.size() > 1 ? std::sqrt(ss / (n - 1.0) / n) : 0.0;
    curve.rounds.push_back({mean, se});
  }
  return curve;
}

RetrievalCurve retrieval_curve(const World& world, Questioner& q, Answerer& a,
                               std::span<const Instance> instances,
                               std::span<const SynthImage> pool, int rounds) {
  const auto recs = play_all(world, q, a, instances, rounds);
  return retrieval_curve(world, recs, pool);
}

double task_accuracy(const World& world, std::span<const EpisodeRecord> records) {
  if (records.empty()) return 0.0;
  long correct = 0;
  for (const auto& r : records) {
    if (r.final_guess && world.check_prediction(r.instance, *r.final_guess)) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(records.size());
}

double task_accuracy(const World& world, Questioner& q, Answerer& a,
                     std::span<const Instance> instances, int rounds) {
  const auto recs = play_all(world, q, a, instances, rounds);
  return task_accuracy(world, recs);
}

double mutual_information_bits(const std::vector<std::vector<double>>& joint) {
  double total = 0.0;
  std::vector<double> rows(joint.size(), 0.0);
  std::vector<double> cols;
  for (std::size_t i = 0; i < joint.size(); ++i) {
    if (cols.size() < joint[i].size()) cols.resize(joint[i].size(), 0.0);
    for (std::size_t j = 0; j < joint[i].size(); ++j) {
      if (joint[i][j] < 0.0) throw std::invalid_argument("mutual information: negative count");
      rows[i] += joint[i][j];
      cols[j] += joint[i][j];
      total += joint[i][j];
    }
  }
  if (total <= 0.0) return 0.0;
  double mi = 0.0;
  for (std::size_t i = 0; i < joint.size(); ++i) {
    for (std::size_t j = 0; j < joint[i].size(); ++j) {
      const double c = joint[i][j];
      if (c == 0.0) continue;
      mi += c / total * std::log2(c * total / (rows[i] * cols[j]));
    }
  }
  return std::max(0.0, mi);
}

ProtocolReport protocol_report(const World& world, const Vocabulary& vocab,
                               std::span<const EpisodeRecord> records) {
  const int na = world.num_attributes();
  const int nv = world.values_per_attribute();
  ProtocolReport rep;
  for (int s = 0; s < vocab.q_size; ++s) {
    SymbolGrounding g;
    g.symbol = s;
    g.answers.assign(na, std::vector<std::vector<double>>(nv, std::vector<double>(vocab.a_size, 0.0)));
    rep.symbols.push_back(std::move(g));
  }
  for (const auto& r : records) {
    for (const auto& round : r.rounds) {
      auto& g = rep.symbols.at(round.q_token());
      ++g.count;
      for (int k = 0; k < na; ++k) {
        g.answers[k][r.instance.image.values[k]][round.a_token()] += 1.0;
      }
    }
  }
  const double full = std::log2(static_cast<double>(nv));
  bool any_asked = false;
  rep.factorized = true;
  for (auto& g : rep.symbols) {
    g.mi_bits.clear();
    for (int k = 0; k < na; ++k) g.mi_bits.push_back(mutual_information_bits(g.answers[k]));
    if (g.count == 0) continue;
    any_asked = true;
    g.best_attribute = static_cast<int>(
        std::max_element(g.mi_bits.begin(), g.mi_bits.end()) - g.mi_bits.begin());
    const auto& table = g.answers[g.best_attribute];
    g.deterministic = true;
    g.answer_for_value.assign(nv, -1);
    for (int v = 0; v < nv; ++v) {
      const auto& row = table[v];
      int nonzero = 0;
      for (double c : row) nonzero += c > 0.0;
      if (nonzero > 1) g.deterministic = false;
      if (nonzero > 0) {
        g.answer_for_value[v] =
            static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
      }
    }
    const bool grounded = g.deterministic && g.mi_bits[g.best_attribute] >= full - 1e-9;
    rep.factorized = rep.factorized && grounded;
  }
  rep.factorized = rep.factorized && any_asked;
  return rep;
}

ProtocolReport protocol_report(const World& world, const Vocabulary& vocab, Questioner& q,
                               Answerer& a, std::span<const Instance> instances, int rounds) {
  const auto recs = play_all(world, q, a, instances, rounds);
  return protocol_report(world, vocab, recs);
}

std::vector<bool> answer_map_injective(const World& world,
                                       std::span<const EpisodeRecord> records) {
  // task -> answer sequence -> set of (first value, second value)
  std::vector<std::map<std::vector<int>, std::set<std::pair<int, int>>>> seen(world.num_tasks());
  for (const auto& r : records) {
    std::vector<int> seq;
    for (const auto& round : r.rounds) seq.push_back(round.a_token());
    const auto& t = r.instance.task;
    seen[t.id][seq].insert({r.instance.image.values[t.first],
                            r.instance.image.values[t.second]});
  }
  std::vector<bool> ok(world.num_tasks(), true);
  for (int t = 0; t < world.num_tasks(); ++t) {
    for (const auto& [seq, combos] : seen[t]) {
      if (combos.size() > 1) ok[t] = false;
    }
  }
  return ok;
}

RankingMetrics ranking_metrics(std::span<const int> ranks, std::span<const int> ks) {
  if (ranks.empty()) throw std::invalid_argument("ranking_metrics: no ranks");
  RankingMetrics m;
  const double n = static_cast<double>(ranks.size());
  for (int r : ranks) {
    if (r < 1) throw std::invalid_argument("ranking_metrics: ranks start at 1");
    m.mrr += 1.0 / r;
    m.mean_rank += r;
  }
  m.mrr /= n;
  m.mean_rank /= n;
  for (int k : ks) {
    const auto hits = std::count_if(ranks.begin(), ranks.end(), [k](int r) { return r <= k; });
    m.recall_at[k] = static_cast<double>(hits) / n;
  }
  return m;
}

void write_retrieval_csv(const std::string& path, const RetrievalCurve& curve) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "round,mean_percentile_rank,std_error\n";
  for (std::size_t t = 0; t < curve.rounds.size(); ++t) {
    out << fmt::format("{},{:.17g},{:.17g}\n", t, curve.rounds[t].mean, curve.rounds[t].std_error);
  }
}

std::string retrieval_plot_script(const std::string& csv_name) {
  return fmt::format(R"PY(import csv
import matplotlib.pyplot as plt

rows = list(csv.DictReader(open("{0}")))
x = [int(r["round"]) for r in rows]
y = [float(r["mean_percentile_rank"]) for r in rows]
e = [float(r["std_error"]) for r in rows]
plt.errorbar(x, y, yerr=e, marker="o", capsize=3)
plt.xlabel("dialog round")
plt.ylabel("percentile rank (higher is better)")
plt.ylim(0, 100)
plt.grid(alpha=0.3)
plt.savefig("{0}".rsplit(".", 1)[0] + ".png", dpi=120)
)PY",
                     csv_name);
}

std::string format_protocol_report(const World& world, const Vocabulary& vocab,
                                   const ProtocolReport& report) {
  std::ostringstream os;
  const int nv = world.values_per_attribute();
  for (const auto& g : report.symbols) {
    os << "question " << vocab.label({Side::Q, g.symbol}) << ": asked " << g.count << " times\n";
    if (g.count == 0) continue;
    os << "  MI (bits):";
    for (std::size_t k = 0; k < g.mi_bits.size(); ++k) {
      os << fmt::format("  {}={:.3f}", world.attribute_name(static_cast<int>(k)), g.mi_bits[k]);
    }
    os << "\n  grounded on " << world.attribute_name(g.best_attribute)
       << (g.deterministic ? " (deterministic)\n" : " (not deterministic)\n");
    for (int v = 0; v < nv; ++v) {
      os << "    " << world.value_name(world.value(g.best_attribute, v)) << " ->";
      const auto& row = g.answers[g.best_attribute][v];
      for (int a = 0; a < vocab.a_size; ++a) {
        if (row[a] > 0.0) os << " " << vocab.label({Side::A, a}) << "(" << row[a] << ")";
      }
      os << "\n";
    }
  }
  os << "factorized: " << (report.factorized ? "yes" : "no") << "\n";
  return os.str();
}

void write_protocol_csv(const std::string& path, const World& world, const Vocabulary& vocab,
                        const ProtocolReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "question,attribute,value,answer,count\n";
  for (const auto& g : report.symbols) {
    for (int k = 0; k < world.num_attributes(); ++k) {
      for (int v = 0; v < world.values_per_attribute(); ++v) {
        for (int a = 0; a < vocab.a_size; ++a) {
          out << vocab.label({Side::Q, g.symbol}) << "," << world.attribute_name(k) << ","
              << world.value_name(world.value(k, v)) << "," << vocab.label({Side::A, a}) << ","
              << g.answers[k][v][a] << "\n";
        }
      }
    }
  }
}

}  // namespace edl
