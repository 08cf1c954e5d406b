#pragma once

// Guessing-game metrics (percentile rank, retrieval curves, task accuracy),
// emergent-protocol analysis and generic ranking metrics.

#include <map>
#include <span>
#include <string>
#include <vector>

#include "edl/dialog.hpp"
#include "edl/policy.hpp"
#include "edl/world.hpp"

namespace edl {

/// rank = 1 + #strictly closer + 0.5 * #tied (excluding the true image);
/// percentile = 100 (N - rank) / (N - 1).
double percentile_rank(const World& world, const TargetVector& prediction,
                       const SynthImage& true_image, std::span<const SynthImage> pool);

struct RetrievalPoint {
  double mean = 0.0;
  double std_error = 0.0;
};

/// Entry t holds the percentile rank of y_hat_t, t = 0..T.
struct RetrievalCurve {
  std::vector<RetrievalPoint> rounds;
};

/// Greedy dialogs for every instance, scored per round.
std::vector<EpisodeRecord> play_all(const World& world, Questioner& q, Answerer& a,
                                    std::span<const Instance> instances, int rounds);

RetrievalCurve retrieval_curve(const World& world, std::span<const EpisodeRecord> records,
                               std::span<const SynthImage> pool);
RetrievalCurve retrieval_curve(const World& world, Questioner& q, Answerer& a,
                               std::span<const Instance> instances,
                               std::span<const SynthImage> pool, int rounds);

double task_accuracy(const World& world, std::span<const EpisodeRecord> records);
double task_accuracy(const World& world, Questioner& q, Answerer& a,
                     std::span<const Instance> instances, int rounds);

/// Plug-in mutual information in bits of a joint count table, 0 log 0 = 0.
double mutual_information_bits(const std::vector<std::vector<double>>& joint);

struct SymbolGrounding {
  int symbol = 0;
  long count = 0;                          // times the symbol was asked
  std::vector<double> mi_bits;             // per attribute
  /// answers[k][v][a]: replies a when attribute k has value v
  std::vector<std::vector<std::vector<double>>> answers;
  int best_attribute = -1;
  bool deterministic = false;              // answer is a function of best_attribute
  std::vector<int> answer_for_value;       // modal reply per value of best_attribute
};

struct ProtocolReport {
  std::vector<SymbolGrounding> symbols;    // one per Q symbol
  bool factorized = false;
};

ProtocolReport protocol_report(const World& world, const Vocabulary& vocab,
                               std::span<const EpisodeRecord> records);
ProtocolReport protocol_report(const World& world, const Vocabulary& vocab, Questioner& q,
                               Answerer& a, std::span<const Instance> instances, int rounds);

/// Per task: no answer sequence is shared by two different value
/// combinations of the task's attributes.
std::vector<bool> answer_map_injective(const World& world,
                                       std::span<const EpisodeRecord> records);

struct RankingMetrics {
  double mrr = 0.0;
  std::map<int, double> recall_at;
  double mean_rank = 0.0;
};

RankingMetrics ranking_metrics(std::span<const int> ranks, std::span<const int> ks);

void write_retrieval_csv(const std::string& path, const RetrievalCurve& curve);
/// Python/matplotlib script plotting a retrieval CSV.
std::string retrieval_plot_script(const std::string& csv_name);
std::string format_protocol_report(const World& world, const Vocabulary& vocab,
                                   const ProtocolReport& report);
void write_protocol_csv(const std::string& path, const World& world, const Vocabulary& vocab,
                        const ProtocolReport& report);

}  // namespace edl
