#pragma once

// Checkpoint files, episode records as JSON, metrics logs and log-level setup.
//
// Checkpoint layout (all integers little-endian):
//   magic "EDLCKPT\0" | u32 version | str mode | str config | 4 x u64 rng state
//   | i64 counter | u32 array count | arrays | u64 FNV-1a of all preceding bytes
// where str = u32 length + bytes, and each array is
//   u8 kind (0 = f64, 1 = i64) | str name | u64 length | length x 8 bytes.

#include <cstdint>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "edl/config.hpp"
#include "edl/dialog.hpp"
#include "edl/rng.hpp"
#include "edl/tabular.hpp"
#include "edl/trainer.hpp"

namespace edl {

inline constexpr std::uint32_t kCheckpointVersion = 1;

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct NamedArray {
  std::string name;
  bool integer = false;
  std::vector<double> f64;
  std::vector<std::int64_t> i64;

  friend bool operator==(const NamedArray&, const NamedArray&) = default;
};

struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::string mode;
  std::string config_text;
  Rng::State rng_state{};
  std::int64_t counter = 0;  // iterations or epochs completed
  std::vector<NamedArray> arrays;

  const NamedArray& array(const std::string& name) const;
  friend bool operator==(const Checkpoint&, const Checkpoint&) = default;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);
void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

Checkpoint tabular_checkpoint(const ExperimentConfig& cfg, const TabularState& state);
TabularState tabular_from_checkpoint(const Checkpoint& ckpt);

Checkpoint neural_checkpoint(const ExperimentConfig& cfg, const NeuralRun& run);
/// Restores parameters, Adam moments, RNG and epoch into a run built from
/// the checkpoint's own config. Throws CheckpointError on missing or
/// mis-sized blocks.
NeuralRun neural_from_checkpoint(const Checkpoint& ckpt, const World& world,
                                 const Vocabulary& vocab);

/// Resolved config stored in the checkpoint.
ExperimentConfig checkpoint_config(const Checkpoint& ckpt);

nlohmann::json episode_to_json(const EpisodeRecord& record);
EpisodeRecord episode_from_json(const World& world, const nlohmann::json& j);

nlohmann::ordered_json epoch_metrics_to_json(const EpochMetrics& m);

/// Per-epoch/iteration metrics as JSONL plus a CSV mirror with the columns
/// of the first row. Lines already in the files beyond `keep_rows` are
/// dropped when opening, so a resumed run continues the log in place.
class MetricsLog {
 public:
  MetricsLog(const std::string& dir, std::size_t keep_rows);
  void append(const nlohmann::ordered_json& row);

 private:
  std::string jsonl_path_;
  std::string csv_path_;
  std::vector<std::string> columns_;
};

/// Reads EDL_LOG_LEVEL (error, info, debug; default info).
void configure_logging();

}  // namespace edl
