#pragma once

// Flat key = value experiment configuration.
//
// Precedence: built-in defaults < config file < command-line flags. Lines are
// `key = value`; `#` starts a comment. Unknown keys and out-of-range values
// are rejected before anything runs.

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "edl/dialog.hpp"
#include "edl/tabular.hpp"
#include "edl/trainer.hpp"
#include "edl/world.hpp"

namespace edl {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Mode { Tabular, Neural };

std::string mode_name(Mode mode);
Mode parse_mode(const std::string& text);

struct ExperimentConfig {
  Mode mode = Mode::Tabular;
  std::uint64_t seed = 1;
  std::string out = "runs/default";
  int attributes = World::kDefaultAttributes;
  int values = World::kDefaultValues;
  int q_vocab = 3;
  int a_vocab = 4;
  int rounds = 0;  // 0: 2 in tabular mode, 10 in neural mode

  double greedy_prob = 0.6;
  int episodes_per_iteration = 10000;
  int max_iterations = 100;
  Side first_updated = Side::Q;
  double table_init = 0.0;

  int embed_dim = 16;
  int hidden_dim = 32;
  double init_scale = 0.3;
  int batch_size = 32;
  int sl_epochs = 200;
  int rl_epochs = 20;
  double corpus_fraction = 1.0;

  int k_start = -1;  // -1: 9 when rounds = 10, else rounds - 1
  int anneal_every = 1;

  AdamConfig optim;
  AblationFlags ablation;
};

struct ConfigKey {
  std::string name;
  std::string help;
};

/// Every recognised key, in file order.
const std::vector<ConfigKey>& config_keys();

/// Sets one key from its text form. Throws ConfigError on unknown keys or
/// unparsable values.
void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value);
std::string get_config_value(const ExperimentConfig& cfg, const std::string& key);

/// Applies `key = value` lines on top of `cfg`.
void apply_config_text(ExperimentConfig& cfg, const std::string& text);
ExperimentConfig load_config_file(const std::string& path, ExperimentConfig base = {});

/// Materializes mode-dependent defaults (rounds, k_start).
ExperimentConfig resolve(ExperimentConfig cfg);
/// Range checks; throws ConfigError naming the key.
void validate(const ExperimentConfig& cfg);

/// All keys with their current values, one per line, readable by
/// apply_config_text.
std::string config_to_text(const ExperimentConfig& cfg);

World make_world(const ExperimentConfig& cfg);
Vocabulary make_vocab(const ExperimentConfig& cfg);
EpsGreedyConfig make_eps_config(const ExperimentConfig& cfg);
AlternatingSchedule make_schedule(const ExperimentConfig& cfg);
TrainConfig make_train_config(const ExperimentConfig& cfg);

}  // namespace edl
