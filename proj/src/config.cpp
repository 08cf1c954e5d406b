#include "edl/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>

#include <fmt/format.h>

namespace edl {

std::string mode_name(Mode mode) { return mode == Mode::Tabular ? "tabular" : "neural"; }

Mode parse_mode(const std::string& text) {
  if (text == "tabular") return Mode::Tabular;
  if (text == "neural") return Mode::Neural;
  throw ConfigError("mode must be 'tabular' or 'neural', got '" + text + "'");
}

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& key, const std::string& text) {
  T out{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last || text.empty()) {
    throw ConfigError(fmt::format("{}: cannot parse '{}'", key, text));
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1") return true;
  if (text == "false" || text == "0") return false;
  throw ConfigError(fmt::format("{}: expected true or false, got '{}'", key, text));
}

std::string show(double v) { return fmt::format("{}", v); }
std::string show(bool v) { return v ? "true" : "false"; }
std::string show(int v) { return std::to_string(v); }

struct Field {
  ConfigKey key;
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

template <typename T>
Field field(std::string name, std::string help, T ExperimentConfig::*member) {
  Field f;
  f.key = {std::move(name), std::move(help)};
  f.set = [member](ExperimentConfig& c, const std::string& k, const std::string& v) {
    if constexpr (std::is_same_v<T, bool>) {
      c.*member = parse_bool(k, v);
    } else {
      c.*member = parse_number<T>(k, v);
    }
  };
  f.get = [member](const ExperimentConfig& c) { return show(c.*member); };
  return f;
}

template <typename S, typename T>
Field nested(std::string name, std::string help, S ExperimentConfig::*outer, T S::*member) {
  Field f;
  f.key = {std::move(name), std::move(help)};
  f.set = [outer, member](ExperimentConfig& c, const std::string& k, const std::string& v) {
    if constexpr (std::is_same_v<T, bool>) {
      (c.*outer).*member = parse_bool(k, v);
    } else {
      (c.*outer).*member = parse_number<T>(k, v);
    }
  };
  f.get = [outer, member](const ExperimentConfig& c) { return show((c.*outer).*member); };
  return f;
}

const std::vector<Field>& fields() {
  static const std::vector<Field> all = [] {
    std::vector<Field> v;
    Field mode;
    mode.key = {"mode", "tabular or neural"};
    mode.set = [](ExperimentConfig& c, const std::string&, const std::string& s) {
      c.mode = parse_mode(s);
    };
    mode.get = [](const ExperimentConfig& c) { return mode_name(c.mode); };
    v.push_back(mode);
    Field seed;
    seed.key = {"seed", "experiment seed (unsigned 64-bit)"};
    seed.set = [](ExperimentConfig& c, const std::string& k, const std::string& s) {
      c.seed = parse_number<std::uint64_t>(k, s);
    };
    seed.get = [](const ExperimentConfig& c) { return std::to_string(c.seed); };
    v.push_back(seed);
    Field out;
    out.key = {"out", "output directory"};
    out.set = [](ExperimentConfig& c, const std::string& k, const std::string& s) {
      if (s.empty()) throw ConfigError(k + ": empty path");
      c.out = s;
    };
    out.get = [](const ExperimentConfig& c) { return c.out; };
    v.push_back(out);
    v.push_back(field("world.attributes", "number of attributes (2..3)", &ExperimentConfig::attributes));
    v.push_back(field("world.values", "values per attribute (2..8)", &ExperimentConfig::values));
    v.push_back(field("vocab.q", "Q-bot vocabulary size", &ExperimentConfig::q_vocab));
    v.push_back(field("vocab.a", "A-bot vocabulary size", &ExperimentConfig::a_vocab));
    v.push_back(field("rounds", "dialog rounds T (0 = 2 tabular, 10 neural)", &ExperimentConfig::rounds));
    v.push_back(field("tabular.greedy_prob", "probability of the argmax action while exploring",
                      &ExperimentConfig::greedy_prob));
    v.push_back(field("tabular.episodes_per_iteration", "episodes per alternating iteration",
                      &ExperimentConfig::episodes_per_iteration));
    v.push_back(field("tabular.max_iterations", "iteration budget", &ExperimentConfig::max_iterations));
    Field first;
    first.key = {"tabular.first_updated", "q or a: agent learning in iteration 0"};
    first.set = [](ExperimentConfig& c, const std::string& k, const std::string& s) {
      if (s == "q") {
        c.first_updated = Side::Q;
      } else if (s == "a") {
        c.first_updated = Side::A;
      } else {
        throw ConfigError(k + ": expected q or a, got '" + s + "'");
      }
    };
    first.get = [](const ExperimentConfig& c) {
      return std::string(c.first_updated == Side::Q ? "q" : "a");
    };
    v.push_back(first);
    v.push_back(field("tabular.init_value", "initial Q-value of unvisited entries",
                      &ExperimentConfig::table_init));
    v.push_back(field("neural.embed_dim", "token and task embedding size", &ExperimentConfig::embed_dim));
    v.push_back(field("neural.hidden_dim", "recurrent state size", &ExperimentConfig::hidden_dim));
    v.push_back(field("neural.init_scale", "parameters start uniform in [-s, s]",
                      &ExperimentConfig::init_scale));
    v.push_back(field("neural.batch_size", "episodes per update", &ExperimentConfig::batch_size));
    v.push_back(field("neural.sl_epochs", "supervised pretraining epochs", &ExperimentConfig::sl_epochs));
    v.push_back(field("neural.rl_epochs", "policy-gradient epochs", &ExperimentConfig::rl_epochs));
    v.push_back(field("neural.corpus_fraction", "share of the oracle corpus used for supervision",
                      &ExperimentConfig::corpus_fraction));
    v.push_back(field("curriculum.k_start", "teacher-forced rounds in the first RL epoch (-1 = auto)",
                      &ExperimentConfig::k_start));
    v.push_back(field("curriculum.anneal_every", "RL epochs per decrement of K",
                      &ExperimentConfig::anneal_every));
    v.push_back(nested("optim.lr", "Adam learning rate", &ExperimentConfig::optim, &AdamConfig::lr));
    v.push_back(nested("optim.beta1", "Adam first-moment decay", &ExperimentConfig::optim, &AdamConfig::beta1));
    v.push_back(nested("optim.beta2", "Adam second-moment decay", &ExperimentConfig::optim, &AdamConfig::beta2));
    v.push_back(nested("optim.epsilon", "Adam denominator epsilon", &ExperimentConfig::optim, &AdamConfig::epsilon));
    v.push_back(nested("optim.clamp", "gradient clamp bound", &ExperimentConfig::optim, &AdamConfig::clamp));
    v.push_back(nested("ablation.freeze_q", "hold Q-bot encoder and question head during RL",
                       &ExperimentConfig::ablation, &AblationFlags::freeze_q));
    v.push_back(nested("ablation.freeze_a", "hold A-bot during RL", &ExperimentConfig::ablation,
                       &AblationFlags::freeze_a));
    v.push_back(nested("ablation.freeze_f", "hold the regression head during RL",
                       &ExperimentConfig::ablation, &AblationFlags::freeze_f));
    v.push_back(nested("ablation.multi_task", "add the supervised loss during RL",
                       &ExperimentConfig::ablation, &AblationFlags::multi_task));
    v.push_back(nested("ablation.sl_weight", "supervised weight under multi_task",
                       &ExperimentConfig::ablation, &AblationFlags::sl_weight));
    v.push_back(nested("ablation.rl_weight", "policy-gradient weight under multi_task",
                       &ExperimentConfig::ablation, &AblationFlags::rl_weight));
    return v;
  }();
  return all;
}

const Field& find_field(const std::string& key) {
  const auto& all = fields();
  const auto it = std::find_if(all.begin(), all.end(), [&](const Field& f) { return f.key.name == key; });
  if (it == all.end()) throw ConfigError("unknown config key '" + key + "'");
  return *it;
}

void require(bool ok, const std::string& key, const std::string& what) {
  if (!ok) throw ConfigError(key + ": " + what);
}

}  // namespace

const std::vector<ConfigKey>& config_keys() {
  static const std::vector<ConfigKey> keys = [] {
    std::vector<ConfigKey> k;
    for (const auto& f : fields()) k.push_back(f.key);
    return k;
  }();
  return keys;
}

void set_config_value(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
  find_field(key).set(cfg, key, trim(value));
}

std::string get_config_value(const ExperimentConfig& cfg, const std::string& key) {
  return find_field(key).get(cfg);
}

void apply_config_text(ExperimentConfig& cfg, const std::string& text) {
  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(fmt::format("line {}: expected 'key = value'", lineno));
    }
    set_config_value(cfg, trim(line.substr(0, eq)), line.substr(eq + 1));
  }
}

ExperimentConfig load_config_file(const std::string& path, ExperimentConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  apply_config_text(base, ss.str());
  return base;
}

ExperimentConfig resolve(ExperimentConfig cfg) {
  if (cfg.rounds == 0) cfg.rounds = cfg.mode == Mode::Tabular ? 2 : 10;
  if (cfg.k_start == -1) cfg.k_start = cfg.rounds == 10 ? 9 : std::max(0, cfg.rounds - 1);
  return cfg;
}

void validate(const ExperimentConfig& raw) {
  const auto cfg = resolve(raw);
  require(cfg.attributes >= 2 && cfg.attributes <= 3, "world.attributes", "must be 2 or 3");
  require(cfg.values >= 2 && cfg.values <= 8, "world.values", "must lie in 2..8");
  require(cfg.q_vocab >= 1 && cfg.q_vocab <= 26, "vocab.q", "must lie in 1..26");
  require(cfg.a_vocab >= 1 && cfg.a_vocab <= 9, "vocab.a", "must lie in 1..9");
  require(cfg.rounds >= 1 && cfg.rounds <= 10, "rounds", "must lie in 1..10");
  require(cfg.greedy_prob > 0.0 && cfg.greedy_prob <= 1.0, "tabular.greedy_prob",
          "must lie in (0, 1]");
  require(cfg.episodes_per_iteration >= 1, "tabular.episodes_per_iteration", "must be >= 1");
  require(cfg.max_iterations >= 1, "tabular.max_iterations", "must be >= 1");
  require(std::isfinite(cfg.table_init), "tabular.init_value", "must be finite");
  require(cfg.embed_dim >= 1, "neural.embed_dim", "must be >= 1");
  require(cfg.hidden_dim >= 1, "neural.hidden_dim", "must be >= 1");
  require(cfg.init_scale >= 0.0 && std::isfinite(cfg.init_scale), "neural.init_scale",
          "must be finite and >= 0");
  require(cfg.batch_size >= 1, "neural.batch_size", "must be >= 1");
  require(cfg.sl_epochs >= 0, "neural.sl_epochs", "must be >= 0");
  require(cfg.rl_epochs >= 0, "neural.rl_epochs", "must be >= 0");
  require(cfg.corpus_fraction > 0.0 && cfg.corpus_fraction <= 1.0, "neural.corpus_fraction",
          "must lie in (0, 1]");
  require(cfg.k_start >= 0 && cfg.k_start <= cfg.rounds, "curriculum.k_start",
          "must lie in 0..rounds (or -1 for auto)");
  require(cfg.anneal_every >= 1, "curriculum.anneal_every", "must be >= 1");
  require(cfg.optim.lr > 0.0, "optim.lr", "must be > 0");
  require(cfg.optim.beta1 >= 0.0 && cfg.optim.beta1 < 1.0, "optim.beta1", "must lie in [0, 1)");
  require(cfg.optim.beta2 >= 0.0 && cfg.optim.beta2 < 1.0, "optim.beta2", "must lie in [0, 1)");
  require(cfg.optim.epsilon > 0.0, "optim.epsilon", "must be > 0");
  require(cfg.optim.clamp > 0.0, "optim.clamp", "must be > 0");
  require(cfg.ablation.sl_weight >= 0.0, "ablation.sl_weight", "must be >= 0");
  require(cfg.ablation.rl_weight >= 0.0, "ablation.rl_weight", "must be >= 0");
  try {
    cfg.ablation.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("ablation: ") + e.what());
  }
  if (cfg.mode == Mode::Neural) {
    require(cfg.q_vocab >= cfg.attributes, "vocab.q",
            "neural mode needs one question symbol per attribute for the oracle corpus");
    require(cfg.a_vocab >= cfg.values, "vocab.a",
            "neural mode needs one answer symbol per value for the oracle corpus");
  }
}

std::string config_to_text(const ExperimentConfig& cfg) {
  std::string out;
  for (const auto& f : fields()) {
    out += fmt::format("{} = {}\n", f.key.name, f.get(cfg));
  }
  return out;
}

World make_world(const ExperimentConfig& cfg) { return World(cfg.attributes, cfg.values); }

Vocabulary make_vocab(const ExperimentConfig& cfg) { return Vocabulary{cfg.q_vocab, cfg.a_vocab}; }

EpsGreedyConfig make_eps_config(const ExperimentConfig& cfg) {
  return EpsGreedyConfig{cfg.greedy_prob, cfg.seed};
}

AlternatingSchedule make_schedule(const ExperimentConfig& cfg) {
  return AlternatingSchedule{cfg.episodes_per_iteration, cfg.max_iterations, cfg.first_updated};
}

TrainConfig make_train_config(const ExperimentConfig& raw) {
  const auto cfg = resolve(raw);
  TrainConfig t;
  t.rounds = cfg.rounds;
  t.embed_dim = cfg.embed_dim;
  t.hidden_dim = cfg.hidden_dim;
  t.init_scale = cfg.init_scale;
  t.batch_size = cfg.batch_size;
  t.sl_epochs = cfg.sl_epochs;
  t.rl_epochs = cfg.rl_epochs;
  t.corpus_fraction = cfg.corpus_fraction;
  t.curriculum = CurriculumSchedule{cfg.k_start, cfg.anneal_every};
  t.optim = cfg.optim;
  t.ablation = cfg.ablation;
  t.seed = cfg.seed;
  return t;
}

}  // namespace edl
