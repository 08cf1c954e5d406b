#include "edl/io.hpp"

#include <bit>
#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace edl {

namespace {

constexpr char kMagic[8] = {'E', 'D', 'L', 'C', 'K', 'P', 'T', '\0'};

std::uint64_t fnv1a(const std::uint8_t* data, std::size_t n) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < n; ++i) {
    h ^= data[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

class Writer {
 public:
  void bytes(const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    buf_.insert(buf_.end(), b, b + n);
  }
  void u8(std::uint8_t v) { buf_.push_back(v); }
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void i64(std::int64_t v) { u64(static_cast<std::uint64_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void str(const std::string& s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s.data(), s.size());
  }
  std::vector<std::uint8_t>& data() { return buf_; }

 private:
  std::vector<std::uint8_t> buf_;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& buf, std::size_t end) : buf_(buf), end_(end) {}
  void need(std::size_t n) const {
    if (pos_ + n > end_) throw CheckpointError("checkpoint is truncated or corrupt");
  }
  std::uint8_t u8() {
    need(1);
    return buf_[pos_++];
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_++]) << (8 * i);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf_[pos_++]) << (8 * i);
    return v;
  }
  std::int64_t i64() { return static_cast<std::int64_t>(u64()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str() {
    const auto n = u32();
    need(n);
    std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::vector<std::uint8_t>& buf_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

NamedArray f64_array(std::string name, std::vector<double> v) {
  NamedArray a;
  a.name = std::move(name);
  a.f64 = std::move(v);
  return a;
}

NamedArray i64_array(std::string name, std::vector<std::int64_t> v) {
  NamedArray a;
  a.name = std::move(name);
  a.integer = true;
  a.i64 = std::move(v);
  return a;
}

void add_table(std::vector<NamedArray>& out, const std::string& prefix, const QTable& table) {
  std::vector<std::int64_t> keys, widths, visits;
  std::vector<double> q;
  for (const auto& [key, row] : table.rows()) {
    keys.push_back(static_cast<std::int64_t>(key));
    widths.push_back(static_cast<std::int64_t>(row.size()));
    for (const auto& e : row) {
      q.push_back(e.q);
      visits.push_back(e.visits);
    }
  }
  out.push_back(f64_array(prefix + ".init", {table.init_value()}));
  out.push_back(i64_array(prefix + ".keys", std::move(keys)));
  out.push_back(i64_array(prefix + ".widths", std::move(widths)));
  out.push_back(f64_array(prefix + ".q", std::move(q)));
  out.push_back(i64_array(prefix + ".visits", std::move(visits)));
}

QTable read_table(const Checkpoint& ckpt, const std::string& prefix) {
  const auto& init = ckpt.array(prefix + ".init").f64;
  if (init.size() != 1) throw CheckpointError(prefix + ".init must hold one value");
  QTable table(init[0]);
  const auto& keys = ckpt.array(prefix + ".keys").i64;
  const auto& widths = ckpt.array(prefix + ".widths").i64;
  const auto& q = ckpt.array(prefix + ".q").f64;
  const auto& visits = ckpt.array(prefix + ".visits").i64;
  if (keys.size() != widths.size() || q.size() != visits.size()) {
    throw CheckpointError(prefix + ": inconsistent table arrays");
  }
  std::size_t at = 0;
  for (std::size_t i = 0; i < keys.size(); ++i) {
    if (widths[i] < 1 || at + static_cast<std::size_t>(widths[i]) > q.size()) {
      throw CheckpointError(prefix + ": row widths exceed the value array");
    }
    std::vector<QEntry> row;
    for (std::int64_t j = 0; j < widths[i]; ++j, ++at) row.push_back({q[at], visits[at]});
    table.mutable_rows()[static_cast<std::uint64_t>(keys[i])] = std::move(row);
  }
  if (at != q.size()) throw CheckpointError(prefix + ": trailing table values");
  return table;
}

}  // namespace

const NamedArray& Checkpoint::array(const std::string& name) const {
  for (const auto& a : arrays) {
    if (a.name == name) return a;
  }
  throw CheckpointError("checkpoint has no array '" + name + "'");
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  Writer w;
  w.bytes(kMagic, sizeof kMagic);
  w.u32(ckpt.version);
  w.str(ckpt.mode);
  w.str(ckpt.config_text);
  for (auto s : ckpt.rng_state) w.u64(s);
  w.i64(ckpt.counter);
  w.u32(static_cast<std::uint32_t>(ckpt.arrays.size()));
  for (const auto& a : ckpt.arrays) {
    w.u8(a.integer ? 1 : 0);
    w.str(a.name);
    if (a.integer) {
      w.u64(a.i64.size());
      for (auto v : a.i64) w.i64(v);
    } else {
      w.u64(a.f64.size());
      for (auto v : a.f64) w.f64(v);
    }
  }
  const auto sum = fnv1a(w.data().data(), w.data().size());
  w.u64(sum);
  return std::move(w.data());
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < sizeof kMagic + 4 + 8 ||
      std::memcmp(bytes.data(), kMagic, sizeof kMagic) != 0) {
    throw CheckpointError("not a checkpoint file (bad magic)");
  }
  const std::size_t body = bytes.size() - 8;
  Reader r(bytes, bytes.size());
  for (std::size_t i = 0; i < sizeof kMagic; ++i) r.u8();
  Checkpoint c;
  c.version = r.u32();
  if (c.version != kCheckpointVersion) {
    throw CheckpointError(fmt::format("unsupported checkpoint version {} (expected {})",
                                      c.version, kCheckpointVersion));
  }
  std::uint64_t stored = 0;
  for (int i = 0; i < 8; ++i) stored |= static_cast<std::uint64_t>(bytes[body + i]) << (8 * i);
  if (stored != fnv1a(bytes.data(), body)) throw CheckpointError("checkpoint checksum mismatch");
  Reader b(bytes, body);
  for (std::size_t i = 0; i < sizeof kMagic + 4; ++i) b.u8();
  c.mode = b.str();
  c.config_text = b.str();
  for (auto& s : c.rng_state) s = b.u64();
  c.counter = b.i64();
  const auto n = b.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    NamedArray a;
    const auto kind = b.u8();
    if (kind > 1) throw CheckpointError("checkpoint array has unknown kind");
    a.integer = kind == 1;
    a.name = b.str();
    const auto len = b.u64();
    if (len > body / 8) throw CheckpointError("checkpoint is truncated or corrupt");
    b.need(len * 8);
    if (a.integer) {
      a.i64.resize(len);
      for (auto& v : a.i64) v = b.i64();
    } else {
      a.f64.resize(len);
      for (auto& v : a.f64) v = b.f64();
    }
    c.arrays.push_back(std::move(a));
  }
  if (b.pos() != body) throw CheckpointError("checkpoint has trailing bytes");
  return c;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const auto bytes = encode_checkpoint(ckpt);
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw CheckpointError("cannot write checkpoint " + path);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw CheckpointError("failed writing checkpoint " + path);
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot read checkpoint " + path);
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return decode_checkpoint(bytes);
}

ExperimentConfig checkpoint_config(const Checkpoint& ckpt) {
  ExperimentConfig cfg;
  try {
    apply_config_text(cfg, ckpt.config_text);
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint config: ") + e.what());
  }
  if (mode_name(cfg.mode) != ckpt.mode) throw CheckpointError("checkpoint mode does not match its config");
  return cfg;
}

Checkpoint tabular_checkpoint(const ExperimentConfig& cfg, const TabularState& state) {
  Checkpoint c;
  c.mode = "tabular";
  c.config_text = config_to_text(resolve(cfg));
  c.rng_state = Rng(cfg.seed).state();
  c.counter = state.iteration;
  add_table(c.arrays, "q_table", state.q_table);
  add_table(c.arrays, "a_table", state.a_table);
  c.arrays.push_back(f64_array("reward_curve", state.reward_curve));
  return c;
}

TabularState tabular_from_checkpoint(const Checkpoint& ckpt) {
  if (ckpt.mode != "tabular") throw CheckpointError("expected a tabular checkpoint, got " + ckpt.mode);
  TabularState s;
  s.q_table = read_table(ckpt, "q_table");
  s.a_table = read_table(ckpt, "a_table");
  s.reward_curve = ckpt.array("reward_curve").f64;
  s.iteration = static_cast<int>(ckpt.counter);
  if (s.reward_curve.size() != static_cast<std::size_t>(s.iteration)) {
    throw CheckpointError("reward curve length does not match the iteration counter");
  }
  return s;
}

Checkpoint neural_checkpoint(const ExperimentConfig& cfg, const NeuralRun& run) {
  Checkpoint c;
  c.mode = "neural";
  c.config_text = config_to_text(resolve(cfg));
  c.rng_state = run.rng.state();
  c.counter = run.epoch;
  auto add_net = [&](const ParamSet& net) {
    for (const auto& b : net.blocks()) c.arrays.push_back(f64_array("param/" + b.name, b.values));
  };
  add_net(run.agents.q);
  add_net(run.agents.a);
  for (const auto& [name, mo] : run.adam.moments) {
    c.arrays.push_back(f64_array("adam/" + name + "/m", mo.m));
    c.arrays.push_back(f64_array("adam/" + name + "/v", mo.v));
    c.arrays.push_back(i64_array("adam/" + name + "/step", {mo.step}));
  }
  return c;
}

NeuralRun neural_from_checkpoint(const Checkpoint& ckpt, const World& world,
                                 const Vocabulary& vocab) {
  if (ckpt.mode != "neural") throw CheckpointError("expected a neural checkpoint, got " + ckpt.mode);
  const auto cfg = checkpoint_config(ckpt);
  NeuralRun run = init_run(make_train_config(cfg), world, vocab);
  auto load_net = [&](ParamSet& net) {
    for (auto& b : net.blocks()) {
      const auto& a = ckpt.array("param/" + b.name);
      if (a.integer || a.f64.size() != b.values.size()) {
        throw CheckpointError(fmt::format("block '{}' has {} values, expected {}", b.name,
                                          a.f64.size(), b.values.size()));
      }
      b.values = a.f64;
    }
  };
  load_net(run.agents.q);
  load_net(run.agents.a);
  std::map<std::string, std::size_t> sizes;
  for (const auto& b : run.agents.q.blocks()) sizes[b.name] = b.size();
  for (const auto& b : run.agents.a.blocks()) sizes[b.name] = b.size();
  for (const auto& a : ckpt.arrays) {
    if (!a.name.starts_with("adam/") || !a.name.ends_with("/step")) continue;
    const auto name = a.name.substr(5, a.name.size() - 5 - 5);
    if (!sizes.contains(name)) throw CheckpointError("Adam state for unknown block '" + name + "'");
    AdamMoments mo;
    mo.m = ckpt.array("adam/" + name + "/m").f64;
    mo.v = ckpt.array("adam/" + name + "/v").f64;
    if (a.i64.size() != 1) throw CheckpointError("Adam step for '" + name + "' must be one value");
    mo.step = a.i64[0];
    if (mo.m.size() != sizes[name] || mo.v.size() != sizes[name]) {
      throw CheckpointError("Adam moments for '" + name + "' have the wrong size");
    }
    run.adam.moments[name] = std::move(mo);
  }
  run.rng = Rng::from_state(ckpt.rng_state);
  run.epoch = static_cast<int>(ckpt.counter);
  return run;
}

nlohmann::json episode_to_json(const EpisodeRecord& record) {
  nlohmann::json j;
  j["instance"] = record.instance.id;
  j["image"] = record.instance.image.id;
  j["task"] = record.instance.task.id;
  auto rounds = nlohmann::json::array();
  for (const auto& r : record.rounds) {
    nlohmann::json jr;
    for (const auto& s : r.question) jr["q"].push_back(s.token);
    for (const auto& s : r.answer) jr["a"].push_back(s.token);
    rounds.push_back(jr);
  }
  j["rounds"] = rounds;
  j["predictions"] = record.predictions;
  j["rewards"] = record.rewards;
  j["final_guess"] = record.final_guess ? nlohmann::json(record.final_guess->index) : nlohmann::json();
  j["guessed_image"] = record.guessed_image;
  return j;
}

EpisodeRecord episode_from_json(const World& world, const nlohmann::json& j) {
  EpisodeRecord r;
  try {
    r.instance = world.instance(j.at("instance").get<int>());
    for (const auto& jr : j.at("rounds")) {
      Round round;
      for (int t : jr.at("q")) round.question.push_back({Side::Q, t});
      for (int t : jr.at("a")) round.answer.push_back({Side::A, t});
      r.rounds.push_back(std::move(round));
    }
    r.predictions = j.at("predictions").get<std::vector<TargetVector>>();
    r.rewards = j.at("rewards").get<std::vector<double>>();
    if (!j.at("final_guess").is_null()) {
      r.final_guess = world.pair_from_index(j.at("final_guess").get<int>());
    }
    r.guessed_image = j.at("guessed_image").get<int>();
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("episode record: ") + e.what());
  }
  return r;
}

nlohmann::ordered_json epoch_metrics_to_json(const EpochMetrics& m) {
  nlohmann::ordered_json j;
  j["epoch"] = m.epoch;
  j["phase"] = m.phase;
  j["k"] = m.k;
  j["mean_return"] = m.mean_return;
  j["accuracy"] = m.accuracy;
  j["percentile_rank"] = m.percentile_rank;
  j["sl_loss"] = m.train.sl_loss;
  j["nll_q"] = m.train.nll_q;
  j["nll_a"] = m.train.nll_a;
  j["regression"] = m.train.regression;
  j["surrogate"] = m.train.surrogate;
  j["train_return"] = m.train.mean_return;
  j["sampled_rounds"] = m.train.sampled_rounds;
  return j;
}

namespace {

std::string csv_cell(const nlohmann::ordered_json& v) {
  if (v.is_string()) return v.get<std::string>();
  return v.dump();
}

void write_csv_line(std::ofstream& out, const std::vector<std::string>& columns,
                    const nlohmann::ordered_json& row) {
  for (std::size_t i = 0; i < columns.size(); ++i) {
    if (i) out << ',';
    out << (row.contains(columns[i]) ? csv_cell(row[columns[i]]) : "");
  }
  out << '\n';
}

}  // namespace

MetricsLog::MetricsLog(const std::string& dir, std::size_t keep_rows)
    : jsonl_path_((std::filesystem::path(dir) / "metrics.jsonl").string()),
      csv_path_((std::filesystem::path(dir) / "metrics.csv").string()) {
  std::vector<std::string> kept;
  if (keep_rows > 0) {
    std::ifstream in(jsonl_path_);
    std::string line;
    while (kept.size() < keep_rows && std::getline(in, line)) {
      if (!line.empty()) kept.push_back(line);
    }
  }
  std::ofstream jl(jsonl_path_, std::ios::trunc);
  std::ofstream csv(csv_path_, std::ios::trunc);
  if (!jl || !csv) throw std::runtime_error("cannot write metrics in " + dir);
  for (const auto& line : kept) {
    const auto row = nlohmann::ordered_json::parse(line);
    if (columns_.empty()) {
      for (const auto& [k, v] : row.items()) columns_.push_back(k);
      for (std::size_t i = 0; i < columns_.size(); ++i) csv << (i ? "," : "") << columns_[i];
      csv << '\n';
    }
    jl << line << '\n';
    write_csv_line(csv, columns_, row);
  }
}

void MetricsLog::append(const nlohmann::ordered_json& row) {
  std::ofstream jl(jsonl_path_, std::ios::app);
  std::ofstream csv(csv_path_, std::ios::app);
  if (!jl || !csv) throw std::runtime_error("cannot append metrics to " + jsonl_path_);
  if (columns_.empty()) {
    for (const auto& [k, v] : row.items()) columns_.push_back(k);
    for (std::size_t i = 0; i < columns_.size(); ++i) csv << (i ? "," : "") << columns_[i];
    csv << '\n';
  }
  jl << row.dump() << '\n';
  write_csv_line(csv, columns_, row);
}

void configure_logging() {
  const char* env = std::getenv("EDL_LOG_LEVEL");
  const std::string level = env ? env : "info";
  if (level == "error") {
    spdlog::set_level(spdlog::level::err);
  } else if (level == "info") {
    spdlog::set_level(spdlog::level::info);
  } else if (level == "debug") {
    spdlog::set_level(spdlog::level::debug);
  } else {
    throw ConfigError("EDL_LOG_LEVEL must be error, info or debug, got '" + level + "'");
  }
}

}  // namespace edl
