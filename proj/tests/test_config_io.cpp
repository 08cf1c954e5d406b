#include "doctest.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <stdexcept>

#include "edl/experiment.hpp"
#include "edl/io.hpp"
#include "support.hpp"

using namespace edl;
namespace fs = std::filesystem;

namespace {

ExperimentConfig small_tabular(const std::string& out) {
  ExperimentConfig cfg;
  cfg.out = out;
  cfg.episodes_per_iteration = 300;
  cfg.max_iterations = 4;
  cfg.seed = 5;
  return cfg;
}

ExperimentConfig small_neural(const std::string& out) {
  ExperimentConfig cfg;
  cfg.mode = Mode::Neural;
  cfg.out = out;
  cfg.rounds = 3;
  cfg.hidden_dim = 8;
  cfg.embed_dim = 4;
  cfg.sl_epochs = 2;
  cfg.rl_epochs = 2;
  cfg.seed = 9;
  return cfg;
}

std::vector<std::uint8_t> file_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

void resume_matches_straight_run(const ExperimentConfig& cfg) {
  fs::remove_all(cfg.out);
  run_experiment(cfg);
  const auto full_ckpt = file_bytes(fs::path(cfg.out) / "checkpoint.bin");
  const auto full_metrics = test::read_file(fs::path(cfg.out) / "metrics.jsonl");
  const auto full_episodes = test::read_file(fs::path(cfg.out) / "episodes.jsonl");

  fs::remove_all(cfg.out);
  RunOptions first;
  first.stop_after = 2;
  CHECK(run_experiment(cfg, first).completed == 2);
  RunOptions second;
  second.resume = load_checkpoint((fs::path(cfg.out) / "checkpoint.bin").string());
  CHECK(second.resume->counter == 2);
  run_experiment(cfg, second);
  CHECK(file_bytes(fs::path(cfg.out) / "checkpoint.bin") == full_ckpt);
  CHECK(test::read_file(fs::path(cfg.out) / "metrics.jsonl") == full_metrics);
  CHECK(test::read_file(fs::path(cfg.out) / "episodes.jsonl") == full_episodes);
}

}  // namespace

TEST_SUITE("config") {

TEST_CASE("parsing and precedence") {
  ExperimentConfig cfg;
  apply_config_text(cfg, "# comment\nmode = neural\n\nrounds = 5  # trailing\noptim.lr=0.01\n");
  CHECK(cfg.mode == Mode::Neural);
  CHECK(cfg.rounds == 5);
  CHECK(cfg.optim.lr == 0.01);
  set_config_value(cfg, "rounds", "7");
  CHECK(cfg.rounds == 7);
  CHECK(get_config_value(cfg, "rounds") == "7");
  CHECK_THROWS_AS(apply_config_text(cfg, "no_such_key = 1\n"), ConfigError);
  CHECK_THROWS_AS(apply_config_text(cfg, "rounds\n"), ConfigError);
  CHECK_THROWS_AS(set_config_value(cfg, "rounds", "seven"), ConfigError);
  CHECK_THROWS_AS(set_config_value(cfg, "ablation.freeze_q", "maybe"), ConfigError);
  CHECK_THROWS_AS(set_config_value(cfg, "tabular.first_updated", "x"), ConfigError);
  CHECK_THROWS_AS(load_config_file("/nonexistent/file.cfg"), ConfigError);

  const auto dir = test::scratch_dir("config_file");
  const auto path = dir / "exp.cfg";
  std::ofstream(path) << "seed = 42\nneural.batch_size = 8\n";
  ExperimentConfig base;
  base.seed = 3;
  base.hidden_dim = 12;
  const auto loaded = load_config_file(path.string(), base);
  CHECK(loaded.seed == 42);
  CHECK(loaded.batch_size == 8);
  CHECK(loaded.hidden_dim == 12);
}

TEST_CASE("resolution and validation") {
  ExperimentConfig tab;
  CHECK(resolve(tab).rounds == 2);
  ExperimentConfig neu;
  neu.mode = Mode::Neural;
  CHECK(resolve(neu).rounds == 10);
  CHECK(resolve(neu).k_start == 9);
  neu.rounds = 5;
  CHECK(resolve(neu).k_start == 4);
  CHECK_NOTHROW(validate(resolve(neu)));

  auto bad = neu;
  bad.rounds = 11;
  try {
    validate(bad);
    FAIL("expected a throw");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("rounds") != std::string::npos);
  }
  bad = neu;
  bad.a_vocab = 3;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = tab;
  bad.greedy_prob = 1.5;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = neu;
  bad.ablation.freeze_q = bad.ablation.freeze_a = bad.ablation.freeze_f = true;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = neu;
  bad.corpus_fraction = 0.0;
  CHECK_THROWS_AS(validate(bad), ConfigError);
}

TEST_CASE("config text round-trips") {
  ExperimentConfig cfg;
  cfg.mode = Mode::Neural;
  cfg.optim.lr = 3.3e-4;
  cfg.ablation.multi_task = true;
  cfg.first_updated = Side::A;
  cfg.out = "some/dir";
  ExperimentConfig back;
  apply_config_text(back, config_to_text(cfg));
  CHECK(config_to_text(back) == config_to_text(cfg));
  CHECK(back.optim.lr == cfg.optim.lr);
  CHECK(config_keys().size() >= 30);
}

}

TEST_SUITE("io") {

TEST_CASE("checkpoint encoding") {
  Checkpoint c;
  c.mode = "tabular";
  c.config_text = "seed = 1\n";
  c.rng_state = {1, 2, 3, 4};
  c.counter = 7;
  c.arrays.push_back({"x", false, {1.5, -2.0}, {}});
  c.arrays.push_back({"y", true, {}, {-3, 4, 5}});
  const auto bytes = encode_checkpoint(c);
  CHECK(decode_checkpoint(bytes) == c);
  CHECK(c.array("y").i64.size() == 3);
  CHECK_THROWS_AS(c.array("z"), CheckpointError);

  auto wrong_version = bytes;
  wrong_version[8] = 9;
  try {
    decode_checkpoint(wrong_version);
    FAIL("expected a throw");
  } catch (const CheckpointError& e) {
    CHECK(std::string(e.what()).find("version") != std::string::npos);
  }
  auto corrupt = bytes;
  corrupt[bytes.size() / 2] ^= 0x40;
  CHECK_THROWS_AS(decode_checkpoint(corrupt), CheckpointError);
  auto truncated = bytes;
  truncated.resize(bytes.size() - 3);
  CHECK_THROWS_AS(decode_checkpoint(truncated), CheckpointError);
  auto magic = bytes;
  magic[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(magic), CheckpointError);

  const auto dir = test::scratch_dir("ckpt");
  save_checkpoint((dir / "a.bin").string(), c);
  save_checkpoint((dir / "b.bin").string(), load_checkpoint((dir / "a.bin").string()));
  CHECK(file_bytes(dir / "a.bin") == file_bytes(dir / "b.bin"));
  CHECK_THROWS_AS(load_checkpoint((dir / "missing.bin").string()), CheckpointError);
}

TEST_CASE("neural checkpoints restore every block") {
  const auto dir = test::scratch_dir("neural_ckpt");
  auto cfg = resolve(small_neural(dir.string()));
  const World world = make_world(cfg);
  const Vocabulary vocab = make_vocab(cfg);
  auto run = init_run(make_train_config(cfg), world, vocab);
  const auto ckpt = neural_checkpoint(cfg, run);
  const auto back = neural_from_checkpoint(ckpt, world, vocab);
  for (std::size_t b = 0; b < run.agents.q.blocks().size(); ++b) {
    CHECK(back.agents.q.blocks()[b].values == run.agents.q.blocks()[b].values);
  }
  CHECK(back.rng.state() == run.rng.state());
  CHECK(neural_checkpoint(cfg, back) == ckpt);

  auto missing = ckpt;
  missing.arrays.erase(missing.arrays.begin());
  CHECK_THROWS_AS(neural_from_checkpoint(missing, world, vocab), CheckpointError);
  auto wrong = ckpt;
  wrong.arrays.front().f64.pop_back();
  CHECK_THROWS_AS(neural_from_checkpoint(wrong, world, vocab), CheckpointError);
  CHECK(checkpoint_config(ckpt).hidden_dim == 8);
}

TEST_CASE("tabular runs resume exactly") {
  resume_matches_straight_run(small_tabular(test::scratch_dir("tab_resume").string()));
}

TEST_CASE("neural runs resume exactly") {
  resume_matches_straight_run(small_neural(test::scratch_dir("neu_resume").string()));
}

TEST_CASE("resuming with another mode is refused") {
  const auto dir = test::scratch_dir("mode_mismatch");
  auto cfg = small_tabular(dir.string());
  cfg.max_iterations = 1;
  run_experiment(cfg);
  RunOptions opt;
  opt.resume = load_checkpoint((dir / "checkpoint.bin").string());
  auto other = small_neural(dir.string());
  CHECK_THROWS(run_experiment(other, opt));
}

TEST_CASE("episode JSON round-trips") {
  World w;
  Vocabulary v;
  auto oracle = ScriptedProtocol::oracle(w, v);
  for (int id : {0, 101, 383}) {
    const auto rec = play_dialog(w, w.instance(id), oracle, oracle, 4);
    const auto j = episode_to_json(rec);
    const auto back = episode_from_json(w, nlohmann::json::parse(j.dump()));
    CHECK(back.instance.id == rec.instance.id);
    CHECK(back.rounds == rec.rounds);
    CHECK(back.predictions == rec.predictions);
    CHECK(back.rewards == rec.rewards);
    CHECK(back.final_guess == rec.final_guess);
    CHECK(j.at("rounds").size() == 4);
    CHECK(j.at("instance") == id);
  }
}

TEST_CASE("metrics log continues in place") {
  const auto dir = test::scratch_dir("metrics");
  {
    MetricsLog log(dir.string(), 0);
    for (int i = 0; i < 3; ++i) {
      nlohmann::ordered_json row;
      row["epoch"] = i;
      row["loss"] = 1.0 / (i + 1);
      log.append(row);
    }
  }
  {
    MetricsLog log(dir.string(), 2);
    nlohmann::ordered_json row;
    row["epoch"] = 2;
    row["loss"] = 0.25;
    log.append(row);
  }
  const auto jsonl = test::read_file(dir / "metrics.jsonl");
  CHECK(std::count(jsonl.begin(), jsonl.end(), '\n') == 3);
  CHECK(jsonl.find("0.25") != std::string::npos);
  const auto csv = test::read_file(dir / "metrics.csv");
  CHECK(csv.rfind("epoch,loss\n", 0) == 0);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 4);
}

}
