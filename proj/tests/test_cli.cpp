#include "doctest.h"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "edl/cli.hpp"
#include "edl/experiment.hpp"
#include "support.hpp"

using namespace edl;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args, const std::string& input = "") {
  args.insert(args.begin(), "edl");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::istringstream in(input);
  std::ostringstream out;
  std::ostringstream err;
  Result r;
  r.code = run_cli(static_cast<int>(argv.size()), argv.data(), in, out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

bool contains(const std::string& hay, const std::string& needle) {
  return hay.find(needle) != std::string::npos;
}

/// Tabular checkpoint holding the oracle protocol, so its agents play perfectly.
std::string oracle_checkpoint(const std::filesystem::path& dir) {
  ExperimentConfig cfg;
  cfg.out = dir.string();
  cfg = resolve(cfg);
  const World world = make_world(cfg);
  const TabularGame game{&world, make_vocab(cfg), cfg.rounds};
  auto oracle = ScriptedProtocol::oracle(world, game.vocab);
  auto [q, a] = tables_from_protocol(game, oracle);
  const auto path = (dir / "oracle.bin").string();
  save_checkpoint(path, tabular_checkpoint(cfg, TabularState{q, a, {}, 0}));
  return path;
}

std::string value_name(const World& w, const Instance& inst, int attribute) {
  return w.value_name(w.value(attribute, inst.image.values[attribute]));
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("usage errors exit with code 2") {
  CHECK(run({"eval"}).code == 2);
  CHECK(run({"train", "--no-such-flag"}).code == 2);
  CHECK(run({"train", "--mode", "quantum"}).code == 2);
  CHECK(run({"dump-world", "--set", "bogus.key=1"}).code == 2);
  CHECK(run({"dump-world", "--set", "world.values=99"}).code == 2);
  const auto r = run({"eval"});
  CHECK(contains(r.err, "error"));
  CHECK(contains(r.err, "--checkpoint"));
  CHECK(run({"--help"}).code == 0);
}

TEST_CASE("dump-world") {
  const auto r = run({"dump-world"});
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("id,shape,color,style\n0,square,purple,filled\n", 0) == 0);
  CHECK(contains(r.out, "\ninstance_id,image_id,task_id,first,second\n"));
  CHECK(std::count(r.out.begin(), r.out.end(), '\n') == 1 + 64 + 1 + 1 + 384);
  const auto j = nlohmann::json::parse(run({"dump-world", "--json"}).out);
  CHECK(j.at("images").size() == 64);
  CHECK(j.at("tasks").size() == 6);
  const auto small = run({"dump-world", "--set", "world.values=2", "--set", "world.attributes=2"});
  CHECK(std::count(small.out.begin(), small.out.end(), '\n') == 1 + 4 + 1 + 1 + 8);
}

TEST_CASE("describe") {
  const auto r = run({"describe", "--mode", "neural"});
  REQUIRE(r.code == 0);
  CHECK(contains(r.out, "mode = neural"));
  CHECK(contains(r.out, "rounds = 10"));
  CHECK(contains(r.out, "q.history.W"));
  CHECK(contains(r.out, "total 12067"));
  CHECK(contains(run({"describe"}).out, "rounds = 2"));
}

TEST_CASE("train applies precedence: file, then --set, then flags") {
  const auto dir = test::scratch_dir("cli_train");
  const auto cfg_path = dir / "exp.cfg";
  std::ofstream(cfg_path) << "seed = 3\ntabular.max_iterations = 1\ntabular.episodes_per_iteration = 500\n";
  const auto out = (dir / "run").string();
  const auto r = run({"train", "--config", cfg_path.string(), "--set", "seed=4", "--set",
                      "tabular.episodes_per_iteration=50", "--seed", "5", "--out", out});
  REQUIRE(r.code == 0);
  const auto written = test::read_file(std::filesystem::path(out) / "config.cfg");
  CHECK(contains(written, "seed = 5\n"));
  CHECK(contains(written, "tabular.episodes_per_iteration = 50\n"));
  CHECK(contains(written, "tabular.max_iterations = 1\n"));
  for (const char* f : {"metrics.jsonl", "metrics.csv", "reward_curve.csv", "checkpoint.bin",
                        "episodes.jsonl"}) {
    CHECK(std::filesystem::exists(std::filesystem::path(out) / f));
  }
}

TEST_CASE("eval and analyze an oracle checkpoint") {
  const auto dir = test::scratch_dir("cli_eval");
  const auto ckpt = oracle_checkpoint(dir);
  const auto e = run({"eval", "--checkpoint", ckpt, "--out", (dir / "eval").string()});
  REQUIRE(e.code == 0);
  CHECK(contains(e.out, "accuracy 1.0000"));
  CHECK(contains(e.out, "MRR 1.0000"));
  CHECK(std::filesystem::exists(dir / "eval" / "eval.json"));
  const auto a = run({"analyze", "--checkpoint", ckpt, "--out", (dir / "an").string()});
  REQUIRE(a.code == 0);
  CHECK(contains(a.out, "factorized: yes"));
  CHECK(std::filesystem::exists(dir / "an" / "protocol.csv"));
}

TEST_CASE("play as Q-bot") {
  const auto dir = test::scratch_dir("cli_play_q");
  const auto ckpt = oracle_checkpoint(dir);
  World w;
  const int id = 203;
  const Instance inst = w.instance(id);
  const std::string q1(1, static_cast<char>('x' + inst.task.first));
  const std::string q2(1, static_cast<char>('x' + inst.task.second));
  const std::string input = "W\n" + q1 + "\n" + q2 + "\nnonsense\n" +
                            value_name(w, inst, inst.task.first) + "\n" +
                            value_name(w, inst, inst.task.second) + "\n";
  const auto r = run({"play", "--checkpoint", ckpt, "--side", "q", "--instance", std::to_string(id)},
                     input);
  CHECK(r.code == 0);
  CHECK(contains(r.out, "try again"));
  CHECK(contains(r.out, "correct guess!"));

  const auto wrong = run({"play", "--checkpoint", ckpt, "--side", "q", "--instance", "0"},
                         "x\nx\nstar\nred\nsolid\n");
  CHECK(wrong.code == 0);
  CHECK(contains(wrong.out, "wrong guess"));

  CHECK(run({"play", "--checkpoint", ckpt, "--side", "q", "--instance", "0"}, "x\n").code == 1);
  CHECK(run({"play", "--checkpoint", ckpt, "--side", "q", "--instance", "999"}).code == 2);
  CHECK(run({"play", "--checkpoint", ckpt, "--side", "z"}).code == 2);
}

TEST_CASE("play as A-bot") {
  const auto dir = test::scratch_dir("cli_play_a");
  const auto ckpt = oracle_checkpoint(dir);
  World w;
  const Instance inst = w.instance(77);
  const std::string a1 = std::to_string(inst.image.values[inst.task.first] + 1);
  const std::string a2 = std::to_string(inst.image.values[inst.task.second] + 1);
  const auto r = run({"play", "--checkpoint", ckpt, "--side", "a", "--instance", "77"},
                     "9\n" + a1 + "\n" + a2 + "\n");
  CHECK(r.code == 0);
  CHECK(contains(r.out, "try again"));
  CHECK(contains(r.out, "correct guess!"));
}

}
