#include "edl/cli.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include <fmt/format.h>

#include "edl/agents.hpp"
#include "edl/config.hpp"
#include "edl/experiment.hpp"
#include "edl/io.hpp"

namespace edl {

namespace {

struct Overrides {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> mode;
  std::optional<std::string> out;
  std::optional<int> rounds;
  std::vector<std::string> freeze;
  bool multi_task = false;
};

void add_config_options(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--config", o.config_path, "key = value config file")->check(CLI::ExistingFile);
  cmd->add_option("--set", o.sets, "override one key, e.g. --set optim.lr=0.01");
}

void add_run_options(CLI::App* cmd, Overrides& o) {
  add_config_options(cmd, o);
  cmd->add_option("--seed", o.seed, "experiment seed");
  cmd->add_option("--mode", o.mode, "tabular or neural")->check(CLI::IsMember({"tabular", "neural"}));
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--rounds", o.rounds, "dialog rounds");
  cmd->add_option("--freeze", o.freeze, "freeze q, a and/or f during RL")
      ->delimiter(',')
      ->check(CLI::IsMember({"q", "a", "f"}));
  cmd->add_flag("--multi-task", o.multi_task, "add the supervised loss during RL");
}

ExperimentConfig build_config(const Overrides& o, ExperimentConfig cfg) {
  if (!o.config_path.empty()) cfg = load_config_file(o.config_path, cfg);
  for (const auto& s : o.sets) {
    const auto eq = s.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
    set_config_value(cfg, s.substr(0, eq), s.substr(eq + 1));
  }
  if (o.seed) cfg.seed = *o.seed;
  if (o.mode) cfg.mode = parse_mode(*o.mode);
  if (o.out) cfg.out = *o.out;
  if (o.rounds) cfg.rounds = *o.rounds;
  for (const auto& f : o.freeze) {
    if (f == "q") cfg.ablation.freeze_q = true;
    if (f == "a") cfg.ablation.freeze_a = true;
    if (f == "f") cfg.ablation.freeze_f = true;
  }
  if (o.multi_task) cfg.ablation.multi_task = true;
  validate(cfg);
  return resolve(cfg);
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  return s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1);
}

class EndOfInput : public std::runtime_error {
 public:
  EndOfInput() : std::runtime_error("input ended before the game finished") {}
};

/// Prompts until `parse` accepts a line.
template <typename T, typename Parse>
T prompt(std::istream& in, std::ostream& out, const std::string& text, Parse parse) {
  for (;;) {
    out << text << std::flush;
    std::string line;
    if (!std::getline(in, line)) {
      out << "\n";
      throw EndOfInput();
    }
    line = trim(line);
    try {
      return parse(line);
    } catch (const std::exception& e) {
      out << "  " << e.what() << ", try again\n";
    }
  }
}

std::string describe_image(const World& world, const SynthImage& img) {
  std::string s;
  for (int k = 0; k < world.num_attributes(); ++k) {
    if (k) s += ", ";
    s += world.attribute_name(k) + "=" + world.value_name(world.value(k, img.values[k]));
  }
  return s;
}

std::string symbols(const Vocabulary& vocab, Side side) {
  std::string s;
  for (int t = 0; t < vocab.size(side); ++t) s += (t ? " " : "") + vocab.label({side, t});
  return s;
}

int play(LoadedAgents& agents, const std::string& side, std::optional<int> instance_id,
         std::uint64_t seed, std::istream& in, std::ostream& out) {
  const auto& world = agents.world();
  const auto& vocab = agents.vocab();
  const int id = instance_id ? *instance_id : Rng(seed).below(world.num_instances());
  if (id < 0 || id >= world.num_instances()) {
    throw ConfigError(fmt::format("--instance must lie in 0..{}", world.num_instances() - 1));
  }
  const Instance inst = world.instance(id);
  const auto& task = inst.task;
  const int rounds = agents.rounds();
  QState qs = initial_q_state(task, rounds);
  AState as = initial_a_state(inst.image, rounds);
  const std::string first = world.attribute_name(task.first);
  const std::string second = world.attribute_name(task.second);

  if (side == "q") {
    out << fmt::format("You are Q-bot. Find the {} and the {} of a hidden image.\n", first, second);
  } else {
    out << "You are A-bot. The image: " << describe_image(world, inst.image) << "\n"
        << fmt::format("Q-bot must find its {} and {}.\n", first, second);
  }
  out << "Questions: " << symbols(vocab, Side::Q) << "   answers: " << symbols(vocab, Side::A) << "\n";

  for (int t = 0; t < rounds; ++t) {
    int q_tok = 0;
    if (side == "q") {
      q_tok = prompt<int>(in, out, fmt::format("round {}/{} question> ", t + 1, rounds),
                          [&](const std::string& s) { return vocab.parse(Side::Q, s).token; });
    } else {
      q_tok = agents.questioner().ask(qs);
      out << fmt::format("round {}/{} Q-bot asks {}\n", t + 1, rounds, vocab.label({Side::Q, q_tok}));
    }
    as = pose_question(as, {Symbol{Side::Q, q_tok}});
    int a_tok = 0;
    if (side == "q") {
      a_tok = agents.answerer().answer(as);
      out << "A-bot answers " << vocab.label({Side::A, a_tok}) << "\n";
    } else {
      a_tok = prompt<int>(in, out, "answer> ",
                          [&](const std::string& s) { return vocab.parse(Side::A, s).token; });
    }
    const Round round = Round::single(q_tok, a_tok);
    qs = advance_q_state(qs, round);
    as = advance_a_state(as, round);
  }

  PredictionPair guess;
  if (side == "q") {
    auto read_value = [&](int kind, const std::string& name) {
      return prompt<AttributeValue>(in, out, "guess " + name + "> ", [&](const std::string& s) {
        const auto v = world.parse_value(s);
        if (v.kind != kind) throw std::invalid_argument("'" + s + "' is not a " + name);
        return v;
      });
    };
    const auto a = read_value(task.first, first);
    const auto b = read_value(task.second, second);
    guess = world.pair(a, b);
  } else {
    guess = agents.questioner().guess(qs);
    out << "Q-bot guesses " << world.value_name(guess.first_value) << " "
        << world.value_name(guess.second_value) << "\n";
  }
  if (world.check_prediction(inst, guess)) {
    out << "correct guess!\n";
  } else {
    out << "wrong guess. The image was " << describe_image(world, inst.image) << "\n";
  }
  return 0;
}

void dump_world(const World& world, bool json, std::ostream& out) {
  if (json) {
    nlohmann::ordered_json j;
    for (const auto& img : world.images()) {
      nlohmann::ordered_json ji;
      ji["id"] = img.id;
      for (int k = 0; k < world.num_attributes(); ++k) {
        ji[world.attribute_name(k)] = world.value_name(world.value(k, img.values[k]));
      }
      ji["target"] = world.target_vector(img);
      j["images"].push_back(ji);
    }
    for (const auto& t : world.tasks()) {
      j["tasks"].push_back({{"id", t.id},
                            {"first", world.attribute_name(t.first)},
                            {"second", world.attribute_name(t.second)}});
    }
    out << j.dump(2) << "\n";
    return;
  }
  out << "id";
  for (int k = 0; k < world.num_attributes(); ++k) out << "," << world.attribute_name(k);
  out << "\n";
  for (const auto& img : world.images()) {
    out << img.id;
    for (int k = 0; k < world.num_attributes(); ++k) {
      out << "," << world.value_name(world.value(k, img.values[k]));
    }
    out << "\n";
  }
  out << "\ninstance_id,image_id,task_id,first,second\n";
  for (const auto& inst : world.enumerate_instances()) {
    out << fmt::format("{},{},{},{},{}\n", inst.id, inst.image.id, inst.task.id,
                       world.attribute_name(inst.task.first),
                       world.attribute_name(inst.task.second));
  }
}

void describe_config(const ExperimentConfig& cfg, std::ostream& out) {
  for (const auto& k : config_keys()) {
    out << "# " << k.help << "\n" << k.name << " = " << get_config_value(cfg, k.name) << "\n";
  }
  if (cfg.mode != Mode::Neural) return;
  const NeuralAgents nets(dims_for(make_world(cfg), make_vocab(cfg), cfg.embed_dim, cfg.hidden_dim));
  out << "\nparameter blocks\n";
  std::size_t total = 0;
  for (const ParamSet* set : {static_cast<const ParamSet*>(&nets.q), static_cast<const ParamSet*>(&nets.a)}) {
    for (const auto& b : set->blocks()) {
      std::string shape;
      for (std::size_t i = 0; i < b.shape.size(); ++i) shape += (i ? "x" : "") + std::to_string(b.shape[i]);
      out << fmt::format("  {:<16} {:>8} {:>8}\n", b.name, shape, b.size());
      total += b.size();
    }
  }
  out << fmt::format("  total {}\n", total);
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::istream& in, std::ostream& out,
            std::ostream& err) {
  CLI::App app{"Emergent-dialog experiments: train, evaluate and play cooperative guessing games"};
  app.require_subcommand(1);

  Overrides train_o;
  std::string train_ckpt;
  int stop_after = -1;
  auto* train = app.add_subcommand("train", "train agents (tabular or neural per config)");
  add_run_options(train, train_o);
  train->add_option("--checkpoint", train_ckpt, "resume from this checkpoint")->check(CLI::ExistingFile);
  train->add_option("--stop-after", stop_after, "stop after this many epochs or iterations");

  std::string eval_ckpt, eval_out;
  auto* eval = app.add_subcommand("eval", "accuracy, retrieval curve and ranking metrics");
  eval->add_option("--checkpoint", eval_ckpt, "checkpoint to evaluate")->required()->check(CLI::ExistingFile);
  eval->add_option("--out", eval_out, "directory for eval.json and retrieval files");

  std::string an_ckpt, an_out;
  auto* analyze = app.add_subcommand("analyze", "emergent protocol report");
  analyze->add_option("--checkpoint", an_ckpt, "checkpoint to analyze")->required()->check(CLI::ExistingFile);
  analyze->add_option("--out", an_out, "directory for protocol.csv");

  std::string play_ckpt, play_side;
  std::uint64_t play_seed = 1;
  std::optional<int> play_instance;
  auto* playc = app.add_subcommand("play", "take one seat against a checkpointed partner");
  playc->add_option("--checkpoint", play_ckpt, "partner checkpoint")->required()->check(CLI::ExistingFile);
  playc->add_option("--side", play_side, "q or a: the seat you take")
      ->required()
      ->check(CLI::IsMember({"q", "a"}));
  playc->add_option("--seed", play_seed, "picks the game instance");
  playc->add_option("--instance", play_instance, "play this instance id instead");

  Overrides world_o;
  bool world_json = false;
  auto* dump = app.add_subcommand("dump-world", "list images and tasks");
  add_config_options(dump, world_o);
  dump->add_flag("--json", world_json, "JSON output");

  Overrides desc_o;
  std::string desc_ckpt;
  auto* describe = app.add_subcommand("describe", "print the resolved config or a checkpoint summary");
  add_run_options(describe, desc_o);
  describe->add_option("--checkpoint", desc_ckpt, "checkpoint to describe")->check(CLI::ExistingFile);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n";
    const auto* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << sub->help();
    return 2;
  }

  try {
    configure_logging();
    if (*train) {
      ExperimentConfig base;
      RunOptions opts;
      opts.stop_after = stop_after;
      if (!train_ckpt.empty()) {
        opts.resume = load_checkpoint(train_ckpt);
        base = checkpoint_config(*opts.resume);
      }
      const auto cfg = build_config(train_o, base);
      const auto sum = run_experiment(cfg, opts);
      out << fmt::format("{} run finished after {} {}: accuracy {:.4f}, mean return {:.4f}\n",
                         mode_name(cfg.mode), sum.completed,
                         cfg.mode == Mode::Tabular ? "iterations" : "epochs", sum.accuracy,
                         sum.mean_return);
      out << "outputs in " << cfg.out << "\n";
    } else if (*eval) {
      LoadedAgents agents(load_checkpoint(eval_ckpt));
      const auto rep = evaluate_agents(agents);
      out << fmt::format("accuracy {:.4f}\nmean return {:.4f}\nMRR {:.4f}\nmean rank {:.3f}\n",
                         rep.accuracy, rep.mean_return, rep.ranking.mrr, rep.ranking.mean_rank);
      for (const auto& [k, v] : rep.ranking.recall_at) out << fmt::format("R@{} {:.4f}\n", k, v);
      if (rep.retrieval) {
        out << "round  percentile rank\n";
        for (std::size_t t = 0; t < rep.retrieval->rounds.size(); ++t) {
          const auto& p = rep.retrieval->rounds[t];
          out << fmt::format("{:5}  {:.2f} +/- {:.2f}\n", t, p.mean, p.std_error);
        }
      }
      if (!eval_out.empty()) write_eval_outputs(eval_out, rep);
    } else if (*analyze) {
      LoadedAgents agents(load_checkpoint(an_ckpt));
      const auto rep = analyze_agents(agents);
      out << format_protocol_report(agents.world(), agents.vocab(), rep.protocol);
      out << fmt::format("accuracy {:.4f}\n", rep.accuracy);
      for (std::size_t t = 0; t < rep.injective.size(); ++t) {
        const auto& task = agents.world().task(static_cast<int>(t));
        out << fmt::format("task {} ({}, {}): answer map {}\n", t,
                           agents.world().attribute_name(task.first),
                           agents.world().attribute_name(task.second),
                           rep.injective[t] ? "injective" : "NOT injective");
      }
      if (!an_out.empty()) {
        std::filesystem::create_directories(an_out);
        write_protocol_csv((std::filesystem::path(an_out) / "protocol.csv").string(),
                           agents.world(), agents.vocab(), rep.protocol);
      }
    } else if (*playc) {
      LoadedAgents agents(load_checkpoint(play_ckpt));
      return play(agents, play_side, play_instance, play_seed, in, out);
    } else if (*dump) {
      dump_world(make_world(build_config(world_o, {})), world_json, out);
    } else if (*describe) {
      if (!desc_ckpt.empty()) {
        const auto ckpt = load_checkpoint(desc_ckpt);
        out << fmt::format("checkpoint version {}\nmode {}\ncompleted {}\narrays {}\n",
                           ckpt.version, ckpt.mode, ckpt.counter, ckpt.arrays.size());
        describe_config(checkpoint_config(ckpt), out);
      } else {
        describe_config(build_config(desc_o, {}), out);
      }
    }
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace edl
