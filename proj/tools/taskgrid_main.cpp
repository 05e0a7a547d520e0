// Command-line front end: train / eval / collect / probe / render.
// Exit code 0 iff the command completed; otherwise one line "error: ..." on
// stderr (2 for usage errors, 1 for runtime failures).

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "taskgrid/checkpoint.hpp"
#include "taskgrid/config.hpp"
#include "taskgrid/evalkit.hpp"
#include "taskgrid/lang.hpp"
#include "taskgrid/oracle.hpp"
#include "taskgrid/rng.hpp"
#include "taskgrid/trainer.hpp"
#include "taskgrid/world.hpp"

namespace tg = taskgrid;
namespace fs = std::filesystem;

namespace {

struct LoadedModel {
  tg::ckpt::Checkpoint back;
  tg::agent::Agent agent;
};

LoadedModel load_model(const std::string& path) {
  tg::ckpt::Checkpoint c = tg::ckpt::load(path);
  tg::agent::AgentConfig acfg = c.run.agent;
  tg::ad::ParameterSet ps = std::move(c.params);
  return {std::move(c), tg::agent::Agent(acfg, std::move(ps))};
}

// Echo the data lines of a freshly written report so stdout shows the same
// table row that landed in the file.
void print_csv_rows(const std::string& path) {
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line))
    if (!line.empty() && line[0] != '#') std::printf("%s\n", line.c_str());
}

std::string upper(std::string s) {
  for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

std::string class_name(int id) {
  auto [c, t] = tg::oracle::class_of(id);
  return tg::lang::color_name(c) + " " + tg::lang::type_name(t);
}

std::string out_dir_or_default(const std::string& out, const std::string& ckpt_path) {
  if (!out.empty()) return out;
  fs::path parent = fs::path(ckpt_path).parent_path();
  return parent.empty() ? std::string(".") : parent.string();
}

int run_train(const std::string& config_path, const std::map<std::string, std::string>& overrides) {
  std::map<std::string, std::string> kv;
  if (!config_path.empty()) kv = tg::config::parse_kv_file(config_path);
  for (const auto& [k, v] : overrides) kv[k] = v;
  tg::config::RunConfig cfg = tg::config::RunConfig::from_map(kv);
  cfg.validate();

  std::vector<tg::eval::Metrics> per_seed;
  for (uint64_t seed : cfg.seeds) {
    tg::train::Trainer tr(cfg, seed);
    tg::train::TrainResult res = tr.train();
    std::printf("[%s] finished: frames=%lld updates=%d checkpoint=%s\n", res.run_dir.c_str(),
                static_cast<long long>(res.frames), res.updates, res.checkpoint_path.c_str());
    per_seed.push_back(tg::eval::evaluate(tr.model(), tg::lang::level(cfg.level), cfg.eval_episodes,
                                          tg::mix_seed(seed, tg::hash_str("eval"))));
  }

  tg::eval::ReportRow row{tg::config::mode_name(cfg.mode()), cfg.level, "eval", per_seed};
  std::string csv = cfg.out_dir + "/report.csv", js = cfg.out_dir + "/report.json";
  tg::eval::write_report({row}, csv, js, cfg.to_map());
  print_csv_rows(csv);
  std::printf("report: %s\n", csv.c_str());
  return 0;
}

int run_eval(const std::string& ckpt_path, std::string level_name, const std::string& transfer, int episodes,
             uint64_t seed, const std::string& out) {
  LoadedModel m = load_model(ckpt_path);
  if (level_name.empty()) level_name = m.back.run.level;
  const tg::lang::LevelSpec& lvl = tg::lang::level(level_name);
  if (episodes <= 0) episodes = m.back.run.eval_episodes;

  tg::eval::Metrics met;
  std::string mode_col;
  if (transfer.empty()) {
    met = tg::eval::evaluate(m.agent, lvl, episodes, seed);
    mode_col = "eval";
  } else {
    tg::eval::TransferMode tm = tg::eval::transfer_mode_from(transfer);
    met = tg::eval::transfer_evaluate(m.agent, lvl, tm, episodes, seed);
    mode_col = tg::eval::transfer_mode_name(tm);
  }

  auto prov = m.back.run.to_map();
  prov["eval.checkpoint"] = ckpt_path;
  prov["eval.seed"] = std::to_string(seed);
  prov["eval.train_seed"] = std::to_string(m.back.seed);

  tg::eval::ReportRow row{tg::config::mode_name(m.back.run.mode()), level_name, mode_col, {met}};
  std::string dir = out_dir_or_default(out, ckpt_path);
  std::string csv = dir + "/" + mode_col + "_report.csv", js = dir + "/" + mode_col + "_report.json";
  tg::eval::write_report({row}, csv, js, prov);
  print_csv_rows(csv);
  return 0;
}

int run_collect(const std::string& ckpt_path, std::string level_name, int frames, uint64_t seed,
                const std::string& out) {
  LoadedModel m = load_model(ckpt_path);
  if (level_name.empty()) level_name = m.back.run.level;
  const tg::lang::LevelSpec& lvl = tg::lang::level(level_name);
  if (frames <= 0) frames = m.back.run.probe_frames;

  tg::eval::ProbeDataset d = tg::eval::collect_probe_dataset(m.agent, lvl, frames, seed);
  d.provenance = m.back.run.to_text() + "train_seed=" + std::to_string(m.back.seed) + "\n";
  tg::eval::save_dataset(d, out);
  std::printf("dataset: %s rows=%lld hidden=%d\n", out.c_str(), static_cast<long long>(d.count()), d.hidden);
  return 0;
}

int run_probe(const std::string& data_path, int epochs, float lr) {
  tg::eval::ProbeDataset d = tg::eval::load_dataset(data_path);
  tg::eval::ProbeResult res = tg::eval::train_probe(d, epochs, lr);
  std::printf("probe rows=%lld hidden=%d train_accuracy=%.6f val_accuracy=%.6f\n",
              static_cast<long long>(d.count()), d.hidden, res.train_accuracy, res.val_accuracy);
  return 0;
}

int run_render(const std::string& ckpt_path, std::string level_name, uint64_t seed) {
  LoadedModel m = load_model(ckpt_path);
  if (level_name.empty()) level_name = m.back.run.level;
  tg::world::Env env(tg::lang::level(level_name), seed);
  tg::world::Observation obs = env.reset();
  std::printf("instruction: %s\n", tg::lang::render(env.instruction()).c_str());

  const bool diag = m.agent.config().diag_head;
  tg::ad::Graph g(false);
  tg::ad::Tensor emb = m.agent.encode_instruction(g, {env.tokens()});
  tg::agent::Memory mem = m.agent.initial_memory(1);
  float last_reward = 0.0f;

  while (!env.terminated()) {
    std::printf("%s\n", env.render_ascii().c_str());
    int label = env.current_label();
    tg::agent::AgentOutput o = m.agent.forward(g, {&obs}, emb, mem);
    mem = o.mem;
    int a = tg::agent::Agent::greedy_action(o.action_logp.data(), tg::world::kNumActions);
    if (diag) {
      const float* dl = o.diag_logits.data();
      int pred = static_cast<int>(std::max_element(dl, dl + tg::oracle::kNumClasses) - dl);
      std::printf("step %3d  action=%-8s true=%-12s pred=%s\n", env.steps() + 1,
                  tg::world::action_name(static_cast<tg::world::Action>(a)), class_name(label).c_str(),
                  class_name(pred).c_str());
    } else {
      std::printf("step %3d  action=%-8s true=%s\n", env.steps() + 1,
                  tg::world::action_name(static_cast<tg::world::Action>(a)), class_name(label).c_str());
    }
    tg::world::StepResult r = env.step(static_cast<tg::world::Action>(a));
    obs = r.obs;
    last_reward = r.reward;
  }
  std::printf("%s\n", env.render_ascii().c_str());
  std::printf("%s steps=%d reward=%.4f\n", upper(tg::world::term_name(env.term_kind())).c_str(), env.steps(),
              last_reward);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"instruction-following gridworld: training, evaluation, probing, rendering"};
  app.require_subcommand(1);

  std::string t_config, t_level, t_mode, t_beta, t_seeds, t_frames, t_out;
  auto* t = app.add_subcommand("train", "train one model per seed, then write an aggregate report");
  t->add_option("--config", t_config, "key=value config file (flags override file values)");
  t->add_option("--level", t_level, "level name (Before, Before-Repeat, Mixed-2, Mixed-3)");
  t->add_option("--mode", t_mode, "baseline | aware | sparse");
  t->add_option("--beta", t_beta, "diagnostic loss weight");
  t->add_option("--seed", t_seeds, "comma-separated training seeds");
  t->add_option("--frames", t_frames, "training frame budget");
  t->add_option("--out", t_out, "output directory");

  std::string e_ckpt, e_level, e_transfer, e_out;
  int e_episodes = 0;
  uint64_t e_seed = 1;
  auto* e = app.add_subcommand("eval", "evaluate a checkpoint greedily, print and write a report row");
  e->add_option("--ckpt", e_ckpt, "checkpoint file")->required();
  e->add_option("--level", e_level, "level name (default: the level the model was trained on)");
  e->add_option("--transfer", e_transfer, "swap one atom per instruction to held-out words: color | object | colobj");
  e->add_option("--episodes", e_episodes, "episode count (default: eval_episodes from the checkpoint config)");
  e->add_option("--seed", e_seed, "evaluation seed");
  e->add_option("--out", e_out, "report directory (default: the checkpoint's directory)");

  std::string c_ckpt, c_level, c_out;
  int c_frames = 0;
  uint64_t c_seed = 1;
  auto* c = app.add_subcommand("collect", "record (hidden state, sub-objective) pairs from greedy play");
  c->add_option("--ckpt", c_ckpt, "checkpoint file")->required();
  c->add_option("--level", c_level, "level name (default: the level the model was trained on)");
  c->add_option("--frames", c_frames, "minimum record count (default: probe_frames from the checkpoint config)");
  c->add_option("--seed", c_seed, "collection seed");
  c->add_option("--out", c_out, "dataset file to write")->required();

  std::string p_data;
  int p_epochs = 50;
  float p_lr = 0.01f;
  auto* p = app.add_subcommand("probe", "fit a linear readout on a collected dataset");
  p->add_option("--data", p_data, "dataset file")->required();
  p->add_option("--epochs", p_epochs, "full-batch epochs");
  p->add_option("--lr", p_lr, "learning rate");

  std::string r_ckpt, r_level;
  uint64_t r_seed = 1;
  auto* r = app.add_subcommand("render", "play one greedy episode with ASCII frames and per-step labels");
  r->add_option("--ckpt", r_ckpt, "checkpoint file")->required();
  r->add_option("--level", r_level, "level name (default: the level the model was trained on)");
  r->add_option("--seed", r_seed, "episode seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::CallForAllHelp& ex) {
    return app.exit(ex);
  } catch (const CLI::ParseError& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return 2;
  }

  try {
    if (t->parsed()) {
      std::map<std::string, std::string> ov;
      if (t->count("--level")) ov["level"] = t_level;
      if (t->count("--mode")) ov["mode"] = t_mode;
      if (t->count("--beta")) ov["ppo.beta"] = t_beta;
      if (t->count("--seed")) ov["seeds"] = t_seeds;
      if (t->count("--frames")) ov["frames"] = t_frames;
      if (t->count("--out")) ov["out_dir"] = t_out;
      return run_train(t_config, ov);
    }
    if (e->parsed()) return run_eval(e_ckpt, e_level, e_transfer, e_episodes, e_seed, e_out);
    if (c->parsed()) return run_collect(c_ckpt, c_level, c_frames, c_seed, c_out);
    if (p->parsed()) return run_probe(p_data, p_epochs, p_lr);
    if (r->parsed()) return run_render(r_ckpt, r_level, r_seed);
  } catch (const std::exception& ex) {
    std::fprintf(stderr, "error: %s\n", ex.what());
    return 1;
  }
  std::fprintf(stderr, "error: no command\n");
  return 2;
}
