#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "taskgrid/agent.hpp"

namespace taskgrid::config {

struct ConfigError : std::runtime_error {
  ConfigError(const std::string& field, const std::string& what)
      : std::runtime_error("config error at '" + field + "': " + what), field(field) {}
  std::string field;
};

enum class Mode { Baseline, Aware, Sparse };
const char* mode_name(Mode m);
Mode mode_from(const std::string& s);  // throws ConfigError

struct PPOConfig {
  float gamma = 0.99f;
  float lam = 0.95f;
  float clip = 0.2f;
  int epochs = 4;
  int minibatches = 8;
  int horizon = 128;    // T steps per env per rollout
  int num_envs = 16;
  int segment = 16;     // recurrent chunk; memory snapshot at each segment start
  float value_coef = 0.5f;
  float entropy_coef = 0.01f;
  float beta = 0.5f;    // diagnostic CE coefficient
  Mode mode = Mode::Aware;
  int sparse_queries = 3;  // per-episode query budget in sparse mode
  float lr = 1e-3f;
  float grad_clip = 0.5f;
  bool operator==(const PPOConfig&) const = default;
};

// Everything one experiment needs; serialized into checkpoints and reports.
struct RunConfig {
  std::string level = "Before";
  PPOConfig ppo;
  agent::AgentConfig agent;
  int64_t frames = 500000;  // training budget (env steps summed over envs)
  std::vector<uint64_t> seeds = {1};
  std::string out_dir = "runs";
  int eval_episodes = 500;
  int eval_every = 25;  // updates between greedy evaluations; 0 disables
  int probe_frames = 20000;
  int probe_epochs = 50;
  float probe_lr = 1e-2f;

  Mode mode() const { return ppo.mode; }

  void validate() const;  // throws ConfigError
  std::map<std::string, std::string> to_map() const;
  std::string to_text() const;  // key=value lines, sorted
  // Applies kv over defaults; unknown keys throw. Sets agent.diag_head from
  // the mode unless the key is given explicitly.
  static RunConfig from_map(const std::map<std::string, std::string>& kv);
  static RunConfig from_text(const std::string& text);
  static RunConfig from_file(const std::string& path);
  bool operator==(const RunConfig&) const = default;
};

// key=value per line; blank lines and #-comments skipped. Later keys win.
std::map<std::string, std::string> parse_kv_text(const std::string& text);
std::map<std::string, std::string> parse_kv_file(const std::string& path);

}  // namespace taskgrid::config
