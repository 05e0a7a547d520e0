#pragma once

#include <cstdint>
#include <deque>
#include <string>
#include <vector>

#include "taskgrid/agent.hpp"
#include "taskgrid/config.hpp"
#include "taskgrid/world.hpp"

namespace taskgrid::train {

struct NonFiniteLoss : std::runtime_error {
  explicit NonFiniteLoss(const std::string& what) : std::runtime_error("non-finite loss: " + what) {}
};

// Query timesteps for one sparse-mode episode: min(k, bound) distinct steps
// drawn uniformly without replacement from [0, bound), sorted. Steps past the
// actual episode end simply never occur.
std::vector<int> sparse_query_mask(int episode_bound, Rng& rng, int k);

struct GaeOut {
  std::vector<float> adv;  // normalized to mean 0 / std 1 unless disabled
  std::vector<float> ret;  // adv (raw) + value
};
// Flat [env*horizon + t] layout. done marks transitions whose successor state
// belongs to a new episode; bootstrap is V(s_T) per env.
GaeOut compute_gae(const std::vector<float>& reward, const std::vector<uint8_t>& done,
                   const std::vector<float>& value, const std::vector<float>& bootstrap, int envs, int horizon,
                   float gamma, float lam, bool normalize = true);

// One rollout of num_envs x horizon transitions, flat [env*horizon + t].
struct RolloutBatch {
  int num_envs = 0, horizon = 0, segment = 0;
  std::vector<world::Observation> obs;  // state the action was chosen in
  std::vector<int> action;
  std::vector<float> logp;    // behavior log-prob of the chosen action
  std::vector<float> value;   // V(s_t) under behavior parameters
  std::vector<float> reward;
  std::vector<uint8_t> done;
  std::vector<world::Term> term;  // termination kind when done, else Running
  std::vector<int> label;     // oracle class of the current subgoal at s_t
  std::vector<uint8_t> query; // diagnostic loss mask
  std::vector<int> instr_id;  // index into instructions
  std::vector<lang::TokenSeq> instructions;
  std::vector<float> mem_h, mem_c;  // [env][segment_index][H] snapshots at segment starts
  std::vector<float> bootstrap;     // per env

  // Episode bookkeeping for the metrics row.
  int episodes_completed = 0, successes = 0, failures = 0, timeouts = 0;
  int64_t episode_length_sum = 0;
  int64_t diag_correct = 0, diag_total = 0;

  int64_t steps() const { return static_cast<int64_t>(num_envs) * horizon; }
};

struct LossStats {
  double policy_loss = 0, value_loss = 0, entropy = 0, diag_ce = 0, total_loss = 0;
  double clip_fraction = 0, grad_norm = 0;
};

struct TrainResult {
  std::string run_dir, checkpoint_path, metrics_path;
  int64_t frames = 0;
  int updates = 0;
};

// One training run (one seed) of the PPO loop with the mode's diagnostic
// term. Owns the envs, the agent, and every rng stream involved.
class Trainer {
 public:
  Trainer(config::RunConfig cfg, uint64_t seed);

  RolloutBatch collect_rollouts();
  LossStats ppo_update(const RolloutBatch& batch);

  // collect / update until the frame budget, logging one CSV row per update
  // and periodically evaluating greedily; writes the final checkpoint.
  TrainResult train();

  agent::Agent& model() { return agent_; }
  const config::RunConfig& config() const { return cfg_; }
  uint64_t seed() const { return seed_; }
  int64_t frames_done() const { return frames_; }
  std::string run_dir() const;

 private:
  void reset_env_state(int e, const world::Observation& obs);
  void refresh_instr_embedding(int e);
  ad::Tensor instr_embedding_batch() const;

  config::RunConfig cfg_;
  uint64_t seed_;
  agent::Agent agent_;
  std::vector<world::Env> envs_;
  std::vector<Rng> act_rng_;
  Rng update_rng_;

  // Per-env episode state carried across rollouts.
  std::vector<world::Observation> cur_obs_;
  std::vector<float> mem_h_, mem_c_;    // [E][H]
  std::vector<float> instr_emb_;        // [E][gru_hidden]
  std::vector<lang::TokenSeq> cur_tokens_;
  std::vector<int> episode_step_;
  std::vector<std::vector<int>> sparse_steps_;

  int64_t frames_ = 0;
  int updates_ = 0;
  int64_t episodes_total_ = 0;
  std::deque<std::pair<int64_t, int64_t>> diag_window_;  // (correct, total) of recent updates
};

}  // namespace taskgrid::train
