#pragma once

#include <map>
#include <string>
#include <vector>

#include "taskgrid/lang.hpp"
#include "taskgrid/layers.hpp"
#include "taskgrid/oracle.hpp"
#include "taskgrid/tensor.hpp"
#include "taskgrid/world.hpp"

namespace taskgrid::agent {

struct ConfigMismatch : std::runtime_error {
  explicit ConfigMismatch(const std::string& what) : std::runtime_error("config mismatch: " + what) {}
};

struct AgentConfig {
  int token_embed = 32;
  int gru_hidden = 64;
  int cell_embed = 16;
  int image_channels = 32;
  int lstm_hidden = 64;
  int actions = world::kNumActions;
  int diag_classes = oracle::kNumClasses;
  bool diag_head = true;

  void validate() const;  // throws ConfigMismatch
  std::map<std::string, std::string> to_map() const;
  static AgentConfig from_map(const std::map<std::string, std::string>& kv);
  bool operator==(const AgentConfig&) const = default;
};

struct Memory {
  ad::Tensor h, c;  // each {B, lstm_hidden}
};

struct AgentOutput {
  ad::Tensor action_logp;  // {B, actions}, log-probabilities
  ad::Tensor value;        // {B, 1}
  ad::Tensor diag_logits;  // {B, diag_classes}; undefined when the head is off
  Memory mem;
};

// Instruction GRU -> embedded 7x7 symbolic view -> two strided convs -> two
// FiLM blocks conditioned on the instruction -> affine -> LSTM -> linear
// actor/critic(/diagnostic) heads.
class Agent {
 public:
  // Fresh parameters drawn from per-name streams derived from `seed`, so a
  // parameter's init does not depend on which other parameters exist.
  Agent(AgentConfig cfg, uint64_t seed);
  // Bind to preloaded parameters (checkpoint); every parameter the config
  // implies must already be present, else ConfigMismatch.
  Agent(AgentConfig cfg, ad::ParameterSet params);

  const AgentConfig& config() const { return cfg_; }
  ad::ParameterSet& params() { return ps_; }
  const ad::ParameterSet& params() const { return ps_; }

  // Final GRU state per sequence (stops integrating at each true length).
  ad::Tensor encode_instruction(ad::Graph& g, const std::vector<lang::TokenSeq>& seqs) const;

  Memory initial_memory(int batch) const;
  // Per-row keep flags (0 clears, 1 keeps) applied to h and c.
  Memory mask_memory(ad::Graph& g, const Memory& m, const std::vector<float>& keep) const;

  AgentOutput forward(ad::Graph& g, const std::vector<const world::Observation*>& obs, const ad::Tensor& instr_emb,
                      const Memory& mem) const;

  static int sample_action(const float* logp, int n, Rng& rng);
  static int greedy_action(const float* logp, int n);

 private:
  void bind(bool strict, uint64_t seed);
  ad::Tensor param(const std::string& name, const ad::Shape& shape, float scale);
  ad::Tensor param_const(const std::string& name, const ad::Shape& shape, float v);

  AgentConfig cfg_;
  ad::ParameterSet ps_;
  bool strict_ = false;
  uint64_t seed_ = 0;

  ad::Tensor tok_;
  nn::GruWeights gru_;
  ad::Tensor ctype_, ccolor_, cocc_, cpos_;
  ad::Tensor conv1w_, conv1b_, conv2w_, conv2b_;
  nn::FilmWeights film1_, film2_;
  ad::Tensor film1gw_, film1gb_, film1bw_, film1bb_;
  ad::Tensor film2gw_, film2gb_, film2bw_, film2bb_;
  ad::Tensor prew_, preb_;
  nn::LstmWeights lstm_;
  ad::Tensor actorw_, actorb_, criticw_, criticb_, diagw_, diagb_;
};

}  // namespace taskgrid::agent
