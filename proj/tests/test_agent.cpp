#include "taskgrid/agent.hpp"

#include <cmath>

#include "doctest.h"
#include "gradcheck.hpp"
#include "taskgrid/lang.hpp"
#include "taskgrid/world.hpp"

using namespace taskgrid;
using agent::Agent;
using agent::AgentConfig;

namespace {

AgentConfig tiny_config() {
  AgentConfig c;
  c.token_embed = 3;
  c.gru_hidden = 4;
  c.cell_embed = 2;
  c.image_channels = 3;
  c.lstm_hidden = 4;
  return c;
}

// A couple of live observations to push through the network.
std::vector<world::Observation> sample_observations(int n, uint64_t seed) {
  std::vector<world::Observation> out;
  world::Env env(lang::level("Mixed-2"), seed);
  out.push_back(env.reset());
  Rng rng(seed + 1);
  for (int i = 1; i < n; ++i) {
    if (env.terminated()) out.push_back(env.reset());
    else out.push_back(env.step(static_cast<world::Action>(rng.uniform_int(0, 2))).obs);
  }
  return out;
}

std::vector<const world::Observation*> pointers(const std::vector<world::Observation>& obs) {
  std::vector<const world::Observation*> p;
  for (const auto& o : obs) p.push_back(&o);
  return p;
}

}  // namespace

TEST_CASE("config round-trips through a string map and validates") {
  AgentConfig c = tiny_config();
  c.diag_head = false;
  CHECK(AgentConfig::from_map(c.to_map()) == c);
  CHECK(AgentConfig::from_map({}) == AgentConfig{});

  AgentConfig bad = c;
  bad.lstm_hidden = 0;
  CHECK_THROWS_AS(bad.validate(), agent::ConfigMismatch);
  bad = c;
  bad.diag_classes = 23;
  CHECK_THROWS_AS(bad.validate(), agent::ConfigMismatch);
}

TEST_CASE("forward produces the advertised shapes") {
  auto obs = sample_observations(3, 5);
  for (bool diag : {true, false}) {
    AgentConfig cfg = tiny_config();
    cfg.diag_head = diag;
    Agent a(cfg, 11);
    ad::Graph g(false);
    auto instr = a.encode_instruction(g, {obs[0].tokens, obs[1].tokens, obs[2].tokens});
    CHECK(instr.shape() == ad::Shape{3, cfg.gru_hidden});
    auto out = a.forward(g, pointers(obs), instr, a.initial_memory(3));
    CHECK(out.action_logp.shape() == ad::Shape{3, cfg.actions});
    CHECK(out.value.shape() == ad::Shape{3, 1});
    CHECK(out.mem.h.shape() == ad::Shape{3, cfg.lstm_hidden});
    CHECK(out.mem.c.shape() == ad::Shape{3, cfg.lstm_hidden});
    if (diag) {
      CHECK(out.diag_logits.shape() == ad::Shape{3, oracle::kNumClasses});
    } else {
      CHECK_FALSE(out.diag_logits.defined());
    }
    // Log-probabilities normalize.
    for (int r = 0; r < 3; ++r) {
      double s = 0;
      for (int k = 0; k < cfg.actions; ++k) s += std::exp(out.action_logp.data()[r * cfg.actions + k]);
      CHECK(s == doctest::Approx(1.0).epsilon(1e-4));
    }
  }
}

TEST_CASE("same seed builds bitwise-identical agents; forward is deterministic") {
  auto obs = sample_observations(2, 9);
  auto run = [&](Agent& a) {
    ad::Graph g(false);
    auto instr = a.encode_instruction(g, {obs[0].tokens, obs[1].tokens});
    return a.forward(g, pointers(obs), instr, a.initial_memory(2));
  };
  Agent a(tiny_config(), 21), b(tiny_config(), 21), c(tiny_config(), 22);
  auto oa = run(a), ob = run(b), oa2 = run(a), oc = run(c);
  CHECK(oa.action_logp.values() == ob.action_logp.values());
  CHECK(oa.value.values() == ob.value.values());
  CHECK(oa.diag_logits.values() == ob.diag_logits.values());
  CHECK(oa.action_logp.values() == oa2.action_logp.values());
  CHECK(oa.action_logp.values() != oc.action_logp.values());
}

TEST_CASE("diag-head presence does not change the shared parameters") {
  AgentConfig on = tiny_config(), off = tiny_config();
  off.diag_head = false;
  Agent a(on, 33), b(off, 33);
  for (const auto& [name, t] : b.params().items()) {
    CAPTURE(name);
    CHECK(a.params().get(name).values() == t.values());
  }
  CHECK(a.params().has("diag.w"));
  CHECK_FALSE(b.params().has("diag.w"));
}

TEST_CASE("instruction encoding equals a manual recurrence and handles ragged batches") {
  AgentConfig cfg = tiny_config();
  Agent a(cfg, 7);
  auto& ps = a.params();
  auto seq1 = lang::tokenize("go to the red ball");
  auto seq2 = lang::tokenize("go to a blue box twice before go to the green key");

  ad::Graph g(false);
  // Manual chain over seq1.
  nn::GruWeights w{cfg.token_embed, cfg.gru_hidden, ps.get("instr_gru.wzr"), ps.get("instr_gru.bzr"),
                   ps.get("instr_gru.wh"), ps.get("instr_gru.bh")};
  ad::Tensor h = ad::Tensor::zeros({1, cfg.gru_hidden});
  for (int id : seq1) h = nn::gru_step(g, w, g.rows(ps.get("tok.embed"), {id}), h);

  auto single = a.encode_instruction(g, {seq1});
  CHECK(single.values() == h.values());

  // Ragged batch rows match the single-sequence encodings exactly.
  auto batch = a.encode_instruction(g, {seq1, seq2});
  auto single2 = a.encode_instruction(g, {seq2});
  for (int j = 0; j < cfg.gru_hidden; ++j) {
    CHECK(batch.data()[j] == single.data()[j]);
    CHECK(batch.data()[cfg.gru_hidden + j] == single2.data()[j]);
  }
}

TEST_CASE("memory masking clears exactly the flagged rows") {
  Agent a(tiny_config(), 3);
  auto obs = sample_observations(2, 14);
  ad::Graph g(false);
  auto instr = a.encode_instruction(g, {obs[0].tokens, obs[1].tokens});
  auto out = a.forward(g, pointers(obs), instr, a.initial_memory(2));
  auto masked = a.mask_memory(g, out.mem, {0.0f, 1.0f});
  const int H = a.config().lstm_hidden;
  for (int j = 0; j < H; ++j) {
    CHECK(masked.h.data()[j] == 0.0f);
    CHECK(masked.c.data()[j] == 0.0f);
    CHECK(masked.h.data()[H + j] == out.mem.h.data()[H + j]);
    CHECK(masked.c.data()[H + j] == out.mem.c.data()[H + j]);
  }
}

TEST_CASE("action sampling follows the distribution; greedy takes the argmax") {
  std::vector<float> logits = {1.0f, -0.5f, 0.25f, 2.0f, -1.0f, 0.0f, 0.5f};
  // Normalize to log-probabilities.
  double z = 0;
  for (float v : logits) z += std::exp(v);
  std::vector<float> logp;
  for (float v : logits) logp.push_back(v - static_cast<float>(std::log(z)));

  Rng rng(77);
  std::vector<int> counts(7, 0);
  const int n = 40000;
  for (int i = 0; i < n; ++i) ++counts[Agent::sample_action(logp.data(), 7, rng)];
  for (int k = 0; k < 7; ++k) {
    double expect = std::exp(logp[k]);
    CHECK(counts[k] / static_cast<double>(n) == doctest::Approx(expect).epsilon(0.08));
  }
  CHECK(Agent::greedy_action(logp.data(), 7) == 3);
}

TEST_CASE("full forward pass survives a gradient check") {
  AgentConfig cfg = tiny_config();
  Agent a(cfg, 19);
  auto obs = sample_observations(2, 31);
  auto ptrs = pointers(obs);
  Rng rng(5);
  ad::Tensor cot_a = ad::Tensor::uniform({2, cfg.actions}, rng, 1.0f);
  ad::Tensor cot_v = ad::Tensor::uniform({2, 1}, rng, 1.0f);
  ad::Tensor cot_d = ad::Tensor::uniform({2, oracle::kNumClasses}, rng, 1.0f);

  std::vector<ad::Tensor> params;
  for (const auto& [name, t] : a.params().items()) params.push_back(t);

  auto build = [&](ad::Graph& g) {
    auto instr = a.encode_instruction(g, {obs[0].tokens, obs[1].tokens});
    auto out = a.forward(g, ptrs, instr, a.initial_memory(2));
    auto loss = g.add(g.reduce_mean(g.mul(out.action_logp, cot_a)), g.reduce_mean(g.mul(out.value, cot_v)));
    return g.add(loss, g.reduce_mean(g.mul(out.diag_logits, cot_d)));
  };
  auto r = testutil::gradcheck(params, build);
  CAPTURE(r.max_abs_diff);
  CAPTURE(r.scale);
  CHECK(r.pass);
}

TEST_CASE("binding a checkpoint missing a required parameter is rejected") {
  AgentConfig off = tiny_config();
  off.diag_head = false;
  Agent headless(off, 5);
  ad::ParameterSet ps;
  for (const auto& [name, t] : headless.params().items()) ps.add(name, t);

  AgentConfig on = tiny_config();
  CHECK_THROWS_AS(Agent(on, std::move(ps)), agent::ConfigMismatch);

  // Present but mis-shaped parameters are rejected too.
  ad::ParameterSet wrong;
  for (const auto& [name, t] : headless.params().items())
    wrong.add(name, name == "tok.embed" ? ad::Tensor::zeros({2, 2}) : t);
  CHECK_THROWS_AS(Agent(off, std::move(wrong)), std::runtime_error);

  // A complete set (fresh storage, same values) binds and reproduces the
  // donor's behavior.
  Agent donor(on, 5);
  ad::ParameterSet full;
  for (const auto& [name, t] : donor.params().items()) full.add(name, ad::Tensor::from(t.shape(), t.values()));
  Agent bound(on, std::move(full));
  auto obs = sample_observations(1, 2);
  ad::Graph g(false);
  auto i1 = donor.encode_instruction(g, {obs[0].tokens});
  auto i2 = bound.encode_instruction(g, {obs[0].tokens});
  auto o1 = donor.forward(g, pointers(obs), i1, donor.initial_memory(1));
  auto o2 = bound.forward(g, pointers(obs), i2, bound.initial_memory(1));
  CHECK(o1.action_logp.values() == o2.action_logp.values());
  CHECK(o1.value.values() == o2.value.values());
}
