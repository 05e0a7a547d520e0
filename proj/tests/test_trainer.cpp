#include "taskgrid/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "taskgrid/checkpoint.hpp"

using namespace taskgrid;
using config::Mode;
using train::Trainer;

namespace {

config::RunConfig tiny_run(Mode mode) {
  config::RunConfig c;
  c.level = "Before";
  c.ppo.num_envs = 2;
  c.ppo.horizon = 16;
  c.ppo.segment = 4;
  c.ppo.minibatches = 2;
  c.ppo.epochs = 2;
  c.ppo.mode = mode;
  c.agent.token_embed = 3;
  c.agent.gru_hidden = 4;
  c.agent.cell_embed = 2;
  c.agent.image_channels = 3;
  c.agent.lstm_hidden = 4;
  c.agent.diag_head = mode != Mode::Baseline;
  c.frames = 64;
  c.eval_every = 0;
  return c;
}

}  // namespace

TEST_CASE("sparse query steps are distinct, sorted, in range, and uniform") {
  Rng rng(1);
  for (int bound : {1, 2, 3, 10, 64}) {
    auto mask = train::sparse_query_mask(bound, rng, 3);
    CHECK(static_cast<int>(mask.size()) == std::min(3, bound));
    for (size_t i = 0; i < mask.size(); ++i) {
      CHECK(mask[i] >= 0);
      CHECK(mask[i] < bound);
      if (i) CHECK(mask[i] > mask[i - 1]);
    }
  }
  CHECK(train::sparse_query_mask(0, rng, 3).empty());

  std::vector<int> hits(10, 0);
  for (int rep = 0; rep < 20000; ++rep)
    for (int s : train::sparse_query_mask(10, rng, 3)) ++hits[s];
  for (int h : hits) {
    CHECK(h > 5700);  // expect 6000 per position
    CHECK(h < 6300);
  }

  Rng a(5), b(5);
  for (int rep = 0; rep < 10; ++rep) CHECK(train::sparse_query_mask(20, a, 3) == train::sparse_query_mask(20, b, 3));
}

TEST_CASE("advantage recursion matches hand-rolled discounted sums") {
  std::vector<float> reward = {1.0f, 2.0f, 3.0f};
  std::vector<float> value = {0.5f, 1.5f, 2.5f};
  std::vector<uint8_t> done = {0, 0, 0};
  std::vector<float> boot = {3.5f};
  const float g = 0.9f, l = 0.8f;

  SUBCASE("full recursion") {
    auto o = train::compute_gae(reward, done, value, boot, 1, 3, g, l, false);
    double d2 = 3.0 + g * 3.5 - 2.5;
    double d1 = 2.0 + g * 2.5 - 1.5;
    double d0 = 1.0 + g * 1.5 - 0.5;
    double a2 = d2, a1 = d1 + g * l * a2, a0 = d0 + g * l * a1;
    CHECK(o.adv[2] == doctest::Approx(a2));
    CHECK(o.adv[1] == doctest::Approx(a1));
    CHECK(o.adv[0] == doctest::Approx(a0));
    for (int t = 0; t < 3; ++t) CHECK(o.ret[t] == doctest::Approx(o.adv[t] + value[t]));
  }
  SUBCASE("terminal transitions cut both bootstrap and recursion") {
    done = {0, 1, 0};
    auto o = train::compute_gae(reward, done, value, boot, 1, 3, g, l, false);
    double a1 = 2.0 - 1.5;
    CHECK(o.adv[1] == doctest::Approx(a1));
    CHECK(o.adv[0] == doctest::Approx((1.0 + g * 1.5 - 0.5) + g * l * a1));
    CHECK(o.adv[2] == doctest::Approx(3.0 + g * 3.5 - 2.5));
  }
  SUBCASE("lambda 0 reduces to one-step TD error") {
    auto o = train::compute_gae(reward, done, value, boot, 1, 3, g, 0.0f, false);
    CHECK(o.adv[0] == doctest::Approx(1.0 + g * 1.5 - 0.5));
    CHECK(o.adv[1] == doctest::Approx(2.0 + g * 2.5 - 1.5));
  }
  SUBCASE("gamma 0 reduces to reward minus value") {
    auto o = train::compute_gae(reward, done, value, boot, 1, 3, 0.0f, l, false);
    for (int t = 0; t < 3; ++t) CHECK(o.adv[t] == doctest::Approx(reward[t] - value[t]));
  }
}

TEST_CASE("normalized advantages have mean 0 and unit deviation") {
  Rng rng(7);
  const int E = 2, T = 64;
  std::vector<float> reward(E * T), value(E * T), boot(E);
  std::vector<uint8_t> done(E * T, 0);
  for (auto& r : reward) r = rng.normal();
  for (auto& v : value) v = rng.normal();
  for (auto& b : boot) b = rng.normal();
  done[20] = 1;
  done[90] = 1;
  auto o = train::compute_gae(reward, done, value, boot, E, T, 0.99f, 0.95f, true);
  double sum = 0, sq = 0;
  for (float a : o.adv) sum += a;
  double mean = sum / o.adv.size();
  for (float a : o.adv) sq += (a - mean) * (a - mean);
  CHECK(std::fabs(mean) < 1e-6);
  CHECK(std::fabs(std::sqrt(sq / o.adv.size()) - 1.0) < 1e-4);
}

TEST_CASE("rollouts carry labels, masks, and bookkeeping per mode") {
  for (Mode mode : {Mode::Baseline, Mode::Aware, Mode::Sparse}) {
    CAPTURE(config::mode_name(mode));
    Trainer t(tiny_run(mode), 11);
    auto b = t.collect_rollouts();
    REQUIRE(b.steps() == 32);
    REQUIRE(b.obs.size() == 32);
    CHECK(b.mem_h.size() == 2u * 4 * 4);
    CHECK(b.instructions.size() >= 1);

    int dones = 0;
    for (int64_t i = 0; i < b.steps(); ++i) {
      CHECK(b.label[i] >= 0);
      CHECK(b.label[i] < 24);
      CHECK(b.action[i] >= 0);
      CHECK(b.action[i] < 7);
      CHECK(b.logp[i] <= 0.0f);
      CHECK(b.instr_id[i] >= 0);
      CHECK(b.instr_id[i] < static_cast<int>(b.instructions.size()));
      dones += b.done[i];
      if (mode == Mode::Aware) CHECK(b.query[i] == 1);
      if (mode == Mode::Baseline) CHECK(b.query[i] == 0);
    }
    CHECK(dones == b.episodes_completed);
    CHECK(b.successes + b.failures + b.timeouts == b.episodes_completed);
    if (b.episodes_completed > 0) CHECK(b.episode_length_sum >= b.episodes_completed);
    CHECK(b.diag_total == (mode == Mode::Baseline ? 0 : b.steps()));

    if (mode == Mode::Sparse) {
      // per episode at most sparse_queries query steps
      for (int e = 0; e < 2; ++e) {
        int q = 0;
        for (int tt = 0; tt < 16; ++tt) {
          size_t idx = e * 16 + tt;
          q += b.query[idx];
          if (b.done[idx]) {
            CHECK(q <= 3);
            q = 0;
          }
        }
        CHECK(q <= 3);
      }
    }

    // the very first rollout starts every env from a cleared memory
    for (int e = 0; e < 2; ++e)
      for (int j = 0; j < 4; ++j) CHECK(b.mem_h[(e * 4 + 0) * 4 + j] == 0.0f);
  }
}

TEST_CASE("same seed gives bitwise-identical training trajectories") {
  Trainer t1(tiny_run(Mode::Aware), 13), t2(tiny_run(Mode::Aware), 13);
  for (int step = 0; step < 2; ++step) {
    auto b1 = t1.collect_rollouts();
    auto b2 = t2.collect_rollouts();
    CHECK(b1.action == b2.action);
    CHECK(b1.logp == b2.logp);
    CHECK(b1.reward == b2.reward);
    auto s1 = t1.ppo_update(b1);
    auto s2 = t2.ppo_update(b2);
    CHECK(s1.policy_loss == s2.policy_loss);
    CHECK(s1.value_loss == s2.value_loss);
    CHECK(s1.entropy == s2.entropy);
    CHECK(s1.diag_ce == s2.diag_ce);
    CHECK(s1.total_loss == s2.total_loss);
    CHECK(s1.grad_norm == s2.grad_norm);
  }
  CHECK(ckpt::param_checksum(t1.model().params()) == ckpt::param_checksum(t2.model().params()));
}

TEST_CASE("a zero diagnostic coefficient reproduces the baseline bit for bit") {
  auto ca = tiny_run(Mode::Aware);
  ca.ppo.beta = 0.0f;
  Trainer tb(tiny_run(Mode::Baseline), 17), ta(ca, 17);
  for (int step = 0; step < 2; ++step) {
    auto bb = tb.collect_rollouts();
    auto ba = ta.collect_rollouts();
    CHECK(bb.action == ba.action);
    CHECK(bb.logp == ba.logp);
    CHECK(bb.reward == ba.reward);
    CHECK(bb.done == ba.done);
    auto sb = tb.ppo_update(bb);
    auto sa = ta.ppo_update(ba);
    CHECK(sb.policy_loss == sa.policy_loss);
    CHECK(sb.value_loss == sa.value_loss);
    CHECK(sb.entropy == sa.entropy);
    CHECK(sb.total_loss == sa.total_loss);
    CHECK(sb.grad_norm == sa.grad_norm);
    CHECK(sb.clip_fraction == sa.clip_fraction);
    CHECK(sa.diag_ce == 0.0);
  }
  // every shared parameter stayed bitwise equal across two updates
  for (const auto& [name, t] : tb.model().params().items()) {
    CAPTURE(name);
    REQUIRE(ta.model().params().has(name));
    CHECK(ta.model().params().get(name).values() == t.values());
  }
  // and the inert diagnostic head never moved off its init
  agent::Agent fresh(ca.agent, mix_seed(17, hash_str("model")));
  CHECK(ta.model().params().get("diag.w").values() == fresh.params().get("diag.w").values());
  CHECK(ta.model().params().get("diag.b").values() == fresh.params().get("diag.b").values());
}

TEST_CASE("a zeroed diagnostic head scores cross-entropy ln(24) against any labels") {
  auto c = tiny_run(Mode::Aware);
  c.ppo.epochs = 1;
  c.ppo.minibatches = 1;
  c.ppo.lr = 0.0f;
  Trainer t(c, 3);
  auto w = t.model().params().get("diag.w");
  std::fill(w.values().begin(), w.values().end(), 0.0f);
  auto b = t.collect_rollouts();
  auto st = t.ppo_update(b);
  CHECK(std::fabs(st.diag_ce - std::log(24.0)) < 1e-5);
}

TEST_CASE("an all-zero query mask contributes nothing") {
  auto c = tiny_run(Mode::Aware);
  c.ppo.epochs = 1;
  c.ppo.minibatches = 1;
  c.ppo.lr = 0.0f;
  Trainer t(c, 19);
  auto b = t.collect_rollouts();
  std::fill(b.query.begin(), b.query.end(), uint8_t{0});
  auto before = t.model().params().get("diag.w").values();
  auto st = t.ppo_update(b);
  CHECK(st.diag_ce == 0.0);
  CHECK(std::fabs(st.total_loss - (st.policy_loss + 0.5 * st.value_loss - 0.01 * st.entropy)) < 1e-9);
  CHECK(t.model().params().get("diag.w").values() == before);
  const auto& gw = t.model().params().get("diag.w").grad_vec();
  for (float g : gw) CHECK(g == 0.0f);
}

TEST_CASE("fully clipped surrogates leave the actor head without gradient") {
  auto c = tiny_run(Mode::Aware);
  c.ppo.epochs = 1;
  c.ppo.minibatches = 1;
  c.ppo.entropy_coef = 0.0f;
  c.ppo.beta = 0.0f;
  c.ppo.lr = 0.0f;
  Trainer t(c, 5);
  auto b = t.collect_rollouts();
  auto gae = train::compute_gae(b.reward, b.done, b.value, b.bootstrap, 2, 16, c.ppo.gamma, c.ppo.lam, false);
  for (int64_t i = 0; i < b.steps(); ++i) b.logp[i] += gae.adv[i] > 0 ? -10.0f : 10.0f;
  auto st = t.ppo_update(b);
  CHECK(st.clip_fraction == 1.0);
  for (float g : t.model().params().get("actor.w").grad_vec()) CHECK(g == 0.0f);
  for (float g : t.model().params().get("actor.b").grad_vec()) CHECK(g == 0.0f);
  double critic_norm = 0;
  for (float g : t.model().params().get("critic.w").grad_vec()) critic_norm += std::fabs(g);
  CHECK(critic_norm > 0.0);
}

TEST_CASE("replayed unchanged parameters keep the ratio at exactly one") {
  auto c = tiny_run(Mode::Aware);
  c.ppo.lr = 0.0f;
  Trainer t(c, 9);
  auto before = ckpt::param_checksum(t.model().params());
  auto b = t.collect_rollouts();
  auto gae = train::compute_gae(b.reward, b.done, b.value, b.bootstrap, 2, 16, c.ppo.gamma, c.ppo.lam, false);
  double mean_adv = 0;
  for (float a : gae.adv) mean_adv += a;
  mean_adv /= static_cast<double>(gae.adv.size());
  auto st = t.ppo_update(b);
  CHECK(st.clip_fraction == 0.0);
  // ratio pinned at 1 => surrogate reduces to the mean advantage
  CHECK(std::fabs(st.policy_loss + mean_adv) < 1e-6);
  CHECK(ckpt::param_checksum(t.model().params()) == before);
  CHECK(std::fabs(st.total_loss -
                  (st.policy_loss + 0.5 * st.value_loss - 0.01 * st.entropy + 0.5 * st.diag_ce)) < 1e-9);
}

TEST_CASE("training writes config, metrics, eval log, and a loadable checkpoint") {
  namespace fs = std::filesystem;
  auto c = tiny_run(Mode::Aware);
  c.frames = 64;
  c.eval_every = 1;
  c.eval_episodes = 4;
  c.out_dir = (fs::temp_directory_path() / "tg_train_smoke").string();
  Trainer t(c, 2);
  auto res = t.train();
  CHECK(res.updates == 2);
  CHECK(res.frames == 64);
  CHECK(res.run_dir == c.out_dir + "/Before_aware_s2");

  std::ifstream m(res.metrics_path);
  REQUIRE(static_cast<bool>(m));
  std::string line;
  int comments = 0, rows = 0;
  std::string header;
  while (std::getline(m, line)) {
    if (!line.empty() && line[0] == '#') {
      ++comments;
    } else if (header.empty()) {
      header = line;
    } else if (!line.empty()) {
      ++rows;
    }
  }
  CHECK(comments > 10);
  CHECK(header ==
        "update,frames,episodes,success_rate,mean_episode_length,fail_rate,timeout_rate,diag_accuracy,"
        "policy_loss,value_loss,entropy,diag_ce,total_loss");
  CHECK(rows == 2);

  std::ifstream ev(res.run_dir + "/eval.csv");
  REQUIRE(static_cast<bool>(ev));
  int ev_lines = 0;
  while (std::getline(ev, line))
    if (!line.empty()) ++ev_lines;
  CHECK(ev_lines == 3);  // header + one row per update

  CHECK(config::RunConfig::from_file(res.run_dir + "/config.txt") == c);

  auto back = ckpt::load(res.checkpoint_path);
  CHECK(back.run == c);
  CHECK(back.seed == 2);
  CHECK(back.frames == 64);
  CHECK(!back.rng_state.empty());
  CHECK(ckpt::param_checksum(back.params) == ckpt::param_checksum(t.model().params()));

  fs::remove_all(c.out_dir);
}
