#include "taskgrid/config.hpp"

#include "doctest.h"

using namespace taskgrid;
using config::Mode;
using config::RunConfig;

TEST_CASE("defaults validate and mode names round-trip") {
  RunConfig c;
  CHECK_NOTHROW(c.validate());
  for (Mode m : {Mode::Baseline, Mode::Aware, Mode::Sparse}) CHECK(config::mode_from(config::mode_name(m)) == m);
  CHECK_THROWS_AS(config::mode_from("dense"), config::ConfigError);
}

TEST_CASE("map and text round-trips preserve every field") {
  RunConfig c;
  c.level = "Mixed-2";
  c.ppo.gamma = 0.97f;
  c.ppo.lam = 0.9f;
  c.ppo.clip = 0.15f;
  c.ppo.epochs = 2;
  c.ppo.minibatches = 4;
  c.ppo.horizon = 64;
  c.ppo.num_envs = 8;
  c.ppo.segment = 8;
  c.ppo.value_coef = 0.25f;
  c.ppo.entropy_coef = 0.02f;
  c.ppo.beta = 0.75f;
  c.ppo.mode = Mode::Sparse;
  c.ppo.sparse_queries = 5;
  c.ppo.lr = 3e-4f;
  c.ppo.grad_clip = 1.0f;
  c.agent.token_embed = 8;
  c.agent.gru_hidden = 16;
  c.agent.cell_embed = 4;
  c.agent.image_channels = 8;
  c.agent.lstm_hidden = 16;
  c.frames = 12345;
  c.seeds = {7, 8, 9};
  c.out_dir = "elsewhere";
  c.eval_episodes = 50;
  c.eval_every = 10;
  c.probe_frames = 4000;
  c.probe_epochs = 20;
  c.probe_lr = 0.05f;
  CHECK_NOTHROW(c.validate());

  CHECK(RunConfig::from_map(c.to_map()) == c);
  CHECK(RunConfig::from_text(c.to_text()) == c);
  CHECK(RunConfig::from_text(RunConfig().to_text()) == RunConfig());
}

TEST_CASE("unknown keys are rejected with the offending field") {
  try {
    RunConfig::from_map({{"ppo.gama", "0.9"}});
    FAIL("expected ConfigError");
  } catch (const config::ConfigError& e) {
    CHECK(e.field == "ppo.gama");
  }
  CHECK_THROWS_AS(RunConfig::from_map({{"", "x"}}), config::ConfigError);
}

TEST_CASE("diag head follows the mode unless given explicitly") {
  CHECK(RunConfig::from_map({{"mode", "baseline"}}).agent.diag_head == false);
  CHECK(RunConfig::from_map({{"mode", "aware"}}).agent.diag_head == true);
  CHECK(RunConfig::from_map({{"mode", "sparse"}}).agent.diag_head == true);
  RunConfig odd = RunConfig::from_map({{"mode", "aware"}, {"agent.diag_head", "0"}});
  CHECK(odd.agent.diag_head == false);
  CHECK_THROWS_AS(odd.validate(), config::ConfigError);
  RunConfig odd2 = RunConfig::from_map({{"mode", "baseline"}, {"agent.diag_head", "1"}});
  CHECK_THROWS_AS(odd2.validate(), config::ConfigError);
}

TEST_CASE("validation rejects out-of-range and inconsistent settings") {
  auto broken = [](auto mutate) {
    RunConfig c;
    mutate(c);
    return c;
  };
  CHECK_THROWS_AS(broken([](RunConfig& c) { c.level = "Nowhere"; }).validate(), lang::UnknownLevel);
  CHECK_THROWS_AS(broken([](RunConfig& c) { c.ppo.gamma = 1.5f; }).validate(), config::ConfigError);
  CHECK_THROWS_AS(broken([](RunConfig& c) { c.ppo.lam = -0.1f; }).validate(), config::ConfigError);
  CHECK_THROWS_AS(broken([](RunConfig& c) { c.ppo.clip = 0.0f; }).validate(), config::ConfigError);
  CHECK_THROWS_AS(broken([](RunConfig& c) { c.ppo.segment = 24; }).validate(), config::ConfigError);
  CHECK_THROWS_AS(broken([](RunConfig& c) { c.ppo.minibatches = 7; }).validate(), config::ConfigError);
  CHECK_THROWS_AS(broken([](RunConfig& c) { c.frames = 0; }).validate(), config::ConfigError);
  CHECK_THROWS_AS(broken([](RunConfig& c) { c.seeds.clear(); }).validate(), config::ConfigError);
  CHECK_THROWS_AS(broken([](RunConfig& c) { c.probe_lr = 0.0f; }).validate(), config::ConfigError);
  CHECK_THROWS_AS(broken([](RunConfig& c) { c.eval_every = -1; }).validate(), config::ConfigError);
}

TEST_CASE("seed lists parse from comma-separated text") {
  RunConfig c = RunConfig::from_map({{"seeds", "3, 1,2"}});
  CHECK(c.seeds == std::vector<uint64_t>{3, 1, 2});
  CHECK_THROWS_AS(RunConfig::from_map({{"seeds", ""}}), config::ConfigError);
  CHECK_THROWS_AS(RunConfig::from_map({{"seeds", "1,x"}}), config::ConfigError);
}

TEST_CASE("kv text parsing skips comments, trims, and lets later keys win") {
  auto kv = config::parse_kv_text("# header\n\n  level = Mixed-2  \nframes=5\nframes=9\n");
  CHECK(kv.size() == 2);
  CHECK(kv.at("level") == "Mixed-2");
  CHECK(kv.at("frames") == "9");

  try {
    config::parse_kv_text("level=Before\nnonsense\n");
    FAIL("expected ConfigError");
  } catch (const config::ConfigError& e) {
    CHECK(e.field == "line 2");
  }
  CHECK_THROWS_AS(config::parse_kv_text("=value\n"), config::ConfigError);
  CHECK_THROWS_AS(config::parse_kv_file("no/such/file.cfg"), config::ConfigError);
}

TEST_CASE("numeric fields reject malformed values") {
  CHECK_THROWS_AS(RunConfig::from_map({{"ppo.gamma", "fast"}}), config::ConfigError);
  CHECK_THROWS_AS(RunConfig::from_map({{"ppo.epochs", "4.5"}}), config::ConfigError);
  CHECK_THROWS_AS(RunConfig::from_map({{"frames", "100k"}}), config::ConfigError);
}
