#include "taskgrid/agent.hpp"

#include <algorithm>
#include <cmath>

namespace taskgrid::agent {

namespace {

int parse_int(const std::map<std::string, std::string>& kv, const std::string& key, int dflt) {
  auto it = kv.find(key);
  return it == kv.end() ? dflt : std::stoi(it->second);
}

bool parse_bool(const std::map<std::string, std::string>& kv, const std::string& key, bool dflt) {
  auto it = kv.find(key);
  if (it == kv.end()) return dflt;
  return it->second == "1" || it->second == "true";
}

}  // namespace

void AgentConfig::validate() const {
  if (token_embed < 1 || gru_hidden < 1 || cell_embed < 1 || image_channels < 1 || lstm_hidden < 1 || actions < 1)
    throw ConfigMismatch("agent dimensions must be >= 1");
  if (diag_classes != oracle::kNumClasses)
    throw ConfigMismatch("diag_classes must equal " + std::to_string(oracle::kNumClasses));
}

std::map<std::string, std::string> AgentConfig::to_map() const {
  return {
      {"agent.token_embed", std::to_string(token_embed)},
      {"agent.gru_hidden", std::to_string(gru_hidden)},
      {"agent.cell_embed", std::to_string(cell_embed)},
      {"agent.image_channels", std::to_string(image_channels)},
      {"agent.lstm_hidden", std::to_string(lstm_hidden)},
      {"agent.actions", std::to_string(actions)},
      {"agent.diag_classes", std::to_string(diag_classes)},
      {"agent.diag_head", diag_head ? "1" : "0"},
  };
}

AgentConfig AgentConfig::from_map(const std::map<std::string, std::string>& kv) {
  AgentConfig c;
  c.token_embed = parse_int(kv, "agent.token_embed", c.token_embed);
  c.gru_hidden = parse_int(kv, "agent.gru_hidden", c.gru_hidden);
  c.cell_embed = parse_int(kv, "agent.cell_embed", c.cell_embed);
  c.image_channels = parse_int(kv, "agent.image_channels", c.image_channels);
  c.lstm_hidden = parse_int(kv, "agent.lstm_hidden", c.lstm_hidden);
  c.actions = parse_int(kv, "agent.actions", c.actions);
  c.diag_classes = parse_int(kv, "agent.diag_classes", c.diag_classes);
  c.diag_head = parse_bool(kv, "agent.diag_head", c.diag_head);
  return c;
}

Agent::Agent(AgentConfig cfg, uint64_t seed) : cfg_(cfg) {
  cfg_.validate();
  bind(false, seed);
}

Agent::Agent(AgentConfig cfg, ad::ParameterSet params) : cfg_(cfg), ps_(std::move(params)) {
  cfg_.validate();
  bind(true, 0);
}

ad::Tensor Agent::param(const std::string& name, const ad::Shape& shape, float scale) {
  if (strict_ && !ps_.has(name)) throw ConfigMismatch("checkpoint lacks parameter " + name);
  return nn::ensure_param(ps_, name, shape, seed_, scale);
}

ad::Tensor Agent::param_const(const std::string& name, const ad::Shape& shape, float v) {
  if (strict_ && !ps_.has(name)) throw ConfigMismatch("checkpoint lacks parameter " + name);
  return nn::ensure_param_const(ps_, name, shape, v);
}

void Agent::bind(bool strict, uint64_t seed) {
  strict_ = strict;
  seed_ = seed;
  const int te = cfg_.token_embed, gh = cfg_.gru_hidden, ce = cfg_.cell_embed;
  const int ch = cfg_.image_channels, lh = cfg_.lstm_hidden;

  tok_ = param("tok.embed", {lang::vocab_size(), te}, 1.0f / std::sqrt(static_cast<float>(te)));
  if (strict_ && !ps_.has("instr_gru.wzr")) throw ConfigMismatch("checkpoint lacks parameter instr_gru.wzr");
  gru_ = nn::GruWeights::ensure(ps_, "instr_gru", te, gh, seed_);

  const float ces = 1.0f / std::sqrt(static_cast<float>(ce));
  ctype_ = param("cell.type", {world::kNumCellTypes, ce}, ces);
  ccolor_ = param("cell.color", {world::kNumCellColors, ce}, ces);
  cocc_ = param("cell.occ", {2, ce}, ces);
  cpos_ = param("cell.pos", {world::kViewCells, ce}, ces);

  conv1w_ = param("conv1.w", {2 * 2 * ce, ch}, 1.0f / std::sqrt(static_cast<float>(4 * ce)));
  conv1b_ = param_const("conv1.b", {ch}, 0.0f);
  conv2w_ = param("conv2.w", {2 * 2 * ch, ch}, 1.0f / std::sqrt(static_cast<float>(4 * ch)));
  conv2b_ = param_const("conv2.b", {ch}, 0.0f);

  const float gs = 1.0f / std::sqrt(static_cast<float>(gh));
  if (strict_ && !ps_.has("film1.w")) throw ConfigMismatch("checkpoint lacks parameter film1.w");
  film1_ = nn::FilmWeights::ensure(ps_, "film1", ch, seed_);
  film1gw_ = param("film1.gw", {gh, ch}, gs);
  film1gb_ = param_const("film1.gb", {ch}, 1.0f);
  film1bw_ = param("film1.bw", {gh, ch}, gs);
  film1bb_ = param_const("film1.bb", {ch}, 0.0f);
  if (strict_ && !ps_.has("film2.w")) throw ConfigMismatch("checkpoint lacks parameter film2.w");
  film2_ = nn::FilmWeights::ensure(ps_, "film2", ch, seed_);
  film2gw_ = param("film2.gw", {gh, ch}, gs);
  film2gb_ = param_const("film2.gb", {ch}, 1.0f);
  film2bw_ = param("film2.bw", {gh, ch}, gs);
  film2bb_ = param_const("film2.bb", {ch}, 0.0f);

  prew_ = param("pre_lstm.w", {4 * ch, lh}, 1.0f / std::sqrt(static_cast<float>(4 * ch)));
  preb_ = param_const("pre_lstm.b", {lh}, 0.0f);
  if (strict_ && !ps_.has("lstm.w")) throw ConfigMismatch("checkpoint lacks parameter lstm.w");
  lstm_ = nn::LstmWeights::ensure(ps_, "lstm", lh, lh, seed_);

  const float hs = 1.0f / std::sqrt(static_cast<float>(lh));
  actorw_ = param("actor.w", {lh, cfg_.actions}, hs);
  actorb_ = param_const("actor.b", {cfg_.actions}, 0.0f);
  criticw_ = param("critic.w", {lh, 1}, hs);
  criticb_ = param_const("critic.b", {1}, 0.0f);
  if (cfg_.diag_head) {
    diagw_ = param("diag.w", {lh, cfg_.diag_classes}, hs);
    diagb_ = param_const("diag.b", {cfg_.diag_classes}, 0.0f);
  }
}

ad::Tensor Agent::encode_instruction(ad::Graph& g, const std::vector<lang::TokenSeq>& seqs) const {
  const int b = static_cast<int>(seqs.size());
  size_t max_len = 0;
  for (const auto& s : seqs) max_len = std::max(max_len, s.size());
  ad::Tensor h = ad::Tensor::zeros({b, cfg_.gru_hidden});
  for (size_t t = 0; t < max_len; ++t) {
    std::vector<int> ids(b, lang::kPadToken);
    std::vector<float> live(b, 0.0f);
    bool all_live = true;
    for (int i = 0; i < b; ++i) {
      if (t < seqs[i].size()) {
        ids[i] = seqs[i][t];
        live[i] = 1.0f;
      } else {
        all_live = false;
      }
    }
    ad::Tensor x = g.rows(tok_, ids);
    ad::Tensor hn = nn::gru_step(g, gru_, x, h);
    // Sequences past their end keep their final state.
    h = all_live ? hn : g.add(h, g.scale_rows(g.sub(hn, h), ad::Tensor::from({b}, std::move(live))));
  }
  return h;
}

Memory Agent::initial_memory(int batch) const {
  return {ad::Tensor::zeros({batch, cfg_.lstm_hidden}), ad::Tensor::zeros({batch, cfg_.lstm_hidden})};
}

Memory Agent::mask_memory(ad::Graph& g, const Memory& m, const std::vector<float>& keep) const {
  ad::Tensor k = ad::Tensor::from({static_cast<int>(keep.size())}, std::vector<float>(keep));
  return {g.scale_rows(m.h, k), g.scale_rows(m.c, k)};
}

AgentOutput Agent::forward(ad::Graph& g, const std::vector<const world::Observation*>& obs,
                           const ad::Tensor& instr_emb, const Memory& mem) const {
  const int b = static_cast<int>(obs.size());
  const int cells = world::kViewCells;
  std::vector<int> tids(static_cast<size_t>(b) * cells), cids(tids.size()), oids(tids.size()), pids(tids.size());
  for (int i = 0; i < b; ++i) {
    const auto& v = obs[i]->view;
    for (int c = 0; c < cells; ++c) {
      const size_t k = static_cast<size_t>(i) * cells + c;
      tids[k] = v[c * world::kViewChannels + 0];
      cids[k] = v[c * world::kViewChannels + 1];
      oids[k] = v[c * world::kViewChannels + 2];
      pids[k] = c;
    }
  }
  ad::Tensor e = g.add(g.add(g.rows(ctype_, tids), g.rows(ccolor_, cids)),
                       g.add(g.rows(cocc_, oids), g.rows(cpos_, pids)));
  ad::Tensor img = g.reshape(e, {b, world::kViewSize, world::kViewSize, cfg_.cell_embed});
  img = g.relu_(g.conv2d(img, conv1w_, conv1b_, 2, 2, 2));  // {b,3,3,ch}
  img = g.relu_(g.conv2d(img, conv2w_, conv2b_, 2, 2, 1));  // {b,2,2,ch}
  ad::Tensor f = g.reshape(img, {b * 4, cfg_.image_channels});

  ad::Tensor g1 = g.affine(instr_emb, film1gw_, film1gb_);
  ad::Tensor b1 = g.affine(instr_emb, film1bw_, film1bb_);
  f = nn::film_block(g, film1_, f, g1, b1, 4);
  ad::Tensor g2 = g.affine(instr_emb, film2gw_, film2gb_);
  ad::Tensor b2 = g.affine(instr_emb, film2bw_, film2bb_);
  f = nn::film_block(g, film2_, f, g2, b2, 4);

  ad::Tensor flat = g.reshape(f, {b, 4 * cfg_.image_channels});
  ad::Tensor x = g.relu_(g.affine(flat, prew_, preb_));

  nn::LstmState s = nn::lstm_step(g, lstm_, x, {mem.h, mem.c});

  AgentOutput out;
  out.action_logp = g.log_softmax(g.affine(s.h, actorw_, actorb_));
  out.value = g.affine(s.h, criticw_, criticb_);
  if (cfg_.diag_head) out.diag_logits = g.affine(s.h, diagw_, diagb_);
  out.mem = {s.h, s.c};
  return out;
}

int Agent::sample_action(const float* logp, int n, Rng& rng) {
  float u = rng.uniform_real();
  float acc = 0.0f;
  for (int i = 0; i < n; ++i) {
    acc += std::exp(logp[i]);
    if (u < acc) return i;
  }
  return n - 1;
}

int Agent::greedy_action(const float* logp, int n) {
  int best = 0;
  for (int i = 1; i < n; ++i)
    if (logp[i] > logp[best]) best = i;
  return best;
}

}  // namespace taskgrid::agent
