#include "taskgrid/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>

#include "taskgrid/checkpoint.hpp"
#include "taskgrid/evalkit.hpp"

namespace taskgrid::train {

std::vector<int> sparse_query_mask(int episode_bound, Rng& rng, int k) {
  if (episode_bound <= 0 || k <= 0) return {};
  int take = std::min(k, episode_bound);
  std::vector<int> pool(episode_bound);
  std::iota(pool.begin(), pool.end(), 0);
  for (int i = 0; i < take; ++i) {
    int j = rng.uniform_int(i, episode_bound - 1);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(take);
  std::sort(pool.begin(), pool.end());
  return pool;
}

GaeOut compute_gae(const std::vector<float>& reward, const std::vector<uint8_t>& done,
                   const std::vector<float>& value, const std::vector<float>& bootstrap, int envs, int horizon,
                   float gamma, float lam, bool normalize) {
  GaeOut o;
  o.adv.resize(static_cast<size_t>(envs) * horizon);
  o.ret.resize(o.adv.size());
  for (int e = 0; e < envs; ++e) {
    float acc = 0.0f;
    for (int t = horizon - 1; t >= 0; --t) {
      size_t idx = static_cast<size_t>(e) * horizon + t;
      float vnext = t == horizon - 1 ? bootstrap[e] : value[idx + 1];
      float nonterm = done[idx] ? 0.0f : 1.0f;
      float delta = reward[idx] + gamma * vnext * nonterm - value[idx];
      acc = delta + gamma * lam * nonterm * acc;
      o.adv[idx] = acc;
      o.ret[idx] = acc + value[idx];
    }
  }
  if (normalize) {
    double sum = 0;
    for (float a : o.adv) sum += a;
    double mean = sum / static_cast<double>(o.adv.size());
    double sq = 0;
    for (float a : o.adv) sq += (a - mean) * (a - mean);
    float inv = static_cast<float>(1.0 / (std::sqrt(sq / static_cast<double>(o.adv.size())) + 1e-8));
    for (float& a : o.adv) a = static_cast<float>((a - mean) * inv);
  }
  return o;
}

namespace {

config::RunConfig validated(config::RunConfig cfg) {
  cfg.validate();
  return cfg;
}

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

}  // namespace

Trainer::Trainer(config::RunConfig cfg, uint64_t seed)
    : cfg_(validated(std::move(cfg))),
      seed_(seed),
      agent_(cfg_.agent, mix_seed(seed, hash_str("model"))),
      update_rng_(mix_seed(seed, hash_str("update"))) {
  const auto& lvl = lang::level(cfg_.level);
  const int E = cfg_.ppo.num_envs;
  const int H = cfg_.agent.lstm_hidden;
  envs_.reserve(E);
  act_rng_.reserve(E);
  for (int e = 0; e < E; ++e) {
    envs_.emplace_back(lvl, mix_seed(mix_seed(seed, hash_str("env")), e));
    act_rng_.emplace_back(mix_seed(mix_seed(seed, hash_str("act")), e));
  }
  cur_obs_.resize(E);
  cur_tokens_.resize(E);
  mem_h_.assign(static_cast<size_t>(E) * H, 0.0f);
  mem_c_.assign(static_cast<size_t>(E) * H, 0.0f);
  instr_emb_.assign(static_cast<size_t>(E) * cfg_.agent.gru_hidden, 0.0f);
  episode_step_.assign(E, 0);
  sparse_steps_.resize(E);
  for (int e = 0; e < E; ++e) reset_env_state(e, envs_[e].reset());
}

void Trainer::reset_env_state(int e, const world::Observation& obs) {
  const int H = cfg_.agent.lstm_hidden;
  cur_obs_[e] = obs;
  cur_tokens_[e] = envs_[e].tokens();
  refresh_instr_embedding(e);
  std::fill_n(mem_h_.begin() + static_cast<size_t>(e) * H, H, 0.0f);
  std::fill_n(mem_c_.begin() + static_cast<size_t>(e) * H, H, 0.0f);
  episode_step_[e] = 0;
  if (cfg_.mode() == config::Mode::Sparse)
    sparse_steps_[e] = sparse_query_mask(envs_[e].max_steps(), act_rng_[e], cfg_.ppo.sparse_queries);
}

void Trainer::refresh_instr_embedding(int e) {
  ad::Graph g(false);
  ad::Tensor enc = agent_.encode_instruction(g, {cur_tokens_[e]});
  const int G = cfg_.agent.gru_hidden;
  std::copy_n(enc.data(), G, instr_emb_.begin() + static_cast<size_t>(e) * G);
}

ad::Tensor Trainer::instr_embedding_batch() const {
  return ad::Tensor::from({cfg_.ppo.num_envs, cfg_.agent.gru_hidden}, instr_emb_);
}

RolloutBatch Trainer::collect_rollouts() {
  const int E = cfg_.ppo.num_envs, T = cfg_.ppo.horizon, S = cfg_.ppo.segment;
  const int H = cfg_.agent.lstm_hidden, A = cfg_.agent.actions, C = cfg_.agent.diag_classes;
  const int segs_per_env = T / S;
  const auto mode = cfg_.mode();

  RolloutBatch b;
  b.num_envs = E;
  b.horizon = T;
  b.segment = S;
  size_t n = static_cast<size_t>(E) * T;
  b.obs.resize(n);
  b.action.resize(n);
  b.logp.resize(n);
  b.value.resize(n);
  b.reward.resize(n);
  b.done.assign(n, 0);
  b.term.assign(n, world::Term::Running);
  b.label.resize(n);
  b.query.assign(n, 0);
  b.instr_id.resize(n);
  b.mem_h.resize(static_cast<size_t>(E) * segs_per_env * H);
  b.mem_c.resize(b.mem_h.size());
  b.bootstrap.resize(E);

  std::map<lang::TokenSeq, int> reg;
  std::vector<int> env_iid(E);
  auto register_tokens = [&](const lang::TokenSeq& t) {
    auto [it, fresh] = reg.try_emplace(t, static_cast<int>(b.instructions.size()));
    if (fresh) b.instructions.push_back(t);
    return it->second;
  };
  for (int e = 0; e < E; ++e) env_iid[e] = register_tokens(cur_tokens_[e]);

  ad::Graph g(false);
  std::vector<const world::Observation*> ptrs(E);

  for (int t = 0; t < T; ++t) {
    if (t % S == 0) {
      for (int e = 0; e < E; ++e) {
        size_t dst = (static_cast<size_t>(e) * segs_per_env + t / S) * H;
        std::copy_n(mem_h_.begin() + static_cast<size_t>(e) * H, H, b.mem_h.begin() + dst);
        std::copy_n(mem_c_.begin() + static_cast<size_t>(e) * H, H, b.mem_c.begin() + dst);
      }
    }
    for (int e = 0; e < E; ++e) ptrs[e] = &cur_obs_[e];
    agent::Memory mem{ad::Tensor::from({E, H}, mem_h_), ad::Tensor::from({E, H}, mem_c_)};
    auto out = agent_.forward(g, ptrs, instr_embedding_batch(), mem);
    std::copy_n(out.mem.h.data(), mem_h_.size(), mem_h_.begin());
    std::copy_n(out.mem.c.data(), mem_c_.size(), mem_c_.begin());
    const float* lp = out.action_logp.data();

    for (int e = 0; e < E; ++e) {
      size_t idx = static_cast<size_t>(e) * T + t;
      b.obs[idx] = cur_obs_[e];
      b.instr_id[idx] = env_iid[e];
      int label = envs_[e].current_label();
      b.label[idx] = label;
      switch (mode) {
        case config::Mode::Aware: b.query[idx] = 1; break;
        case config::Mode::Sparse:
          b.query[idx] = std::binary_search(sparse_steps_[e].begin(), sparse_steps_[e].end(), episode_step_[e]);
          break;
        case config::Mode::Baseline: break;
      }
      if (cfg_.agent.diag_head) {
        const float* dl = out.diag_logits.data() + static_cast<size_t>(e) * C;
        int pred = static_cast<int>(std::max_element(dl, dl + C) - dl);
        ++b.diag_total;
        if (pred == label) ++b.diag_correct;
      }
      int a = agent::Agent::sample_action(lp + static_cast<size_t>(e) * A, A, act_rng_[e]);
      b.action[idx] = a;
      b.logp[idx] = lp[static_cast<size_t>(e) * A + a];
      b.value[idx] = out.value.data()[e];

      auto r = envs_[e].step(static_cast<world::Action>(a));
      b.reward[idx] = r.reward;
      if (r.terminated) {
        b.done[idx] = 1;
        b.term[idx] = r.kind;
        ++b.episodes_completed;
        b.episode_length_sum += envs_[e].steps();
        if (r.kind == world::Term::Success) ++b.successes;
        else if (r.kind == world::Term::Failure) ++b.failures;
        else ++b.timeouts;
        reset_env_state(e, envs_[e].reset());
        env_iid[e] = register_tokens(cur_tokens_[e]);
      } else {
        cur_obs_[e] = r.obs;
        ++episode_step_[e];
      }
    }
  }

  for (int e = 0; e < E; ++e) ptrs[e] = &cur_obs_[e];
  agent::Memory mem{ad::Tensor::from({E, H}, mem_h_), ad::Tensor::from({E, H}, mem_c_)};
  auto out = agent_.forward(g, ptrs, instr_embedding_batch(), mem);
  std::copy_n(out.value.data(), E, b.bootstrap.begin());

  frames_ += static_cast<int64_t>(E) * T;
  episodes_total_ += b.episodes_completed;
  return b;
}

LossStats Trainer::ppo_update(const RolloutBatch& b) {
  const auto& pc = cfg_.ppo;
  const int E = b.num_envs, T = b.horizon, S = b.segment;
  const int H = cfg_.agent.lstm_hidden, A = cfg_.agent.actions, C = cfg_.agent.diag_classes;
  const int segs_per_env = T / S;
  const int n_segs = E * segs_per_env;
  const int B = n_segs / pc.minibatches;
  const bool ce_active = cfg_.mode() != config::Mode::Baseline && pc.beta != 0.0f;

  // Raw advantages: with terminal-only rewards, batch normalization rescales
  // the mostly-noise advantages of unresolved steps up to unit variance and
  // drowns the rare success signal.
  GaeOut gae = compute_gae(b.reward, b.done, b.value, b.bootstrap, E, T, pc.gamma, pc.lam, false);

  ad::ParameterSet& ps = agent_.params();
  ad::Tensor ones_a = ad::Tensor::full({A, 1}, 1.0f);

  LossStats st;
  int64_t clipped = 0, clip_total = 0;
  double ce_sum = 0;
  int64_t ce_count = 0;

  std::vector<int> order(n_segs);
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < pc.epochs; ++epoch) {
    for (int i = n_segs - 1; i > 0; --i) {
      int j = update_rng_.uniform_int(0, i);
      std::swap(order[i], order[j]);
    }
    for (int mb = 0; mb < pc.minibatches; ++mb) {
      const int* segs = order.data() + static_cast<size_t>(mb) * B;
      auto index_of = [&](int r, int t) {
        int e = segs[r] / segs_per_env, si = segs[r] % segs_per_env;
        return static_cast<size_t>(e) * T + static_cast<size_t>(si) * S + t;
      };

      ad::Graph g(true);

      std::vector<int> local(b.instructions.size(), -1);
      std::vector<lang::TokenSeq> seqs;
      for (int r = 0; r < B; ++r)
        for (int t = 0; t < S; ++t) {
          int gid = b.instr_id[index_of(r, t)];
          if (local[gid] < 0) {
            local[gid] = static_cast<int>(seqs.size());
            seqs.push_back(b.instructions[gid]);
          }
        }
      ad::Tensor enc = agent_.encode_instruction(g, seqs);

      std::vector<float> h0(static_cast<size_t>(B) * H), c0(h0.size());
      for (int r = 0; r < B; ++r) {
        size_t src = static_cast<size_t>(segs[r]) * H;
        std::copy_n(b.mem_h.begin() + src, H, h0.begin() + static_cast<size_t>(r) * H);
        std::copy_n(b.mem_c.begin() + src, H, c0.begin() + static_cast<size_t>(r) * H);
      }
      agent::Memory mem{ad::Tensor::from({B, H}, std::move(h0)), ad::Tensor::from({B, H}, std::move(c0))};

      ad::Tensor surr_acc, v_acc, e_acc, ce_acc;
      int64_t mcount = 0;
      std::vector<const world::Observation*> ptrs(B);
      std::vector<int> ids(B);
      std::vector<float> keep(B), oldlp(B), adv(B), ret(B);

      for (int t = 0; t < S; ++t) {
        for (int r = 0; r < B; ++r) {
          size_t idx = index_of(r, t);
          ptrs[r] = &b.obs[idx];
          ids[r] = local[b.instr_id[idx]];
          keep[r] = b.done[idx] ? 0.0f : 1.0f;
          oldlp[r] = b.logp[idx];
          adv[r] = gae.adv[idx];
          ret[r] = gae.ret[idx];
        }
        ad::Tensor instr = g.rows(enc, ids);
        auto out = agent_.forward(g, ptrs, instr, mem);
        mem = agent_.mask_memory(g, out.mem, keep);

        ad::Tensor onehot = ad::Tensor::zeros({B, A});
        for (int r = 0; r < B; ++r) onehot.data()[static_cast<size_t>(r) * A + b.action[index_of(r, t)]] = 1.0f;
        ad::Tensor chosen = g.matmul(g.mul(out.action_logp, onehot), ones_a);
        ad::Tensor ratio = g.exp_(g.sub(chosen, ad::Tensor::from({B, 1}, std::vector<float>(oldlp))));
        for (int r = 0; r < B; ++r) {
          ++clip_total;
          if (std::fabs(ratio.data()[r] - 1.0f) > pc.clip) ++clipped;
        }
        ad::Tensor adv_t = ad::Tensor::from({B, 1}, std::vector<float>(adv));
        ad::Tensor s1 = g.mul(ratio, adv_t);
        ad::Tensor s2 = g.mul(g.clamp(ratio, 1.0f - pc.clip, 1.0f + pc.clip), adv_t);
        ad::Tensor surr = g.reduce_sum(g.min2(s1, s2));
        surr_acc = surr_acc.defined() ? g.add(surr_acc, surr) : surr;

        ad::Tensor diff = g.sub(out.value, ad::Tensor::from({B, 1}, std::vector<float>(ret)));
        ad::Tensor vterm = g.reduce_sum(g.mul(diff, diff));
        v_acc = v_acc.defined() ? g.add(v_acc, vterm) : vterm;

        ad::Tensor plogp = g.reduce_sum(g.mul(g.exp_(out.action_logp), out.action_logp));
        e_acc = e_acc.defined() ? g.add(e_acc, plogp) : plogp;

        if (ce_active) {
          ad::Tensor maskhot = ad::Tensor::zeros({B, C});
          for (int r = 0; r < B; ++r) {
            size_t idx = index_of(r, t);
            if (b.query[idx]) {
              maskhot.data()[static_cast<size_t>(r) * C + b.label[idx]] = 1.0f;
              ++mcount;
            }
          }
          ad::Tensor ce = g.reduce_sum(g.mul(g.log_softmax(out.diag_logits), maskhot));
          ce_acc = ce_acc.defined() ? g.add(ce_acc, ce) : ce;
        }
      }

      const float inv = 1.0f / static_cast<float>(B * S);
      ad::Tensor total = g.affine_const(surr_acc, -inv, 0.0f);
      total = g.add(total, g.affine_const(v_acc, pc.value_coef * inv, 0.0f));
      total = g.add(total, g.affine_const(e_acc, pc.entropy_coef * inv, 0.0f));
      if (ce_active && mcount > 0)
        total = g.add(total, g.affine_const(ce_acc, -pc.beta / static_cast<float>(mcount), 0.0f));
      if (!std::isfinite(total.item()))
        throw NonFiniteLoss("update " + std::to_string(updates_ + 1) + " epoch " + std::to_string(epoch));

      ps.zero_grad();
      g.backward(total);
      st.grad_norm += ps.grad_norm();
      ps.clip_grad_norm(pc.grad_clip);
      ps.adam_step(pc.lr, 0.9f, 0.999f, 1e-5f);

      double policy = -static_cast<double>(surr_acc.item()) * inv;
      double value = static_cast<double>(v_acc.item()) * inv;
      double entropy = -static_cast<double>(e_acc.item()) * inv;
      double dce = ce_active && mcount > 0 ? -static_cast<double>(ce_acc.item()) / static_cast<double>(mcount) : 0.0;
      st.policy_loss += policy;
      st.value_loss += value;
      st.entropy += entropy;
      st.total_loss += policy + pc.value_coef * value - pc.entropy_coef * entropy +
                       (ce_active && mcount > 0 ? pc.beta * dce : 0.0);
      if (ce_active && mcount > 0) {
        ce_sum += -static_cast<double>(ce_acc.item());
        ce_count += mcount;
      }
    }
  }

  const double batches = static_cast<double>(pc.epochs) * pc.minibatches;
  st.policy_loss /= batches;
  st.value_loss /= batches;
  st.entropy /= batches;
  st.total_loss /= batches;
  st.grad_norm /= batches;
  st.diag_ce = ce_count > 0 ? ce_sum / static_cast<double>(ce_count) : 0.0;
  st.clip_fraction = clip_total > 0 ? static_cast<double>(clipped) / static_cast<double>(clip_total) : 0.0;
  return st;
}

std::string Trainer::run_dir() const {
  return cfg_.out_dir + "/" + cfg_.level + "_" + config::mode_name(cfg_.mode()) + "_s" + std::to_string(seed_);
}

TrainResult Trainer::train() {
  namespace fs = std::filesystem;
  TrainResult res;
  res.run_dir = run_dir();
  fs::create_directories(res.run_dir);
  {
    std::ofstream cfgout(res.run_dir + "/config.txt", std::ios::trunc);
    if (!cfgout) throw std::runtime_error("cannot write " + res.run_dir + "/config.txt");
    cfgout << cfg_.to_text();
  }
  res.metrics_path = res.run_dir + "/metrics.csv";
  std::ofstream m(res.metrics_path, std::ios::trunc);
  if (!m) throw std::runtime_error("cannot write " + res.metrics_path);
  for (const auto& [k, v] : cfg_.to_map()) m << "# " << k << "=" << v << "\n";
  m << "# run_seed=" << seed_ << "\n";
  m << "update,frames,episodes,success_rate,mean_episode_length,fail_rate,timeout_rate,diag_accuracy,"
       "policy_loss,value_loss,entropy,diag_ce,total_loss\n";
  std::ofstream ev(res.run_dir + "/eval.csv", std::ios::trunc);
  ev << "update,frames,success_rate,mean_episode_length,fail_rate,timeout_rate,diag_accuracy\n";

  while (frames_ < cfg_.frames) {
    RolloutBatch batch = collect_rollouts();
    LossStats st = ppo_update(batch);
    ++updates_;

    double sr = kNaN, el = kNaN, fr = kNaN, tr = kNaN;
    if (batch.episodes_completed > 0) {
      double n = batch.episodes_completed;
      sr = batch.successes / n;
      el = static_cast<double>(batch.episode_length_sum) / n;
      fr = batch.failures / n;
      tr = batch.timeouts / n;
    }
    diag_window_.emplace_back(batch.diag_correct, batch.diag_total);
    while (diag_window_.size() > 10) diag_window_.pop_front();
    int64_t wc = 0, wt = 0;
    for (const auto& [c, t] : diag_window_) {
      wc += c;
      wt += t;
    }
    double diag_acc = wt > 0 ? static_cast<double>(wc) / static_cast<double>(wt) : kNaN;

    m << updates_ << ',' << frames_ << ',' << batch.episodes_completed << ',' << fmt(sr) << ',' << fmt(el) << ','
      << fmt(fr) << ',' << fmt(tr) << ',' << fmt(diag_acc) << ',' << fmt(st.policy_loss) << ','
      << fmt(st.value_loss) << ',' << fmt(st.entropy) << ',' << fmt(st.diag_ce) << ',' << fmt(st.total_loss)
      << '\n';

    if (cfg_.eval_every > 0 && updates_ % cfg_.eval_every == 0) {
      int n_ep = std::min(100, cfg_.eval_episodes);
      eval::Metrics met = eval::evaluate(agent_, lang::level(cfg_.level), n_ep, mix_seed(seed_, hash_str("eval")));
      ev << updates_ << ',' << frames_ << ',' << fmt(met.success_rate) << ',' << fmt(met.mean_episode_length)
         << ',' << fmt(met.fail_rate) << ',' << fmt(met.timeout_rate) << ',' << fmt(met.diag_accuracy) << '\n';
      std::printf("[%s] update %d frames %lld sr %.3f len %.1f diag %.3f\n", res.run_dir.c_str(), updates_,
                  static_cast<long long>(frames_), met.success_rate, met.mean_episode_length, met.diag_accuracy);
      std::fflush(stdout);
    }
  }
  m.flush();
  if (!m) throw std::runtime_error("short write: " + res.metrics_path);

  res.checkpoint_path = res.run_dir + "/checkpoint.bin";
  ckpt::Checkpoint c{cfg_, seed_, lang::vocabulary(), agent_.params(), frames_, update_rng_.state()};
  ckpt::save(c, res.checkpoint_path);
  res.frames = frames_;
  res.updates = updates_;
  return res;
}

}  // namespace taskgrid::train
