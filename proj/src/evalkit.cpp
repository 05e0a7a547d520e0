#include "taskgrid/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>

#include "json.hpp"
#include "taskgrid/oracle.hpp"
#include "taskgrid/world.hpp"

namespace taskgrid::eval {

namespace {

constexpr int kLockstep = 16;  // episodes played simultaneously

struct EpisodeOutcome {
  world::Term kind = world::Term::Running;
  int length = 0;
};

using InstructionOf = std::function<lang::InstrPtr(int episode, Rng&)>;
using PerStep = std::function<void(int episode, int t, int label, const agent::AgentOutput& out, int row)>;

// Plays episodes [first_episode, first_episode+n) to completion in lockstep
// with greedy actions. Rows of finished episodes keep flowing through the net
// but are neither scored nor recorded.
void run_greedy_block(const agent::Agent& agent, const lang::LevelSpec& level, int first_episode, int n,
                      uint64_t seed, const InstructionOf& instruction_of, std::vector<EpisodeOutcome>& outcomes,
                      int64_t* diag_correct, int64_t* diag_total, const PerStep& on_step) {
  const auto& cfg = agent.config();
  std::vector<world::Env> envs;
  envs.reserve(n);
  std::vector<lang::TokenSeq> tokens;
  for (int i = 0; i < n; ++i) {
    int ep = first_episode + i;
    envs.emplace_back(level, mix_seed(mix_seed(seed, hash_str("env")), ep));
    if (instruction_of) {
      Rng irng(mix_seed(mix_seed(seed, hash_str("instr")), ep));
      envs.back().reset_with(instruction_of(ep, irng));
    } else {
      envs.back().reset();
    }
    tokens.push_back(envs.back().tokens());
  }

  ad::Graph g(false);
  ad::Tensor instr = agent.encode_instruction(g, tokens);
  agent::Memory mem = agent.initial_memory(n);
  std::vector<world::Observation> obs(n);
  for (int i = 0; i < n; ++i) obs[i] = envs[i].encode_observation();

  int live = n;
  while (live > 0) {
    std::vector<const world::Observation*> ptrs(n);
    for (int i = 0; i < n; ++i) ptrs[i] = &obs[i];
    auto out = agent.forward(g, ptrs, instr, mem);
    mem = out.mem;
    const float* lp = out.action_logp.data();
    for (int i = 0; i < n; ++i) {
      if (envs[i].terminated()) continue;
      int label = envs[i].current_label();
      if (cfg.diag_head && diag_total) {
        const float* dl = out.diag_logits.data() + static_cast<size_t>(i) * cfg.diag_classes;
        int pred = static_cast<int>(std::max_element(dl, dl + cfg.diag_classes) - dl);
        ++*diag_total;
        if (pred == label) ++*diag_correct;
      }
      if (on_step) on_step(first_episode + i, envs[i].steps(), label, out, i);
      auto a = static_cast<world::Action>(
          agent::Agent::greedy_action(lp + static_cast<size_t>(i) * cfg.actions, cfg.actions));
      auto r = envs[i].step(a);
      if (r.terminated) {
        outcomes[i].kind = r.kind;
        outcomes[i].length = envs[i].steps();
        --live;
      } else {
        obs[i] = r.obs;
      }
    }
  }
}

Metrics summarize(const std::vector<EpisodeOutcome>& eps, int64_t diag_correct, int64_t diag_total, bool has_head) {
  Metrics m;
  m.episodes = static_cast<int64_t>(eps.size());
  double len_sum = 0, len_sq = 0;
  for (const auto& e : eps) {
    m.frames += e.length;
    len_sum += e.length;
    len_sq += static_cast<double>(e.length) * e.length;
    if (e.kind == world::Term::Success) m.success_rate += 1;
    else if (e.kind == world::Term::Failure) m.fail_rate += 1;
    else m.timeout_rate += 1;
  }
  double n = static_cast<double>(m.episodes);
  m.success_rate /= n;
  m.fail_rate /= n;
  m.timeout_rate /= n;
  m.mean_episode_length = len_sum / n;
  double var = n > 1 ? (len_sq - len_sum * len_sum / n) / (n - 1) : 0.0;
  m.episode_length_std = std::sqrt(std::max(0.0, var));
  m.diag_accuracy = has_head && diag_total > 0 ? static_cast<double>(diag_correct) / diag_total
                                               : std::numeric_limits<double>::quiet_NaN();
  return m;
}

Metrics run_eval(const agent::Agent& agent, const lang::LevelSpec& level, int episodes, uint64_t seed,
                 const InstructionOf& instruction_of) {
  std::vector<EpisodeOutcome> all;
  all.reserve(episodes);
  int64_t diag_correct = 0, diag_total = 0;
  for (int base = 0; base < episodes; base += kLockstep) {
    int n = std::min(kLockstep, episodes - base);
    std::vector<EpisodeOutcome> block(n);
    run_greedy_block(agent, level, base, n, seed, instruction_of, block, &diag_correct, &diag_total, nullptr);
    all.insert(all.end(), block.begin(), block.end());
  }
  return summarize(all, diag_correct, diag_total, agent.config().diag_head);
}

}  // namespace

Metrics evaluate(const agent::Agent& agent, const lang::LevelSpec& level, int episodes, uint64_t seed) {
  return run_eval(agent, level, episodes, seed, nullptr);
}

const char* transfer_mode_name(TransferMode m) {
  switch (m) {
    case TransferMode::Color: return "color";
    case TransferMode::Object: return "object";
    case TransferMode::ColorObject: return "colobj";
  }
  return "?";
}

TransferMode transfer_mode_from(const std::string& s) {
  if (s == "color") return TransferMode::Color;
  if (s == "object") return TransferMode::Object;
  if (s == "colobj") return TransferMode::ColorObject;
  throw std::runtime_error("unknown transfer mode '" + s + "' (expected color|object|colobj)");
}

namespace {

lang::InstrPtr replace_nth_atom(const lang::InstrPtr& node, int& i, int target, TransferMode mode) {
  using lang::Instruction;
  if (node->kind == Instruction::Kind::Atomic) {
    if (i++ != target) return node;
    lang::AtomicTask t = node->atom;
    if (mode != TransferMode::Object) t.color = lang::kHeldOutColor;
    if (mode != TransferMode::Color) t.objtype = lang::kHeldOutType;
    return Instruction::atomic(t);
  }
  auto c = node->kind == Instruction::Kind::Before ? lang::Connector::Before : lang::Connector::After;
  auto l = replace_nth_atom(node->left, i, target, mode);
  auto r = replace_nth_atom(node->right, i, target, mode);
  return Instruction::compound(c, l, r);
}

}  // namespace

lang::InstrPtr make_transfer_instruction(const lang::LevelSpec& level, TransferMode mode, Rng& rng) {
  lang::InstrPtr src = lang::sample_instruction(level, rng);
  int atoms = static_cast<int>(lang::atoms_of(src).size());
  int target = rng.uniform_int(0, atoms - 1);
  int i = 0;
  return replace_nth_atom(src, i, target, mode);
}

Metrics transfer_evaluate(const agent::Agent& agent, const lang::LevelSpec& level, TransferMode mode, int episodes,
                          uint64_t seed) {
  return run_eval(agent, level, episodes, seed,
                  [&](int, Rng& rng) { return make_transfer_instruction(level, mode, rng); });
}

ProbeDataset collect_probe_dataset(const agent::Agent& agent, const lang::LevelSpec& level, int frames,
                                   uint64_t seed) {
  ProbeDataset d;
  d.hidden = agent.config().lstm_hidden;
  d.seed = seed;
  int episode_base = 0;
  while (d.count() < frames) {
    std::vector<EpisodeOutcome> block(kLockstep);
    run_greedy_block(agent, level, episode_base, kLockstep, seed, nullptr, block, nullptr, nullptr,
                     [&](int episode, int t, int label, const agent::AgentOutput& out, int row) {
                       const float* h = out.mem.h.data() + static_cast<size_t>(row) * d.hidden;
                       d.h.insert(d.h.end(), h, h + d.hidden);
                       d.label.push_back(label);
                       d.episode.push_back(episode);
                       d.timestep.push_back(t);
                     });
    episode_base += kLockstep;
  }
  return d;
}

namespace {

constexpr char kProbeMagic[8] = {'T', 'G', 'P', 'R', 'O', 'B', 'E', '1'};
constexpr uint32_t kProbeVersion = 1;

void put_u32(std::ofstream& o, uint32_t v) {
  char b[4];
  for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
  o.write(b, 4);
}
void put_u64(std::ofstream& o, uint64_t v) {
  put_u32(o, static_cast<uint32_t>(v & 0xffffffffu));
  put_u32(o, static_cast<uint32_t>(v >> 32));
}

uint32_t get_u32(std::ifstream& in) {
  unsigned char b[4];
  in.read(reinterpret_cast<char*>(b), 4);
  if (!in) throw CorruptDataset("truncated file");
  return b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<uint32_t>(b[3]) << 24);
}
uint64_t get_u64(std::ifstream& in) {
  uint64_t lo = get_u32(in), hi = get_u32(in);
  return lo | (hi << 32);
}

constexpr uint64_t kMaxProvenance = 1 << 20;

}  // namespace

void save_dataset(const ProbeDataset& d, const std::string& path) {
  if (d.provenance.size() > kMaxProvenance) throw CorruptDataset("provenance too large");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw CorruptDataset("cannot open for writing: " + path);
  out.write(kProbeMagic, sizeof(kProbeMagic));
  put_u32(out, kProbeVersion);
  put_u64(out, d.seed);
  put_u64(out, d.provenance.size());
  out.write(d.provenance.data(), static_cast<std::streamsize>(d.provenance.size()));
  put_u32(out, static_cast<uint32_t>(d.hidden));
  put_u64(out, static_cast<uint64_t>(d.count()));
  for (int64_t i = 0; i < d.count(); ++i) {
    for (int j = 0; j < d.hidden; ++j) {
      uint32_t v;
      std::memcpy(&v, &d.h[i * d.hidden + j], 4);
      put_u32(out, v);
    }
    put_u32(out, static_cast<uint32_t>(d.label[i]));
    put_u32(out, static_cast<uint32_t>(d.episode[i]));
    put_u32(out, static_cast<uint32_t>(d.timestep[i]));
  }
  if (!out) throw CorruptDataset("short write: " + path);
}

ProbeDataset load_dataset(const std::string& path) {
  std::error_code ec;
  uint64_t fsize = std::filesystem::file_size(path, ec);
  if (ec) throw CorruptDataset("cannot stat: " + path);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CorruptDataset("cannot open: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kProbeMagic, 8) != 0) throw CorruptDataset("bad magic");
  uint32_t version = get_u32(in);
  if (version != kProbeVersion) throw CorruptDataset("unsupported version " + std::to_string(version));
  ProbeDataset d;
  d.seed = get_u64(in);
  uint64_t prov_len = get_u64(in);
  if (prov_len > kMaxProvenance || prov_len + 40 > fsize) throw CorruptDataset("implausible provenance length");
  d.provenance.resize(prov_len);
  in.read(d.provenance.data(), static_cast<std::streamsize>(prov_len));
  if (!in) throw CorruptDataset("truncated file");
  d.hidden = static_cast<int>(get_u32(in));
  if (d.hidden < 1 || d.hidden > (1 << 16)) throw CorruptDataset("implausible hidden dim");
  uint64_t count = get_u64(in);
  uint64_t expect = 8 + 4 + 8 + 8 + prov_len + 4 + 8 + count * (static_cast<uint64_t>(d.hidden) * 4 + 12);
  if (fsize != expect)
    throw CorruptDataset("size mismatch: have " + std::to_string(fsize) + " bytes, expected " +
                         std::to_string(expect));
  d.h.resize(count * d.hidden);
  d.label.resize(count);
  d.episode.resize(count);
  d.timestep.resize(count);
  for (uint64_t i = 0; i < count; ++i) {
    for (int j = 0; j < d.hidden; ++j) {
      uint32_t v = get_u32(in);
      std::memcpy(&d.h[i * d.hidden + j], &v, 4);
    }
    d.label[i] = static_cast<int32_t>(get_u32(in));
    d.episode[i] = static_cast<int32_t>(get_u32(in));
    d.timestep[i] = static_cast<int32_t>(get_u32(in));
  }
  return d;
}

ProbeResult train_probe(const ProbeDataset& d, int epochs, float lr) {
  if (d.count() == 0) throw CorruptDataset("empty dataset");
  const int H = d.hidden, C = oracle::kNumClasses;

  std::vector<float> xtr, xva;
  std::vector<int> ytr, yva;
  for (int64_t i = 0; i < d.count(); ++i) {
    auto& x = is_validation_episode(d.episode[i]) ? xva : xtr;
    auto& y = is_validation_episode(d.episode[i]) ? yva : ytr;
    x.insert(x.end(), d.h.begin() + i * H, d.h.begin() + (i + 1) * H);
    y.push_back(d.label[i]);
  }
  const int ntr = static_cast<int>(ytr.size()), nva = static_cast<int>(yva.size());
  if (ntr == 0) throw CorruptDataset("no training rows after split");

  ad::Tensor X = ad::Tensor::from({ntr, H}, std::move(xtr));
  ad::Tensor onehot = ad::Tensor::zeros({ntr, C});
  for (int i = 0; i < ntr; ++i) onehot.data()[i * C + ytr[i]] = 1.0f;

  ad::ParameterSet ps;
  ps.add("probe.w", ad::Tensor::zeros({H, C}, true));
  ps.add("probe.b", ad::Tensor::zeros({C}, true));
  ad::Tensor w = ps.get("probe.w"), b = ps.get("probe.b");

  auto accuracy = [&](const std::vector<float>& xs, const std::vector<int>& ys) {
    int n = static_cast<int>(ys.size());
    ad::Graph g(false);
    ad::Tensor logits = g.affine(ad::Tensor::from({n, H}, std::vector<float>(xs)), w, b);
    int correct = 0;
    for (int i = 0; i < n; ++i) {
      const float* row = logits.data() + static_cast<size_t>(i) * C;
      int pred = static_cast<int>(std::max_element(row, row + C) - row);
      if (pred == ys[i]) ++correct;
    }
    return static_cast<double>(correct) / n;
  };
  auto val_accuracy = [&] { return nva > 0 ? accuracy(xva, yva) : accuracy(X.values(), ytr); };
  auto snapshot = [&](ProbeResult& r, double va) {
    r.val_accuracy = va;
    r.train_accuracy = accuracy(X.values(), ytr);
    r.w = ad::Tensor::from(w.shape(), w.values());
    r.b = ad::Tensor::from(b.shape(), b.values());
  };

  ProbeResult best;
  snapshot(best, val_accuracy());
  for (int epoch = 0; epoch < epochs; ++epoch) {
    ad::Graph g(true);
    ad::Tensor ls = g.log_softmax(g.affine(X, w, b));
    ad::Tensor loss = g.affine_const(g.reduce_sum(g.mul(ls, onehot)), -1.0f / ntr, 0.0f);
    ps.zero_grad();
    g.backward(loss);
    ps.adam_step(lr, 0.9f, 0.999f, 1e-8f);
    if (double va = val_accuracy(); va > best.val_accuracy) snapshot(best, va);
  }
  return best;
}

namespace {

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::pair<double, double> mean_std(const std::vector<Metrics>& ms, double Metrics::*field) {
  double sum = 0;
  for (const auto& m : ms) sum += m.*field;
  double mean = sum / static_cast<double>(ms.size());
  if (ms.size() < 2) return {mean, 0.0};
  double sq = 0;
  for (const auto& m : ms) sq += (m.*field - mean) * (m.*field - mean);
  return {mean, std::sqrt(sq / static_cast<double>(ms.size() - 1))};
}

}  // namespace

void write_report(const std::vector<ReportRow>& rows, const std::string& csv_path, const std::string& json_path,
                  const std::map<std::string, std::string>& provenance) {
  std::ofstream csv(csv_path, std::ios::trunc);
  if (!csv) throw std::runtime_error("cannot open for writing: " + csv_path);
  for (const auto& [k, v] : provenance) csv << "# " << k << "=" << v << "\n";
  csv << "model,level,mode,seeds,episodes,sr_mean,sr_std,el_mean,el_std,fail_mean,fail_std,"
         "timeout_mean,timeout_std,diag_acc_mean,diag_acc_std,frames\n";

  nlohmann::json jrows = nlohmann::json::array();
  for (const auto& r : rows) {
    if (r.per_seed.empty()) continue;
    auto [sr, sr_s] = mean_std(r.per_seed, &Metrics::success_rate);
    auto [el, el_s] = mean_std(r.per_seed, &Metrics::mean_episode_length);
    auto [fl, fl_s] = mean_std(r.per_seed, &Metrics::fail_rate);
    auto [to, to_s] = mean_std(r.per_seed, &Metrics::timeout_rate);
    auto [da, da_s] = mean_std(r.per_seed, &Metrics::diag_accuracy);
    int64_t episodes = 0, frames = 0;
    for (const auto& m : r.per_seed) {
      episodes += m.episodes;
      frames += m.frames;
    }
    csv << r.model << ',' << r.level << ',' << r.mode << ',' << r.per_seed.size() << ',' << episodes << ','
        << fmt(sr) << ',' << fmt(sr_s) << ',' << fmt(el) << ',' << fmt(el_s) << ',' << fmt(fl) << ',' << fmt(fl_s)
        << ',' << fmt(to) << ',' << fmt(to_s) << ',' << fmt(da) << ',' << fmt(da_s) << ',' << frames << '\n';
    jrows.push_back({{"model", r.model},
                     {"level", r.level},
                     {"mode", r.mode},
                     {"seeds", r.per_seed.size()},
                     {"episodes", episodes},
                     {"frames", frames},
                     {"success_rate", {{"mean", sr}, {"std", sr_s}}},
                     {"episode_length", {{"mean", el}, {"std", el_s}}},
                     {"fail_rate", {{"mean", fl}, {"std", fl_s}}},
                     {"timeout_rate", {{"mean", to}, {"std", to_s}}},
                     {"diag_accuracy", {{"mean", da}, {"std", da_s}}}});
  }
  if (!csv) throw std::runtime_error("short write: " + csv_path);

  std::ofstream js(json_path, std::ios::trunc);
  if (!js) throw std::runtime_error("cannot open for writing: " + json_path);
  if (provenance.empty()) {
    js << jrows.dump(2) << "\n";
  } else {
    nlohmann::json doc{{"provenance", provenance}, {"rows", jrows}};
    js << doc.dump(2) << "\n";
  }
  if (!js) throw std::runtime_error("short write: " + json_path);
}

}  // namespace taskgrid::eval
