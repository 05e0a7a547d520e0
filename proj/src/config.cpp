#include "taskgrid/config.hpp"

#include <fstream>
#include <sstream>

#include "taskgrid/lang.hpp"

namespace taskgrid::config {

const char* mode_name(Mode m) {
  switch (m) {
    case Mode::Baseline: return "baseline";
    case Mode::Aware: return "aware";
    case Mode::Sparse: return "sparse";
  }
  return "?";
}

Mode mode_from(const std::string& s) {
  if (s == "baseline") return Mode::Baseline;
  if (s == "aware") return Mode::Aware;
  if (s == "sparse") return Mode::Sparse;
  throw ConfigError("mode", "expected baseline|aware|sparse, got '" + s + "'");
}

namespace {

std::string trim(const std::string& s) {
  size_t a = s.find_first_not_of(" \t\r");
  size_t b = s.find_last_not_of(" \t\r");
  return a == std::string::npos ? "" : s.substr(a, b - a + 1);
}

float to_float(const std::string& field, const std::string& v) {
  try {
    size_t pos = 0;
    float f = std::stof(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return f;
  } catch (const std::exception&) {
    throw ConfigError(field, "not a number: '" + v + "'");
  }
}

int64_t to_int(const std::string& field, const std::string& v) {
  try {
    size_t pos = 0;
    int64_t i = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return i;
  } catch (const std::exception&) {
    throw ConfigError(field, "not an integer: '" + v + "'");
  }
}

std::vector<uint64_t> to_seeds(const std::string& field, const std::string& v) {
  std::vector<uint64_t> out;
  std::stringstream ss(v);
  std::string part;
  while (std::getline(ss, part, ',')) {
    part = trim(part);
    if (part.empty()) continue;
    out.push_back(static_cast<uint64_t>(to_int(field, part)));
  }
  if (out.empty()) throw ConfigError(field, "expected at least one seed");
  return out;
}

std::string format_float(float f) {
  std::ostringstream os;
  os << f;
  return os.str();
}

}  // namespace

void RunConfig::validate() const {
  lang::level(level);  // throws UnknownLevel
  if (ppo.gamma < 0.0f || ppo.gamma > 1.0f) throw ConfigError("ppo.gamma", "must be in [0,1]");
  if (ppo.lam < 0.0f || ppo.lam > 1.0f) throw ConfigError("ppo.lam", "must be in [0,1]");
  if (ppo.clip <= 0.0f) throw ConfigError("ppo.clip", "must be > 0");
  if (ppo.beta < 0.0f) throw ConfigError("ppo.beta", "must be >= 0");
  if (ppo.epochs < 1) throw ConfigError("ppo.epochs", "must be >= 1");
  if (ppo.minibatches < 1) throw ConfigError("ppo.minibatches", "must be >= 1");
  if (ppo.horizon < 1) throw ConfigError("ppo.horizon", "must be >= 1");
  if (ppo.num_envs < 1) throw ConfigError("ppo.num_envs", "must be >= 1");
  if (ppo.segment < 1) throw ConfigError("ppo.segment", "must be >= 1");
  if (ppo.horizon % ppo.segment != 0) throw ConfigError("ppo.segment", "must divide ppo.horizon");
  int segments = ppo.num_envs * (ppo.horizon / ppo.segment);
  if (segments % ppo.minibatches != 0)
    throw ConfigError("ppo.minibatches", "must divide num_envs * horizon / segment = " + std::to_string(segments));
  if (ppo.sparse_queries < 1) throw ConfigError("ppo.sparse_queries", "must be >= 1");
  if (ppo.lr < 0.0f) throw ConfigError("ppo.lr", "must be >= 0");
  if (ppo.grad_clip < 0.0f) throw ConfigError("ppo.grad_clip", "must be >= 0");
  if (frames < 1) throw ConfigError("frames", "must be >= 1");
  if (seeds.empty()) throw ConfigError("seeds", "must list at least one seed");
  if (eval_episodes < 1) throw ConfigError("eval_episodes", "must be >= 1");
  if (eval_every < 0) throw ConfigError("eval_every", "must be >= 0");
  if (probe_frames < 1) throw ConfigError("probe_frames", "must be >= 1");
  if (probe_epochs < 1) throw ConfigError("probe_epochs", "must be >= 1");
  if (probe_lr <= 0.0f) throw ConfigError("probe_lr", "must be > 0");
  agent.validate();
  bool want_head = mode() != Mode::Baseline;
  if (agent.diag_head != want_head)
    throw ConfigError("agent.diag_head",
                      std::string(mode_name(mode())) + " mode requires diag_head=" + (want_head ? "1" : "0"));
}

std::map<std::string, std::string> RunConfig::to_map() const {
  std::map<std::string, std::string> kv = agent.to_map();
  kv["level"] = level;
  kv["mode"] = mode_name(ppo.mode);
  kv["ppo.gamma"] = format_float(ppo.gamma);
  kv["ppo.lam"] = format_float(ppo.lam);
  kv["ppo.clip"] = format_float(ppo.clip);
  kv["ppo.epochs"] = std::to_string(ppo.epochs);
  kv["ppo.minibatches"] = std::to_string(ppo.minibatches);
  kv["ppo.horizon"] = std::to_string(ppo.horizon);
  kv["ppo.num_envs"] = std::to_string(ppo.num_envs);
  kv["ppo.segment"] = std::to_string(ppo.segment);
  kv["ppo.value_coef"] = format_float(ppo.value_coef);
  kv["ppo.entropy_coef"] = format_float(ppo.entropy_coef);
  kv["ppo.beta"] = format_float(ppo.beta);
  kv["ppo.sparse_queries"] = std::to_string(ppo.sparse_queries);
  kv["ppo.lr"] = format_float(ppo.lr);
  kv["ppo.grad_clip"] = format_float(ppo.grad_clip);
  kv["frames"] = std::to_string(frames);
  std::string s;
  for (size_t i = 0; i < seeds.size(); ++i) s += (i ? "," : "") + std::to_string(seeds[i]);
  kv["seeds"] = s;
  kv["out_dir"] = out_dir;
  kv["eval_episodes"] = std::to_string(eval_episodes);
  kv["eval_every"] = std::to_string(eval_every);
  kv["probe_frames"] = std::to_string(probe_frames);
  kv["probe_epochs"] = std::to_string(probe_epochs);
  kv["probe_lr"] = format_float(probe_lr);
  return kv;
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : to_map()) out += k + "=" + v + "\n";
  return out;
}

RunConfig RunConfig::from_map(const std::map<std::string, std::string>& kv) {
  RunConfig c;
  std::map<std::string, std::string> agent_kv;
  bool diag_head_given = false;
  for (const auto& [k, v] : kv) {
    if (k == "level") c.level = v;
    else if (k == "mode") c.ppo.mode = mode_from(v);
    else if (k == "ppo.gamma") c.ppo.gamma = to_float(k, v);
    else if (k == "ppo.lam") c.ppo.lam = to_float(k, v);
    else if (k == "ppo.clip") c.ppo.clip = to_float(k, v);
    else if (k == "ppo.epochs") c.ppo.epochs = static_cast<int>(to_int(k, v));
    else if (k == "ppo.minibatches") c.ppo.minibatches = static_cast<int>(to_int(k, v));
    else if (k == "ppo.horizon") c.ppo.horizon = static_cast<int>(to_int(k, v));
    else if (k == "ppo.num_envs") c.ppo.num_envs = static_cast<int>(to_int(k, v));
    else if (k == "ppo.segment") c.ppo.segment = static_cast<int>(to_int(k, v));
    else if (k == "ppo.value_coef") c.ppo.value_coef = to_float(k, v);
    else if (k == "ppo.entropy_coef") c.ppo.entropy_coef = to_float(k, v);
    else if (k == "ppo.beta") c.ppo.beta = to_float(k, v);
    else if (k == "ppo.sparse_queries") c.ppo.sparse_queries = static_cast<int>(to_int(k, v));
    else if (k == "ppo.lr") c.ppo.lr = to_float(k, v);
    else if (k == "ppo.grad_clip") c.ppo.grad_clip = to_float(k, v);
    else if (k == "frames") c.frames = to_int(k, v);
    else if (k == "seeds") c.seeds = to_seeds(k, v);
    else if (k == "out_dir") c.out_dir = v;
    else if (k == "eval_episodes") c.eval_episodes = static_cast<int>(to_int(k, v));
    else if (k == "eval_every") c.eval_every = static_cast<int>(to_int(k, v));
    else if (k == "probe_frames") c.probe_frames = static_cast<int>(to_int(k, v));
    else if (k == "probe_epochs") c.probe_epochs = static_cast<int>(to_int(k, v));
    else if (k == "probe_lr") c.probe_lr = to_float(k, v);
    else if (k.rfind("agent.", 0) == 0) {
      agent_kv[k] = v;
      if (k == "agent.diag_head") diag_head_given = true;
    } else {
      throw ConfigError(k, "unknown key");
    }
  }
  c.agent = agent::AgentConfig::from_map(agent_kv);
  if (!diag_head_given) c.agent.diag_head = c.mode() != Mode::Baseline;
  return c;
}

RunConfig RunConfig::from_text(const std::string& text) { return from_map(parse_kv_text(text)); }

RunConfig RunConfig::from_file(const std::string& path) { return from_map(parse_kv_file(path)); }

std::map<std::string, std::string> parse_kv_text(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("line " + std::to_string(lineno), "expected key=value, got '" + line + "'");
    std::string k = trim(line.substr(0, eq)), v = trim(line.substr(eq + 1));
    if (k.empty()) throw ConfigError("line " + std::to_string(lineno), "empty key");
    kv[k] = v;
  }
  return kv;
}

std::map<std::string, std::string> parse_kv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError(path, "cannot open config file");
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_kv_text(buf.str());
}

}  // namespace taskgrid::config
