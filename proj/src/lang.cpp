#include "taskgrid/lang.hpp"

#include <algorithm>
#include <map>
#include <sstream>

namespace taskgrid::lang {

namespace {

const std::vector<std::string> kColors = {"red", "green", "blue", "purple", "yellow", "grey"};
const std::vector<std::string> kTypes = {"ball", "box", "key", "disc"};

std::vector<std::string> build_vocab() {
  std::vector<std::string> v = {"<pad>", "go", "to", "the", "a", "before", "after", "twice", "thrice"};
  v.insert(v.end(), kColors.begin(), kColors.end());
  v.insert(v.end(), kTypes.begin(), kTypes.end());
  return v;
}

const std::vector<std::string>& vocab() {
  static const std::vector<std::string> v = build_vocab();
  return v;
}

const std::map<std::string, int>& word_index() {
  static const std::map<std::string, int> idx = [] {
    std::map<std::string, int> m;
    for (size_t i = 0; i < vocab().size(); ++i) m[vocab()[i]] = static_cast<int>(i);
    return m;
  }();
  return idx;
}

constexpr int kGo = 1, kTo = 2, kThe = 3, kA = 4, kBefore = 5, kAfter = 6, kTwice = 7, kThrice = 8;
constexpr int kColorBase = 9;
constexpr int kTypeBase = 9 + kNumColors;

}  // namespace

const std::string& color_name(ColorId c) { return kColors.at(c); }
const std::string& type_name(TypeId t) { return kTypes.at(t); }

int vocab_size() { return static_cast<int>(vocab().size()); }
const std::vector<std::string>& vocabulary() { return vocab(); }

int word_id(const std::string& w) {
  auto it = word_index().find(w);
  if (it == word_index().end()) throw UnknownWord(w);
  return it->second;
}

int color_token(ColorId c) {
  if (c < 0 || c >= kNumColors) throw UnknownWord("color#" + std::to_string(c));
  return kColorBase + c;
}
int type_token(TypeId t) {
  if (t < 0 || t >= kNumTypes) throw UnknownWord("type#" + std::to_string(t));
  return kTypeBase + t;
}

InstrPtr Instruction::atomic(AtomicTask t) {
  auto i = std::make_shared<Instruction>();
  i->kind = Kind::Atomic;
  i->atom = t;
  return i;
}

InstrPtr Instruction::compound(Connector c, InstrPtr l, InstrPtr r) {
  auto i = std::make_shared<Instruction>();
  i->kind = c == Connector::Before ? Kind::Before : Kind::After;
  i->left = std::move(l);
  i->right = std::move(r);
  return i;
}

bool equal(const InstrPtr& a, const InstrPtr& b) {
  if (!a || !b) return !a && !b;
  if (a->kind != b->kind) return false;
  if (a->kind == Instruction::Kind::Atomic) return a->atom == b->atom;
  return equal(a->left, b->left) && equal(a->right, b->right);
}

std::vector<AtomicTask> atoms_of(const InstrPtr& i) {
  std::vector<AtomicTask> out;
  if (!i) return out;
  if (i->kind == Instruction::Kind::Atomic) {
    out.push_back(i->atom);
  } else {
    for (const auto& a : atoms_of(i->left)) out.push_back(a);
    for (const auto& a : atoms_of(i->right)) out.push_back(a);
  }
  return out;
}

TokenSeq tokenize(const std::string& text) {
  TokenSeq ids;
  std::istringstream is(text);
  std::string w;
  while (is >> w) ids.push_back(word_id(w));
  return ids;
}

namespace {

class Parser {
 public:
  explicit Parser(const TokenSeq& t) : t_(t) {}

  InstrPtr instruction() {
    InstrPtr node = Instruction::atomic(atomic_task());
    while (pos_ < t_.size()) {
      Connector c;
      if (t_[pos_] == kBefore) {
        c = Connector::Before;
      } else if (t_[pos_] == kAfter) {
        c = Connector::After;
      } else {
        throw SyntaxError(pos_, "expected connector");
      }
      ++pos_;
      node = Instruction::compound(c, node, Instruction::atomic(atomic_task()));
    }
    return node;
  }

 private:
  AtomicTask atomic_task() {
    expect(kGo, "'go'");
    expect(kTo, "'to'");
    AtomicTask a;
    int art = next("article");
    if (art == kThe) {
      a.definite = true;
    } else if (art == kA) {
      a.definite = false;
    } else {
      throw SyntaxError(pos_ - 1, "expected 'the' or 'a'");
    }
    int c = next("color word");
    if (c < kColorBase || c >= kColorBase + kNumColors) throw SyntaxError(pos_ - 1, "expected a color word");
    a.color = c - kColorBase;
    int ty = next("type word");
    if (ty < kTypeBase || ty >= kTypeBase + kNumTypes) throw SyntaxError(pos_ - 1, "expected a type word");
    a.objtype = ty - kTypeBase;
    if (pos_ < t_.size() && t_[pos_] == kTwice) {
      a.repeat = 2;
      ++pos_;
    } else if (pos_ < t_.size() && t_[pos_] == kThrice) {
      a.repeat = 3;
      ++pos_;
    }
    return a;
  }

  int next(const char* what) {
    if (pos_ >= t_.size()) throw SyntaxError(pos_, std::string("expected ") + what + ", got end of input");
    return t_[pos_++];
  }

  void expect(int id, const char* what) {
    if (next(what) != id) throw SyntaxError(pos_ - 1, std::string("expected ") + what);
  }

  const TokenSeq& t_;
  size_t pos_ = 0;
};

}  // namespace

InstrPtr parse(const TokenSeq& tokens) {
  if (tokens.empty()) throw SyntaxError(0, "empty instruction");
  return Parser(tokens).instruction();
}

InstrPtr parse_text(const std::string& text) { return parse(tokenize(text)); }

namespace {

void render_into(const InstrPtr& i, std::string& out) {
  if (i->kind == Instruction::Kind::Atomic) {
    const AtomicTask& a = i->atom;
    out += "go to ";
    out += a.definite ? "the " : "a ";
    out += color_name(a.color);
    out += ' ';
    out += type_name(a.objtype);
    if (a.repeat == 2) out += " twice";
    if (a.repeat == 3) out += " thrice";
    return;
  }
  render_into(i->left, out);
  out += i->kind == Instruction::Kind::Before ? " before " : " after ";
  render_into(i->right, out);
}

}  // namespace

std::string render(const InstrPtr& instr) {
  std::string out;
  render_into(instr, out);
  return out;
}

namespace {

std::vector<LevelSpec> build_levels() {
  std::vector<ColorId> train_colors;
  for (ColorId c = 0; c < kNumColors; ++c)
    if (c != kHeldOutColor) train_colors.push_back(c);
  std::vector<TypeId> train_types;
  for (TypeId t = 0; t < kNumTypes; ++t)
    if (t != kHeldOutType) train_types.push_back(t);

  auto base = [&](std::string name) {
    LevelSpec s;
    s.name = std::move(name);
    s.interior = 8;
    s.max_steps_per_subgoal = 64;
    s.colors = train_colors;
    s.types = train_types;
    return s;
  };

  std::vector<LevelSpec> levels;
  {
    LevelSpec s = base("Before");
    s.connectors = {Connector::Before};
    s.targets = 2;
    levels.push_back(s);
  }
  {
    LevelSpec s = base("Mixed-2");
    s.connectors = {Connector::Before, Connector::After};
    s.targets = 2;
    levels.push_back(s);
  }
  {
    LevelSpec s = base("Before-Repeat");
    s.connectors = {Connector::Before};
    s.targets = 2;
    s.repeats_allowed = true;
    levels.push_back(s);
  }
  {
    LevelSpec s = base("Mixed-3");
    s.connectors = {Connector::Before, Connector::After};
    s.targets = 3;
    levels.push_back(s);
  }
  return levels;
}

const std::vector<LevelSpec>& levels() {
  static const std::vector<LevelSpec> ls = build_levels();
  return ls;
}

}  // namespace

const LevelSpec& level(const std::string& name) {
  for (const auto& l : levels())
    if (l.name == name) return l;
  throw UnknownLevel(name);
}

const std::vector<std::string>& level_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> n;
    for (const auto& l : levels()) n.push_back(l.name);
    return n;
  }();
  return names;
}

InstrPtr sample_instruction(const LevelSpec& level, Rng& rng) {
  std::vector<AtomicTask> tasks;
  while (static_cast<int>(tasks.size()) < level.targets) {
    AtomicTask a;
    a.color = level.colors[rng.uniform_int(0, static_cast<int>(level.colors.size()) - 1)];
    a.objtype = level.types[rng.uniform_int(0, static_cast<int>(level.types.size()) - 1)];
    bool dup = false;
    for (const auto& t : tasks) dup = dup || (t.color == a.color && t.objtype == a.objtype);
    if (dup) continue;
    if (level.repeats_allowed) {
      int u = rng.uniform_int(0, 3);
      a.repeat = u <= 1 ? 1 : (u == 2 ? 2 : 3);
    }
    a.definite = rng.coin();
    tasks.push_back(a);
  }
  InstrPtr node = Instruction::atomic(tasks[0]);
  for (size_t i = 1; i < tasks.size(); ++i) {
    Connector c = level.connectors[rng.uniform_int(0, static_cast<int>(level.connectors.size()) - 1)];
    node = Instruction::compound(c, node, Instruction::atomic(tasks[i]));
  }
  return node;
}

}  // namespace taskgrid::lang
