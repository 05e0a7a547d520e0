#pragma once

#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "taskgrid/rng.hpp"

namespace taskgrid::lang {

using ColorId = int;  // 0..5
using TypeId = int;   // 0..3

constexpr int kNumColors = 6;
constexpr int kNumTypes = 4;
constexpr ColorId kHeldOutColor = 5;  // grey: in the vocabulary, never sampled for training
constexpr TypeId kHeldOutType = 3;    // disc

const std::string& color_name(ColorId c);
const std::string& type_name(TypeId t);

struct UnknownWord : std::runtime_error {
  explicit UnknownWord(const std::string& w) : std::runtime_error("unknown word: " + w) {}
};
struct SyntaxError : std::runtime_error {
  SyntaxError(size_t pos, const std::string& what)
      : std::runtime_error("syntax error at token " + std::to_string(pos) + ": " + what), position(pos) {}
  size_t position;
};
struct UnknownLevel : std::runtime_error {
  explicit UnknownLevel(const std::string& n) : std::runtime_error("unknown level: " + n) {}
};

// Token ids are frozen: PAD, function words, colors, types — in that order.
constexpr int kPadToken = 0;
int vocab_size();
const std::vector<std::string>& vocabulary();
int word_id(const std::string& w);        // throws UnknownWord
int color_token(ColorId c);
int type_token(TypeId t);

using TokenSeq = std::vector<int>;

struct AtomicTask {
  ColorId color = 0;
  TypeId objtype = 0;
  int repeat = 1;        // 1, 2 ("twice"), or 3 ("thrice")
  bool definite = true;  // "the" vs "a"; no task semantics
  bool operator==(const AtomicTask&) const = default;
};

enum class Connector { Before, After };

struct Instruction;
using InstrPtr = std::shared_ptr<const Instruction>;

struct Instruction {
  enum class Kind { Atomic, Before, After };
  Kind kind = Kind::Atomic;
  AtomicTask atom;       // Kind::Atomic only
  InstrPtr left, right;  // connector nodes only

  static InstrPtr atomic(AtomicTask t);
  static InstrPtr compound(Connector c, InstrPtr l, InstrPtr r);
};

bool equal(const InstrPtr& a, const InstrPtr& b);
std::vector<AtomicTask> atoms_of(const InstrPtr& i);  // left-to-right leaves

TokenSeq tokenize(const std::string& text);   // throws UnknownWord
InstrPtr parse(const TokenSeq& tokens);       // throws SyntaxError
InstrPtr parse_text(const std::string& text);
std::string render(const InstrPtr& instr);

struct LevelSpec {
  std::string name;
  std::vector<Connector> connectors;  // allowed connector set
  int targets = 2;                    // atomic tasks per instruction
  bool repeats_allowed = false;
  int interior = 8;                // room interior cells per side
  int max_steps_per_subgoal = 64;  // episode budget = this × subgoal count
  std::vector<ColorId> colors;     // training pools (held-out words excluded)
  std::vector<TypeId> types;
};

const LevelSpec& level(const std::string& name);  // throws UnknownLevel
const std::vector<std::string>& level_names();    // {Before, Mixed-2, Before-Repeat, Mixed-3}

// Distinct (color,type) targets from the level pools; connectors uniform over
// the allowed set; repeat 1 with prob 1/2 else 2 or 3, only where allowed.
InstrPtr sample_instruction(const LevelSpec& level, Rng& rng);

}  // namespace taskgrid::lang
