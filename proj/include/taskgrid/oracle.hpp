#pragma once

#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "taskgrid/lang.hpp"

namespace taskgrid::oracle {

using lang::ColorId;
using lang::TypeId;

// One diagnostic class per (color, type) pair over the FULL vocabulary, so
// held-out combinations still have labels (they just get no training mass).
constexpr int kNumClasses = lang::kNumColors * lang::kNumTypes;  // 24

struct OutOfRange : std::runtime_error {
  explicit OutOfRange(const std::string& what) : std::runtime_error("out of range: " + what) {}
};
struct InstructionComplete : std::runtime_error {
  InstructionComplete() : std::runtime_error("instruction already resolved") {}
};

int class_id(ColorId color, TypeId objtype);          // color*4 + type
std::pair<ColorId, TypeId> class_of(int id);
std::string class_name(int id);                       // "red ball"

struct Subgoal {
  ColorId color = 0;
  TypeId objtype = 0;
  int visit_index = 1;  // 1-based repetition count for this target
  bool operator==(const Subgoal&) const = default;
};

// Flattened visit order: Atomic×k -> k copies, Before(L,R) -> L ++ R,
// After(L,R) -> R ++ L, recursively.
std::vector<Subgoal> subgoal_sequence(const lang::InstrPtr& instr);

enum class VisitEvent { Advance, AdvanceAndShuffle, Complete, Fail, Ignore };
const char* visit_event_name(VisitEvent e);

struct TaskProgress {
  std::vector<Subgoal> sequence;
  size_t cursor = 0;
  bool failed = false;

  static TaskProgress from(const lang::InstrPtr& instr);

  bool complete() const { return cursor == sequence.size(); }
  bool resolved() const { return failed || complete(); }

  int current_label() const;  // throws InstructionComplete when no subgoal remains

  // Visiting the current target advances the cursor (shuffle requested when
  // the next subgoal repeats the same target); visiting any later, different
  // target fails the whole instruction; anything else is ignored.
  VisitEvent observe_visit(ColorId color, TypeId objtype);
};

}  // namespace taskgrid::oracle
