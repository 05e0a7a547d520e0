#include "taskgrid/oracle.hpp"

namespace taskgrid::oracle {

int class_id(ColorId color, TypeId objtype) {
  if (color < 0 || color >= lang::kNumColors) throw OutOfRange("color " + std::to_string(color));
  if (objtype < 0 || objtype >= lang::kNumTypes) throw OutOfRange("type " + std::to_string(objtype));
  return color * lang::kNumTypes + objtype;
}

std::pair<ColorId, TypeId> class_of(int id) {
  if (id < 0 || id >= kNumClasses) throw OutOfRange("class " + std::to_string(id));
  return {id / lang::kNumTypes, id % lang::kNumTypes};
}

std::string class_name(int id) {
  auto [c, t] = class_of(id);
  return lang::color_name(c) + " " + lang::type_name(t);
}

namespace {

void expand(const lang::InstrPtr& i, std::vector<Subgoal>& out) {
  using Kind = lang::Instruction::Kind;
  switch (i->kind) {
    case Kind::Atomic:
      for (int r = 1; r <= i->atom.repeat; ++r) out.push_back({i->atom.color, i->atom.objtype, r});
      break;
    case Kind::Before:
      expand(i->left, out);
      expand(i->right, out);
      break;
    case Kind::After:
      expand(i->right, out);
      expand(i->left, out);
      break;
  }
}

}  // namespace

std::vector<Subgoal> subgoal_sequence(const lang::InstrPtr& instr) {
  std::vector<Subgoal> out;
  expand(instr, out);
  return out;
}

const char* visit_event_name(VisitEvent e) {
  switch (e) {
    case VisitEvent::Advance: return "Advance";
    case VisitEvent::AdvanceAndShuffle: return "AdvanceAndShuffle";
    case VisitEvent::Complete: return "Complete";
    case VisitEvent::Fail: return "Fail";
    case VisitEvent::Ignore: return "Ignore";
  }
  return "?";
}

TaskProgress TaskProgress::from(const lang::InstrPtr& instr) {
  TaskProgress p;
  p.sequence = subgoal_sequence(instr);
  return p;
}

int TaskProgress::current_label() const {
  if (cursor >= sequence.size()) throw InstructionComplete();
  return class_id(sequence[cursor].color, sequence[cursor].objtype);
}

VisitEvent TaskProgress::observe_visit(ColorId color, TypeId objtype) {
  if (resolved()) throw InstructionComplete();
  const Subgoal& cur = sequence[cursor];
  if (cur.color == color && cur.objtype == objtype) {
    ++cursor;
    if (complete()) return VisitEvent::Complete;
    const Subgoal& next = sequence[cursor];
    if (next.color == color && next.objtype == objtype) return VisitEvent::AdvanceAndShuffle;
    return VisitEvent::Advance;
  }
  for (size_t j = cursor + 1; j < sequence.size(); ++j) {
    if (sequence[j].color == color && sequence[j].objtype == objtype) {
      failed = true;
      return VisitEvent::Fail;
    }
  }
  return VisitEvent::Ignore;
}

}  // namespace taskgrid::oracle
