#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "taskgrid/lang.hpp"
#include "taskgrid/oracle.hpp"
#include "taskgrid/rng.hpp"

namespace taskgrid::world {

constexpr int kViewSize = 7;
constexpr int kViewChannels = 3;  // type code, color code, occupancy
constexpr int kViewCells = kViewSize * kViewSize;

// Type-channel codes; objects encode as kCellObjectBase + objtype.
constexpr int kCellEmpty = 0;
constexpr int kCellWall = 1;
constexpr int kCellObjectBase = 2;
constexpr int kNumCellTypes = kCellObjectBase + lang::kNumTypes;
// Color channel: 0 = uncolored, 1 + ColorId otherwise.
constexpr int kNumCellColors = 1 + lang::kNumColors;

enum class Action { Left = 0, Right, Forward, Pickup, Drop, Toggle, Done };
constexpr int kNumActions = 7;
const char* action_name(Action a);

enum class Dir { North = 0, East, South, West };
const char* dir_name(Dir d);

enum class Term { Running = 0, Success, Failure, Timeout };
const char* term_name(Term t);

struct SteppedAfterTermination : std::logic_error {
  SteppedAfterTermination() : std::logic_error("step() after episode termination") {}
};

struct WorldObject {
  lang::ColorId color = 0;
  lang::TypeId objtype = 0;
  int x = 0, y = 0;
};

struct AgentPose {
  int x = 0, y = 0;
  Dir dir = Dir::North;
};

struct Observation {
  // Ego view, row-major (vy, vx, channel). The agent sits at view (3,6)
  // looking toward vy = 0; out-of-room cells carry the wall code.
  std::vector<int> view;  // kViewCells * kViewChannels ints
  lang::TokenSeq tokens;
};

struct StepResult {
  Observation obs;
  float reward = 0.0f;
  bool terminated = false;
  Term kind = Term::Running;
  int label = 0;  // label paired with obs; frozen at its last value once resolved
  oracle::VisitEvent event = oracle::VisitEvent::Ignore;
};

// Single-room episodic environment. One instance owns one rng stream; all
// episode randomness (instruction, placement) is drawn from it in a fixed
// order, so a (seed, action list) pair replays bit-identically.
class Env {
 public:
  Env(lang::LevelSpec level, uint64_t seed);

  Observation reset();                              // sample a fresh instruction
  Observation reset_with(lang::InstrPtr instruction);
  StepResult step(Action a);

  const lang::LevelSpec& level() const { return level_; }
  const lang::InstrPtr& instruction() const { return instr_; }
  const lang::TokenSeq& tokens() const { return tokens_; }
  const oracle::TaskProgress& progress() const { return progress_; }
  const AgentPose& pose() const { return pose_; }
  const std::vector<WorldObject>& objects() const { return objects_; }
  int steps() const { return steps_; }
  int max_steps() const { return max_steps_; }
  bool terminated() const { return term_ != Term::Running; }
  Term term_kind() const { return term_; }
  int current_label() const { return label_; }  // frozen at last value once resolved
  int episodes_started() const { return episodes_; }

  Observation encode_observation() const;
  std::string render_ascii() const;

  // When set, writes one JSON line per reset and per step.
  void set_trace(std::ostream* os) { trace_ = os; }

  Rng& rng() { return rng_; }

 private:
  void place_all();
  void shuffle_objects();
  int sample_free_cell(const std::vector<std::pair<int, int>>& taken);
  const WorldObject* object_at(int x, int y) const;
  std::pair<int, int> facing_cell() const;
  void trace_reset() const;
  void trace_step(Action a, const StepResult& r) const;

  lang::LevelSpec level_;
  Rng rng_;
  lang::InstrPtr instr_;
  lang::TokenSeq tokens_;
  oracle::TaskProgress progress_;
  std::vector<WorldObject> objects_;
  AgentPose pose_;
  int steps_ = 0;
  int max_steps_ = 0;
  Term term_ = Term::Running;
  int label_ = 0;
  int episodes_ = 0;
  std::ostream* trace_ = nullptr;
};

}  // namespace taskgrid::world
