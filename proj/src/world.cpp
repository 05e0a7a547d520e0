#include "taskgrid/world.hpp"

#include <ostream>

#include "json.hpp"

namespace taskgrid::world {

namespace {

// x,y deltas for North, East, South, West; y grows downward.
constexpr int kDx[4] = {0, 1, 0, -1};
constexpr int kDy[4] = {-1, 0, 1, 0};

constexpr char kTypeGlyph[4] = {'B', 'X', 'K', 'D'};   // ball, box, key, disc
constexpr char kColorGlyph[6] = {'r', 'g', 'b', 'p', 'y', 'e'};
constexpr char kAgentGlyph[4] = {'^', '>', 'v', '<'};

}  // namespace

const char* action_name(Action a) {
  switch (a) {
    case Action::Left: return "left";
    case Action::Right: return "right";
    case Action::Forward: return "forward";
    case Action::Pickup: return "pickup";
    case Action::Drop: return "drop";
    case Action::Toggle: return "toggle";
    case Action::Done: return "done";
  }
  return "?";
}

const char* dir_name(Dir d) {
  switch (d) {
    case Dir::North: return "north";
    case Dir::East: return "east";
    case Dir::South: return "south";
    case Dir::West: return "west";
  }
  return "?";
}

const char* term_name(Term t) {
  switch (t) {
    case Term::Running: return "Running";
    case Term::Success: return "Success";
    case Term::Failure: return "Failure";
    case Term::Timeout: return "Timeout";
  }
  return "?";
}

Env::Env(lang::LevelSpec level, uint64_t seed) : level_(std::move(level)), rng_(seed) {}

Observation Env::reset() { return reset_with(lang::sample_instruction(level_, rng_)); }

Observation Env::reset_with(lang::InstrPtr instruction) {
  instr_ = std::move(instruction);
  tokens_ = lang::tokenize(lang::render(instr_));
  progress_ = oracle::TaskProgress::from(instr_);
  max_steps_ = level_.max_steps_per_subgoal * static_cast<int>(progress_.sequence.size());
  steps_ = 0;
  term_ = Term::Running;
  label_ = progress_.current_label();
  ++episodes_;
  place_all();
  trace_reset();
  return encode_observation();
}

int Env::sample_free_cell(const std::vector<std::pair<int, int>>& taken) {
  std::vector<int> free;
  free.reserve(static_cast<size_t>(level_.interior) * level_.interior);
  for (int y = 1; y <= level_.interior; ++y)
    for (int x = 1; x <= level_.interior; ++x) {
      bool blocked = false;
      for (const auto& [tx, ty] : taken) blocked = blocked || (tx == x && ty == y);
      if (!blocked) free.push_back(y * (level_.interior + 2) + x);
    }
  return free[rng_.uniform_int(0, static_cast<int>(free.size()) - 1)];
}

void Env::place_all() {
  objects_.clear();
  std::vector<std::pair<int, int>> taken;
  for (const auto& atom : lang::atoms_of(instr_)) {
    int cell = sample_free_cell(taken);
    WorldObject o;
    o.color = atom.color;
    o.objtype = atom.objtype;
    o.x = cell % (level_.interior + 2);
    o.y = cell / (level_.interior + 2);
    taken.emplace_back(o.x, o.y);
    objects_.push_back(o);
  }
  int cell = sample_free_cell(taken);
  pose_.x = cell % (level_.interior + 2);
  pose_.y = cell / (level_.interior + 2);
  pose_.dir = static_cast<Dir>(rng_.uniform_int(0, 3));
}

void Env::shuffle_objects() {
  auto [fx, fy] = facing_cell();
  std::vector<std::pair<int, int>> taken = {{pose_.x, pose_.y}, {fx, fy}};
  for (auto& o : objects_) {
    int cell = sample_free_cell(taken);
    o.x = cell % (level_.interior + 2);
    o.y = cell / (level_.interior + 2);
    taken.emplace_back(o.x, o.y);
  }
}

const WorldObject* Env::object_at(int x, int y) const {
  for (const auto& o : objects_)
    if (o.x == x && o.y == y) return &o;
  return nullptr;
}

std::pair<int, int> Env::facing_cell() const {
  int d = static_cast<int>(pose_.dir);
  return {pose_.x + kDx[d], pose_.y + kDy[d]};
}

StepResult Env::step(Action a) {
  if (terminated()) throw SteppedAfterTermination();

  switch (a) {
    case Action::Left:
      pose_.dir = static_cast<Dir>((static_cast<int>(pose_.dir) + 3) % 4);
      break;
    case Action::Right:
      pose_.dir = static_cast<Dir>((static_cast<int>(pose_.dir) + 1) % 4);
      break;
    case Action::Forward: {
      auto [nx, ny] = facing_cell();
      bool inside = nx >= 1 && nx <= level_.interior && ny >= 1 && ny <= level_.interior;
      if (inside && object_at(nx, ny) == nullptr) {
        pose_.x = nx;
        pose_.y = ny;
      }
      break;
    }
    case Action::Pickup:
    case Action::Drop:
    case Action::Toggle:
    case Action::Done:
      break;  // no-ops on navigation levels
  }
  ++steps_;

  StepResult r;
  auto [fx, fy] = facing_cell();
  if (const WorldObject* o = object_at(fx, fy)) {
    r.event = progress_.observe_visit(o->color, o->objtype);
    switch (r.event) {
      case oracle::VisitEvent::Advance:
        label_ = progress_.current_label();
        break;
      case oracle::VisitEvent::AdvanceAndShuffle:
        label_ = progress_.current_label();
        shuffle_objects();
        break;
      case oracle::VisitEvent::Complete:
        term_ = Term::Success;
        r.reward = 1.0f - 0.9f * (static_cast<float>(steps_) / static_cast<float>(max_steps_));
        break;
      case oracle::VisitEvent::Fail:
        term_ = Term::Failure;
        break;
      case oracle::VisitEvent::Ignore:
        break;
    }
  }
  if (term_ == Term::Running && steps_ >= max_steps_) term_ = Term::Timeout;

  r.obs = encode_observation();
  r.terminated = terminated();
  r.kind = term_;
  r.label = label_;
  trace_step(a, r);
  return r;
}

Observation Env::encode_observation() const {
  Observation obs;
  obs.view.assign(kViewCells * kViewChannels, 0);
  obs.tokens = tokens_;
  const int d = static_cast<int>(pose_.dir);
  const int rd = (d + 1) % 4;  // view-right in world coordinates
  for (int vy = 0; vy < kViewSize; ++vy)
    for (int vx = 0; vx < kViewSize; ++vx) {
      const int f = (kViewSize - 1) - vy;
      const int l = vx - kViewSize / 2;
      const int wx = pose_.x + f * kDx[d] + l * kDx[rd];
      const int wy = pose_.y + f * kDy[d] + l * kDy[rd];
      int* cell = obs.view.data() + (vy * kViewSize + vx) * kViewChannels;
      const bool inside = wx >= 1 && wx <= level_.interior && wy >= 1 && wy <= level_.interior;
      if (!inside) {
        cell[0] = kCellWall;
        cell[1] = 0;
        cell[2] = 1;
      } else if (const WorldObject* o = object_at(wx, wy)) {
        cell[0] = kCellObjectBase + o->objtype;
        cell[1] = 1 + o->color;
        cell[2] = 1;
      }
    }
  return obs;
}

std::string Env::render_ascii() const {
  const int side = level_.interior + 2;
  std::string out;
  out.reserve(static_cast<size_t>(side) * (side * 2 + 1));
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      if (x == pose_.x && y == pose_.y) {
        out += kAgentGlyph[static_cast<int>(pose_.dir)];
        out += ' ';
      } else if (const WorldObject* o = object_at(x, y)) {
        out += kTypeGlyph[o->objtype];
        out += kColorGlyph[o->color];
      } else if (x == 0 || y == 0 || x == side - 1 || y == side - 1) {
        out += "##";
      } else {
        out += ". ";
      }
    }
    out += '\n';
  }
  return out;
}

void Env::trace_reset() const {
  if (!trace_) return;
  nlohmann::json j = {
      {"event", "reset"},
      {"episode", episodes_},
      {"instruction", lang::render(instr_)},
      {"max_steps", max_steps_},
      {"label", label_},
  };
  *trace_ << j.dump() << '\n';
}

void Env::trace_step(Action a, const StepResult& r) const {
  if (!trace_) return;
  nlohmann::json j = {
      {"step", steps_},
      {"action", action_name(a)},
      {"x", pose_.x},
      {"y", pose_.y},
      {"dir", dir_name(pose_.dir)},
      {"reward", r.reward},
      {"label", r.label},
      {"term", term_name(r.kind)},
  };
  *trace_ << j.dump() << '\n';
}

}  // namespace taskgrid::world
