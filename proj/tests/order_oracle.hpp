#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "taskgrid/lang.hpp"
#include "taskgrid/oracle.hpp"

// Independent reference for the visit semantics: instead of flattening to a
// subgoal list and walking a cursor, this evaluator keeps per-leaf visit
// counts and resolves "whose turn is it" by structural recursion at every
// step. Agreement between the two is the cross-check.
namespace taskgrid::testutil {

enum class StreamOutcome { Incomplete, Accept, Reject };

struct StreamResult {
  StreamOutcome outcome = StreamOutcome::Incomplete;
  int resolve_index = -1;          // visit index that accepted/rejected
  std::vector<int> labels;         // expected label before each processed visit
  std::vector<bool> repeat_next;   // advance kept the same target (oracle: AdvanceAndShuffle)
};

class RecursiveEval {
 public:
  explicit RecursiveEval(const lang::InstrPtr& root) : root_(root) { index_leaves(root_); }

  StreamResult run(const std::vector<std::pair<int, int>>& visits) {
    counts_.assign(leaves_.size(), 0);
    StreamResult r;
    for (size_t i = 0; i < visits.size(); ++i) {
      const lang::Instruction* cur = allowed(root_.get());
      r.labels.push_back(oracle::class_id(cur->atom.color, cur->atom.objtype));
      auto [c, t] = visits[i];
      if (cur->atom.color == c && cur->atom.objtype == t) {
        counts_[leaf_id_.at(cur)] += 1;
        if (complete(root_.get())) {
          r.outcome = StreamOutcome::Accept;
          r.resolve_index = static_cast<int>(i);
          r.repeat_next.push_back(false);
          return r;
        }
        const lang::Instruction* nxt = allowed(root_.get());
        r.repeat_next.push_back(nxt->atom.color == c && nxt->atom.objtype == t);
      } else if (is_remaining_target(root_.get(), c, t)) {
        r.outcome = StreamOutcome::Reject;
        r.resolve_index = static_cast<int>(i);
        r.repeat_next.push_back(false);
        return r;
      } else {
        r.repeat_next.push_back(false);
      }
    }
    return r;
  }

  int total_visits_needed() const {
    int n = 0;
    for (const auto* l : leaves_) n += l->atom.repeat;
    return n;
  }

 private:
  void index_leaves(const lang::InstrPtr& node) {
    if (node->kind == lang::Instruction::Kind::Atomic) {
      leaf_id_[node.get()] = static_cast<int>(leaves_.size());
      leaves_.push_back(node.get());
    } else {
      index_leaves(node->left);
      index_leaves(node->right);
    }
  }

  bool complete(const lang::Instruction* n) const {
    if (n->kind == lang::Instruction::Kind::Atomic) return counts_[leaf_id_.at(n)] >= n->atom.repeat;
    return complete(n->left.get()) && complete(n->right.get());
  }

  // The single leaf whose target may be visited next: Before does its left
  // side first, After its right side first.
  const lang::Instruction* allowed(const lang::Instruction* n) const {
    if (n->kind == lang::Instruction::Kind::Atomic) return n;
    const lang::Instruction* first = n->kind == lang::Instruction::Kind::Before ? n->left.get() : n->right.get();
    const lang::Instruction* second = n->kind == lang::Instruction::Kind::Before ? n->right.get() : n->left.get();
    return complete(first) ? allowed(second) : allowed(first);
  }

  bool is_remaining_target(const lang::Instruction* n, int c, int t) const {
    if (n->kind == lang::Instruction::Kind::Atomic)
      return counts_[leaf_id_.at(n)] < n->atom.repeat && n->atom.color == c && n->atom.objtype == t;
    return is_remaining_target(n->left.get(), c, t) || is_remaining_target(n->right.get(), c, t);
  }

  lang::InstrPtr root_;
  std::vector<const lang::Instruction*> leaves_;
  std::map<const lang::Instruction*, int> leaf_id_;
  std::vector<int> counts_;
};

// Feed the same stream through TaskProgress. Stops at resolution.
inline StreamResult run_task_progress(const lang::InstrPtr& instr, const std::vector<std::pair<int, int>>& visits) {
  oracle::TaskProgress p = oracle::TaskProgress::from(instr);
  StreamResult r;
  for (size_t i = 0; i < visits.size(); ++i) {
    r.labels.push_back(p.current_label());
    auto ev = p.observe_visit(visits[i].first, visits[i].second);
    r.repeat_next.push_back(ev == oracle::VisitEvent::AdvanceAndShuffle);
    if (ev == oracle::VisitEvent::Complete) {
      r.outcome = StreamOutcome::Accept;
      r.resolve_index = static_cast<int>(i);
      return r;
    }
    if (ev == oracle::VisitEvent::Fail) {
      r.outcome = StreamOutcome::Reject;
      r.resolve_index = static_cast<int>(i);
      return r;
    }
  }
  return r;
}

inline bool same_result(const StreamResult& a, const StreamResult& b) {
  return a.outcome == b.outcome && a.resolve_index == b.resolve_index && a.labels == b.labels &&
         a.repeat_next == b.repeat_next;
}

// Every left-leaning instruction shape with `atoms` leaves, repeats in
// {1,2,3} per leaf where allow_repeats, both connectors, and every target
// assignment over 3 canonical targets (so leaves may share a target — only
// the equality pattern between leaves matters to the visit semantics).
inline std::vector<lang::InstrPtr> all_structures(int atoms, bool allow_repeats = true) {
  const std::vector<std::pair<int, int>> targets = {{0, 0}, {1, 1}, {2, 2}};
  std::vector<lang::InstrPtr> out;
  const int max_rep = allow_repeats ? 3 : 1;
  std::function<void(int, lang::InstrPtr)> rec = [&](int used, lang::InstrPtr acc) {
    if (used == atoms) {
      out.push_back(acc);
      return;
    }
    for (const auto& [color, objtype] : targets)
      for (int rep = 1; rep <= max_rep; ++rep) {
        lang::AtomicTask a;
        a.color = color;
        a.objtype = objtype;
        a.repeat = rep;
        lang::InstrPtr leaf = lang::Instruction::atomic(a);
        if (!acc) {
          rec(used + 1, leaf);
        } else {
          rec(used + 1, lang::Instruction::compound(lang::Connector::Before, acc, leaf));
          rec(used + 1, lang::Instruction::compound(lang::Connector::After, acc, leaf));
        }
      }
  };
  rec(0, nullptr);
  return out;
}

// All visit streams over the instruction's distinct targets, up to one visit
// beyond what full completion needs. Returns the number of mismatching
// streams (0 = the two oracles agree everywhere).
inline int64_t compare_all_streams(const lang::InstrPtr& instr, std::string* first_mismatch = nullptr) {
  std::vector<std::pair<int, int>> targets;
  for (const auto& a : lang::atoms_of(instr)) {
    std::pair<int, int> t{a.color, a.objtype};
    if (std::find(targets.begin(), targets.end(), t) == targets.end()) targets.push_back(t);
  }
  RecursiveEval ref(instr);
  const int max_len = ref.total_visits_needed() + 1;
  const int nt = static_cast<int>(targets.size());
  int64_t mismatches = 0;
  std::vector<std::pair<int, int>> stream;
  std::function<void()> rec = [&]() {
    if (!stream.empty()) {
      StreamResult want = ref.run(stream);
      StreamResult got = run_task_progress(instr, stream);
      if (!same_result(want, got)) {
        ++mismatches;
        if (first_mismatch && first_mismatch->empty()) {
          *first_mismatch = lang::render(instr) + " | stream:";
          for (auto [c, t] : stream) *first_mismatch += " " + oracle::class_name(oracle::class_id(c, t));
        }
        return;  // no need to extend a mismatching stream
      }
      if (want.outcome != StreamOutcome::Incomplete) return;  // resolved: extensions are meaningless
    }
    if (static_cast<int>(stream.size()) == max_len) return;
    for (int i = 0; i < nt; ++i) {
      stream.push_back(targets[i]);
      rec();
      stream.pop_back();
    }
  };
  rec();
  return mismatches;
}

}  // namespace taskgrid::testutil
