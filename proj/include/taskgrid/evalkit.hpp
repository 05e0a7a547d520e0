#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "taskgrid/agent.hpp"
#include "taskgrid/lang.hpp"
#include "taskgrid/rng.hpp"

namespace taskgrid::eval {

struct CorruptDataset : std::runtime_error {
  explicit CorruptDataset(const std::string& what) : std::runtime_error("corrupt dataset: " + what) {}
};

struct Metrics {
  double success_rate = 0, mean_episode_length = 0, episode_length_std = 0;
  double fail_rate = 0, timeout_rate = 0;
  double diag_accuracy = 0;  // NaN when the model has no diagnostic head
  int64_t episodes = 0, frames = 0;
};

// Greedy evaluation over `episodes` fresh episodes (per-episode seed streams).
Metrics evaluate(const agent::Agent& agent, const lang::LevelSpec& level, int episodes, uint64_t seed);

enum class TransferMode { Color, Object, ColorObject };
const char* transfer_mode_name(TransferMode m);
TransferMode transfer_mode_from(const std::string& s);  // color|object|colobj

// Source-level instruction with exactly one target's color/type/both swapped
// for the held-out words; the world builds from the altered instruction.
lang::InstrPtr make_transfer_instruction(const lang::LevelSpec& level, TransferMode mode, Rng& rng);

// Zero-shot: greedy evaluation on transfer episodes; never writes parameters.
Metrics transfer_evaluate(const agent::Agent& agent, const lang::LevelSpec& level, TransferMode mode, int episodes,
                          uint64_t seed);

// Offline (hidden state, label) records from greedy play; whole episodes are
// appended until `frames` records are reached, so count = sum of lengths.
struct ProbeDataset {
  int hidden = 0;
  uint64_t seed = 0;        // collection seed; stored in the file
  std::string provenance;   // run-config text of the producing model; stored in the file
  std::vector<float> h;  // count x hidden
  std::vector<int32_t> label, episode, timestep;
  int64_t count() const { return static_cast<int64_t>(label.size()); }
};
// Episode-level 80/20 split.
inline bool is_validation_episode(int32_t episode) { return episode % 5 == 4; }

ProbeDataset collect_probe_dataset(const agent::Agent& agent, const lang::LevelSpec& level, int frames,
                                   uint64_t seed);

void save_dataset(const ProbeDataset& d, const std::string& path);
ProbeDataset load_dataset(const std::string& path);  // throws CorruptDataset

// Multinomial logistic regression on the train split; returns the epoch with
// the best validation accuracy.
struct ProbeResult {
  ad::Tensor w, b;
  double train_accuracy = 0, val_accuracy = 0;
};
ProbeResult train_probe(const ProbeDataset& d, int epochs, float lr);

// Aggregated rows (mean +- sample std over seeds) as CSV + JSON.
struct ReportRow {
  std::string model, level, mode;
  std::vector<Metrics> per_seed;
};
// `provenance` (config keys + seeds of the producing run) is emitted as "# k=v"
// comment lines ahead of the CSV header and as a "provenance" object in the JSON.
void write_report(const std::vector<ReportRow>& rows, const std::string& csv_path, const std::string& json_path,
                  const std::map<std::string, std::string>& provenance = {});

}  // namespace taskgrid::eval
