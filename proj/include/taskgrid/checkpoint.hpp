#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "taskgrid/config.hpp"
#include "taskgrid/tensor.hpp"

namespace taskgrid::ckpt {

struct VersionMismatch : std::runtime_error {
  explicit VersionMismatch(const std::string& what) : std::runtime_error("checkpoint version: " + what) {}
};
struct CorruptCheckpoint : std::runtime_error {
  explicit CorruptCheckpoint(const std::string& what) : std::runtime_error("corrupt checkpoint: " + what) {}
};

struct Checkpoint {
  config::RunConfig run;          // full provenance snapshot
  uint64_t seed = 0;              // the seed this model was trained with
  std::vector<std::string> vocab; // token order the parameters assume
  ad::ParameterSet params;
  int64_t frames = 0;
  std::string rng_state;
};

// Binary layout: magic "TGCKPT01", u32 version, then length-prefixed blobs
// (config text, vocab, rng state, named f32 parameter tensors, frame count,
// seed), all little-endian, followed by a FNV-1a checksum of everything
// before it. load(save(x)) is byte-stable.
void save(const Checkpoint& c, const std::string& path);
Checkpoint load(const std::string& path);  // throws VersionMismatch / CorruptCheckpoint

// Order-sensitive digest of every parameter's name, shape, and bytes.
uint64_t param_checksum(const ad::ParameterSet& ps);

}  // namespace taskgrid::ckpt
