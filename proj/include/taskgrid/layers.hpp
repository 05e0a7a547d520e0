#pragma once

#include <string>

#include "taskgrid/tensor.hpp"

namespace taskgrid::nn {

using ad::Graph;
using ad::ParameterSet;
using ad::Shape;
using ad::Tensor;

// Fetch `name` from `ps`, or create it with U(-scale, scale) entries drawn
// from an rng derived from (seed, name) and register it. The derived stream
// makes a parameter's init independent of which other parameters exist.
Tensor ensure_param(ParameterSet& ps, const std::string& name, const Shape& shape, uint64_t seed, float scale);
Tensor ensure_param_const(ParameterSet& ps, const std::string& name, const Shape& shape, float v);

// x {B,in}, h {B,H} -> h' {B,H}. Fused gate weights: wzr {in+H, 2H} (update
// then reset), wh {in+H, H}.
struct GruWeights {
  int in = 0, hidden = 0;
  Tensor wzr, bzr, wh, bh;
  static GruWeights ensure(ParameterSet& ps, const std::string& prefix, int in, int hidden, uint64_t seed);
};
Tensor gru_step(Graph& g, const GruWeights& w, const Tensor& x, const Tensor& h);

// x {B,in}, h/c {B,H}. Fused gates i,f,o,g: w {in+H, 4H}. Forget bias starts
// at 1.
struct LstmWeights {
  int in = 0, hidden = 0;
  Tensor w, b;
  static LstmWeights ensure(ParameterSet& ps, const std::string& prefix, int in, int hidden, uint64_t seed);
};
struct LstmState {
  Tensor h, c;
};
LstmState lstm_step(Graph& g, const LstmWeights& w, const Tensor& x, const LstmState& s);

// Feature-wise modulation with residual: relu(gamma ⊙ (x W + b) + beta) + x.
// x {B*HW, C} with pixel index fastest; gamma/beta {B, C}; w is a 1x1 conv.
struct FilmWeights {
  int channels = 0;
  Tensor w, b;
  static FilmWeights ensure(ParameterSet& ps, const std::string& prefix, int channels, uint64_t seed);
};
Tensor film_block(Graph& g, const FilmWeights& w, const Tensor& x, const Tensor& gamma, const Tensor& beta, int hw);

}  // namespace taskgrid::nn
