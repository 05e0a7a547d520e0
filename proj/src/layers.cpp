#include "taskgrid/layers.hpp"

#include <cmath>
#include <sstream>

namespace taskgrid::nn {

namespace {

std::string dim_str(const Shape& s) {
  std::ostringstream os;
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  return os.str();
}

}  // namespace

Tensor ensure_param(ParameterSet& ps, const std::string& name, const Shape& shape, uint64_t seed, float scale) {
  if (ps.has(name)) {
    Tensor t = ps.get(name);
    if (t.shape() != shape)
      throw std::runtime_error("parameter " + name + " has shape " + dim_str(t.shape()) + ", expected " + dim_str(shape));
    return t;
  }
  Rng rng(mix_seed(seed, hash_str(name)));
  return ps.add(name, Tensor::uniform(shape, rng, scale));
}

Tensor ensure_param_const(ParameterSet& ps, const std::string& name, const Shape& shape, float v) {
  if (ps.has(name)) {
    Tensor t = ps.get(name);
    if (t.shape() != shape)
      throw std::runtime_error("parameter " + name + " has shape " + dim_str(t.shape()) + ", expected " + dim_str(shape));
    return t;
  }
  return ps.add(name, Tensor::full(shape, v));
}

GruWeights GruWeights::ensure(ParameterSet& ps, const std::string& prefix, int in, int hidden, uint64_t seed) {
  GruWeights w;
  w.in = in;
  w.hidden = hidden;
  const float scale = 1.0f / std::sqrt(static_cast<float>(in + hidden));
  w.wzr = ensure_param(ps, prefix + ".wzr", {in + hidden, 2 * hidden}, seed, scale);
  w.bzr = ensure_param_const(ps, prefix + ".bzr", {2 * hidden}, 0.0f);
  w.wh = ensure_param(ps, prefix + ".wh", {in + hidden, hidden}, seed, scale);
  w.bh = ensure_param_const(ps, prefix + ".bh", {hidden}, 0.0f);
  return w;
}

Tensor gru_step(Graph& g, const GruWeights& w, const Tensor& x, const Tensor& h) {
  const int hd = w.hidden;
  Tensor xh = g.concat_cols(x, h);
  Tensor zr = g.sigmoid_(g.affine(xh, w.wzr, w.bzr));
  Tensor z = g.slice_cols(zr, 0, hd);
  Tensor r = g.slice_cols(zr, hd, 2 * hd);
  Tensor cand_in = g.concat_cols(x, g.mul(r, h));
  Tensor htil = g.tanh_(g.affine(cand_in, w.wh, w.bh));
  // h' = h + z * (htil - h)
  return g.add(h, g.mul(z, g.sub(htil, h)));
}

LstmWeights LstmWeights::ensure(ParameterSet& ps, const std::string& prefix, int in, int hidden, uint64_t seed) {
  LstmWeights w;
  w.in = in;
  w.hidden = hidden;
  const float scale = 1.0f / std::sqrt(static_cast<float>(in + hidden));
  w.w = ensure_param(ps, prefix + ".w", {in + hidden, 4 * hidden}, seed, scale);
  if (ps.has(prefix + ".b")) {
    w.b = ps.get(prefix + ".b");
  } else {
    std::vector<float> b(4 * hidden, 0.0f);
    for (int i = hidden; i < 2 * hidden; ++i) b[i] = 1.0f;  // forget gate
    w.b = ps.add(prefix + ".b", Tensor::from({4 * hidden}, std::move(b)));
  }
  return w;
}

LstmState lstm_step(Graph& g, const LstmWeights& w, const Tensor& x, const LstmState& s) {
  const int hd = w.hidden;
  Tensor xh = g.concat_cols(x, s.h);
  Tensor gates = g.affine(xh, w.w, w.b);
  Tensor i = g.sigmoid_(g.slice_cols(gates, 0, hd));
  Tensor f = g.sigmoid_(g.slice_cols(gates, hd, 2 * hd));
  Tensor o = g.sigmoid_(g.slice_cols(gates, 2 * hd, 3 * hd));
  Tensor cand = g.tanh_(g.slice_cols(gates, 3 * hd, 4 * hd));
  Tensor c = g.add(g.mul(f, s.c), g.mul(i, cand));
  Tensor h = g.mul(o, g.tanh_(c));
  return {h, c};
}

FilmWeights FilmWeights::ensure(ParameterSet& ps, const std::string& prefix, int channels, uint64_t seed) {
  FilmWeights w;
  w.channels = channels;
  const float scale = 1.0f / std::sqrt(static_cast<float>(channels));
  w.w = ensure_param(ps, prefix + ".w", {channels, channels}, seed, scale);
  w.b = ensure_param_const(ps, prefix + ".b", {channels}, 0.0f);
  return w;
}

Tensor film_block(Graph& g, const FilmWeights& w, const Tensor& x, const Tensor& gamma, const Tensor& beta, int hw) {
  Tensor z = g.affine(x, w.w, w.b);
  z = g.mul(z, g.repeat_rows(gamma, hw));
  z = g.add(z, g.repeat_rows(beta, hw));
  z = g.relu_(z);
  return g.add(z, x);
}

}  // namespace taskgrid::nn
