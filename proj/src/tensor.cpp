#include "taskgrid/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "taskgrid/kernels.hpp"

namespace taskgrid::ad {

namespace {

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) throw ShapeMismatch(std::string(op) + " " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

void check_rank2(const Tensor& t, const char* op) {
  if (t.shape().size() != 2) throw ShapeMismatch(std::string(op) + " expects rank-2, got " + shape_str(t.shape()));
}

}  // namespace

int64_t shape_size(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

Tensor Tensor::zeros(const Shape& s, bool requires_grad) {
  auto d = std::make_shared<TensorData>();
  d->shape = s;
  d->val.assign(shape_size(s), 0.0f);
  d->requires_grad = requires_grad;
  return Tensor(std::move(d));
}

Tensor Tensor::full(const Shape& s, float v, bool requires_grad) {
  Tensor t = zeros(s, requires_grad);
  std::fill(t.values().begin(), t.values().end(), v);
  return t;
}

Tensor Tensor::from(const Shape& s, std::vector<float> vals, bool requires_grad) {
  if (static_cast<int64_t>(vals.size()) != shape_size(s)) throw ShapeMismatch("from: value count != shape size");
  auto d = std::make_shared<TensorData>();
  d->shape = s;
  d->val = std::move(vals);
  d->requires_grad = requires_grad;
  return Tensor(std::move(d));
}

Tensor Tensor::scalar_of(float v) { return from({1}, {v}); }

Tensor Tensor::uniform(const Shape& s, Rng& rng, float scale, bool requires_grad) {
  Tensor t = zeros(s, requires_grad);
  for (auto& x : t.values()) x = (rng.uniform_real() * 2.0f - 1.0f) * scale;
  return t;
}

int Tensor::cols() const { return d_->shape.empty() ? 1 : d_->shape.back(); }
int Tensor::rows() const { return static_cast<int>(size() / cols()); }

float* Tensor::grad() const {
  if (d_->grad.empty()) d_->grad.assign(d_->val.size(), 0.0f);
  return d_->grad.data();
}

void Tensor::zero_grad() {
  if (!d_->grad.empty()) std::fill(d_->grad.begin(), d_->grad.end(), 0.0f);
}

float Tensor::item() const {
  if (size() != 1) throw ShapeMismatch("item() on non-scalar " + shape_str(d_->shape));
  return d_->val[0];
}

Tensor Graph::make(const Shape& s, bool needs_grad) { return Tensor::zeros(s, recording_ && needs_grad); }

Tensor Graph::add(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "add");
  Tensor y = make(a.shape(), a.requires_grad() || b.requires_grad());
  const int64_t n = a.size();
  const float* pa = a.data();
  const float* pb = b.data();
  float* py = y.data();
  for (int64_t i = 0; i < n; ++i) py[i] = pa[i] + pb[i];
  if (y.requires_grad())
    record([a, b, y]() mutable {
      const float* gy = y.grad();
      if (a.requires_grad()) {
        float* ga = a.grad();
        for (int64_t i = 0; i < a.size(); ++i) ga[i] += gy[i];
      }
      if (b.requires_grad()) {
        float* gb = b.grad();
        for (int64_t i = 0; i < b.size(); ++i) gb[i] += gy[i];
      }
    });
  return y;
}

Tensor Graph::sub(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "sub");
  Tensor y = make(a.shape(), a.requires_grad() || b.requires_grad());
  for (int64_t i = 0; i < a.size(); ++i) y.data()[i] = a.data()[i] - b.data()[i];
  if (y.requires_grad())
    record([a, b, y]() mutable {
      const float* gy = y.grad();
      if (a.requires_grad()) {
        float* ga = a.grad();
        for (int64_t i = 0; i < a.size(); ++i) ga[i] += gy[i];
      }
      if (b.requires_grad()) {
        float* gb = b.grad();
        for (int64_t i = 0; i < b.size(); ++i) gb[i] -= gy[i];
      }
    });
  return y;
}

Tensor Graph::mul(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "mul");
  Tensor y = make(a.shape(), a.requires_grad() || b.requires_grad());
  for (int64_t i = 0; i < a.size(); ++i) y.data()[i] = a.data()[i] * b.data()[i];
  if (y.requires_grad())
    record([a, b, y]() mutable {
      const float* gy = y.grad();
      if (a.requires_grad()) {
        float* ga = a.grad();
        for (int64_t i = 0; i < a.size(); ++i) ga[i] += b.data()[i] * gy[i];
      }
      if (b.requires_grad()) {
        float* gb = b.grad();
        for (int64_t i = 0; i < b.size(); ++i) gb[i] += a.data()[i] * gy[i];
      }
    });
  return y;
}

Tensor Graph::min2(const Tensor& a, const Tensor& b) {
  check_same_shape(a, b, "min2");
  Tensor y = make(a.shape(), a.requires_grad() || b.requires_grad());
  for (int64_t i = 0; i < a.size(); ++i) y.data()[i] = std::min(a.data()[i], b.data()[i]);
  if (y.requires_grad())
    record([a, b, y]() mutable {
      const float* gy = y.grad();
      for (int64_t i = 0; i < a.size(); ++i) {
        if (a.data()[i] <= b.data()[i]) {
          if (a.requires_grad()) a.grad()[i] += gy[i];
        } else if (b.requires_grad()) {
          b.grad()[i] += gy[i];
        }
      }
    });
  return y;
}

Tensor Graph::clamp(const Tensor& x, float lo, float hi) {
  Tensor y = make(x.shape(), x.requires_grad());
  for (int64_t i = 0; i < x.size(); ++i) y.data()[i] = std::min(std::max(x.data()[i], lo), hi);
  if (y.requires_grad())
    record([x, y, lo, hi]() mutable {
      const float* gy = y.grad();
      float* gx = x.grad();
      for (int64_t i = 0; i < x.size(); ++i)
        if (x.data()[i] >= lo && x.data()[i] <= hi) gx[i] += gy[i];
    });
  return y;
}

Tensor Graph::affine_const(const Tensor& x, float k, float c) {
  Tensor y = make(x.shape(), x.requires_grad());
  for (int64_t i = 0; i < x.size(); ++i) y.data()[i] = k * x.data()[i] + c;
  if (y.requires_grad())
    record([x, y, k]() mutable {
      const float* gy = y.grad();
      float* gx = x.grad();
      for (int64_t i = 0; i < x.size(); ++i) gx[i] += k * gy[i];
    });
  return y;
}

Tensor Graph::exp_(const Tensor& x) {
  Tensor y = make(x.shape(), x.requires_grad());
  for (int64_t i = 0; i < x.size(); ++i) y.data()[i] = std::exp(x.data()[i]);
  if (y.requires_grad())
    record([x, y]() mutable {
      const float* gy = y.grad();
      float* gx = x.grad();
      for (int64_t i = 0; i < x.size(); ++i) gx[i] += y.data()[i] * gy[i];
    });
  return y;
}

Tensor Graph::tanh_(const Tensor& x) {
  Tensor y = make(x.shape(), x.requires_grad());
  for (int64_t i = 0; i < x.size(); ++i) y.data()[i] = std::tanh(x.data()[i]);
  if (y.requires_grad())
    record([x, y]() mutable {
      const float* gy = y.grad();
      float* gx = x.grad();
      for (int64_t i = 0; i < x.size(); ++i) gx[i] += (1.0f - y.data()[i] * y.data()[i]) * gy[i];
    });
  return y;
}

Tensor Graph::sigmoid_(const Tensor& x) {
  Tensor y = make(x.shape(), x.requires_grad());
  for (int64_t i = 0; i < x.size(); ++i) {
    float v = x.data()[i];
    y.data()[i] = v >= 0.0f ? 1.0f / (1.0f + std::exp(-v)) : std::exp(v) / (1.0f + std::exp(v));
  }
  if (y.requires_grad())
    record([x, y]() mutable {
      const float* gy = y.grad();
      float* gx = x.grad();
      for (int64_t i = 0; i < x.size(); ++i) gx[i] += y.data()[i] * (1.0f - y.data()[i]) * gy[i];
    });
  return y;
}

Tensor Graph::relu_(const Tensor& x) {
  Tensor y = make(x.shape(), x.requires_grad());
  for (int64_t i = 0; i < x.size(); ++i) y.data()[i] = x.data()[i] > 0.0f ? x.data()[i] : 0.0f;
  if (y.requires_grad())
    record([x, y]() mutable {
      const float* gy = y.grad();
      float* gx = x.grad();
      for (int64_t i = 0; i < x.size(); ++i)
        if (x.data()[i] > 0.0f) gx[i] += gy[i];
    });
  return y;
}

Tensor Graph::log_softmax(const Tensor& x) {
  const int c = x.cols();
  const int r = x.rows();
  Tensor y = make(x.shape(), x.requires_grad());
  for (int i = 0; i < r; ++i) {
    const float* xi = x.data() + static_cast<int64_t>(i) * c;
    float* yi = y.data() + static_cast<int64_t>(i) * c;
    float m = xi[0];
    for (int j = 1; j < c; ++j) m = std::max(m, xi[j]);
    double s = 0.0;
    for (int j = 0; j < c; ++j) s += std::exp(static_cast<double>(xi[j] - m));
    float lse = m + static_cast<float>(std::log(s));
    for (int j = 0; j < c; ++j) yi[j] = xi[j] - lse;
  }
  if (y.requires_grad())
    record([x, y, r, c]() mutable {
      const float* gy = y.grad();
      float* gx = x.grad();
      for (int i = 0; i < r; ++i) {
        const float* yi = y.data() + static_cast<int64_t>(i) * c;
        const float* gyi = gy + static_cast<int64_t>(i) * c;
        float* gxi = gx + static_cast<int64_t>(i) * c;
        double gs = 0.0;
        for (int j = 0; j < c; ++j) gs += gyi[j];
        for (int j = 0; j < c; ++j) gxi[j] += gyi[j] - std::exp(yi[j]) * static_cast<float>(gs);
      }
    });
  return y;
}

Tensor Graph::matmul(const Tensor& a, const Tensor& b) {
  check_rank2(a, "matmul lhs");
  check_rank2(b, "matmul rhs");
  const int m = a.shape()[0], k = a.shape()[1];
  if (b.shape()[0] != k) throw ShapeMismatch("matmul " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  const int n = b.shape()[1];
  Tensor y = make({m, n}, a.requires_grad() || b.requires_grad());
  kern::gemm_nn(a.data(), b.data(), y.data(), m, k, n, false);
  if (y.requires_grad())
    record([a, b, y, m, k, n]() mutable {
      if (a.requires_grad()) kern::gemm_nt(y.grad(), b.data(), a.grad(), m, n, k, true);
      if (b.requires_grad()) kern::gemm_tn(a.data(), y.grad(), b.grad(), k, m, n, true);
    });
  return y;
}

Tensor Graph::add_rowvec(const Tensor& x, const Tensor& b) {
  check_rank2(x, "add_rowvec");
  const int r = x.shape()[0], c = x.shape()[1];
  if (b.size() != c) throw ShapeMismatch("add_rowvec bias");
  Tensor y = make(x.shape(), x.requires_grad() || b.requires_grad());
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) y.data()[static_cast<int64_t>(i) * c + j] = x.data()[static_cast<int64_t>(i) * c + j] + b.data()[j];
  if (y.requires_grad())
    record([x, b, y, r, c]() mutable {
      const float* gy = y.grad();
      if (x.requires_grad()) {
        float* gx = x.grad();
        for (int64_t i = 0; i < x.size(); ++i) gx[i] += gy[i];
      }
      if (b.requires_grad()) {
        float* gb = b.grad();
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j) gb[j] += gy[static_cast<int64_t>(i) * c + j];
      }
    });
  return y;
}

Tensor Graph::affine(const Tensor& x, const Tensor& w, const Tensor& b) {
  return b.defined() ? add_rowvec(matmul(x, w), b) : matmul(x, w);
}

Tensor Graph::rows(const Tensor& table, const std::vector<int>& ids) {
  check_rank2(table, "rows");
  const int v = table.shape()[0], c = table.shape()[1];
  for (int id : ids)
    if (id < 0 || id >= v) throw ShapeMismatch("rows: index out of range");
  Tensor y = make({static_cast<int>(ids.size()), c}, table.requires_grad());
  for (size_t i = 0; i < ids.size(); ++i)
    std::copy_n(table.data() + static_cast<int64_t>(ids[i]) * c, c, y.data() + static_cast<int64_t>(i) * c);
  if (y.requires_grad())
    record([table, y, ids, c]() mutable {
      const float* gy = y.grad();
      float* gt = table.grad();
      for (size_t i = 0; i < ids.size(); ++i)
        for (int j = 0; j < c; ++j) gt[static_cast<int64_t>(ids[i]) * c + j] += gy[static_cast<int64_t>(i) * c + j];
    });
  return y;
}

Tensor Graph::select_cols(const Tensor& x, const std::vector<int>& ids) {
  check_rank2(x, "select_cols");
  const int r = x.shape()[0], c = x.shape()[1];
  if (static_cast<int>(ids.size()) != r) throw ShapeMismatch("select_cols: one index per row");
  for (int id : ids)
    if (id < 0 || id >= c) throw ShapeMismatch("select_cols: index out of range");
  Tensor y = make({r}, x.requires_grad());
  for (int i = 0; i < r; ++i) y.data()[i] = x.data()[static_cast<int64_t>(i) * c + ids[i]];
  if (y.requires_grad())
    record([x, y, ids, c]() mutable {
      const float* gy = y.grad();
      float* gx = x.grad();
      for (size_t i = 0; i < ids.size(); ++i) gx[static_cast<int64_t>(i) * c + ids[i]] += gy[i];
    });
  return y;
}

Tensor Graph::concat_cols(const Tensor& a, const Tensor& b) {
  check_rank2(a, "concat_cols");
  check_rank2(b, "concat_cols");
  if (a.shape()[0] != b.shape()[0]) throw ShapeMismatch("concat_cols rows");
  const int r = a.shape()[0], ca = a.shape()[1], cb = b.shape()[1];
  Tensor y = make({r, ca + cb}, a.requires_grad() || b.requires_grad());
  for (int i = 0; i < r; ++i) {
    std::copy_n(a.data() + static_cast<int64_t>(i) * ca, ca, y.data() + static_cast<int64_t>(i) * (ca + cb));
    std::copy_n(b.data() + static_cast<int64_t>(i) * cb, cb, y.data() + static_cast<int64_t>(i) * (ca + cb) + ca);
  }
  if (y.requires_grad())
    record([a, b, y, r, ca, cb]() mutable {
      const float* gy = y.grad();
      for (int i = 0; i < r; ++i) {
        if (a.requires_grad()) {
          float* ga = a.grad();
          for (int j = 0; j < ca; ++j) ga[static_cast<int64_t>(i) * ca + j] += gy[static_cast<int64_t>(i) * (ca + cb) + j];
        }
        if (b.requires_grad()) {
          float* gb = b.grad();
          for (int j = 0; j < cb; ++j) gb[static_cast<int64_t>(i) * cb + j] += gy[static_cast<int64_t>(i) * (ca + cb) + ca + j];
        }
      }
    });
  return y;
}

Tensor Graph::concat_rows(const std::vector<Tensor>& xs) {
  if (xs.empty()) throw ShapeMismatch("concat_rows: empty");
  const size_t rank = xs[0].shape().size();
  const int c = rank >= 2 ? xs[0].shape().back() : 1;
  int64_t total = 0;
  bool needs = false;
  for (const auto& t : xs) {
    if (t.shape().size() != rank || (rank >= 2 && t.shape().back() != c)) throw ShapeMismatch("concat_rows: incompatible");
    total += t.size();
    needs = needs || t.requires_grad();
  }
  Shape out = rank >= 2 ? Shape{static_cast<int>(total / c), c} : Shape{static_cast<int>(total)};
  Tensor y = make(out, needs);
  int64_t off = 0;
  for (const auto& t : xs) {
    std::copy_n(t.data(), t.size(), y.data() + off);
    off += t.size();
  }
  if (y.requires_grad())
    record([xs, y]() mutable {
      const float* gy = y.grad();
      int64_t off = 0;
      for (auto& t : xs) {
        if (t.requires_grad()) {
          float* gt = t.grad();
          for (int64_t i = 0; i < t.size(); ++i) gt[i] += gy[off + i];
        }
        off += t.size();
      }
    });
  return y;
}

Tensor Graph::slice_cols(const Tensor& x, int lo, int hi) {
  check_rank2(x, "slice_cols");
  const int r = x.shape()[0], c = x.shape()[1];
  if (lo < 0 || hi > c || lo >= hi) throw ShapeMismatch("slice_cols bounds");
  const int w = hi - lo;
  Tensor y = make({r, w}, x.requires_grad());
  for (int i = 0; i < r; ++i) std::copy_n(x.data() + static_cast<int64_t>(i) * c + lo, w, y.data() + static_cast<int64_t>(i) * w);
  if (y.requires_grad())
    record([x, y, r, c, lo, w]() mutable {
      const float* gy = y.grad();
      float* gx = x.grad();
      for (int i = 0; i < r; ++i)
        for (int j = 0; j < w; ++j) gx[static_cast<int64_t>(i) * c + lo + j] += gy[static_cast<int64_t>(i) * w + j];
    });
  return y;
}

Tensor Graph::repeat_rows(const Tensor& x, int times) {
  check_rank2(x, "repeat_rows");
  const int r = x.shape()[0], c = x.shape()[1];
  Tensor y = make({r * times, c}, x.requires_grad());
  for (int i = 0; i < r; ++i)
    for (int t = 0; t < times; ++t)
      std::copy_n(x.data() + static_cast<int64_t>(i) * c, c, y.data() + (static_cast<int64_t>(i) * times + t) * c);
  if (y.requires_grad())
    record([x, y, r, c, times]() mutable {
      const float* gy = y.grad();
      float* gx = x.grad();
      for (int i = 0; i < r; ++i)
        for (int t = 0; t < times; ++t)
          for (int j = 0; j < c; ++j) gx[static_cast<int64_t>(i) * c + j] += gy[(static_cast<int64_t>(i) * times + t) * c + j];
    });
  return y;
}

Tensor Graph::scale_rows(const Tensor& x, const Tensor& s) {
  check_rank2(x, "scale_rows");
  const int r = x.shape()[0], c = x.shape()[1];
  if (s.size() != r) throw ShapeMismatch("scale_rows: one scalar per row");
  Tensor y = make(x.shape(), x.requires_grad() || s.requires_grad());
  for (int i = 0; i < r; ++i)
    for (int j = 0; j < c; ++j) y.data()[static_cast<int64_t>(i) * c + j] = x.data()[static_cast<int64_t>(i) * c + j] * s.data()[i];
  if (y.requires_grad())
    record([x, s, y, r, c]() mutable {
      const float* gy = y.grad();
      if (x.requires_grad()) {
        float* gx = x.grad();
        for (int i = 0; i < r; ++i)
          for (int j = 0; j < c; ++j) gx[static_cast<int64_t>(i) * c + j] += gy[static_cast<int64_t>(i) * c + j] * s.data()[i];
      }
      if (s.requires_grad()) {
        float* gs = s.grad();
        for (int i = 0; i < r; ++i) {
          float acc = 0.0f;
          for (int j = 0; j < c; ++j) acc += x.data()[static_cast<int64_t>(i) * c + j] * gy[static_cast<int64_t>(i) * c + j];
          gs[i] += acc;
        }
      }
    });
  return y;
}

Tensor Graph::reduce_sum(const Tensor& x) {
  Tensor y = make({1}, x.requires_grad());
  double acc = 0.0;
  for (int64_t i = 0; i < x.size(); ++i) acc += x.data()[i];
  y.data()[0] = static_cast<float>(acc);
  if (y.requires_grad())
    record([x, y]() mutable {
      const float g = y.grad()[0];
      float* gx = x.grad();
      for (int64_t i = 0; i < x.size(); ++i) gx[i] += g;
    });
  return y;
}

Tensor Graph::reduce_mean(const Tensor& x) {
  Tensor y = make({1}, x.requires_grad());
  double acc = 0.0;
  for (int64_t i = 0; i < x.size(); ++i) acc += x.data()[i];
  y.data()[0] = static_cast<float>(acc / static_cast<double>(x.size()));
  if (y.requires_grad())
    record([x, y]() mutable {
      const float g = y.grad()[0] / static_cast<float>(x.size());
      float* gx = x.grad();
      for (int64_t i = 0; i < x.size(); ++i) gx[i] += g;
    });
  return y;
}

Tensor Graph::reshape(const Tensor& x, const Shape& s) {
  if (shape_size(s) != x.size()) throw ShapeMismatch("reshape size");
  Tensor y = make(s, x.requires_grad());
  std::copy_n(x.data(), x.size(), y.data());
  if (y.requires_grad())
    record([x, y]() mutable {
      const float* gy = y.grad();
      float* gx = x.grad();
      for (int64_t i = 0; i < x.size(); ++i) gx[i] += gy[i];
    });
  return y;
}

Tensor Graph::conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int kh, int kw, int stride) {
  if (x.shape().size() != 4) throw ShapeMismatch("conv2d input must be {B,H,W,C}");
  const int bs = x.shape()[0], h = x.shape()[1], wd = x.shape()[2], ci = x.shape()[3];
  check_rank2(w, "conv2d weight");
  if (w.shape()[0] != kh * kw * ci) throw ShapeMismatch("conv2d weight rows != kh*kw*C");
  const int co = w.shape()[1];
  const int oh = (h - kh) / stride + 1;
  const int ow = (wd - kw) / stride + 1;
  if (oh <= 0 || ow <= 0) throw ShapeMismatch("conv2d output empty");

  const int patch = kh * kw * ci;
  const int orows = bs * oh * ow;
  Tensor col = Tensor::zeros({orows, patch});
  {
    float* pc = col.data();
    const float* px = x.data();
    for (int bi = 0; bi < bs; ++bi)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          float* dst = pc + ((static_cast<int64_t>(bi) * oh + oy) * ow + ox) * patch;
          for (int ky = 0; ky < kh; ++ky) {
            const float* src = px + ((static_cast<int64_t>(bi) * h + oy * stride + ky) * wd + ox * stride) * ci;
            std::copy_n(src, static_cast<int64_t>(kw) * ci, dst + static_cast<int64_t>(ky) * kw * ci);
          }
        }
  }
  // {B,OH,OW,CO} is row-major identical to the {B*OH*OW, CO} gemm output.
  Tensor y = make({bs, oh, ow, co}, x.requires_grad() || w.requires_grad() || (b.defined() && b.requires_grad()));
  kern::gemm_nn(col.data(), w.data(), y.data(), orows, patch, co, false);
  if (b.defined()) {
    if (b.size() != co) throw ShapeMismatch("conv2d bias");
    for (int i = 0; i < orows; ++i)
      for (int j = 0; j < co; ++j) y.data()[static_cast<int64_t>(i) * co + j] += b.data()[j];
  }
  if (y.requires_grad())
    record([x, w, b, col, y, bs, h, wd, ci, kh, kw, stride, oh, ow, patch, orows, co]() mutable {
      const float* gy = y.grad();
      if (w.requires_grad()) kern::gemm_tn(col.data(), gy, w.grad(), patch, orows, co, true);
      if (b.defined() && b.requires_grad()) {
        float* gb = b.grad();
        for (int i = 0; i < orows; ++i)
          for (int j = 0; j < co; ++j) gb[j] += gy[static_cast<int64_t>(i) * co + j];
      }
      if (x.requires_grad()) {
        Tensor gcol = Tensor::zeros({orows, patch});
        kern::gemm_nt(gy, w.data(), gcol.data(), orows, co, patch, false);
        float* gx = x.grad();
        const float* pg = gcol.data();
        for (int bi = 0; bi < bs; ++bi)
          for (int oy = 0; oy < oh; ++oy)
            for (int ox = 0; ox < ow; ++ox) {
              const float* src = pg + ((static_cast<int64_t>(bi) * oh + oy) * ow + ox) * patch;
              for (int ky = 0; ky < kh; ++ky) {
                float* dst = gx + ((static_cast<int64_t>(bi) * h + oy * stride + ky) * wd + ox * stride) * ci;
                for (int t = 0; t < kw * ci; ++t) dst[t] += src[static_cast<int64_t>(ky) * kw * ci + t];
              }
            }
      }
    });
  return y;
}

void Graph::backward(const Tensor& loss) {
  if (loss.size() != 1) throw NotScalarLoss();
  Tensor l = loss;
  if (l.requires_grad()) l.grad()[0] += 1.0f;
  for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->back();
  nodes_.clear();
}

Tensor ParameterSet::add(const std::string& name, Tensor t) {
  if (index_.count(name)) throw std::runtime_error("duplicate parameter name: " + name);
  t.set_requires_grad(true);
  index_[name] = static_cast<int>(items_.size());
  items_.emplace_back(name, t);
  moments_.push_back({std::vector<float>(t.size(), 0.0f), std::vector<float>(t.size(), 0.0f)});
  return t;
}

Tensor ParameterSet::get(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw std::runtime_error("unknown parameter: " + name);
  return items_[it->second].second;
}

bool ParameterSet::has(const std::string& name) const { return index_.count(name) != 0; }

void ParameterSet::zero_grad() {
  for (auto& [name, t] : items_) t.zero_grad();
}

double ParameterSet::grad_norm() const {
  double acc = 0.0;
  for (const auto& [name, t] : items_) {
    if (!t.has_grad()) continue;
    for (float g : t.grad_vec()) acc += static_cast<double>(g) * g;
  }
  return std::sqrt(acc);
}

void ParameterSet::clip_grad_norm(float max_norm) {
  double n = grad_norm();
  if (n <= max_norm || n == 0.0) return;
  float scale = static_cast<float>(max_norm / n);
  for (auto& [name, t] : items_) {
    if (!t.has_grad()) continue;
    float* g = t.grad();
    for (int64_t i = 0; i < t.size(); ++i) g[i] *= scale;
  }
}

void ParameterSet::adam_step(float lr, float beta1, float beta2, float eps) {
  step_ += 1;
  const float c1 = 1.0f - static_cast<float>(std::pow(static_cast<double>(beta1), static_cast<double>(step_)));
  const float c2 = 1.0f - static_cast<float>(std::pow(static_cast<double>(beta2), static_cast<double>(step_)));
  for (size_t p = 0; p < items_.size(); ++p) {
    Tensor& t = items_[p].second;
    float* w = t.data();
    const float* g = t.grad();  // allocates zeros if never touched
    float* m = moments_[p].m.data();
    float* v = moments_[p].v.data();
    for (int64_t i = 0; i < t.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0f - beta1) * g[i];
      v[i] = beta2 * v[i] + (1.0f - beta2) * g[i] * g[i];
      float mhat = m[i] / c1;
      float vhat = v[i] / c2;
      w[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
  }
}

int64_t ParameterSet::value_count() const {
  int64_t n = 0;
  for (const auto& [name, t] : items_) n += t.size();
  return n;
}

}  // namespace taskgrid::ad
