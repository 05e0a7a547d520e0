#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "taskgrid/rng.hpp"

namespace taskgrid::ad {

struct ShapeMismatch : std::runtime_error {
  explicit ShapeMismatch(const std::string& what) : std::runtime_error("shape mismatch: " + what) {}
};
struct NotScalarLoss : std::runtime_error {
  NotScalarLoss() : std::runtime_error("backward requires a scalar loss") {}
};

using Shape = std::vector<int>;

int64_t shape_size(const Shape& s);

struct TensorData {
  Shape shape;
  std::vector<float> val;
  std::vector<float> grad;  // allocated on first use
  bool requires_grad = false;
};

// 32-bit float n-d array. Value type over shared storage; gradients live next
// to the values and are populated by Graph::backward.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(const Shape& s, bool requires_grad = false);
  static Tensor full(const Shape& s, float v, bool requires_grad = false);
  static Tensor from(const Shape& s, std::vector<float> vals, bool requires_grad = false);
  static Tensor scalar_of(float v);
  // U(-scale, scale) i.i.d. entries.
  static Tensor uniform(const Shape& s, Rng& rng, float scale, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(d_); }
  const Shape& shape() const { return d_->shape; }
  int64_t size() const { return static_cast<int64_t>(d_->val.size()); }
  int rows() const;  // product of all dims but the last
  int cols() const;  // last dim (1 for rank-0/1... see impl)

  float* data() { return d_->val.data(); }
  const float* data() const { return d_->val.data(); }
  std::vector<float>& values() { return d_->val; }
  const std::vector<float>& values() const { return d_->val; }

  bool requires_grad() const { return d_->requires_grad; }
  void set_requires_grad(bool b) { d_->requires_grad = b; }
  float* grad() const;            // allocates zeros on first call (handle semantics: storage is shared)
  const std::vector<float>& grad_vec() const { return d_->grad; }
  bool has_grad() const { return !d_->grad.empty(); }
  void zero_grad();

  float item() const;  // requires size() == 1

  std::shared_ptr<TensorData> handle() const { return d_; }

 private:
  explicit Tensor(std::shared_ptr<TensorData> d) : d_(std::move(d)) {}
  std::shared_ptr<TensorData> d_;
};

// Records primitive applications in execution order; backward replays the
// record in reverse and accumulates gradients into every tensor that requires
// them. One record per backward pass: backward() consumes the tape.
class Graph {
 public:
  explicit Graph(bool recording = true) : recording_(recording) {}

  bool recording() const { return recording_; }
  size_t node_count() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }

  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor min2(const Tensor& a, const Tensor& b);
  Tensor clamp(const Tensor& x, float lo, float hi);
  Tensor affine_const(const Tensor& x, float k, float c);  // k*x + c elementwise
  Tensor exp_(const Tensor& x);
  Tensor tanh_(const Tensor& x);
  Tensor sigmoid_(const Tensor& x);
  Tensor relu_(const Tensor& x);
  Tensor log_softmax(const Tensor& x);  // over the last dim
  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor add_rowvec(const Tensor& x, const Tensor& b);
  Tensor affine(const Tensor& x, const Tensor& w, const Tensor& b);
  Tensor rows(const Tensor& table, const std::vector<int>& ids);  // embedding lookup / row gather
  Tensor select_cols(const Tensor& x, const std::vector<int>& ids);
  Tensor concat_cols(const Tensor& a, const Tensor& b);
  Tensor concat_rows(const std::vector<Tensor>& xs);
  Tensor slice_cols(const Tensor& x, int lo, int hi);
  Tensor repeat_rows(const Tensor& x, int times);      // rows [r0 x times, r1 x times, ...]
  Tensor scale_rows(const Tensor& x, const Tensor& s);  // per-row scalar multiply
  Tensor reduce_sum(const Tensor& x);
  Tensor reduce_mean(const Tensor& x);
  Tensor reshape(const Tensor& x, const Shape& s);
  // x: {B,H,W,C}; w: {kh*kw*C, OC}; optional bias {OC}; valid padding.
  Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int kh, int kw, int stride);

  void backward(const Tensor& loss);

 private:
  struct Node {
    std::function<void()> back;
  };
  std::vector<Node> nodes_;
  bool recording_;

  Tensor make(const Shape& s, bool needs_grad);
  void record(std::function<void()> fn) { nodes_.push_back(Node{std::move(fn)}); }
  bool track(const Tensor& t) const { return recording_ && t.requires_grad(); }
};

// Named parameters plus Adam state. Iteration order is insertion order.
class ParameterSet {
 public:
  Tensor add(const std::string& name, Tensor t);
  Tensor get(const std::string& name) const;
  bool has(const std::string& name) const;
  const std::vector<std::pair<std::string, Tensor>>& items() const { return items_; }

  void zero_grad();
  double grad_norm() const;
  void clip_grad_norm(float max_norm);
  // Standard bias-corrected Adam; one shared step counter.
  void adam_step(float lr, float beta1, float beta2, float eps);
  int64_t step_count() const { return step_; }
  int64_t value_count() const;

 private:
  struct Moments {
    std::vector<float> m, v;
  };
  std::vector<std::pair<std::string, Tensor>> items_;
  std::map<std::string, int> index_;
  std::vector<Moments> moments_;
  int64_t step_ = 0;
};

}  // namespace taskgrid::ad
