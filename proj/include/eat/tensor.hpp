#pragma once

// Dense float32 tensors with reverse-mode automatic differentiation on an
// explicit tape. Gradients can be retrieved at marked intermediate nodes,
// not only at leaves, which the attribution path relies on.

#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

namespace eat {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

using Shape = std::vector<int>;

std::size_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

class Tape;

class Tensor {
 public:
  Shape shape;
  std::vector<float> data;  // row-major
  bool requires_grad = false;
  int node = -1;            // id on the tape that produced this value, -1 = plain value
  const Tape* owner = nullptr;
  std::shared_ptr<std::vector<float>> grad;  // filled by backward for leaves and retained nodes

  Tensor() = default;

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, float value);
  static Tensor from(Shape shape, std::vector<float> values);
  static Tensor scalar(float value) { return from({1}, {value}); }

  std::size_t numel() const { return data.size(); }
  int ndim() const { return static_cast<int>(shape.size()); }
  int dim(int i) const { return shape[static_cast<std::size_t>(i)]; }
  float item() const;
  bool all_finite() const;
};

// Nodes are appended in execution order, so the single reverse sweep in
// backward() visits them in a valid topological order exactly once.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Copies `value` onto the tape. The returned tensor (and its copies) will
  // expose a gradient after backward() when value.requires_grad is set.
  Tensor leaf(const Tensor& value);

  // Keep this intermediate's gradient through backward (opt-in per node).
  void retain(Tensor& t);

  void backward(const Tensor& scalar_output);
  bool consumed() const { return consumed_; }

  // Used by op closures during the backward sweep.
  float* grad_buffer(int node);
  int add_node(std::size_t numel, std::function<void(Tape&, int)> backprop);
  std::size_t node_count() const { return nodes_.size(); }

  // Published gradient of a leaf or retained tensor; null otherwise.
  const std::vector<float>* grad(const Tensor& t) const;

 private:
  struct Node {
    std::size_t numel = 0;
    std::function<void(Tape&, int)> backprop;
    std::vector<float> grad;
    std::shared_ptr<std::vector<float>> publish;  // set for leaves/retained
  };
  std::vector<Node> nodes_;
  bool consumed_ = false;
};

// Elementwise ops. `b` broadcasts against `a` with trailing-axis alignment:
// b's shape is right-aligned to a's and every axis must match or be 1.
Tensor add(Tape* tp, const Tensor& a, const Tensor& b);
Tensor sub(Tape* tp, const Tensor& a, const Tensor& b);
Tensor mul(Tape* tp, const Tensor& a, const Tensor& b);

Tensor matmul(Tape* tp, const Tensor& a, const Tensor& b);
Tensor conv2d(Tape* tp, const Tensor& input, const Tensor& kernel, int stride, int pad);
// Fused conv2d + per-channel bias + relu, one tape node.
Tensor conv2d_bias_relu(Tape* tp, const Tensor& input, const Tensor& kernel, const Tensor& bias,
                        int stride, int pad);
Tensor relu(Tape* tp, const Tensor& a);
Tensor maxpool2d(Tape* tp, const Tensor& a, int k, int stride);
Tensor avgpool_global(Tape* tp, const Tensor& a);
Tensor softmax(Tape* tp, const Tensor& a);  // over the last axis
Tensor concat(Tape* tp, const std::vector<Tensor>& parts, int axis);
Tensor reshape(Tape* tp, const Tensor& a, Shape shape);
Tensor sum(Tape* tp, const Tensor& a);            // scalar
Tensor pick(Tape* tp, const Tensor& a, int index);  // scalar a[index], row-major
// CE = -(1/D) * sum gt_i * log(max(p_i, 1e-12)); gradient flows into p only.
Tensor cross_entropy(Tape* tp, const Tensor& gt, const Tensor& p);
Tensor detach(const Tensor& a);

int argmax(const Tensor& t);  // ties -> lowest index

}  // namespace eat
