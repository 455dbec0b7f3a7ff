#pragma once

// Parameterized layers and losses on top of the tensor tape: named parameter
// sets with seeded init, the linear / conv+relu building blocks, and SGD
// with momentum.

#include <cstdint>
#include <random>
#include <unordered_map>
#include <vector>

#include "eat/tensor.hpp"

namespace eat {

// Deterministic uniform draws from raw mt19937_64 output. The engine's bit
// stream is pinned by the standard; std::uniform_real_distribution and
// std::shuffle are not, so the mappings live here.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  float uniform() { return static_cast<float>(next() >> 40) * (1.0f / 16777216.0f); }
  float uniform(float lo, float hi) { return lo + (hi - lo) * uniform(); }
  // Unbiased integer in [0, n) by rejection.
  std::uint64_t below(std::uint64_t n);
  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
  for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.below(i)]);
}

struct ParamSpec {
  std::string name;
  Shape shape;
  int fan_in = 0;   // 0 marks a zero-initialized parameter (biases)
  int fan_out = 0;
};

// Named parameter tensors in a stable order; names are unique and address
// entries in checkpoints.
class ParamSet {
 public:
  Tensor& add(const std::string& name, Tensor value);
  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  bool has(const std::string& name) const { return index_.count(name) != 0; }
  const std::vector<std::string>& names() const { return order_; }
  std::size_t size() const { return order_.size(); }

 private:
  std::vector<std::string> order_;
  std::unordered_map<std::string, Tensor> index_;
};

// Weights ~ uniform(-a, a) with a = sqrt(6/(fan_in+fan_out)), biases zero;
// a pure function of (specs, seed).
ParamSet init_params(const std::vector<ParamSpec>& specs, std::uint64_t seed);

// Parameters lifted onto a tape for one forward/backward pass. Lifting is
// lazy, so a pass only tapes the parameters it actually touches.
class BoundParams {
 public:
  BoundParams(Tape& tape, ParamSet& params) : tape_(&tape), params_(&params) {}
  const Tensor& at(const std::string& name);            // lifts on first use
  const Tensor* lifted(const std::string& name) const;  // null if never used
  ParamSet& storage() { return *params_; }

 private:
  Tape* tape_;
  ParamSet* params_;
  std::unordered_map<std::string, Tensor> lifted_;
};

// out = W x + b with W of shape {d_out, d_in}, x of shape {d_in}.
Tensor linear(Tape* tp, const Tensor& weight, const Tensor& bias, const Tensor& x);
// conv2d + per-channel bias + relu.
Tensor conv_block(Tape* tp, const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride, int pad);

Tensor one_hot(int index, int n);

class SgdMomentum {
 public:
  SgdMomentum(float lr, float momentum) : lr_(lr), momentum_(momentum) {}
  // v = momentum * v + g;  p -= lr * v
  void step(ParamSet& params, const BoundParams& bound);

 private:
  float lr_, momentum_;
  std::unordered_map<std::string, std::vector<float>> velocity_;
};

}  // namespace eat
