#include "eat/nn.hpp"

#include <cmath>

namespace eat {

std::uint64_t Rng::below(std::uint64_t n) {
  if (n == 0) throw Error("Rng::below(0)");
  const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
  std::uint64_t x;
  do {
    x = next();
  } while (x >= limit);
  return x % n;
}

Tensor& ParamSet::add(const std::string& name, Tensor value) {
  if (index_.count(name)) throw Error("duplicate parameter name: " + name);
  order_.push_back(name);
  value.requires_grad = true;
  auto [it, ok] = index_.emplace(name, std::move(value));
  return it->second;
}

Tensor& ParamSet::at(const std::string& name) {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown parameter: " + name);
  return it->second;
}

const Tensor& ParamSet::at(const std::string& name) const {
  auto it = index_.find(name);
  if (it == index_.end()) throw Error("unknown parameter: " + name);
  return it->second;
}

ParamSet init_params(const std::vector<ParamSpec>& specs, std::uint64_t seed) {
  Rng rng(seed);
  ParamSet out;
  for (const ParamSpec& spec : specs) {
    Tensor t = Tensor::zeros(spec.shape);
    if (spec.fan_in > 0) {
      if (spec.fan_out <= 0) throw Error("non-positive fan_out for " + spec.name);
      const float a = std::sqrt(6.0f / static_cast<float>(spec.fan_in + spec.fan_out));
      for (float& v : t.data) v = rng.uniform(-a, a);
    }
    out.add(spec.name, std::move(t));
  }
  return out;
}

const Tensor& BoundParams::at(const std::string& name) {
  auto it = lifted_.find(name);
  if (it == lifted_.end()) it = lifted_.emplace(name, tape_->leaf(params_->at(name))).first;
  return it->second;
}

const Tensor* BoundParams::lifted(const std::string& name) const {
  auto it = lifted_.find(name);
  return it == lifted_.end() ? nullptr : &it->second;
}

Tensor linear(Tape* tp, const Tensor& weight, const Tensor& bias, const Tensor& x) {
  if (weight.ndim() != 2) throw Error("linear: weight must be 2-d, got " + shape_str(weight.shape));
  const int d_out = weight.dim(0), d_in = weight.dim(1);
  if (static_cast<std::size_t>(d_in) != x.numel())
    throw Error("linear: input size " + std::to_string(x.numel()) + " does not match weight " +
                shape_str(weight.shape));
  Tensor col = reshape(tp, x, {d_in, 1});
  Tensor prod = reshape(tp, matmul(tp, weight, col), {d_out});
  return add(tp, prod, bias);
}

Tensor conv_block(Tape* tp, const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride, int pad) {
  return conv2d_bias_relu(tp, input, kernel, bias, stride, pad);
}

Tensor one_hot(int index, int n) {
  if (index < 0 || index >= n) throw Error("one_hot: index " + std::to_string(index) + " out of range");
  Tensor t = Tensor::zeros({n});
  t.data[static_cast<std::size_t>(index)] = 1.0f;
  return t;
}

void SgdMomentum::step(ParamSet& params, const BoundParams& bound) {
  for (const std::string& name : params.names()) {
    const Tensor* lifted = bound.lifted(name);
    if (!lifted || !lifted->grad) continue;
    const std::vector<float>& g = *lifted->grad;
    Tensor& p = params.at(name);
    if (g.size() != p.numel()) throw Error("missing gradient for " + name + " (backward not run?)");
    auto& v = velocity_[name];
    if (v.empty()) v.assign(p.numel(), 0.0f);
    for (std::size_t i = 0; i < p.numel(); ++i) {
      v[i] = momentum_ * v[i] + g[i];
      p.data[i] -= lr_ * v[i];
    }
  }
}

}  // namespace eat
