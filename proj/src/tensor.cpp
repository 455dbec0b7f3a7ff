#include "eat/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "eat/kernels.hpp"

namespace eat {

std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (int d : s) n *= static_cast<std::size_t>(d);
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "(";
  for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << ")";
  return os.str();
}

static void check_shape(const Shape& s) {
  for (int d : s)
    if (d <= 0) throw Error("non-positive dimension in shape " + shape_str(s));
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0f); }

Tensor Tensor::full(Shape shape, float value) {
  check_shape(shape);
  Tensor t;
  t.shape = std::move(shape);
  t.data.assign(shape_numel(t.shape), value);
  return t;
}

Tensor Tensor::from(Shape shape, std::vector<float> values) {
  check_shape(shape);
  if (shape_numel(shape) != values.size())
    throw Error("value count " + std::to_string(values.size()) + " does not match shape " + shape_str(shape));
  Tensor t;
  t.shape = std::move(shape);
  t.data = std::move(values);
  return t;
}

float Tensor::item() const {
  if (numel() != 1) throw Error("item() on non-scalar tensor of shape " + shape_str(shape));
  return data[0];
}

bool Tensor::all_finite() const {
  for (float v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

int argmax(const Tensor& t) {
  if (t.numel() == 0) throw Error("argmax of empty tensor");
  int best = 0;
  for (std::size_t i = 1; i < t.numel(); ++i)
    if (t.data[i] > t.data[best]) best = static_cast<int>(i);
  return best;
}

// ---------------------------------------------------------------------------
// Tape

int Tape::add_node(std::size_t numel, std::function<void(Tape&, int)> backprop) {
  if (consumed_) throw Error("cannot extend a consumed tape");
  Node n;
  n.numel = numel;
  n.backprop = std::move(backprop);
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

Tensor Tape::leaf(const Tensor& value) {
  Tensor out = value;
  out.node = add_node(out.numel(), nullptr);
  out.owner = this;
  if (out.requires_grad) {
    nodes_[static_cast<std::size_t>(out.node)].publish = std::make_shared<std::vector<float>>();
    out.grad = nodes_[static_cast<std::size_t>(out.node)].publish;
  } else {
    out.grad = nullptr;
  }
  return out;
}

void Tape::retain(Tensor& t) {
  if (t.node < 0 || t.owner != this) throw Error("retain: tensor is not on this tape");
  Node& n = nodes_[static_cast<std::size_t>(t.node)];
  if (!n.publish) n.publish = std::make_shared<std::vector<float>>();
  t.grad = n.publish;
}

float* Tape::grad_buffer(int node) {
  Node& n = nodes_[static_cast<std::size_t>(node)];
  if (n.grad.empty()) n.grad.assign(n.numel, 0.0f);
  return n.grad.data();
}

const std::vector<float>* Tape::grad(const Tensor& t) const {
  if (t.node < 0 || t.owner != this) return nullptr;
  const Node& n = nodes_[static_cast<std::size_t>(t.node)];
  return n.publish ? n.publish.get() : nullptr;
}

void Tape::backward(const Tensor& scalar_output) {
  if (consumed_) throw Error("backward called twice on a consumed tape");
  if (scalar_output.node < 0 || scalar_output.owner != this)
    throw Error("backward: output is not on this tape");
  if (scalar_output.numel() != 1)
    throw Error("backward requires a scalar output, got shape " + shape_str(scalar_output.shape));
  consumed_ = true;

  nodes_[static_cast<std::size_t>(scalar_output.node)].grad.assign(1, 1.0f);
  for (int id = scalar_output.node; id >= 0; --id) {
    Node& n = nodes_[static_cast<std::size_t>(id)];
    if (n.grad.empty() || !n.backprop) continue;
    n.backprop(*this, id);
  }
  for (Node& n : nodes_) {
    if (n.publish) {
      if (n.grad.size() == n.numel)
        *n.publish = std::move(n.grad);
      else
        n.publish->assign(n.numel, 0.0f);
    }
    n.grad = {};
    n.backprop = nullptr;
  }
}

// ---------------------------------------------------------------------------
// Op helpers

namespace {

void check_on_tape(Tape* tp, const Tensor& x, const char* op) {
  if (x.node < 0) return;
  if (tp == nullptr)
    throw Error(std::string(op) + ": taped input used without a tape (detach it first)");
  if (x.owner != tp) throw Error(std::string(op) + ": input belongs to another tape");
}

bool tracked(Tape* tp, const Tensor& x) { return tp != nullptr && x.node >= 0; }

// Strides of b per axis of a under trailing-axis alignment; 0 marks broadcast.
std::vector<std::size_t> broadcast_strides(const Shape& a, const Shape& b, const char* op) {
  const int an = static_cast<int>(a.size());
  const int bn = static_cast<int>(b.size());
  if (bn > an)
    throw Error(std::string(op) + ": cannot broadcast " + shape_str(b) + " against " + shape_str(a));
  std::vector<std::size_t> bstrides(b.size());
  std::size_t s = 1;
  for (int j = bn - 1; j >= 0; --j) {
    bstrides[static_cast<std::size_t>(j)] = s;
    s *= static_cast<std::size_t>(b[static_cast<std::size_t>(j)]);
  }
  std::vector<std::size_t> out(a.size(), 0);
  for (int i = an - 1; i >= 0; --i) {
    const int j = i - (an - bn);
    if (j < 0) break;
    const int bd = b[static_cast<std::size_t>(j)];
    if (bd == a[static_cast<std::size_t>(i)])
      out[static_cast<std::size_t>(i)] = bstrides[static_cast<std::size_t>(j)];
    else if (bd != 1)
      throw Error(std::string(op) + ": shape " + shape_str(b) + " does not broadcast against " + shape_str(a));
  }
  return out;
}

// Calls f(ai, bi) for every element of a with the matching b index.
template <class F>
void for_each_pair(const Shape& ashape, const std::vector<std::size_t>& bstr, F&& f) {
  const std::size_t n = shape_numel(ashape);
  const int an = static_cast<int>(ashape.size());
  std::vector<int> coord(ashape.size(), 0);
  std::size_t bi = 0;
  for (std::size_t ai = 0; ai < n; ++ai) {
    f(ai, bi);
    for (int ax = an - 1; ax >= 0; --ax) {
      const std::size_t axs = static_cast<std::size_t>(ax);
      ++coord[axs];
      bi += bstr[axs];
      if (coord[axs] < ashape[axs]) break;
      bi -= static_cast<std::size_t>(ashape[axs]) * bstr[axs];
      coord[axs] = 0;
    }
  }
}

enum class BinOp { Add, Sub, Mul };

Tensor binary_elementwise(Tape* tp, const Tensor& a, const Tensor& b, BinOp kind, const char* name) {
  check_on_tape(tp, a, name);
  check_on_tape(tp, b, name);
  const auto bstr = broadcast_strides(a.shape, b.shape, name);

  Tensor out;
  out.shape = a.shape;
  out.data.resize(a.numel());
  switch (kind) {
    case BinOp::Add:
      for_each_pair(a.shape, bstr, [&](std::size_t ai, std::size_t bi) { out.data[ai] = a.data[ai] + b.data[bi]; });
      break;
    case BinOp::Sub:
      for_each_pair(a.shape, bstr, [&](std::size_t ai, std::size_t bi) { out.data[ai] = a.data[ai] - b.data[bi]; });
      break;
    case BinOp::Mul:
      for_each_pair(a.shape, bstr, [&](std::size_t ai, std::size_t bi) { out.data[ai] = a.data[ai] * b.data[bi]; });
      break;
  }

  if (tracked(tp, a) || tracked(tp, b)) {
    const int anode = a.node, bnode = b.node;
    const Shape ashape = a.shape;
    std::vector<float> adata, bdata;
    if (kind == BinOp::Mul) {
      if (bnode >= 0) adata = a.data;
      if (anode >= 0) bdata = b.data;
    }
    out.node = tp->add_node(
        out.numel(), [anode, bnode, ashape, bstr, adata, bdata, kind](Tape& t, int self) {
          const float* g = t.grad_buffer(self);
          float* ga = anode >= 0 ? t.grad_buffer(anode) : nullptr;
          float* gb = bnode >= 0 ? t.grad_buffer(bnode) : nullptr;
          switch (kind) {
            case BinOp::Add:
              for_each_pair(ashape, bstr, [&](std::size_t ai, std::size_t bi) {
                if (ga) ga[ai] += g[ai];
                if (gb) gb[bi] += g[ai];
              });
              break;
            case BinOp::Sub:
              for_each_pair(ashape, bstr, [&](std::size_t ai, std::size_t bi) {
                if (ga) ga[ai] += g[ai];
                if (gb) gb[bi] -= g[ai];
              });
              break;
            case BinOp::Mul:
              for_each_pair(ashape, bstr, [&](std::size_t ai, std::size_t bi) {
                if (ga) ga[ai] += g[ai] * bdata[bi];
                if (gb) gb[bi] += g[ai] * adata[ai];
              });
              break;
          }
        });
    out.owner = tp;
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Ops

Tensor add(Tape* tp, const Tensor& a, const Tensor& b) { return binary_elementwise(tp, a, b, BinOp::Add, "add"); }
Tensor sub(Tape* tp, const Tensor& a, const Tensor& b) { return binary_elementwise(tp, a, b, BinOp::Sub, "sub"); }
Tensor mul(Tape* tp, const Tensor& a, const Tensor& b) { return binary_elementwise(tp, a, b, BinOp::Mul, "mul"); }

Tensor matmul(Tape* tp, const Tensor& a, const Tensor& b) {
  check_on_tape(tp, a, "matmul");
  check_on_tape(tp, b, "matmul");
  if (a.ndim() != 2 || b.ndim() != 2)
    throw Error("matmul expects 2-d tensors, got " + shape_str(a.shape) + " and " + shape_str(b.shape));
  if (a.dim(1) != b.dim(0))
    throw Error("matmul inner dimensions disagree: " + shape_str(a.shape) + " vs " + shape_str(b.shape));
  const int m = a.dim(0), k = a.dim(1), n = b.dim(1);

  Tensor out;
  out.shape = {m, n};
  out.data.resize(static_cast<std::size_t>(m) * n);
  kernels::matmul(a.data.data(), m, k, b.data.data(), n, out.data.data());

  if (tracked(tp, a) || tracked(tp, b)) {
    const int anode = a.node, bnode = b.node;
    std::vector<float> adata = bnode >= 0 ? a.data : std::vector<float>{};
    std::vector<float> bdata = anode >= 0 ? b.data : std::vector<float>{};
    out.node = tp->add_node(out.numel(), [anode, bnode, adata, bdata, m, k, n](Tape& t, int self) {
      const float* g = t.grad_buffer(self);
      if (anode >= 0) kernels::matmul_backward_a(g, m, n, bdata.data(), k, t.grad_buffer(anode));
      if (bnode >= 0) kernels::matmul_backward_b(g, m, n, adata.data(), k, t.grad_buffer(bnode));
    });
    out.owner = tp;
  }
  return out;
}

namespace {

struct ConvDims {
  int c, h, w, co, k, oh, ow, cols, np;
};

ConvDims conv_dims(const Tensor& input, const Tensor& kernel, int stride, int pad, const char* op) {
  if (input.ndim() != 3) throw Error(std::string(op) + " input must be CxHxW, got " + shape_str(input.shape));
  if (kernel.ndim() != 4 || kernel.dim(2) != kernel.dim(3))
    throw Error(std::string(op) + " kernel must be OxIxKxK, got " + shape_str(kernel.shape));
  if (kernel.dim(1) != input.dim(0))
    throw Error(std::string(op) + " channel mismatch: input " + shape_str(input.shape) + ", kernel " +
                shape_str(kernel.shape));
  if (stride < 1 || pad < 0) throw Error(std::string(op) + ": invalid stride/pad");
  ConvDims d;
  d.c = input.dim(0);
  d.h = input.dim(1);
  d.w = input.dim(2);
  d.co = kernel.dim(0);
  d.k = kernel.dim(2);
  d.oh = kernels::conv_out_dim(d.h, d.k, stride, pad);
  d.ow = kernels::conv_out_dim(d.w, d.k, stride, pad);
  if (d.oh <= 0 || d.ow <= 0)
    throw Error(std::string(op) + ": non-positive output dimension for input " + shape_str(input.shape) +
                ", kernel size " + std::to_string(d.k));
  d.cols = d.c * d.k * d.k;
  d.np = d.oh * d.ow;
  return d;
}

// Shared backward for the conv ops; dout is the gradient at the
// pre-activation output.
void conv_backward_common(Tape& t, const float* dout, const ConvDims& d, int stride, int pad, int inode, int knode,
                          const std::vector<float>& patches, const std::vector<float>& kdata) {
  if (knode >= 0) kernels::conv2d_backward_kernel_cols(dout, patches.data(), d.co, d.cols, d.np, t.grad_buffer(knode));
  if (inode >= 0) {
    std::vector<float> dpatches(patches.size(), 0.0f);
    kernels::conv2d_backward_patches_cols(dout, kdata.data(), d.co, d.cols, d.np, dpatches.data());
    kernels::col2im_t(dpatches.data(), d.c, d.h, d.w, d.k, stride, pad, d.oh, d.ow, t.grad_buffer(inode));
  }
}

}  // namespace

Tensor conv2d(Tape* tp, const Tensor& input, const Tensor& kernel, int stride, int pad) {
  check_on_tape(tp, input, "conv2d");
  check_on_tape(tp, kernel, "conv2d");
  const ConvDims d = conv_dims(input, kernel, stride, pad, "conv2d");

  std::vector<float> patches(static_cast<std::size_t>(d.cols) * d.np);
  kernels::im2col_t(input.data.data(), d.c, d.h, d.w, d.k, stride, pad, d.oh, d.ow, patches.data());

  Tensor out;
  out.shape = {d.co, d.oh, d.ow};
  out.data.resize(static_cast<std::size_t>(d.co) * d.np);
  kernels::conv2d_forward_cols(patches.data(), kernel.data.data(), d.co, d.cols, d.np, out.data.data());

  if (tracked(tp, input) || tracked(tp, kernel)) {
    const int inode = input.node, knode = kernel.node;
    std::vector<float> kdata = inode >= 0 ? kernel.data : std::vector<float>{};
    if (knode < 0) patches.clear();
    out.node = tp->add_node(out.numel(),
                            [inode, knode, d, stride, pad, patches = std::move(patches),
                             kdata = std::move(kdata)](Tape& t, int self) {
                              conv_backward_common(t, t.grad_buffer(self), d, stride, pad, inode, knode, patches,
                                                   kdata);
                            });
    out.owner = tp;
  }
  return out;
}

Tensor conv2d_bias_relu(Tape* tp, const Tensor& input, const Tensor& kernel, const Tensor& bias, int stride,
                        int pad) {
  check_on_tape(tp, input, "conv2d_bias_relu");
  check_on_tape(tp, kernel, "conv2d_bias_relu");
  check_on_tape(tp, bias, "conv2d_bias_relu");
  const ConvDims d = conv_dims(input, kernel, stride, pad, "conv2d_bias_relu");
  if (static_cast<int>(bias.numel()) != d.co)
    throw Error("conv2d_bias_relu: bias size " + std::to_string(bias.numel()) + " does not match " +
                std::to_string(d.co) + " output channels");

  std::vector<float> patches(static_cast<std::size_t>(d.cols) * d.np);
  kernels::im2col_t(input.data.data(), d.c, d.h, d.w, d.k, stride, pad, d.oh, d.ow, patches.data());

  Tensor out;
  out.shape = {d.co, d.oh, d.ow};
  out.data.resize(static_cast<std::size_t>(d.co) * d.np);
  kernels::conv2d_forward_cols(patches.data(), kernel.data.data(), d.co, d.cols, d.np, out.data.data());
  for (int co = 0; co < d.co; ++co) {
    const float b = bias.data[static_cast<std::size_t>(co)];
    float* row = out.data.data() + static_cast<std::size_t>(co) * d.np;
    for (int p = 0; p < d.np; ++p) row[p] = std::max(row[p] + b, 0.0f);
  }

  if (tracked(tp, input) || tracked(tp, kernel) || tracked(tp, bias)) {
    const int inode = input.node, knode = kernel.node, bnode = bias.node;
    std::vector<float> kdata = inode >= 0 ? kernel.data : std::vector<float>{};
    if (knode < 0) patches.clear();
    // out > 0 marks the active units; pre-activation equals out there
    out.node = tp->add_node(
        out.numel(), [inode, knode, bnode, d, stride, pad, patches = std::move(patches), kdata = std::move(kdata),
                      saved = out.data](Tape& t, int self) {
          const float* g = t.grad_buffer(self);
          std::vector<float> dpre(saved.size());
          for (std::size_t i = 0; i < saved.size(); ++i) dpre[i] = saved[i] > 0.0f ? g[i] : 0.0f;
          if (bnode >= 0) {
            float* gb = t.grad_buffer(bnode);
            for (int co = 0; co < d.co; ++co) {
              const float* row = dpre.data() + static_cast<std::size_t>(co) * d.np;
              float acc = 0.0f;
              for (int p = 0; p < d.np; ++p) acc += row[p];
              gb[co] += acc;
            }
          }
          conv_backward_common(t, dpre.data(), d, stride, pad, inode, knode, patches, kdata);
        });
    out.owner = tp;
  }
  return out;
}

Tensor relu(Tape* tp, const Tensor& a) {
  check_on_tape(tp, a, "relu");
  Tensor out;
  out.shape = a.shape;
  out.data.resize(a.numel());
  kernels::relu(a.data.data(), a.numel(), out.data.data());
  if (tracked(tp, a)) {
    const int anode = a.node;
    std::vector<float> saved = a.data;
    out.node = tp->add_node(out.numel(), [anode, saved](Tape& t, int self) {
      const float* g = t.grad_buffer(self);
      float* ga = t.grad_buffer(anode);
      for (std::size_t i = 0; i < saved.size(); ++i)
        if (saved[i] > 0.0f) ga[i] += g[i];
    });
    out.owner = tp;
  }
  return out;
}

Tensor maxpool2d(Tape* tp, const Tensor& a, int k, int stride) {
  check_on_tape(tp, a, "maxpool2d");
  if (a.ndim() != 3) throw Error("maxpool2d input must be CxHxW, got " + shape_str(a.shape));
  if (k < 1 || stride < 1) throw Error("maxpool2d: invalid window/stride");
  const int c = a.dim(0), h = a.dim(1), w = a.dim(2);
  if (k > h || k > w) throw Error("maxpool2d: window larger than input " + shape_str(a.shape));
  const int oh = (h - k) / stride + 1;
  const int ow = (w - k) / stride + 1;

  Tensor out;
  out.shape = {c, oh, ow};
  out.data.resize(static_cast<std::size_t>(c) * oh * ow);
  std::vector<int> arg(out.numel());
  kernels::maxpool2d(a.data.data(), c, h, w, k, stride, out.data.data(), oh, ow, arg.data());

  if (tracked(tp, a)) {
    const int anode = a.node;
    out.node = tp->add_node(out.numel(), [anode, arg](Tape& t, int self) {
      const float* g = t.grad_buffer(self);
      float* ga = t.grad_buffer(anode);
      for (std::size_t i = 0; i < arg.size(); ++i) ga[static_cast<std::size_t>(arg[i])] += g[i];
    });
    out.owner = tp;
  }
  return out;
}

Tensor avgpool_global(Tape* tp, const Tensor& a) {
  check_on_tape(tp, a, "avgpool_global");
  if (a.ndim() != 3) throw Error("avgpool_global input must be CxHxW, got " + shape_str(a.shape));
  const int c = a.dim(0), h = a.dim(1), w = a.dim(2);

  Tensor out;
  out.shape = {c};
  out.data.resize(static_cast<std::size_t>(c));
  kernels::avgpool_global(a.data.data(), c, h, w, out.data.data());

  if (tracked(tp, a)) {
    const int anode = a.node;
    out.node = tp->add_node(out.numel(), [anode, c, h, w](Tape& t, int self) {
      const float* g = t.grad_buffer(self);
      float* ga = t.grad_buffer(anode);
      const float inv = 1.0f / static_cast<float>(h * w);
      for (int ci = 0; ci < c; ++ci) {
        const float gv = g[ci] * inv;
        float* row = ga + static_cast<std::size_t>(ci) * h * w;
        for (int i = 0; i < h * w; ++i) row[i] += gv;
      }
    });
    out.owner = tp;
  }
  return out;
}

Tensor softmax(Tape* tp, const Tensor& a) {
  check_on_tape(tp, a, "softmax");
  if (a.ndim() < 1) throw Error("softmax needs at least one axis");
  const int d = a.dim(a.ndim() - 1);
  const int rows = static_cast<int>(a.numel()) / d;

  Tensor out;
  out.shape = a.shape;
  out.data.resize(a.numel());
  kernels::softmax_rows(a.data.data(), rows, d, out.data.data());

  if (tracked(tp, a)) {
    const int anode = a.node;
    std::vector<float> sm = out.data;
    out.node = tp->add_node(out.numel(), [anode, sm, rows, d](Tape& t, int self) {
      const float* g = t.grad_buffer(self);
      float* ga = t.grad_buffer(anode);
      for (int r = 0; r < rows; ++r) {
        const std::size_t off = static_cast<std::size_t>(r) * d;
        float dot = 0.0f;
        for (int i = 0; i < d; ++i) dot += g[off + i] * sm[off + i];
        for (int i = 0; i < d; ++i) ga[off + i] += sm[off + i] * (g[off + i] - dot);
      }
    });
    out.owner = tp;
  }
  return out;
}

Tensor concat(Tape* tp, const std::vector<Tensor>& parts, int axis) {
  if (parts.empty()) throw Error("concat of zero tensors");
  const Tensor& first = parts.front();
  if (axis < 0 || axis >= first.ndim()) throw Error("concat: axis out of range");
  Shape oshape = first.shape;
  oshape[static_cast<std::size_t>(axis)] = 0;
  for (const Tensor& p : parts) {
    check_on_tape(tp, p, "concat");
    if (p.ndim() != first.ndim()) throw Error("concat: rank mismatch");
    for (int i = 0; i < first.ndim(); ++i)
      if (i != axis && p.dim(i) != first.dim(i))
        throw Error("concat: off-axis shape mismatch " + shape_str(p.shape) + " vs " + shape_str(first.shape));
    oshape[static_cast<std::size_t>(axis)] += p.dim(axis);
  }

  std::size_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= static_cast<std::size_t>(first.dim(i));
  for (int i = axis + 1; i < first.ndim(); ++i) inner *= static_cast<std::size_t>(first.dim(i));

  Tensor out;
  out.shape = oshape;
  out.data.resize(shape_numel(oshape));
  const std::size_t ostride = static_cast<std::size_t>(oshape[static_cast<std::size_t>(axis)]) * inner;
  std::size_t at = 0;
  std::vector<std::size_t> offsets;  // start of each part within one outer block
  std::vector<std::size_t> blocks;   // contiguous bytes each part contributes per outer block
  for (const Tensor& p : parts) {
    const std::size_t block = static_cast<std::size_t>(p.dim(axis)) * inner;
    offsets.push_back(at);
    blocks.push_back(block);
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(p.data.data() + o * block, block, out.data.data() + o * ostride + at);
    at += block;
  }

  bool any = false;
  for (const Tensor& p : parts) any = any || tracked(tp, p);
  if (any) {
    std::vector<int> nodes;
    for (const Tensor& p : parts) nodes.push_back(p.node);
    out.node = tp->add_node(out.numel(), [nodes, offsets, blocks, outer, ostride](Tape& t, int self) {
      const float* g = t.grad_buffer(self);
      for (std::size_t pi = 0; pi < nodes.size(); ++pi) {
        if (nodes[pi] < 0) continue;
        float* gp = t.grad_buffer(nodes[pi]);
        for (std::size_t o = 0; o < outer; ++o) {
          const float* src = g + o * ostride + offsets[pi];
          float* dst = gp + o * blocks[pi];
          for (std::size_t i = 0; i < blocks[pi]; ++i) dst[i] += src[i];
        }
      }
    });
    out.owner = tp;
  }
  return out;
}

Tensor reshape(Tape* tp, const Tensor& a, Shape shape) {
  check_on_tape(tp, a, "reshape");
  check_shape(shape);
  if (shape_numel(shape) != a.numel())
    throw Error("reshape: size mismatch " + shape_str(a.shape) + " -> " + shape_str(shape));
  Tensor out;
  out.shape = std::move(shape);
  out.data = a.data;
  if (tracked(tp, a)) {
    const int anode = a.node;
    const std::size_t n = a.numel();
    out.node = tp->add_node(n, [anode, n](Tape& t, int self) {
      const float* g = t.grad_buffer(self);
      float* ga = t.grad_buffer(anode);
      for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
    });
    out.owner = tp;
  }
  return out;
}

Tensor sum(Tape* tp, const Tensor& a) {
  check_on_tape(tp, a, "sum");
  float acc = 0.0f;
  for (float v : a.data) acc += v;
  Tensor out = Tensor::from({1}, {acc});
  if (tracked(tp, a)) {
    const int anode = a.node;
    const std::size_t n = a.numel();
    out.node = tp->add_node(1, [anode, n](Tape& t, int self) {
      const float g = t.grad_buffer(self)[0];
      float* ga = t.grad_buffer(anode);
      for (std::size_t i = 0; i < n; ++i) ga[i] += g;
    });
    out.owner = tp;
  }
  return out;
}

Tensor pick(Tape* tp, const Tensor& a, int index) {
  check_on_tape(tp, a, "pick");
  if (index < 0 || static_cast<std::size_t>(index) >= a.numel())
    throw Error("pick: index " + std::to_string(index) + " out of range for " + shape_str(a.shape));
  Tensor out = Tensor::from({1}, {a.data[static_cast<std::size_t>(index)]});
  if (tracked(tp, a)) {
    const int anode = a.node;
    out.node = tp->add_node(1, [anode, index](Tape& t, int self) {
      t.grad_buffer(anode)[static_cast<std::size_t>(index)] += t.grad_buffer(self)[0];
    });
    out.owner = tp;
  }
  return out;
}

Tensor cross_entropy(Tape* tp, const Tensor& gt, const Tensor& p) {
  check_on_tape(tp, gt, "cross_entropy");
  check_on_tape(tp, p, "cross_entropy");
  if (gt.numel() != p.numel())
    throw Error("cross_entropy: dimension mismatch " + shape_str(gt.shape) + " vs " + shape_str(p.shape));
  const int d = static_cast<int>(p.numel());
  const float value = kernels::cross_entropy(gt.data.data(), p.data.data(), d);
  Tensor out = Tensor::from({1}, {value});
  if (tracked(tp, p)) {
    const int pnode = p.node;
    std::vector<float> gtdata = gt.data, pdata = p.data;
    out.node = tp->add_node(1, [pnode, gtdata, pdata, d](Tape& t, int self) {
      const float g = t.grad_buffer(self)[0];
      float* gp = t.grad_buffer(pnode);
      const float clamp = static_cast<float>(kernels::kLogClamp);
      for (int i = 0; i < d; ++i)
        if (pdata[i] > clamp) gp[i] -= g * gtdata[i] / (pdata[i] * static_cast<float>(d));
    });
    out.owner = tp;
  }
  return out;
}

Tensor detach(const Tensor& a) {
  Tensor out;
  out.shape = a.shape;
  out.data = a.data;
  return out;
}

}  // namespace eat
