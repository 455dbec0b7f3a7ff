#include "eat/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "eat/kernels.hpp"

namespace eat {

void EatConfig::validate() const {
  if (n_classes < 2) throw Error("config: n_classes must be >= 2");
  if (n_attributes < 1) throw Error("config: n_attributes must be >= 1");
  if (d_e < 2) throw Error("config: d_e must be >= 2");
  if (image_size < 2) throw Error("config: image_size must be >= 2");
  if (trunk_channels.empty()) throw Error("config: trunk_channels must be non-empty");
  for (int c : trunk_channels)
    if (c < 1) throw Error("config: trunk channel counts must be positive");
  if (head_channels < 1 || gi_channels < 1) throw Error("config: head channel counts must be positive");
  if (!(lr > 0.0f) || !std::isfinite(lr)) throw Error("config: lr must be positive");
  if (momentum < 0.0f || momentum >= 1.0f) throw Error("config: momentum must be in [0,1)");
  if (epochs < 0) throw Error("config: epochs must be >= 0");
  if (!std::isfinite(lambda) || !std::isfinite(eta)) throw Error("config: lambda/eta must be finite");
}

std::vector<std::string> EatConfig::warnings() const {
  std::vector<std::string> out;
  auto range_warn = [&out](const char* name, float v) {
    out.push_back(std::string("config: ") + name + "=" + std::to_string(v) +
                  " is outside the recommended range [0.5, 1.5]");
  };
  if (lambda < 0.5f || lambda > 1.5f) range_warn("lambda", lambda);
  if (eta != 0.0f && (eta < 0.5f || eta > 1.5f)) range_warn("eta", eta);
  return out;
}

EatModel EatModel::init(const EatConfig& cfg) {
  cfg.validate();
  std::vector<ParamSpec> specs;
  auto conv = [&specs](const std::string& name, int c_out, int c_in) {
    specs.push_back({name + ".kernel", {c_out, c_in, 3, 3}, c_in * 9, c_out * 9});
    specs.push_back({name + ".bias", {c_out}, 0, 0});
  };
  auto fc = [&specs](const std::string& name, int d_out, int d_in) {
    specs.push_back({name + ".weight", {d_out, d_in}, d_in, d_out});
    specs.push_back({name + ".bias", {d_out}, 0, 0});
  };
  auto head = [&](const std::string& prefix, int trunk_out, int n_out, int hc) {
    conv(prefix + ".b1", hc, trunk_out);
    conv(prefix + ".b2", hc, hc);
    fc(prefix + ".fc", n_out, hc);
  };

  int c_in = 3;
  for (std::size_t b = 0; b < cfg.trunk_channels.size(); ++b) {
    conv("trunk.b" + std::to_string(b + 1), cfg.trunk_channels[b], c_in);
    c_in = cfg.trunk_channels[b];
  }
  const int trunk_out = c_in;
  head("gc", trunk_out, cfg.n_classes, cfg.head_channels);
  for (int i = 1; i <= cfg.n_attributes; ++i) head("ga" + std::to_string(i), trunk_out, 2, cfg.head_channels);
  for (int i = 1; i <= cfg.n_attributes; ++i) {
    specs.push_back({"emb_a.u" + std::to_string(i), {cfg.d_e}, 1, cfg.d_e});
    specs.push_back({"emb_a.b" + std::to_string(i), {cfg.d_e}, 0, 0});
  }
  fc("emb_p", cfg.d_e, cfg.n_classes);
  conv("gi.b1", cfg.gi_channels, 1);
  conv("gi.b2", cfg.gi_channels, cfg.gi_channels);
  fc("gi.fc", cfg.n_classes, cfg.gi_channels * (cfg.n_attributes + 1) * cfg.d_e);

  EatModel model;
  model.cfg = cfg;
  model.params = init_params(specs, cfg.seed);
  return model;
}

namespace {

Tensor head_forward(Tape* tp, const ParamView& pv, const std::string& prefix, const Tensor& v_img) {
  Tensor h = conv_block(tp, v_img, pv(prefix + ".b1.kernel"), pv(prefix + ".b1.bias"), 1, 1);
  h = conv_block(tp, h, pv(prefix + ".b2.kernel"), pv(prefix + ".b2.bias"), 1, 1);
  Tensor pooled = avgpool_global(tp, h);
  return linear(tp, pv(prefix + ".fc.weight"), pv(prefix + ".fc.bias"), pooled);
}

}  // namespace

ForwardOutputs eat_forward(Tape* tp, ParamView pv, const Tensor& image, const EatConfig& cfg) {
  if (image.ndim() != 3 || image.dim(0) != 3 || image.dim(1) != cfg.image_size || image.dim(2) != cfg.image_size)
    throw Error("forward: image shape " + shape_str(image.shape) + " does not match configured size " +
                std::to_string(cfg.image_size));
  if (!image.all_finite()) throw Error("forward: non-finite pixel values");

  ForwardOutputs out;
  Tensor h = image;
  for (std::size_t b = 0; b < cfg.trunk_channels.size(); ++b) {
    const std::string name = "trunk.b" + std::to_string(b + 1);
    h = conv_block(tp, h, pv(name + ".kernel"), pv(name + ".bias"), 2, 1);
    out.trunk_acts.push_back(h);
  }
  out.v_img = h;
  out.c_p = head_forward(tp, pv, "gc", out.v_img);

  if (cfg.mode == Mode::Baseline) {
    out.c = mul(tp, out.c_p, Tensor::scalar(cfg.lambda));
    return out;
  }

  std::vector<Tensor> presence;
  std::vector<Tensor> rows;
  presence.reserve(static_cast<std::size_t>(cfg.n_attributes));
  rows.reserve(static_cast<std::size_t>(cfg.n_attributes));
  for (int i = 1; i <= cfg.n_attributes; ++i) {
    Tensor logits = head_forward(tp, pv, "ga" + std::to_string(i), out.v_img);
    Tensor probs = softmax(tp, logits);
    Tensor a_i = pick(tp, probs, 1);
    Tensor row = add(tp, mul(tp, pv("emb_a.u" + std::to_string(i)), a_i), pv("emb_a.b" + std::to_string(i)));
    out.attr_logits.push_back(std::move(logits));
    out.attr_probs.push_back(std::move(probs));
    rows.push_back(reshape(tp, row, {1, cfg.d_e}));
    presence.push_back(std::move(a_i));
  }
  out.a = concat(tp, presence, 0);
  out.e_a = concat(tp, rows, 0);
  if (tp) tp->retain(out.e_a);

  Tensor cp_input = cfg.detach_cp ? detach(out.c_p) : out.c_p;
  out.e_p = reshape(tp, linear(tp, pv("emb_p.weight"), pv("emb_p.bias"), cp_input), {1, cfg.d_e});
  out.e = concat(tp, {out.e_a, out.e_p}, 0);

  Tensor grid = reshape(tp, out.e, {1, cfg.n_attributes + 1, cfg.d_e});
  Tensor g1 = conv_block(tp, grid, pv("gi.b1.kernel"), pv("gi.b1.bias"), 1, 1);
  Tensor g2 = conv_block(tp, g1, pv("gi.b2.kernel"), pv("gi.b2.bias"), 1, 1);
  Tensor flat = reshape(tp, g2, {static_cast<int>(g2.numel())});
  out.c_i = linear(tp, pv("gi.fc.weight"), pv("gi.fc.bias"), flat);

  out.c = add(tp, mul(tp, out.c_p, Tensor::scalar(cfg.lambda)), mul(tp, out.c_i, Tensor::scalar(cfg.eta)));
  return out;
}

LossParts eat_loss(Tape* tp, const ForwardOutputs& out, int label, const std::vector<std::uint8_t>& attr_gt,
                   const EatConfig& cfg) {
  if (label < 0 || label >= cfg.n_classes)
    throw Error("loss: label " + std::to_string(label) + " out of range [0," + std::to_string(cfg.n_classes) + ")");
  LossParts parts;
  const bool integrated = cfg.loss_target == LossTarget::Integrated && cfg.mode == Mode::Eat;
  Tensor class_probs = softmax(tp, integrated ? out.c_i : out.c);
  parts.category = cross_entropy(tp, one_hot(label, cfg.n_classes), class_probs);

  if (cfg.mode == Mode::Baseline) {
    parts.total = mul(tp, parts.category, Tensor::scalar(cfg.lambda));
    return parts;
  }

  if (attr_gt.size() != static_cast<std::size_t>(cfg.n_attributes))
    throw Error("loss: attribute row length " + std::to_string(attr_gt.size()) + " does not match n_attributes");
  Tensor acc;
  for (int i = 0; i < cfg.n_attributes; ++i) {
    const std::uint8_t gt = attr_gt[static_cast<std::size_t>(i)];
    if (gt > 1) throw Error("loss: attribute ground truth must be 0 or 1");
    Tensor ce = cross_entropy(tp, one_hot(gt, 2), out.attr_probs[static_cast<std::size_t>(i)]);
    acc = i == 0 ? ce : add(tp, acc, ce);
  }
  parts.attribute = mul(tp, acc, Tensor::scalar(1.0f / static_cast<float>(cfg.n_attributes)));
  parts.has_attribute = true;
  parts.total =
      add(tp, mul(tp, parts.category, Tensor::scalar(cfg.lambda)), mul(tp, parts.attribute, Tensor::scalar(cfg.eta)));
  return parts;
}

TrainingReport train(EatModel& model, const Dataset& dataset) {
  const EatConfig& cfg = model.cfg;
  cfg.validate();
  if (dataset.attributes.n_classes != cfg.n_classes || dataset.attributes.n_attributes != cfg.n_attributes)
    throw Error("train: dataset has " + std::to_string(dataset.attributes.n_classes) + " classes / " +
                std::to_string(dataset.attributes.n_attributes) + " attributes, config expects " +
                std::to_string(cfg.n_classes) + " / " + std::to_string(cfg.n_attributes));
  std::vector<int> order = dataset.split_indices(Split::Train);
  if (order.empty()) throw Error("train: dataset has no training samples");

  SgdMomentum opt(cfg.lr, cfg.momentum);
  Rng shuffle_rng(cfg.seed ^ 0x5DEECE66DULL);
  const bool eat_mode = cfg.mode == Mode::Eat;

  TrainingReport report;
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    shuffle(order, shuffle_rng);
    double sum_lc = 0.0, sum_la = 0.0;
    long correct = 0, attr_correct = 0;
    for (int si : order) {
      const Sample& s = dataset.samples[static_cast<std::size_t>(si)];
      Tape tape;
      BoundParams bound(tape, model.params);
      ForwardOutputs out = eat_forward(&tape, ParamView(bound), s.image, cfg);
      LossParts parts = eat_loss(&tape, out, s.label, s.attributes, cfg);
      const float total = parts.total.item();
      if (!std::isfinite(total)) throw NonFiniteLossError(epoch);

      sum_lc += parts.category.item();
      if (parts.has_attribute) sum_la += parts.attribute.item();
      if (argmax(out.c) == s.label) ++correct;
      if (eat_mode)
        for (int i = 0; i < cfg.n_attributes; ++i)
          if ((out.a.data[static_cast<std::size_t>(i)] >= 0.5f) ==
              (s.attributes[static_cast<std::size_t>(i)] != 0))
            ++attr_correct;

      tape.backward(parts.total);
      opt.step(model.params, bound);
    }
    const double n = static_cast<double>(order.size());
    EpochStats stats;
    stats.epoch = epoch;
    stats.l_c = sum_lc / n;
    stats.l_a = eat_mode ? sum_la / n : std::numeric_limits<double>::quiet_NaN();
    stats.accuracy = static_cast<double>(correct) / n;
    stats.attr_accuracy = eat_mode ? static_cast<double>(attr_correct) / (n * cfg.n_attributes)
                                   : std::numeric_limits<double>::quiet_NaN();
    report.epochs.push_back(stats);
  }
  return report;
}

Prediction predict(const EatModel& model, const Tensor& image) {
  Prediction p;
  p.outputs = eat_forward(nullptr, ParamView(model.params), image, model.cfg);
  p.class_index = argmax(p.outputs.c);
  if (model.cfg.mode == Mode::Eat) p.attribute_probs = p.outputs.a.data;
  return p;
}

EvalMetrics evaluate(const EatModel& model, const Dataset& dataset, Split split) {
  const EatConfig& cfg = model.cfg;
  if (dataset.attributes.n_classes != cfg.n_classes)
    throw Error("evaluate: class count mismatch between checkpoint and dataset");
  const bool eat_mode = cfg.mode == Mode::Eat;
  if (eat_mode && dataset.attributes.n_attributes != cfg.n_attributes)
    throw Error("evaluate: attribute count mismatch between checkpoint and dataset");

  EvalMetrics metrics;
  std::vector<long> attr_correct(static_cast<std::size_t>(cfg.n_attributes), 0);
  long correct = 0;
  const std::vector<int> indices = dataset.split_indices(split);
  for (int si : indices) {
    const Sample& s = dataset.samples[static_cast<std::size_t>(si)];
    Prediction p = predict(model, s.image);
    if (p.class_index == s.label) ++correct;
    if (eat_mode)
      for (int i = 0; i < cfg.n_attributes; ++i)
        if ((p.attribute_probs[static_cast<std::size_t>(i)] >= 0.5f) ==
            (s.attributes[static_cast<std::size_t>(i)] != 0))
          ++attr_correct[static_cast<std::size_t>(i)];
  }
  metrics.sample_count = static_cast<int>(indices.size());
  if (metrics.sample_count == 0) throw Error("evaluate: selected split is empty");
  metrics.category_accuracy = static_cast<double>(correct) / metrics.sample_count;
  if (eat_mode) {
    double mean = 0.0;
    for (int i = 0; i < cfg.n_attributes; ++i) {
      const double acc = static_cast<double>(attr_correct[static_cast<std::size_t>(i)]) / metrics.sample_count;
      metrics.per_attribute_accuracy.push_back(acc);
      mean += acc;
    }
    metrics.mean_attribute_accuracy = mean / cfg.n_attributes;
  }
  return metrics;
}

// ---------------------------------------------------------------------------
// Float64 shadow evaluation

namespace {

struct DBuf {
  std::vector<double> v;
  int c = 0, h = 0, w = 0;
};

std::vector<double> widen(const Tensor& t) { return std::vector<double>(t.data.begin(), t.data.end()); }

struct ShadowParams {
  const ParamSet* params;
  std::string perturb_name;
  std::size_t perturb_index;
  double delta;

  std::vector<double> operator()(const std::string& name) const {
    std::vector<double> out = widen(params->at(name));
    if (name == perturb_name) out[perturb_index] += delta;
    return out;
  }
};

DBuf shadow_conv_block(const ShadowParams& sp, const std::string& prefix, const DBuf& in, int c_out, int stride,
                       int pad) {
  const std::vector<double> k = sp(prefix + ".kernel");
  const std::vector<double> b = sp(prefix + ".bias");
  DBuf out;
  out.c = c_out;
  out.h = kernels::conv_out_dim(in.h, 3, stride, pad);
  out.w = kernels::conv_out_dim(in.w, 3, stride, pad);
  out.v.resize(static_cast<std::size_t>(out.c) * out.h * out.w);
  kernels::conv2d_forward(in.v.data(), in.c, in.h, in.w, k.data(), c_out, 3, stride, pad, out.v.data(), out.h, out.w);
  for (int ci = 0; ci < out.c; ++ci)
    for (int i = 0; i < out.h * out.w; ++i) {
      double& x = out.v[static_cast<std::size_t>(ci) * out.h * out.w + i];
      x += b[static_cast<std::size_t>(ci)];
      if (x < 0.0) x = 0.0;
    }
  return out;
}

std::vector<double> shadow_linear(const ShadowParams& sp, const std::string& prefix, const std::vector<double>& x) {
  const std::vector<double> w = sp(prefix + ".weight");
  const std::vector<double> b = sp(prefix + ".bias");
  const int d_out = static_cast<int>(b.size());
  const int d_in = static_cast<int>(x.size());
  std::vector<double> out(b);
  for (int i = 0; i < d_out; ++i) {
    double acc = 0.0;
    const double* row = w.data() + static_cast<std::size_t>(i) * d_in;
    for (int j = 0; j < d_in; ++j) acc += row[j] * x[static_cast<std::size_t>(j)];
    out[static_cast<std::size_t>(i)] += acc;
  }
  return out;
}

std::vector<double> shadow_head(const ShadowParams& sp, const std::string& prefix, const DBuf& v_img, int hc) {
  DBuf h = shadow_conv_block(sp, prefix + ".b1", v_img, hc, 1, 1);
  h = shadow_conv_block(sp, prefix + ".b2", h, hc, 1, 1);
  std::vector<double> pooled(static_cast<std::size_t>(h.c));
  kernels::avgpool_global(h.v.data(), h.c, h.h, h.w, pooled.data());
  return shadow_linear(sp, prefix + ".fc", pooled);
}

std::vector<double> shadow_softmax(const std::vector<double>& in) {
  std::vector<double> out(in.size());
  kernels::softmax_rows(in.data(), 1, static_cast<int>(in.size()), out.data());
  return out;
}

}  // namespace

double shadow_loss(const EatModel& model, const Tensor& image, int label,
                   const std::vector<std::uint8_t>& attr_gt, const std::string& perturb_name,
                   std::size_t perturb_index, double delta) {
  const EatConfig& cfg = model.cfg;
  ShadowParams sp{&model.params, perturb_name, perturb_index, delta};

  DBuf h;
  h.c = 3;
  h.h = h.w = cfg.image_size;
  h.v = widen(image);
  for (std::size_t b = 0; b < cfg.trunk_channels.size(); ++b)
    h = shadow_conv_block(sp, "trunk.b" + std::to_string(b + 1), h, cfg.trunk_channels[b], 2, 1);

  const std::vector<double> c_p = shadow_head(sp, "gc", h, cfg.head_channels);

  auto ce = [](const std::vector<double>& gt, const std::vector<double>& p) {
    return kernels::cross_entropy(gt.data(), p.data(), static_cast<int>(p.size()));
  };
  auto onehot = [](int idx, int n) {
    std::vector<double> v(static_cast<std::size_t>(n), 0.0);
    v[static_cast<std::size_t>(idx)] = 1.0;
    return v;
  };

  if (cfg.mode == Mode::Baseline) {
    std::vector<double> c(c_p.size());
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = cfg.lambda * c_p[i];
    return cfg.lambda * ce(onehot(label, cfg.n_classes), shadow_softmax(c));
  }

  std::vector<double> presence;
  std::vector<std::vector<double>> attr_probs;
  std::vector<double> e;  // (N_a+1) x D_e grid, attribute rows first
  for (int i = 1; i <= cfg.n_attributes; ++i) {
    const std::vector<double> logits = shadow_head(sp, "ga" + std::to_string(i), h, cfg.head_channels);
    const std::vector<double> probs = shadow_softmax(logits);
    const double a_i = probs[1];
    presence.push_back(a_i);
    attr_probs.push_back(probs);
    const std::vector<double> u = sp("emb_a.u" + std::to_string(i));
    const std::vector<double> bias = sp("emb_a.b" + std::to_string(i));
    for (int j = 0; j < cfg.d_e; ++j) e.push_back(a_i * u[static_cast<std::size_t>(j)] + bias[static_cast<std::size_t>(j)]);
  }
  const std::vector<double> e_p = shadow_linear(sp, "emb_p", c_p);
  e.insert(e.end(), e_p.begin(), e_p.end());

  DBuf grid;
  grid.c = 1;
  grid.h = cfg.n_attributes + 1;
  grid.w = cfg.d_e;
  grid.v = e;
  DBuf g1 = shadow_conv_block(sp, "gi.b1", grid, cfg.gi_channels, 1, 1);
  DBuf g2 = shadow_conv_block(sp, "gi.b2", g1, cfg.gi_channels, 1, 1);
  const std::vector<double> c_i = shadow_linear(sp, "gi.fc", g2.v);

  std::vector<double> c(c_p.size());
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = cfg.lambda * c_p[i] + cfg.eta * c_i[i];

  const bool integrated = cfg.loss_target == LossTarget::Integrated;
  const double l_c = ce(onehot(label, cfg.n_classes), shadow_softmax(integrated ? c_i : c));
  double l_a = 0.0;
  for (int i = 0; i < cfg.n_attributes; ++i)
    l_a += ce(onehot(attr_gt[static_cast<std::size_t>(i)], 2), attr_probs[static_cast<std::size_t>(i)]);
  l_a /= cfg.n_attributes;
  return cfg.lambda * l_c + cfg.eta * l_a;
}

}  // namespace eat
