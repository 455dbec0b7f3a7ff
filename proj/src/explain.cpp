#include "eat/explain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <json.hpp>

#include "eat/kernels.hpp"

namespace eat {

ContributionVector ear_scores(const EatModel& model, const Tensor& image, int target_class, EarTarget target) {
  const EatConfig& cfg = model.cfg;
  if (cfg.mode != Mode::Eat)
    throw Error("ear_scores: model has no attribute embedding (baseline mode)");
  if (target_class < 0 || target_class >= cfg.n_classes)
    throw Error("ear_scores: target class " + std::to_string(target_class) + " out of range");

  Tape tape;
  BoundParams bound(tape, const_cast<ParamSet&>(model.params));
  ForwardOutputs out = eat_forward(&tape, ParamView(bound), image, cfg);
  const Tensor& logits = target == EarTarget::Integrated ? out.c_i : out.c;
  Tensor score = pick(&tape, logits, target_class);
  tape.backward(score);

  const std::vector<float>* w = tape.grad(out.e_a);
  if (!w || w->size() != out.e_a.numel()) throw Error("ear_scores: attribute embedding gradient was not retained");

  ContributionVector cv;
  cv.n_attributes = cfg.n_attributes;
  cv.d_e = cfg.d_e;
  cv.target_class = target_class;
  cv.w = *w;
  cv.s.resize(static_cast<std::size_t>(cfg.n_attributes));
  for (int i = 0; i < cfg.n_attributes; ++i) {
    float acc = 0.0f;
    for (int j = 0; j < cfg.d_e; ++j) acc += cv.w[static_cast<std::size_t>(i) * cfg.d_e + static_cast<std::size_t>(j)];
    cv.s[static_cast<std::size_t>(i)] = acc;
  }
  return cv;
}

std::vector<int> top_k_desc(const std::vector<float>& values, int k) {
  std::vector<int> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&values](int a, int b) {
    return values[static_cast<std::size_t>(a)] > values[static_cast<std::size_t>(b)];
  });
  idx.resize(static_cast<std::size_t>(std::min<int>(k, static_cast<int>(values.size()))));
  return idx;
}

AttentionMap grad_cam(const EatModel& model, const Tensor& image, CamTarget target, int layer) {
  const EatConfig& cfg = model.cfg;
  const int blocks = model.trunk_block_count();
  if (layer == -1) layer = blocks - 1;
  if (layer < 0 || layer >= blocks)
    throw Error("grad_cam: invalid trunk layer " + std::to_string(layer) + ", model has " + std::to_string(blocks));

  Tape tape;
  BoundParams bound(tape, const_cast<ParamSet&>(model.params));
  ForwardOutputs out = eat_forward(&tape, ParamView(bound), image, cfg);
  Tensor& act = out.trunk_acts[static_cast<std::size_t>(layer)];
  tape.retain(act);

  Tensor score;
  if (target.kind == CamTarget::Kind::Category) {
    if (target.index < 0 || target.index >= cfg.n_classes) throw Error("grad_cam: class index out of range");
    score = pick(&tape, out.c, target.index);
  } else {
    if (cfg.mode != Mode::Eat) throw Error("grad_cam: baseline model has no attribute heads");
    if (target.index < 0 || target.index >= cfg.n_attributes) throw Error("grad_cam: attribute index out of range");
    // "present" logit of the chosen attribute head
    score = pick(&tape, out.attr_logits[static_cast<std::size_t>(target.index)], 1);
  }
  tape.backward(score);

  const std::vector<float>* grad = tape.grad(act);
  if (!grad || grad->size() != act.numel()) throw Error("grad_cam: activation gradient missing");

  const int c = act.dim(0), h = act.dim(1), w = act.dim(2);
  const float inv_z = 1.0f / static_cast<float>(h * w);
  Tensor raw = Tensor::zeros({h, w});
  for (int k = 0; k < c; ++k) {
    const float* gk = grad->data() + static_cast<std::size_t>(k) * h * w;
    const float* ak = act.data.data() + static_cast<std::size_t>(k) * h * w;
    float alpha = 0.0f;
    for (int i = 0; i < h * w; ++i) alpha += gk[i];
    alpha *= inv_z;
    for (int i = 0; i < h * w; ++i) raw.data[static_cast<std::size_t>(i)] += alpha * ak[i];
  }
  for (float& v : raw.data) v = std::max(v, 0.0f);

  AttentionMap map;
  map.target = target;
  map.layer = layer;
  map.values = Tensor::zeros({cfg.image_size, cfg.image_size});
  kernels::bilinear_resize(raw.data.data(), h, w, map.values.data.data(), cfg.image_size, cfg.image_size);
  return map;
}

Explanation explain_image(const EatModel& model, const Tensor& image, const std::string& image_id,
                          const std::vector<std::string>& attr_names,
                          const std::vector<std::string>& class_names, std::optional<int> true_class,
                          EarTarget target) {
  const EatConfig& cfg = model.cfg;
  if (static_cast<int>(attr_names.size()) != cfg.n_attributes)
    throw Error("explain_image: attribute name count does not match the model");

  Prediction pred = predict(model, image);
  ContributionVector cv = ear_scores(model, image, pred.class_index, target);

  Explanation e;
  e.image_id = image_id;
  e.predicted_class = pred.class_index;
  if (pred.class_index < static_cast<int>(class_names.size()))
    e.predicted_class_name = class_names[static_cast<std::size_t>(pred.class_index)];
  e.true_class = true_class;

  std::ostringstream sentence;
  sentence << "Classified as "
           << (e.predicted_class_name.empty() ? "class " + std::to_string(e.predicted_class)
                                              : e.predicted_class_name)
           << " because: ";
  const std::vector<int> top = top_k_desc(cv.s, 3);
  for (std::size_t r = 0; r < top.size(); ++r) {
    const int i = top[r];
    ExplanationAttribute ea;
    ea.attribute_name = attr_names[static_cast<std::size_t>(i)];
    ea.score = cv.s[static_cast<std::size_t>(i)];
    ea.predicted_presence = pred.attribute_probs[static_cast<std::size_t>(i)];
    ea.map_file = image_id + ".attr" + std::to_string(i) + ".ppm";
    e.top_attributes.push_back(std::move(ea));
    sentence << (r ? ", " : "") << attr_names[static_cast<std::size_t>(i)];
  }
  sentence << ".";
  e.sentence = sentence.str();
  return e;
}

Tensor render_map(const AttentionMap& map, const Tensor& base_image) {
  const Tensor& m = map.values;
  if (base_image.ndim() != 3 || base_image.dim(0) != 3 || base_image.dim(1) != m.dim(0) ||
      base_image.dim(2) != m.dim(1))
    throw Error("render_map: map " + shape_str(m.shape) + " and image " + shape_str(base_image.shape) +
                " sizes disagree");

  float lo = m.data[0], hi = m.data[0];
  for (float v : m.data) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const float range = hi - lo;

  Tensor out = Tensor::zeros(base_image.shape);
  const std::size_t plane = m.numel();
  for (std::size_t p = 0; p < plane; ++p) {
    const float t = range > 0.0f ? (m.data[p] - lo) / range : 0.0f;
    // blue -> cyan -> green -> yellow -> red
    const float r = std::clamp(1.5f - std::abs(4.0f * t - 3.0f), 0.0f, 1.0f);
    const float g = std::clamp(1.5f - std::abs(4.0f * t - 2.0f), 0.0f, 1.0f);
    const float b = std::clamp(1.5f - std::abs(4.0f * t - 1.0f), 0.0f, 1.0f);
    const float heat[3] = {r, g, b};
    for (int c = 0; c < 3; ++c) {
      const std::size_t at = static_cast<std::size_t>(c) * plane + p;
      out.data[at] = 0.5f * base_image.data[at] + 0.5f * heat[c];
    }
  }
  return out;
}

std::string explanation_to_json(const Explanation& e) {
  nlohmann::json j;
  j["image_id"] = e.image_id;
  j["predicted_class"] = e.predicted_class;
  j["predicted_class_name"] = e.predicted_class_name;
  if (e.true_class)
    j["true_class"] = *e.true_class;
  else
    j["true_class"] = nullptr;
  j["top_attributes"] = nlohmann::json::array();
  for (const ExplanationAttribute& a : e.top_attributes) {
    j["top_attributes"].push_back({{"attribute_name", a.attribute_name},
                                   {"score", a.score},
                                   {"predicted_presence", a.predicted_presence},
                                   {"map_file", a.map_file}});
  }
  j["sentence"] = e.sentence;
  return j.dump(2) + "\n";
}

}  // namespace eat
