#pragma once

// Attribution and visual explanation: per-attribute contribution scores from
// the gradient of a class score on the attribute embedding, gradient-weighted
// class activation maps with attribute grounding, and rendered overlays.

#include <optional>
#include <string>
#include <vector>

#include "eat/model.hpp"

namespace eat {

enum class EarTarget { Fused, Integrated };

struct ContributionVector {
  std::vector<float> s;                 // length N_a, signed row sums
  std::vector<float> w;                 // the full N_a x D_e gradient, row-major
  int n_attributes = 0;
  int d_e = 0;
  int target_class = 0;
};

// Runs backward from c[target_class] (or c_i[target_class]) and sums the
// gradient rows arriving at the attribute embedding. Scores are signed; no
// absolute value is taken.
ContributionVector ear_scores(const EatModel& model, const Tensor& image, int target_class,
                              EarTarget target = EarTarget::Fused);

// Indices of the k largest values, descending, ties broken by lower index.
std::vector<int> top_k_desc(const std::vector<float>& values, int k);

struct CamTarget {
  enum class Kind { Category, Attribute } kind = Kind::Category;
  int index = 0;

  static CamTarget category(int idx) { return {Kind::Category, idx}; }
  static CamTarget attribute(int idx) { return {Kind::Attribute, idx}; }
};

struct AttentionMap {
  Tensor values;  // {H,W} at input resolution, non-negative
  CamTarget target;
  int layer = 0;  // trunk block index the map was taken from
};

// Channel weights are spatial means of the score gradient at the chosen
// trunk layer; the map is relu of the weighted activation sum, bilinearly
// upsampled to input resolution. layer = -1 selects the last trunk block.
AttentionMap grad_cam(const EatModel& model, const Tensor& image, CamTarget target, int layer = -1);

struct ExplanationAttribute {
  std::string attribute_name;
  float score = 0.0f;
  float predicted_presence = 0.0f;
  std::string map_file;
};

struct Explanation {
  std::string image_id;
  int predicted_class = 0;
  std::string predicted_class_name;
  std::optional<int> true_class;
  std::vector<ExplanationAttribute> top_attributes;  // min(3, N_a), by score desc
  std::string sentence;
};

// Scores the predicted class, selects the top min(3, N_a) attributes and
// renders the one-line textual explanation. map_file entries follow the
// "<image_id>.attr<i>.ppm" naming convention used by the export path.
Explanation explain_image(const EatModel& model, const Tensor& image, const std::string& image_id,
                          const std::vector<std::string>& attr_names,
                          const std::vector<std::string>& class_names, std::optional<int> true_class = {},
                          EarTarget target = EarTarget::Fused);

// Min-max normalizes for display only, colorizes and alpha-blends at 0.5
// over the base image. Returns a {3,H,W} image.
Tensor render_map(const AttentionMap& map, const Tensor& base_image);

std::string explanation_to_json(const Explanation& e);

}  // namespace eat
