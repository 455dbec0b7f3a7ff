#pragma once

// The multi-task model: shared trunk, category head, per-attribute heads,
// attribute/category embeddings, integrated classifier, weighted fusion
// c = lambda*c_p + eta*c_i, and the joint training objective.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "eat/data.hpp"
#include "eat/nn.hpp"

namespace eat {

enum class Mode { Baseline, Eat };
enum class LossTarget { Fused, Integrated };

struct EatConfig {
  int n_classes = 8;
  int n_attributes = 6;
  int d_e = 16;
  float lambda = 1.0f;
  float eta = 1.0f;
  int image_size = 32;
  std::vector<int> trunk_channels{16, 32, 64, 64};
  int head_channels = 16;
  int gi_channels = 8;
  float lr = 0.01f;
  float momentum = 0.9f;
  int epochs = 30;
  std::uint64_t seed = 1;
  Mode mode = Mode::Eat;
  LossTarget loss_target = LossTarget::Fused;
  bool detach_cp = false;

  void validate() const;
  // Soft advisories: lambda/eta outside [0.5, 1.5]. eta == 0 is the
  // sanctioned baseline setting and is not flagged.
  std::vector<std::string> warnings() const;
};

struct ForwardOutputs {
  Tensor v_img;
  std::vector<Tensor> trunk_acts;   // post-relu output of every trunk block
  Tensor c_p;                       // category head logits {N_c}
  Tensor a;                         // presence probabilities {N_a} (eat mode)
  std::vector<Tensor> attr_logits;  // per attribute {2}
  std::vector<Tensor> attr_probs;   // softmax of attr_logits
  Tensor e_a;                       // {N_a, D_e}, retained on the tape
  Tensor e_p;                       // {1, D_e}
  Tensor e;                         // {N_a+1, D_e}
  Tensor c_i;                       // integrated logits {N_c}
  Tensor c;                         // fused logits {N_c}
};

// Read-through to either tape-lifted or raw parameters.
class ParamView {
 public:
  explicit ParamView(BoundParams& bound) : bound_(&bound) {}
  explicit ParamView(const ParamSet& raw) : raw_(&raw) {}
  const Tensor& operator()(const std::string& name) const {
    return bound_ ? bound_->at(name) : raw_->at(name);
  }

 private:
  BoundParams* bound_ = nullptr;
  const ParamSet* raw_ = nullptr;
};

class EatModel {
 public:
  EatConfig cfg;
  ParamSet params;

  static EatModel init(const EatConfig& cfg);
  int trunk_block_count() const { return static_cast<int>(cfg.trunk_channels.size()); }
};

ForwardOutputs eat_forward(Tape* tp, ParamView pv, const Tensor& image, const EatConfig& cfg);

struct LossParts {
  Tensor total;
  Tensor category;
  Tensor attribute;  // empty in baseline mode
  bool has_attribute = false;
};

LossParts eat_loss(Tape* tp, const ForwardOutputs& out, int label, const std::vector<std::uint8_t>& attr_gt,
                   const EatConfig& cfg);

struct EpochStats {
  int epoch = 0;
  double l_c = 0.0;
  double l_a = 0.0;  // NaN in baseline mode
  double accuracy = 0.0;
  double attr_accuracy = 0.0;  // NaN in baseline mode
};

struct TrainingReport {
  std::vector<EpochStats> epochs;
};

class NonFiniteLossError : public Error {
 public:
  explicit NonFiniteLossError(int epoch)
      : Error("non-finite loss at epoch " + std::to_string(epoch)), epoch(epoch) {}
  int epoch;
};

// SGD with momentum over shuffled training samples; fully deterministic
// for a given seed. Throws NonFiniteLossError when the loss leaves the
// finite range.
TrainingReport train(EatModel& model, const Dataset& dataset);

struct Prediction {
  int class_index = 0;
  std::vector<float> attribute_probs;
  ForwardOutputs outputs;
};

Prediction predict(const EatModel& model, const Tensor& image);

struct EvalMetrics {
  double category_accuracy = 0.0;
  std::optional<double> mean_attribute_accuracy;  // absent for baseline models
  std::vector<double> per_attribute_accuracy;
  int sample_count = 0;
};

EvalMetrics evaluate(const EatModel& model, const Dataset& dataset, Split split);

// Float64 re-evaluation of the full forward + loss used as the shadow side
// of gradient checks: `perturb_name`/`perturb_index`, when set, add `delta`
// to one parameter entry before evaluating.
double shadow_loss(const EatModel& model, const Tensor& image, int label,
                   const std::vector<std::uint8_t>& attr_gt, const std::string& perturb_name = {},
                   std::size_t perturb_index = 0, double delta = 0.0);

}  // namespace eat
