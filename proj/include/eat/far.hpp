#pragma once

// Foreground Attention Rate: the ratio of mean attention inside a binary
// foreground mask to mean attention outside it. Scale-invariant, so maps
// from differently calibrated models compare directly.

#include <string>
#include <vector>

#include "eat/data.hpp"
#include "eat/explain.hpp"
#include "eat/model.hpp"

namespace eat {

// |at (.) m| / |m|; throws when the region is empty.
double pixel_importance(const Tensor& at, const Tensor& m);

struct FarValue {
  double far = 0.0;
  double pi_fg = 0.0;
  double pi_bg = 0.0;
  bool saturated = false;  // zero background attention; far = pi_fg / epsilon
};

inline constexpr double kFarEpsilon = 1e-8;

// FAR = PI(at, M) / max(PI(at, 1-M), epsilon). Degenerate masks (all
// foreground or all background) are an error, never a silent number.
FarValue far(const Tensor& at, const ForegroundMask& mask);

struct FarRow {
  std::string image_id;
  FarValue value;
};

struct FarReport {
  std::vector<FarRow> per_image;  // ordered by image_id
  std::vector<std::string> skipped;  // ids without a usable mask
  double mean_far = 0.0;
  std::string model_tag;
};

struct FarBatchOptions {
  Split split = Split::Test;
  int layer = -1;            // trunk layer passed to grad_cam
  bool correct_only = false; // restrict to correctly classified images
  std::string model_tag;
  int threads = 1;
};

// Grad-CAM for the predicted class of every masked image in the split,
// followed by far(). Rows come back sorted by image_id regardless of the
// worker count.
FarReport far_batch(const EatModel& model, const Dataset& dataset, const FarBatchOptions& opts = {});

std::string far_report_csv(const FarReport& report);

}  // namespace eat
