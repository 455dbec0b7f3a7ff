#include "eat/far.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <thread>

namespace eat {

double pixel_importance(const Tensor& at, const Tensor& m) {
  if (at.shape != m.shape)
    throw Error("pixel_importance: shape mismatch " + shape_str(at.shape) + " vs " + shape_str(m.shape));
  double weighted = 0.0, mass = 0.0;
  for (std::size_t i = 0; i < at.numel(); ++i) {
    weighted += static_cast<double>(at.data[i]) * static_cast<double>(m.data[i]);
    mass += static_cast<double>(m.data[i]);
  }
  if (mass == 0.0) throw Error("pixel_importance: empty region");
  return weighted / mass;
}

FarValue far(const Tensor& at, const ForegroundMask& mask) {
  if (at.shape != mask.values.shape)
    throw Error("far: map " + shape_str(at.shape) + " and mask " + shape_str(mask.values.shape) + " disagree");
  if (mask.degenerate())
    throw Error("far: degenerate mask (" + std::to_string(mask.foreground_count) + " of " +
                std::to_string(mask.values.numel()) + " pixels foreground)");

  Tensor background = Tensor::zeros(mask.values.shape);
  for (std::size_t i = 0; i < background.numel(); ++i) background.data[i] = 1.0f - mask.values.data[i];

  FarValue v;
  v.pi_fg = pixel_importance(at, mask.values);
  v.pi_bg = pixel_importance(at, background);
  v.saturated = v.pi_bg == 0.0;
  v.far = v.pi_fg / std::max(v.pi_bg, kFarEpsilon);
  return v;
}

FarReport far_batch(const EatModel& model, const Dataset& dataset, const FarBatchOptions& opts) {
  FarReport report;
  report.model_tag = opts.model_tag;

  std::vector<int> indices = dataset.split_indices(opts.split);
  std::sort(indices.begin(), indices.end(), [&dataset](int a, int b) {
    return dataset.samples[static_cast<std::size_t>(a)].image_id <
           dataset.samples[static_cast<std::size_t>(b)].image_id;
  });

  struct Slot {
    bool used = false;
    bool skipped = false;
    FarRow row;
    std::string id;
  };
  std::vector<Slot> slots(indices.size());

  auto work = [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      const Sample& s = dataset.samples[static_cast<std::size_t>(indices[k])];
      Slot& slot = slots[k];
      slot.id = s.image_id;
      if (!s.mask || s.mask->degenerate()) {
        slot.skipped = true;
        continue;
      }
      Prediction pred = predict(model, s.image);
      if (opts.correct_only && pred.class_index != s.label) continue;
      AttentionMap map = grad_cam(model, s.image, CamTarget::category(pred.class_index), opts.layer);
      slot.row = {s.image_id, far(map.values, *s.mask)};
      slot.used = true;
    }
  };

  const int threads = std::max(1, opts.threads);
  if (threads == 1 || slots.size() < 2) {
    work(0, slots.size());
  } else {
    std::vector<std::thread> pool;
    const std::size_t chunk = (slots.size() + threads - 1) / static_cast<std::size_t>(threads);
    for (std::size_t begin = 0; begin < slots.size(); begin += chunk)
      pool.emplace_back(work, begin, std::min(begin + chunk, slots.size()));
    for (std::thread& t : pool) t.join();
  }

  // Saturated rows carry the sentinel pi_fg/epsilon, not a measurement;
  // they stay in the per-image listing but would dominate the aggregate.
  double acc = 0.0;
  long n = 0;
  for (Slot& slot : slots) {
    if (slot.skipped) {
      report.skipped.push_back(slot.id);
      continue;
    }
    if (!slot.used) continue;
    if (std::isfinite(slot.row.value.far) && !slot.row.value.saturated) {
      acc += slot.row.value.far;
      ++n;
    }
    report.per_image.push_back(std::move(slot.row));
  }
  report.mean_far = n > 0 ? acc / static_cast<double>(n) : 0.0;
  return report;
}

std::string far_report_csv(const FarReport& report) {
  std::ostringstream out;
  out << "image_id,far,pi_fg,pi_bg,saturated\n";
  out.precision(9);
  for (const FarRow& row : report.per_image)
    out << row.image_id << "," << row.value.far << "," << row.value.pi_fg << "," << row.value.pi_bg << ","
        << (row.value.saturated ? 1 : 0) << "\n";
  for (const std::string& id : report.skipped) out << "# skipped (no mask): " << id << "\n";
  out << "mean_far," << report.mean_far << "\n";
  return out.str();
}

}  // namespace eat
