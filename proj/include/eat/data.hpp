#pragma once

// Synthetic biased-dataset generation with exact foreground masks, plus
// ingestion of the on-disk layout and of CUB-2011 style directories.
//
// Dataset directory layout:
//   images/<id>.ppm   binary P6, RGB
//   masks/<id>.pgm    binary P5, 0 = background, 255 = foreground
//   labels.csv        id,class_index
//   attributes.csv    one row per class, header = attribute names
//   classes.csv       class_index,class_name
//   split.csv         id,split  (train|test)

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "eat/tensor.hpp"

namespace eat {

struct ForegroundMask {
  Tensor values;  // {H,W}, strictly 0 or 1
  long foreground_count = 0;

  static ForegroundMask from_plane(const Tensor& plane, float threshold = 0.5f);
  long background_count() const { return static_cast<long>(values.numel()) - foreground_count; }
  bool degenerate() const { return foreground_count == 0 || background_count() == 0; }
};

struct AttributeMatrix {
  int n_classes = 0;
  int n_attributes = 0;
  std::vector<std::uint8_t> values;  // n_classes x n_attributes, row-major
  std::vector<std::string> attribute_names;
  std::vector<std::string> class_names;

  std::uint8_t at(int c, int a) const {
    return values[static_cast<std::size_t>(c) * n_attributes + static_cast<std::size_t>(a)];
  }
  std::vector<std::uint8_t> row(int c) const;
  // Pairs of classes with identical rows (separability violations).
  std::vector<std::string> separability_warnings() const;
};

enum class Split { Train, Test };

struct Sample {
  std::string image_id;
  Tensor image;  // {3,H,W} in [0,1]
  int label = 0;
  std::vector<std::uint8_t> attributes;  // the label's row of the matrix
  std::optional<ForegroundMask> mask;
  Split split = Split::Train;
};

struct Dataset {
  std::vector<Sample> samples;
  AttributeMatrix attributes;

  std::vector<int> split_indices(Split s) const;
};

struct SynthSpec {
  int n_classes = 8;
  int n_attributes = 6;
  int per_class = 200;  // train images per class
  int test_per_class = 50;
  int image_size = 32;
  float bias_train = 0.95f;
  float bias_test = 0.0f;
  std::uint64_t seed = 1;

  void validate() const;
};

// Class-linked background colors; with probability `bias` a sample's
// background is its class color, otherwise uniform random RGB.
const std::vector<std::array<float, 3>>& synth_background_palette();

// Renders the dataset into out_dir (directory is replaced atomically).
void synth_generate(const SynthSpec& spec, const std::filesystem::path& out_dir);

Dataset load_dataset(const std::filesystem::path& dir);

// CUB-2011 layout: images.txt, image_class_labels.txt, classes.txt,
// train_test_split.txt, attributes/attributes.txt (or attributes.txt),
// attributes/class_attribute_labels_continuous.txt, images/, optional
// segmentations/. Continuous percentages become binary via value/100 >
// threshold. Images are bilinearly resized to image_size.
Dataset load_cub_format(const std::filesystem::path& root, float threshold = 0.5f, int image_size = 32);

}  // namespace eat
