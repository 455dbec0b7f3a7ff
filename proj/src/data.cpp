#include "eat/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include "eat/image_io.hpp"
#include "eat/kernels.hpp"
#include "eat/nn.hpp"

namespace eat {

ForegroundMask ForegroundMask::from_plane(const Tensor& plane, float threshold) {
  if (plane.ndim() != 2) throw Error("mask must be a {H,W} plane, got " + shape_str(plane.shape));
  ForegroundMask m;
  m.values = Tensor::zeros(plane.shape);
  for (std::size_t i = 0; i < plane.numel(); ++i) {
    const bool fg = plane.data[i] >= threshold;
    m.values.data[i] = fg ? 1.0f : 0.0f;
    if (fg) ++m.foreground_count;
  }
  return m;
}

std::vector<std::uint8_t> AttributeMatrix::row(int c) const {
  if (c < 0 || c >= n_classes) throw Error("class index " + std::to_string(c) + " out of range");
  const auto* base = values.data() + static_cast<std::size_t>(c) * n_attributes;
  return std::vector<std::uint8_t>(base, base + n_attributes);
}

std::vector<std::string> AttributeMatrix::separability_warnings() const {
  std::vector<std::string> out;
  for (int a = 0; a < n_classes; ++a)
    for (int b = a + 1; b < n_classes; ++b)
      if (row(a) == row(b))
        out.push_back("classes " + std::to_string(a) + " and " + std::to_string(b) +
                      " share an identical attribute row");
  return out;
}

std::vector<int> Dataset::split_indices(Split s) const {
  std::vector<int> out;
  for (std::size_t i = 0; i < samples.size(); ++i)
    if (samples[i].split == s) out.push_back(static_cast<int>(i));
  return out;
}

// ---------------------------------------------------------------------------
// Synthetic generation

namespace {

constexpr int kFeatureCount = 6;  // shape_triangle, shape_circle, fill_blue, size_large, has_border, has_stripes

const std::array<const char*, kFeatureCount> kAttributeNames = {
    "shape_triangle", "shape_circle", "fill_blue", "size_large", "has_border", "has_stripes"};

struct ClassRecipe {
  int shape = 0;  // 0 square, 1 circle, 2 triangle
  bool blue = false, large = false, border = false, stripes = false;

  std::array<std::uint8_t, kFeatureCount> bits() const {
    return {static_cast<std::uint8_t>(shape == 2), static_cast<std::uint8_t>(shape == 1),
            static_cast<std::uint8_t>(blue),       static_cast<std::uint8_t>(large),
            static_cast<std::uint8_t>(border),     static_cast<std::uint8_t>(stripes)};
  }

  std::string name() const {
    static const char* shapes[] = {"square", "circle", "triangle"};
    std::string n = std::string(large ? "large" : "small") + "_" + (blue ? "blue" : "red") + "_" + shapes[shape];
    if (border) n += "_bordered";
    if (stripes) n += "_striped";
    return n;
  }
};

// Hand-picked default classes. Rows sit at Hamming distance 1-2 from their
// neighbors, so category prediction from the object needs every bit read
// correctly while each single attribute stays individually easy.
const std::array<ClassRecipe, 8> kDefaultRecipes = {{
    {0, false, false, false, false},
    {0, true, false, false, false},
    {0, false, true, false, false},
    {1, false, false, true, false},
    {1, false, false, false, true},
    {2, false, false, true, true},
    {2, true, true, false, false},
    {1, true, true, true, true},
}};

std::vector<ClassRecipe> make_recipes(int n_classes, int n_attributes) {
  if (n_classes == 8 && n_attributes == kFeatureCount)
    return std::vector<ClassRecipe>(kDefaultRecipes.begin(), kDefaultRecipes.end());
  std::vector<ClassRecipe> out;
  std::set<std::vector<std::uint8_t>> seen;
  for (int k = 0; k < 48 && static_cast<int>(out.size()) < n_classes; ++k) {
    ClassRecipe r;
    r.shape = k % 3;
    r.blue = (k / 3) % 2;
    r.large = (k / 6) % 2;
    r.border = (k / 12) % 2;
    r.stripes = (k / 24) % 2;
    const auto bits = r.bits();
    std::vector<std::uint8_t> truncated(bits.begin(), bits.begin() + n_attributes);
    if (seen.insert(truncated).second) out.push_back(r);
  }
  if (static_cast<int>(out.size()) < n_classes)
    throw Error("synth: " + std::to_string(n_attributes) + " attributes cannot separate " +
                std::to_string(n_classes) + " classes");
  return out;
}

const std::vector<std::array<float, 3>> kBackgroundPalette = {
    {0.56f, 0.56f, 0.20f},  // olive
    {0.20f, 0.56f, 0.26f},  // green
    {0.18f, 0.55f, 0.55f},  // teal
    {0.46f, 0.26f, 0.52f},  // violet
    {0.64f, 0.44f, 0.16f},  // ochre
    {0.38f, 0.38f, 0.38f},  // gray
    {0.76f, 0.70f, 0.54f},  // sand
    {0.16f, 0.26f, 0.42f},  // slate
};

struct RenderedSample {
  Tensor image;
  Tensor mask_plane;
  bool background_from_palette = false;
};

RenderedSample render_sample(const ClassRecipe& recipe, int class_index, int image_size, float bias, Rng& rng) {
  const int s = image_size;
  const float scale = static_cast<float>(s) / 32.0f;

  const bool from_palette = rng.uniform() < bias;
  std::array<float, 3> bg;
  if (from_palette) {
    bg = kBackgroundPalette[static_cast<std::size_t>(class_index) % kBackgroundPalette.size()];
  } else {
    bg = {rng.uniform(), rng.uniform(), rng.uniform()};
  }

  std::array<float, 3> fill = recipe.blue ? std::array<float, 3>{0.16f, 0.30f, 0.86f}
                                          : std::array<float, 3>{0.85f, 0.18f, 0.15f};
  for (float& ch : fill) ch = std::min(1.0f, std::max(0.0f, ch + rng.uniform(-0.08f, 0.08f)));
  std::array<float, 3> border_color{};
  for (int c = 0; c < 3; ++c) border_color[static_cast<std::size_t>(c)] = 0.92f + rng.uniform(0.0f, 0.06f);
  std::array<float, 3> stripe_color = fill;
  for (float& ch : stripe_color) ch *= 0.3f;

  const float radius = recipe.large ? rng.uniform(9.5f, 11.5f) * scale : rng.uniform(6.0f, 7.5f) * scale;
  const float margin = 2.0f * scale;
  const float lo = radius + margin, hi = static_cast<float>(s) - margin - radius;
  const float cx = rng.uniform(lo, hi);
  const float cy = rng.uniform(lo, hi);
  const float theta = rng.uniform(0.0f, 6.2831853f);
  const float ct = std::cos(theta), st = std::sin(theta);
  const float border_width = 2.2f * scale;
  const float stripe_period = std::max(3.5f * scale, radius / 1.7f);

  RenderedSample out;
  out.background_from_palette = from_palette;
  out.image = Tensor::zeros({3, s, s});
  out.mask_plane = Tensor::zeros({s, s});
  const std::size_t plane = static_cast<std::size_t>(s) * s;

  for (int y = 0; y < s; ++y) {
    for (int x = 0; x < s; ++x) {
      const float px = static_cast<float>(x) + 0.5f - cx;
      const float py = static_cast<float>(y) + 0.5f - cy;
      const float u = ct * px + st * py;
      const float v = -st * px + ct * py;

      bool inside = false;
      float edge_dist = 0.0f;  // distance to the shape boundary, inward positive
      switch (recipe.shape) {
        case 0: {  // square inscribed in the circumradius
          const float half = radius * 0.70710678f;
          const float d = std::max(std::abs(u), std::abs(v));
          inside = d <= half;
          edge_dist = half - d;
          break;
        }
        case 1: {  // circle
          const float r = std::sqrt(u * u + v * v);
          inside = r <= radius;
          edge_dist = radius - r;
          break;
        }
        default: {  // equilateral triangle, inradius = R/2
          const float rin = radius * 0.5f;
          // outward edge normals at -90, 30, 150 degrees
          const float d0 = rin - (-v);
          const float d1 = rin - (0.86602540f * u + 0.5f * v);
          const float d2 = rin - (-0.86602540f * u + 0.5f * v);
          edge_dist = std::min(d0, std::min(d1, d2));
          inside = edge_dist >= 0.0f;
          break;
        }
      }

      const std::size_t p = static_cast<std::size_t>(y) * s + x;
      const std::array<float, 3>* color = &bg;
      if (inside) {
        out.mask_plane.data[p] = 1.0f;
        color = &fill;
        if (recipe.stripes) {
          const int band = static_cast<int>(std::floor((v + 64.0f * radius) / stripe_period));
          if (band % 2 == 0) color = &stripe_color;
        }
        if (recipe.border && edge_dist <= border_width) color = &border_color;
      }
      for (int c = 0; c < 3; ++c) out.image.data[static_cast<std::size_t>(c) * plane + p] = (*color)[static_cast<std::size_t>(c)];
    }
  }
  return out;
}

std::string csv_escape_check(const std::string& s) {
  if (s.find(',') != std::string::npos || s.find('\n') != std::string::npos)
    throw Error("value not representable in csv: " + s);
  return s;
}

}  // namespace

const std::vector<std::array<float, 3>>& synth_background_palette() { return kBackgroundPalette; }

void SynthSpec::validate() const {
  if (n_classes < 2) throw Error("synth: n_classes must be >= 2");
  if (n_attributes < 1 || n_attributes > kFeatureCount)
    throw Error("synth: n_attributes must be in [1," + std::to_string(kFeatureCount) + "]");
  int need_bits = 0;
  while ((1 << need_bits) < n_classes) ++need_bits;
  if (n_attributes < need_bits)
    throw Error("synth: need at least ceil(log2(n_classes)) = " + std::to_string(need_bits) + " attributes");
  if (per_class < 1) throw Error("synth: per_class must be >= 1");
  if (test_per_class < 0) throw Error("synth: test_per_class must be >= 0");
  if (image_size < 16) throw Error("synth: image_size must be >= 16");
  if (bias_train < 0.0f || bias_train > 1.0f || bias_test < 0.0f || bias_test > 1.0f)
    throw Error("synth: bias must be in [0,1]");
}

void synth_generate(const SynthSpec& spec, const std::filesystem::path& out_dir) {
  spec.validate();
  const std::vector<ClassRecipe> recipes = make_recipes(spec.n_classes, spec.n_attributes);

  const std::filesystem::path tmp = out_dir.string() + ".tmp-gen";
  std::filesystem::remove_all(tmp);
  std::filesystem::create_directories(tmp / "images");
  std::filesystem::create_directories(tmp / "masks");

  std::ostringstream labels, split_csv;
  labels << "id,class_index\n";
  split_csv << "id,split\n";

  Rng rng(spec.seed);
  char idbuf[64];
  for (int phase = 0; phase < 2; ++phase) {
    const bool is_train = phase == 0;
    const int count = is_train ? spec.per_class : spec.test_per_class;
    const float bias = is_train ? spec.bias_train : spec.bias_test;
    for (int cls = 0; cls < spec.n_classes; ++cls) {
      for (int i = 0; i < count; ++i) {
        std::snprintf(idbuf, sizeof idbuf, "%s_c%d_%04d", is_train ? "train" : "test", cls, i);
        const std::string id = idbuf;
        RenderedSample r = render_sample(recipes[static_cast<std::size_t>(cls)], cls, spec.image_size, bias, rng);
        write_ppm(tmp / "images" / (id + ".ppm"), r.image);
        write_pgm(tmp / "masks" / (id + ".pgm"), r.mask_plane);
        labels << id << "," << cls << "\n";
        split_csv << id << "," << (is_train ? "train" : "test") << "\n";
      }
    }
  }

  std::ostringstream attrs;
  for (int a = 0; a < spec.n_attributes; ++a) attrs << (a ? "," : "") << kAttributeNames[static_cast<std::size_t>(a)];
  attrs << "\n";
  for (const ClassRecipe& r : recipes) {
    const auto bits = r.bits();
    for (int a = 0; a < spec.n_attributes; ++a) attrs << (a ? "," : "") << static_cast<int>(bits[static_cast<std::size_t>(a)]);
    attrs << "\n";
  }

  std::ostringstream classes;
  classes << "class_index,class_name\n";
  for (std::size_t c = 0; c < recipes.size(); ++c) classes << c << "," << csv_escape_check(recipes[c].name()) << "\n";

  write_file_atomic(tmp / "labels.csv", labels.str());
  write_file_atomic(tmp / "split.csv", split_csv.str());
  write_file_atomic(tmp / "attributes.csv", attrs.str());
  write_file_atomic(tmp / "classes.csv", classes.str());

  std::filesystem::remove_all(out_dir);
  std::error_code ec;
  std::filesystem::rename(tmp, out_dir, ec);
  if (ec) throw Error("cannot move generated dataset into place: " + ec.message());
}

// ---------------------------------------------------------------------------
// Loading

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("missing file: " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

int parse_int(const std::string& s, const std::filesystem::path& file, std::size_t lineno) {
  try {
    std::size_t used = 0;
    const int v = std::stoi(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw Error(file.filename().string() + " line " + std::to_string(lineno) + ": expected integer, got '" + s + "'");
  }
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::exists(dir)) throw Error("dataset directory not found: " + dir.string());

  Dataset ds;
  {
    const auto file = dir / "attributes.csv";
    const auto lines = read_lines(file);
    if (lines.empty()) throw Error(file.string() + ": empty");
    ds.attributes.attribute_names = split_csv_line(lines[0]);
    ds.attributes.n_attributes = static_cast<int>(ds.attributes.attribute_names.size());
    for (std::size_t ln = 1; ln < lines.size(); ++ln) {
      if (lines[ln].empty()) continue;
      const auto cells = split_csv_line(lines[ln]);
      if (static_cast<int>(cells.size()) != ds.attributes.n_attributes)
        throw Error("attributes.csv line " + std::to_string(ln + 1) + ": expected " +
                    std::to_string(ds.attributes.n_attributes) + " values, got " + std::to_string(cells.size()));
      for (const std::string& cell : cells) {
        const int v = parse_int(cell, file, ln + 1);
        if (v != 0 && v != 1)
          throw Error("attributes.csv line " + std::to_string(ln + 1) + ": entries must be 0 or 1");
        ds.attributes.values.push_back(static_cast<std::uint8_t>(v));
      }
      ++ds.attributes.n_classes;
    }
  }
  {
    const auto file = dir / "classes.csv";
    const auto lines = read_lines(file);
    for (std::size_t ln = 1; ln < lines.size(); ++ln) {
      if (lines[ln].empty()) continue;
      const auto cells = split_csv_line(lines[ln]);
      if (cells.size() != 2) throw Error("classes.csv line " + std::to_string(ln + 1) + ": expected 2 columns");
      const int idx = parse_int(cells[0], file, ln + 1);
      if (idx != static_cast<int>(ds.attributes.class_names.size()))
        throw Error("classes.csv line " + std::to_string(ln + 1) + ": class indices must be dense and ordered");
      ds.attributes.class_names.push_back(cells[1]);
    }
    if (static_cast<int>(ds.attributes.class_names.size()) != ds.attributes.n_classes)
      throw Error("classes.csv lists " + std::to_string(ds.attributes.class_names.size()) +
                  " classes but attributes.csv has " + std::to_string(ds.attributes.n_classes) + " rows");
  }

  std::unordered_map<std::string, Split> split_of;
  {
    const auto file = dir / "split.csv";
    const auto lines = read_lines(file);
    for (std::size_t ln = 1; ln < lines.size(); ++ln) {
      if (lines[ln].empty()) continue;
      const auto cells = split_csv_line(lines[ln]);
      if (cells.size() != 2) throw Error("split.csv line " + std::to_string(ln + 1) + ": expected 2 columns");
      if (cells[1] != "train" && cells[1] != "test")
        throw Error("split.csv line " + std::to_string(ln + 1) + ": split must be train or test");
      split_of[cells[0]] = cells[1] == "train" ? Split::Train : Split::Test;
    }
  }

  const auto labels_file = dir / "labels.csv";
  const auto lines = read_lines(labels_file);
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    const auto cells = split_csv_line(lines[ln]);
    if (cells.size() != 2) throw Error("labels.csv line " + std::to_string(ln + 1) + ": expected 2 columns");
    Sample s;
    s.image_id = cells[0];
    s.label = parse_int(cells[1], labels_file, ln + 1);
    if (s.label < 0 || s.label >= ds.attributes.n_classes)
      throw Error("labels.csv line " + std::to_string(ln + 1) + ": class index " + std::to_string(s.label) +
                  " out of range");
    const auto sp = split_of.find(s.image_id);
    if (sp == split_of.end()) throw Error("labels.csv line " + std::to_string(ln + 1) + ": id missing from split.csv");
    s.split = sp->second;
    s.attributes = ds.attributes.row(s.label);
    s.image = read_ppm(dir / "images" / (s.image_id + ".ppm"));
    const auto mask_path = dir / "masks" / (s.image_id + ".pgm");
    if (std::filesystem::exists(mask_path)) s.mask = ForegroundMask::from_plane(read_pgm(mask_path));
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// CUB-2011 layout

namespace {

Tensor resize_image(const Tensor& img, int size) {
  if (img.dim(1) == size && img.dim(2) == size) return img;
  Tensor out = Tensor::zeros({3, size, size});
  const std::size_t in_plane = static_cast<std::size_t>(img.dim(1)) * img.dim(2);
  const std::size_t out_plane = static_cast<std::size_t>(size) * size;
  for (int c = 0; c < 3; ++c)
    kernels::bilinear_resize(img.data.data() + static_cast<std::size_t>(c) * in_plane, img.dim(1), img.dim(2),
                             out.data.data() + static_cast<std::size_t>(c) * out_plane, size, size);
  return out;
}

// "<int> rest of line" pairs used across the CUB metadata files.
std::vector<std::pair<int, std::string>> read_indexed(const std::filesystem::path& path) {
  std::vector<std::pair<int, std::string>> out;
  for (const std::string& line : read_lines(path)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    int idx;
    std::string rest;
    if (!(ss >> idx)) throw Error(path.string() + ": malformed line '" + line + "'");
    std::getline(ss, rest);
    while (!rest.empty() && rest.front() == ' ') rest.erase(rest.begin());
    out.emplace_back(idx, rest);
  }
  return out;
}

}  // namespace

Dataset load_cub_format(const std::filesystem::path& root, float threshold, int image_size) {
  if (!std::filesystem::exists(root)) throw Error("dataset not installed: " + root.string());

  Dataset ds;
  for (const auto& [idx, name] : read_indexed(root / "classes.txt")) ds.attributes.class_names.push_back(name);
  ds.attributes.n_classes = static_cast<int>(ds.attributes.class_names.size());

  std::filesystem::path attr_names_file = root / "attributes" / "attributes.txt";
  if (!std::filesystem::exists(attr_names_file)) attr_names_file = root / "attributes.txt";
  for (const auto& [idx, name] : read_indexed(attr_names_file)) ds.attributes.attribute_names.push_back(name);
  ds.attributes.n_attributes = static_cast<int>(ds.attributes.attribute_names.size());

  {
    const auto file = root / "attributes" / "class_attribute_labels_continuous.txt";
    const auto lines = read_lines(file);
    int rows = 0;
    for (const std::string& line : lines) {
      if (line.empty()) continue;
      std::istringstream ss(line);
      double v;
      int cols = 0;
      while (ss >> v) {
        ds.attributes.values.push_back(v / 100.0 > threshold ? 1 : 0);
        ++cols;
      }
      if (cols != ds.attributes.n_attributes)
        throw Error(file.string() + " row " + std::to_string(rows + 1) + ": expected " +
                    std::to_string(ds.attributes.n_attributes) + " values, got " + std::to_string(cols));
      ++rows;
    }
    if (rows != ds.attributes.n_classes)
      throw Error(file.string() + ": expected " + std::to_string(ds.attributes.n_classes) + " rows");
  }

  std::unordered_map<int, std::string> image_paths;
  for (const auto& [idx, rel] : read_indexed(root / "images.txt")) image_paths[idx] = rel;
  std::unordered_map<int, int> image_class;
  for (const auto& [idx, cls] : read_indexed(root / "image_class_labels.txt"))
    image_class[idx] = std::stoi(cls) - 1;
  std::unordered_map<int, int> image_train;
  for (const auto& [idx, flag] : read_indexed(root / "train_test_split.txt")) image_train[idx] = std::stoi(flag);

  std::vector<int> ids;
  ids.reserve(image_paths.size());
  for (const auto& [idx, rel] : image_paths) ids.push_back(idx);
  std::sort(ids.begin(), ids.end());

  const bool has_seg = std::filesystem::exists(root / "segmentations");
  for (int id : ids) {
    const std::string& rel = image_paths.at(id);
    Sample s;
    s.image_id = std::to_string(id);
    const auto cls_it = image_class.find(id);
    if (cls_it == image_class.end()) throw Error("image_class_labels.txt: missing entry for image " + s.image_id);
    s.label = cls_it->second;
    if (s.label < 0 || s.label >= ds.attributes.n_classes)
      throw Error("image_class_labels.txt: class out of range for image " + s.image_id);
    const auto tr_it = image_train.find(id);
    if (tr_it == image_train.end()) throw Error("train_test_split.txt: missing entry for image " + s.image_id);
    s.split = tr_it->second == 1 ? Split::Train : Split::Test;
    s.attributes = ds.attributes.row(s.label);
    s.image = resize_image(read_image_any(root / "images" / rel), image_size);
    if (has_seg) {
      std::filesystem::path seg = root / "segmentations" / rel;
      seg.replace_extension(".png");
      if (!std::filesystem::exists(seg)) {
        std::filesystem::path alt = root / "segmentations" / rel;
        alt.replace_extension(".pgm");
        seg = alt;
      }
      if (std::filesystem::exists(seg)) {
        Tensor gray = read_image_any(seg);
        Tensor plane = Tensor::zeros({gray.dim(1), gray.dim(2)});
        const std::size_t n = plane.numel();
        for (std::size_t i = 0; i < n; ++i)
          plane.data[i] = (gray.data[i] + gray.data[n + i] + gray.data[2 * n + i]) / 3.0f;
        Tensor resized = Tensor::zeros({image_size, image_size});
        kernels::bilinear_resize(plane.data.data(), plane.dim(0), plane.dim(1), resized.data.data(), image_size,
                                 image_size);
        s.mask = ForegroundMask::from_plane(resized);
      }
    }
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

}  // namespace eat
