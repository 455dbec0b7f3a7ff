#include <doctest.h>

#include <fstream>
#include <set>

#include "eat/data.hpp"
#include "eat/image_io.hpp"
#include "helpers.hpp"

using namespace eat;
using testutil::TempDir;

namespace {

SynthSpec tiny_spec(std::uint64_t seed = 1) {
  SynthSpec s;
  s.per_class = 5;
  s.test_per_class = 2;
  s.seed = seed;
  return s;
}

std::string file_bytes(const std::filesystem::path& p) { return read_file(p); }

// Class of the background palette color nearest to the image corner pixel.
int corner_palette_bin(const Sample& s) {
  const auto& palette = synth_background_palette();
  const std::size_t plane = static_cast<std::size_t>(s.image.dim(1)) * s.image.dim(2);
  const float r = s.image.data[0], g = s.image.data[plane], b = s.image.data[2 * plane];
  int best = 0;
  float best_d = 1e9f;
  for (std::size_t i = 0; i < palette.size(); ++i) {
    const float d = (r - palette[i][0]) * (r - palette[i][0]) + (g - palette[i][1]) * (g - palette[i][1]) +
                    (b - palette[i][2]) * (b - palette[i][2]);
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(i);
    }
  }
  return best;
}

bool corner_matches_class_palette(const Sample& s) {
  const auto& c = synth_background_palette()[static_cast<std::size_t>(s.label)];
  const std::size_t plane = static_cast<std::size_t>(s.image.dim(1)) * s.image.dim(2);
  // palette colors round-trip through 8-bit quantization
  return std::abs(s.image.data[0] - c[0]) <= 1.5f / 255.0f &&
         std::abs(s.image.data[plane] - c[1]) <= 1.5f / 255.0f &&
         std::abs(s.image.data[2 * plane] - c[2]) <= 1.5f / 255.0f;
}

}  // namespace

TEST_CASE("generation is byte-identical for a fixed seed") {
  TempDir tmp;
  const auto a = tmp.path() / "a";
  const auto b = tmp.path() / "b";
  synth_generate(tiny_spec(42), a);
  synth_generate(tiny_spec(42), b);

  for (const char* name : {"labels.csv", "split.csv", "attributes.csv", "classes.csv"})
    CHECK(file_bytes(a / name) == file_bytes(b / name));
  for (const auto& entry : std::filesystem::directory_iterator(a / "images")) {
    const auto rel = entry.path().filename();
    CHECK(file_bytes(entry.path()) == file_bytes(b / "images" / rel));
  }

  const auto c = tmp.path() / "c";
  synth_generate(tiny_spec(43), c);
  CHECK(file_bytes(a / "images" / "train_c0_0000.ppm") != file_bytes(c / "images" / "train_c0_0000.ppm"));
}

TEST_CASE("generated dataset round-trips and holds its invariants") {
  TempDir tmp;
  const auto dir = tmp.path() / "ds";
  SynthSpec spec = tiny_spec(7);
  synth_generate(spec, dir);
  Dataset ds = load_dataset(dir);

  CHECK(ds.attributes.n_classes == 8);
  CHECK(ds.attributes.n_attributes == 6);
  CHECK(ds.attributes.separability_warnings().empty());
  CHECK(static_cast<int>(ds.samples.size()) == 8 * (spec.per_class + spec.test_per_class));

  std::set<std::string> train_ids, test_ids;
  for (const Sample& s : ds.samples) {
    // pixels normalized
    for (float v : s.image.data) {
      CHECK(v >= 0.0f);
      CHECK(v <= 1.0f);
    }
    // attributes row equals the matrix row of the label
    CHECK(s.attributes == ds.attributes.row(s.label));
    // masks present, binary, never empty or full-frame
    REQUIRE(s.mask.has_value());
    CHECK(s.mask->foreground_count > 0);
    CHECK(s.mask->background_count() > 0);
    for (float v : s.mask->values.data) CHECK((v == 0.0f || v == 1.0f));
    (s.split == Split::Train ? train_ids : test_ids).insert(s.image_id);
  }
  for (const std::string& id : train_ids) CHECK(test_ids.count(id) == 0);
  CHECK(train_ids.size() == 8u * 5u);
  CHECK(test_ids.size() == 8u * 2u);
}

TEST_CASE("mask matches the rendered object exactly") {
  TempDir tmp;
  const auto dir = tmp.path() / "ds";
  synth_generate(tiny_spec(11), dir);
  Dataset ds = load_dataset(dir);
  // Foreground pixels differ from the flat background; with an exact
  // render-time mask every non-background pixel is inside the mask.
  for (int si = 0; si < 8; ++si) {
    const Sample& s = ds.samples[static_cast<std::size_t>(si)];
    const std::size_t plane = static_cast<std::size_t>(s.image.dim(1)) * s.image.dim(2);
    const float r0 = s.image.data[0], g0 = s.image.data[plane], b0 = s.image.data[2 * plane];
    for (std::size_t p = 0; p < plane; ++p) {
      const bool bg_colored = std::abs(s.image.data[p] - r0) < 2.0f / 255.0f &&
                              std::abs(s.image.data[plane + p] - g0) < 2.0f / 255.0f &&
                              std::abs(s.image.data[2 * plane + p] - b0) < 2.0f / 255.0f;
      if (!bg_colored) CHECK(s.mask->values.data[p] == 1.0f);
    }
  }
}

TEST_CASE("background bias statistics track the bias parameter") {
  TempDir tmp;
  SynthSpec spec;
  spec.per_class = 125;  // 1000 train samples
  spec.test_per_class = 0;
  spec.bias_train = 0.7f;
  spec.seed = 99;
  const auto dir = tmp.path() / "ds";
  synth_generate(spec, dir);
  Dataset ds = load_dataset(dir);

  int matches = 0, total = 0;
  for (const Sample& s : ds.samples) {
    if (s.split != Split::Train) continue;
    ++total;
    if (corner_matches_class_palette(s)) ++matches;
  }
  CHECK(total == 1000);
  const double p = static_cast<double>(matches) / total;
  CHECK(p > 0.65);
  CHECK(p < 0.75);
}

TEST_CASE("bias zero makes background color independent of class") {
  TempDir tmp;
  SynthSpec spec;
  spec.per_class = 125;
  spec.test_per_class = 0;
  spec.bias_train = 0.0f;
  spec.seed = 123;
  const auto dir = tmp.path() / "ds";
  synth_generate(spec, dir);
  Dataset ds = load_dataset(dir);

  // 8x8 contingency table of class vs nearest-palette background bin
  long table[8][8] = {};
  long row[8] = {}, col[8] = {};
  long n = 0;
  for (const Sample& s : ds.samples) {
    const int bin = corner_palette_bin(s);
    ++table[s.label][bin];
    ++row[s.label];
    ++col[bin];
    ++n;
  }
  double chi2 = 0.0;
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) {
      const double expected = static_cast<double>(row[i]) * col[j] / n;
      if (expected > 0) {
        const double d = table[i][j] - expected;
        chi2 += d * d / expected;
      }
    }
  // dof (8-1)*(8-1) = 49; chi2 below the 0.99 quantile means p > 0.01
  CHECK(chi2 < 74.9194743);
}

TEST_CASE("loader reports malformed csv rows by file and line") {
  TempDir tmp;
  const auto dir = tmp.path() / "ds";
  synth_generate(tiny_spec(5), dir);

  SUBCASE("attribute row with wrong arity") {
    std::ofstream out(dir / "attributes.csv", std::ios::app);
    out << "1,0,1\n";
    out.close();
    CHECK_THROWS_WITH_AS(load_dataset(dir), doctest::Contains("attributes.csv line 10"), Error);
  }
  SUBCASE("attribute entry that is not 0/1") {
    std::string text = read_file(dir / "attributes.csv");
    text.replace(text.find("\n0"), 2, "\n7");
    std::ofstream(dir / "attributes.csv", std::ios::trunc) << text;
    CHECK_THROWS_WITH_AS(load_dataset(dir), doctest::Contains("attributes.csv"), Error);
  }
  SUBCASE("label with an unknown split id") {
    std::ofstream out(dir / "labels.csv", std::ios::app);
    out << "ghost,0\n";
    out.close();
    CHECK_THROWS_WITH_AS(load_dataset(dir), doctest::Contains("split.csv"), Error);
  }
  SUBCASE("label out of range") {
    std::ofstream out(dir / "labels.csv", std::ios::app);
    out << "train_c0_0000,12\n";
    out.close();
    CHECK_THROWS_WITH_AS(load_dataset(dir), doctest::Contains("out of range"), Error);
  }
}

TEST_CASE("synth spec validation") {
  SynthSpec s;
  s.n_classes = 1;
  CHECK_THROWS_AS(s.validate(), Error);
  s = SynthSpec{};
  s.n_attributes = 2;  // cannot separate 8 classes
  CHECK_THROWS_AS(s.validate(), Error);
  s = SynthSpec{};
  s.bias_train = 1.5f;
  CHECK_THROWS_AS(s.validate(), Error);
  s = SynthSpec{};
  s.n_classes = 12;
  s.n_attributes = 6;
  CHECK_NOTHROW(s.validate());
}

TEST_CASE("separability warnings fire on duplicate rows") {
  AttributeMatrix m;
  m.n_classes = 2;
  m.n_attributes = 3;
  m.values = {1, 0, 1, 1, 0, 1};
  CHECK(m.separability_warnings().size() == 1);
}

TEST_CASE("cub layout ingestion") {
  TempDir tmp;
  const auto root = tmp.path() / "cub";
  std::filesystem::create_directories(root / "images" / "001.red" );
  std::filesystem::create_directories(root / "images" / "002.blue");
  std::filesystem::create_directories(root / "attributes");
  std::filesystem::create_directories(root / "segmentations" / "001.red");
  std::filesystem::create_directories(root / "segmentations" / "002.blue");

  std::ofstream(root / "classes.txt") << "1 001.red\n2 002.blue\n";
  std::ofstream(root / "attributes" / "attributes.txt") << "1 has_color::red\n2 has_color::blue\n3 has_size::big\n";
  std::ofstream(root / "attributes" / "class_attribute_labels_continuous.txt")
      << "90.0 5.0 55.0\n10.0 80.0 45.0\n";
  std::ofstream(root / "images.txt") << "1 001.red/a.ppm\n2 001.red/b.ppm\n3 002.blue/c.ppm\n";
  std::ofstream(root / "image_class_labels.txt") << "1 1\n2 1\n3 2\n";
  std::ofstream(root / "train_test_split.txt") << "1 1\n2 0\n3 1\n";

  Tensor img = Tensor::full({3, 6, 4}, 0.5f);
  write_ppm(root / "images" / "001.red" / "a.ppm", img);
  write_ppm(root / "images" / "001.red" / "b.ppm", img);
  write_ppm(root / "images" / "002.blue" / "c.ppm", img);
  Tensor seg = Tensor::zeros({6, 4});
  for (int i = 0; i < 8; ++i) seg.data[static_cast<std::size_t>(i)] = 1.0f;
  write_pgm(root / "segmentations" / "001.red" / "a.pgm", seg);

  Dataset ds = load_cub_format(root, 0.5f, 8);
  CHECK(ds.attributes.n_classes == 2);
  CHECK(ds.attributes.n_attributes == 3);
  // thresholded at >50%: class 0 -> (1,0,1), class 1 -> (0,1,0)
  CHECK(ds.attributes.row(0) == std::vector<std::uint8_t>{1, 0, 1});
  CHECK(ds.attributes.row(1) == std::vector<std::uint8_t>{0, 1, 0});
  REQUIRE(ds.samples.size() == 3);
  CHECK(ds.samples[0].image.shape == Shape{3, 8, 8});
  CHECK(ds.samples[0].split == Split::Train);
  CHECK(ds.samples[1].split == Split::Test);
  CHECK(ds.samples[0].mask.has_value());
  CHECK(!ds.samples[1].mask.has_value());
  CHECK(ds.samples[2].label == 1);

  SUBCASE("threshold 1.0 yields the all-zero degenerate matrix") {
    Dataset zeroed = load_cub_format(root, 1.0f, 8);
    for (std::uint8_t v : zeroed.attributes.values) CHECK(v == 0);
  }
  SUBCASE("absent root reports dataset not installed") {
    CHECK_THROWS_WITH_AS(load_cub_format(tmp.path() / "nope"), doctest::Contains("dataset not installed"), Error);
  }
}

TEST_CASE("pnm io round-trips dimensions and quantized values") {
  TempDir tmp;
  Rng rng(5);
  Tensor img = Tensor::from({3, 5, 7}, testutil::random_vec(rng, 105, 0.0f, 1.0f));
  write_ppm(tmp.path() / "x.ppm", img);
  Tensor back = read_ppm(tmp.path() / "x.ppm");
  CHECK(back.shape == img.shape);
  for (std::size_t i = 0; i < img.numel(); ++i) CHECK(std::abs(back.data[i] - img.data[i]) <= 0.5f / 255.0f);

  Tensor plane = Tensor::from({4, 3}, testutil::random_vec(rng, 12, 0.0f, 1.0f));
  write_pgm(tmp.path() / "m.pgm", plane);
  Tensor pback = read_pgm(tmp.path() / "m.pgm");
  CHECK(pback.shape == plane.shape);

  CHECK_THROWS_AS(read_ppm(tmp.path() / "missing.ppm"), Error);
  std::ofstream(tmp.path() / "bad.ppm") << "P3\n1 1\n255\n0 0 0\n";
  CHECK_THROWS_AS(read_ppm(tmp.path() / "bad.ppm"), Error);
}
