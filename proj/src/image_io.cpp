#include "eat/image_io.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>

#ifdef EAT_WITH_OPENCV
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>
#endif

namespace eat {

namespace {

// Reads one whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  int ch;
  while ((ch = in.get()) != EOF) {
    if (ch == '#') {
      while ((ch = in.get()) != EOF && ch != '\n') {
      }
      continue;
    }
    if (std::isspace(ch)) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(static_cast<char>(ch));
  }
  return tok;
}

struct PnmHeader {
  std::string magic;
  int width = 0, height = 0, maxval = 0;
};

PnmHeader read_header(std::istream& in, const std::filesystem::path& path) {
  PnmHeader h;
  h.magic = next_token(in);
  try {
    h.width = std::stoi(next_token(in));
    h.height = std::stoi(next_token(in));
    h.maxval = std::stoi(next_token(in));
  } catch (const std::exception&) {
    throw Error("malformed netpbm header in " + path.string());
  }
  if (h.width <= 0 || h.height <= 0 || h.maxval <= 0 || h.maxval > 255)
    throw Error("unsupported netpbm header in " + path.string());
  return h;
}

std::uint8_t to_byte(float v) {
  const float clamped = std::min(std::max(v, 0.0f), 1.0f);
  return static_cast<std::uint8_t>(std::lround(clamped * 255.0f));
}

}  // namespace

Tensor read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open image " + path.string());
  const PnmHeader h = read_header(in, path);
  if (h.magic != "P6") throw Error("expected P6 file, got '" + h.magic + "' in " + path.string());
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(h.width) * h.height * 3);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) throw Error("truncated image " + path.string());

  Tensor img = Tensor::zeros({3, h.height, h.width});
  const float scale = 1.0f / static_cast<float>(h.maxval);
  const std::size_t plane = static_cast<std::size_t>(h.height) * h.width;
  for (std::size_t p = 0; p < plane; ++p)
    for (int c = 0; c < 3; ++c)
      img.data[static_cast<std::size_t>(c) * plane + p] = static_cast<float>(raw[p * 3 + c]) * scale;
  return img;
}

void write_ppm(const std::filesystem::path& path, const Tensor& image) {
  if (image.ndim() != 3 || image.dim(0) != 3)
    throw Error("write_ppm expects a {3,H,W} tensor, got " + shape_str(image.shape));
  const int h = image.dim(1), w = image.dim(2);
  std::ostringstream out;
  out << "P6\n" << w << " " << h << "\n255\n";
  const std::size_t plane = static_cast<std::size_t>(h) * w;
  std::string pixels(plane * 3, '\0');
  for (std::size_t p = 0; p < plane; ++p)
    for (int c = 0; c < 3; ++c)
      pixels[p * 3 + static_cast<std::size_t>(c)] =
          static_cast<char>(to_byte(image.data[static_cast<std::size_t>(c) * plane + p]));
  write_file_atomic(path, out.str() + pixels);
}

Tensor read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open mask " + path.string());
  const PnmHeader h = read_header(in, path);
  if (h.magic != "P5") throw Error("expected P5 file, got '" + h.magic + "' in " + path.string());
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(h.width) * h.height);
  in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
  if (static_cast<std::size_t>(in.gcount()) != raw.size()) throw Error("truncated mask " + path.string());

  Tensor plane = Tensor::zeros({h.height, h.width});
  const float scale = 1.0f / static_cast<float>(h.maxval);
  for (std::size_t i = 0; i < raw.size(); ++i) plane.data[i] = static_cast<float>(raw[i]) * scale;
  return plane;
}

void write_pgm(const std::filesystem::path& path, const Tensor& plane) {
  if (plane.ndim() != 2) throw Error("write_pgm expects a {H,W} tensor, got " + shape_str(plane.shape));
  const int h = plane.dim(0), w = plane.dim(1);
  std::ostringstream out;
  out << "P5\n" << w << " " << h << "\n255\n";
  std::string pixels(static_cast<std::size_t>(h) * w, '\0');
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = static_cast<char>(to_byte(plane.data[i]));
  write_file_atomic(path, out.str() + pixels);
}

void write_file_atomic(const std::filesystem::path& path, const std::string& bytes) {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw Error("cannot rename " + tmp.string() + " to " + path.string() + ": " + ec.message());
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

Tensor read_image_any(const std::filesystem::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".ppm") return read_ppm(path);
  if (ext == ".pgm") {
    Tensor g = read_pgm(path);
    Tensor img = Tensor::zeros({3, g.dim(0), g.dim(1)});
    for (int c = 0; c < 3; ++c)
      std::copy(g.data.begin(), g.data.end(), img.data.begin() + static_cast<std::ptrdiff_t>(c) * g.numel());
    return img;
  }
#ifdef EAT_WITH_OPENCV
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw Error("cannot decode image " + path.string());
  Tensor img = Tensor::zeros({3, bgr.rows, bgr.cols});
  const std::size_t plane = static_cast<std::size_t>(bgr.rows) * bgr.cols;
  for (int y = 0; y < bgr.rows; ++y)
    for (int x = 0; x < bgr.cols; ++x) {
      const cv::Vec3b px = bgr.at<cv::Vec3b>(y, x);
      const std::size_t p = static_cast<std::size_t>(y) * bgr.cols + x;
      img.data[p] = px[2] / 255.0f;
      img.data[plane + p] = px[1] / 255.0f;
      img.data[2 * plane + p] = px[0] / 255.0f;
    }
  return img;
#else
  throw Error("cannot decode " + path.string() + ": built without OpenCV, convert images to PPM (P6)");
#endif
}

}  // namespace eat
