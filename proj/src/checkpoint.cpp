#include "eat/checkpoint.hpp"

#include <bit>
#include <cstring>

#include <zlib.h>

#include "eat/config.hpp"
#include "eat/image_io.hpp"

namespace eat {

namespace {

void put_u32(std::string& out, std::uint32_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>((v >> 8) & 0xff));
  out.push_back(static_cast<char>((v >> 16) & 0xff));
  out.push_back(static_cast<char>((v >> 24) & 0xff));
}

void put_f32(std::string& out, float f) { put_u32(out, std::bit_cast<std::uint32_t>(f)); }

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(bytes_[pos_ + static_cast<std::size_t>(i)]);
    pos_ += 4;
    return v;
  }
  float f32() { return std::bit_cast<float>(u32()); }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }
  std::size_t remaining_to(std::size_t end) const { return end > pos_ ? end - pos_ : 0; }

 private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) throw Error("checkpoint truncated");
  }
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(const std::string& bytes, std::size_t count) {
  return static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(count)));
}

}  // namespace

std::string checkpoint_bytes(const EatModel& model) {
  std::string out(kCheckpointMagic, 8);
  put_u32(out, kCheckpointVersion);
  const std::string cfg_text = eat_config_to_text(model.cfg);
  put_u32(out, static_cast<std::uint32_t>(cfg_text.size()));
  out += cfg_text;

  for (const std::string& name : model.params.names()) {
    const Tensor& t = model.params.at(name);
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(t.shape.size()));
    for (int d : t.shape) put_u32(out, static_cast<std::uint32_t>(d));
    for (float v : t.data) put_f32(out, v);
  }
  put_u32(out, crc_of(out, out.size()));
  return out;
}

EatModel checkpoint_from_bytes(const std::string& bytes) {
  if (bytes.size() < 16) throw Error("checkpoint truncated");
  if (bytes.compare(0, 8, kCheckpointMagic, 8) != 0) throw Error("checkpoint: bad magic");

  const std::size_t body_end = bytes.size() - 4;
  std::uint32_t stored_crc = 0;
  for (int i = 3; i >= 0; --i)
    stored_crc = (stored_crc << 8) | static_cast<unsigned char>(bytes[body_end + static_cast<std::size_t>(i)]);
  if (crc_of(bytes, body_end) != stored_crc) throw Error("checkpoint: crc mismatch, file is corrupted");

  Reader r(bytes);
  r.str(8);  // magic
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion)
    throw Error("checkpoint: unsupported format version " + std::to_string(version));
  const std::uint32_t cfg_len = r.u32();
  if (r.pos() + cfg_len > body_end) throw Error("checkpoint truncated");
  const EatConfig cfg = eat_config_from_text(r.str(cfg_len));

  EatModel model = EatModel::init(cfg);
  std::size_t loaded = 0;
  while (r.pos() < body_end) {
    const std::uint32_t name_len = r.u32();
    if (r.remaining_to(body_end) < name_len) throw Error("checkpoint truncated");
    const std::string name = r.str(name_len);
    const std::uint32_t ndims = r.u32();
    Shape shape;
    for (std::uint32_t i = 0; i < ndims; ++i) shape.push_back(static_cast<int>(r.u32()));
    if (!model.params.has(name)) throw Error("checkpoint: unexpected parameter '" + name + "'");
    Tensor& t = model.params.at(name);
    if (t.shape != shape)
      throw Error("checkpoint: parameter '" + name + "' has shape " + shape_str(shape) + ", expected " +
                  shape_str(t.shape));
    for (float& v : t.data) v = r.f32();
    ++loaded;
  }
  if (loaded != model.params.names().size())
    throw Error("checkpoint: expected " + std::to_string(model.params.names().size()) + " parameters, found " +
                std::to_string(loaded));
  return model;
}

void save_checkpoint(const EatModel& model, const std::filesystem::path& path) {
  write_file_atomic(path, checkpoint_bytes(model));
}

EatModel load_checkpoint(const std::filesystem::path& path) {
  try {
    return checkpoint_from_bytes(read_file(path));
  } catch (const Error& e) {
    throw Error(path.string() + ": " + e.what());
  }
}

}  // namespace eat
