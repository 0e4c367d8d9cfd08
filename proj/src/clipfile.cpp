#include "qscreen/clipfile.hpp"

#include <cstring>
#include <fstream>
#include <limits>

namespace qscreen {

namespace {

constexpr char kClipMagic[4] = {'Q', 'V', 'C', '1'};
constexpr char kWeightMagic[4] = {'Q', 'W', 'T', '1'};
constexpr int64_t kMaxElems = int64_t(1) << 31;

[[noreturn]] void fail(const std::filesystem::path& path, int64_t offset, const std::string& what) {
  throw FormatError(path.string() + ": " + what + " at byte offset " + std::to_string(offset));
}

class Reader {
 public:
  Reader(const std::filesystem::path& path) : path_(path), in_(path, std::ios::binary) {
    if (!in_) throw FormatError(path.string() + ": cannot open file");
  }

  int64_t offset() const { return offset_; }

  void read_raw(void* dst, int64_t n, const char* what) {
    in_.read(static_cast<char*>(dst), n);
    if (in_.gcount() != n) {
      fail(path_, offset_ + in_.gcount(), std::string("truncated ") + what + " (need " +
                                              std::to_string(n) + " bytes, got " +
                                              std::to_string(in_.gcount()) + ")");
    }
    offset_ += n;
  }

  uint8_t read_u8(const char* what) {
    uint8_t v;
    read_raw(&v, 1, what);
    return v;
  }

  uint16_t read_u16(const char* what) {
    uint8_t b[2];
    read_raw(b, 2, what);
    return static_cast<uint16_t>(b[0] | (uint16_t(b[1]) << 8));
  }

  uint32_t read_u32(const char* what) {
    uint8_t b[4];
    read_raw(b, 4, what);
    return uint32_t(b[0]) | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) | (uint32_t(b[3]) << 24);
  }

  void expect_magic(const char* magic) {
    char m[4];
    read_raw(m, 4, "magic");
    if (std::memcmp(m, magic, 4) != 0) {
      fail(path_, 0, std::string("bad magic, expected \"") + std::string(magic, 4) + "\"");
    }
  }

  void expect_eof() {
    char c;
    in_.read(&c, 1);
    if (!in_.eof()) fail(path_, offset_, "trailing bytes");
  }

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::ifstream in_;
  int64_t offset_ = 0;
};

class Writer {
 public:
  Writer(const std::filesystem::path& path) : out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw FormatError(path.string() + ": cannot open file for writing");
  }

  void write_raw(const void* src, int64_t n) { out_.write(static_cast<const char*>(src), n); }
  void write_u8(uint8_t v) { write_raw(&v, 1); }
  void write_u16(uint16_t v) {
    uint8_t b[2] = {uint8_t(v & 0xff), uint8_t(v >> 8)};
    write_raw(b, 2);
  }
  void write_u32(uint32_t v) {
    uint8_t b[4] = {uint8_t(v & 0xff), uint8_t((v >> 8) & 0xff), uint8_t((v >> 16) & 0xff),
                    uint8_t(v >> 24)};
    write_raw(b, 4);
  }
  bool ok() { return out_.good(); }

 private:
  std::ofstream out_;
};

static_assert(sizeof(float) == 4 && sizeof(double) == 8);
static_assert(std::numeric_limits<float>::is_iec559, "IEEE-754 floats assumed");

Shape read_dims(Reader& r, int rank) {
  Shape dims(static_cast<size_t>(rank));
  int64_t total = 1;
  for (int i = 0; i < rank; ++i) {
    const uint32_t d = r.read_u32("dims");
    if (d == 0) fail(r.path(), r.offset() - 4, "zero dimension");
    dims[static_cast<size_t>(i)] = static_cast<int>(d);
    total *= d;
    if (d > uint32_t(kMaxElems) || total > kMaxElems) {
      fail(r.path(), r.offset() - 4, "dimension overflow");
    }
  }
  return dims;
}

}  // namespace

Tensor<float> read_clip(const std::filesystem::path& path) {
  Reader r(path);
  r.expect_magic(kClipMagic);
  const uint8_t dtype = r.read_u8("dtype");
  if (dtype != uint8_t(ClipDtype::u8) && dtype != uint8_t(ClipDtype::f32)) {
    fail(path, 4, "unknown clip dtype code " + std::to_string(dtype));
  }
  const uint8_t rank = r.read_u8("rank");
  if (rank != 3 && rank != 4) fail(path, 5, "clip rank must be 3 or 4, got " + std::to_string(rank));
  const Shape dims = read_dims(r, rank);
  const int64_t n = numel(dims);

  std::vector<float> values(static_cast<size_t>(n));
  if (dtype == uint8_t(ClipDtype::u8)) {
    std::vector<uint8_t> raw(static_cast<size_t>(n));
    r.read_raw(raw.data(), n, "payload");
    for (int64_t i = 0; i < n; ++i) values[size_t(i)] = float(raw[size_t(i)]) / 255.0f;
  } else {
    const int64_t payload_at = r.offset();
    r.read_raw(values.data(), n * 4, "payload");
    for (int64_t i = 0; i < n; ++i) {
      const float v = values[size_t(i)];
      if (!(v >= 0.0f && v <= 1.0f)) {
        fail(path, payload_at + i * 4, "float32 clip value outside [0,1]");
      }
    }
  }
  r.expect_eof();
  return Tensor<float>::from_values(dims, std::move(values));
}

void write_clip(const std::filesystem::path& path, const Tensor<float>& clip) {
  if (clip.rank() != 3 && clip.rank() != 4) {
    throw ShapeError("clip must be rank 3 or 4, got " + shape_str(clip.dims()));
  }
  for (float v : clip.values()) {
    if (!(v >= 0.0f && v <= 1.0f)) throw NumericError("clip value outside [0,1]");
  }
  Writer w(path);
  w.write_raw(kClipMagic, 4);
  w.write_u8(uint8_t(ClipDtype::f32));
  w.write_u8(uint8_t(clip.rank()));
  for (int d : clip.dims()) w.write_u32(uint32_t(d));
  w.write_raw(clip.values().data(), clip.size() * 4);
  if (!w.ok()) throw FormatError(path.string() + ": write failed");
}

template <class T>
void write_weights(const std::filesystem::path& path,
                   const std::vector<std::pair<std::string, Tensor<T>>>& params) {
  Writer w(path);
  w.write_raw(kWeightMagic, 4);
  w.write_u32(uint32_t(params.size()));
  for (const auto& [name, tensor] : params) {
    if (name.empty() || name.size() > 0xffff) throw FormatError("bad parameter name: " + name);
    if (tensor.rank() < 1 || tensor.rank() > 8) {
      throw ShapeError("weight rank must be 1..8, got " + shape_str(tensor.dims()));
    }
    w.write_u16(uint16_t(name.size()));
    w.write_raw(name.data(), int64_t(name.size()));
    w.write_u8(uint8_t(sizeof(T) == 4 ? ClipDtype::f32 : ClipDtype::f64));
    w.write_u8(uint8_t(tensor.rank()));
    for (int d : tensor.dims()) w.write_u32(uint32_t(d));
    w.write_raw(tensor.values().data(), tensor.size() * int64_t(sizeof(T)));
  }
  if (!w.ok()) throw FormatError(path.string() + ": write failed");
}

template <class T>
std::vector<std::pair<std::string, Tensor<T>>> read_weights(const std::filesystem::path& path) {
  Reader r(path);
  r.expect_magic(kWeightMagic);
  const uint32_t count = r.read_u32("record count");
  std::vector<std::pair<std::string, Tensor<T>>> out;
  out.reserve(count);
  for (uint32_t i = 0; i < count; ++i) {
    const uint16_t name_len = r.read_u16("name length");
    std::string name(name_len, '\0');
    r.read_raw(name.data(), name_len, "name");
    const uint8_t dtype = r.read_u8("dtype");
    const uint8_t expected = uint8_t(sizeof(T) == 4 ? ClipDtype::f32 : ClipDtype::f64);
    if (dtype != expected) {
      fail(path, r.offset() - 1,
           "weight dtype code " + std::to_string(dtype) + " does not match model dtype");
    }
    const uint8_t rank = r.read_u8("rank");
    if (rank < 1 || rank > 8) fail(path, r.offset() - 1, "weight rank must be 1..8");
    const Shape dims = read_dims(r, rank);
    std::vector<T> values(static_cast<size_t>(numel(dims)));
    r.read_raw(values.data(), int64_t(values.size()) * int64_t(sizeof(T)), "payload");
    out.emplace_back(std::move(name), Tensor<T>::from_values(dims, std::move(values)));
  }
  r.expect_eof();
  return out;
}

template void write_weights<float>(const std::filesystem::path&,
                                   const std::vector<std::pair<std::string, Tensor<float>>>&);
template void write_weights<double>(const std::filesystem::path&,
                                    const std::vector<std::pair<std::string, Tensor<double>>>&);
template std::vector<std::pair<std::string, Tensor<float>>> read_weights<float>(
    const std::filesystem::path&);
template std::vector<std::pair<std::string, Tensor<double>>> read_weights<double>(
    const std::filesystem::path&);

}  // namespace qscreen
