#include "repsnet/io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>

namespace repsnet {

namespace {

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using File = std::unique_ptr<std::FILE, FileCloser>;

[[noreturn]] void png_fail(png_structp, png_const_charp msg) { throw IoError(std::string("png: ") + msg); }
void png_warn(png_structp, png_const_charp) {}

// Rows are already in PNG byte order (16-bit samples big-endian).
void write_png(const std::filesystem::path& path, int height, int width, int color_type, int bit_depth,
               const std::vector<std::uint8_t>& bytes) {
  File f(std::fopen(path.c_str(), "wb"));
  if (!f) throw IoError("cannot write '" + path.string() + "'");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_write_struct(p, i); }
  } guard{&png, &info};
  png_init_io(png, f.get());
  png_set_IHDR(png, info, width, height, bit_depth, color_type, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  // No timestamps or other ancillary chunks, so identical inputs give identical files.
  png_write_info(png, info);
  const int channels = color_type == PNG_COLOR_TYPE_RGB ? 3 : 1;
  const std::size_t stride = static_cast<std::size_t>(width) * channels * (bit_depth / 8);
  for (int r = 0; r < height; ++r) png_write_row(png, bytes.data() + r * stride);
  png_write_end(png, nullptr);
}

struct Decoded {
  int height = 0;
  int width = 0;
  int color_type = 0;
  int bit_depth = 0;
  std::vector<std::uint8_t> bytes;
};

Decoded read_png(const std::filesystem::path& path) {
  File f(std::fopen(path.c_str(), "rb"));
  if (!f) throw IoError("cannot read '" + path.string() + "'");
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, png_fail, png_warn);
  png_infop info = png_create_info_struct(png);
  struct Guard {
    png_structp* p;
    png_infop* i;
    ~Guard() { png_destroy_read_struct(p, i, nullptr); }
  } guard{&png, &info};
  png_init_io(png, f.get());
  png_read_info(png, info);
  Decoded d;
  d.width = static_cast<int>(png_get_image_width(png, info));
  d.height = static_cast<int>(png_get_image_height(png, info));
  d.color_type = png_get_color_type(png, info);
  d.bit_depth = png_get_bit_depth(png, info);
  if (d.color_type == PNG_COLOR_TYPE_PALETTE || (d.color_type != PNG_COLOR_TYPE_RGB && d.color_type != PNG_COLOR_TYPE_GRAY) ||
      (d.bit_depth != 8 && d.bit_depth != 16)) {
    throw IoError("'" + path.string() + "': unsupported png layout");
  }
  const std::size_t stride = png_get_rowbytes(png, info);
  d.bytes.resize(stride * d.height);
  for (int r = 0; r < d.height; ++r) png_read_row(png, d.bytes.data() + r * stride, nullptr);
  png_read_end(png, nullptr);
  return d;
}

}  // namespace

void save_png_rgb(const std::filesystem::path& path, const Tensor& image) {
  const auto& s = image.shape();
  if (s.n != 1 || s.c != 3) throw ShapeError("save_png_rgb: expected (1, 3, H, W), got " + to_string(s));
  std::vector<std::uint8_t> bytes(s.plane() * 3);
  for (std::size_t i = 0; i < s.plane(); ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      const float v = std::clamp(image.plane(0, c)[i], 0.0f, 1.0f);
      bytes[i * 3 + c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
    }
  }
  write_png(path, static_cast<int>(s.h), static_cast<int>(s.w), PNG_COLOR_TYPE_RGB, 8, bytes);
}

void save_png_rgb8(const std::filesystem::path& path, int height, int width, const std::vector<std::uint8_t>& rgb) {
  if (rgb.size() != static_cast<std::size_t>(height) * width * 3) throw ShapeError("save_png_rgb8: buffer size mismatch");
  write_png(path, height, width, PNG_COLOR_TYPE_RGB, 8, rgb);
}

Tensor load_png_rgb(const std::filesystem::path& path) {
  const Decoded d = read_png(path);
  if (d.color_type != PNG_COLOR_TYPE_RGB || d.bit_depth != 8) throw IoError("'" + path.string() + "': expected 8-bit RGB");
  Tensor t({1, 3, static_cast<std::size_t>(d.height), static_cast<std::size_t>(d.width)});
  const std::size_t P = t.shape().plane();
  for (std::size_t i = 0; i < P; ++i) {
    for (std::size_t c = 0; c < 3; ++c) t.plane(0, c)[i] = static_cast<float>(d.bytes[i * 3 + c] / 255.0);
  }
  return t;
}

void save_png_gray16(const std::filesystem::path& path, const InstanceMap& inst) {
  std::vector<std::uint8_t> bytes(inst.size() * 2);
  for (std::size_t i = 0; i < inst.size(); ++i) {
    const auto v = inst.data[i];
    if (v < 0 || v > 65535) throw ValueError("instance id " + std::to_string(v) + " does not fit in 16 bits");
    bytes[2 * i] = static_cast<std::uint8_t>(v >> 8);
    bytes[2 * i + 1] = static_cast<std::uint8_t>(v & 0xff);
  }
  write_png(path, inst.height, inst.width, PNG_COLOR_TYPE_GRAY, 16, bytes);
}

InstanceMap load_png_gray16(const std::filesystem::path& path) {
  const Decoded d = read_png(path);
  if (d.color_type != PNG_COLOR_TYPE_GRAY || d.bit_depth != 16) throw IoError("'" + path.string() + "': expected 16-bit gray");
  InstanceMap m(d.height, d.width);
  for (std::size_t i = 0; i < m.size(); ++i) m.data[i] = (d.bytes[2 * i] << 8) | d.bytes[2 * i + 1];
  return m;
}

void save_png_gray8(const std::filesystem::path& path, const Grid<std::uint8_t>& map) {
  write_png(path, map.height, map.width, PNG_COLOR_TYPE_GRAY, 8, map.data);
}

Grid<std::uint8_t> load_png_gray8(const std::filesystem::path& path) {
  const Decoded d = read_png(path);
  if (d.color_type != PNG_COLOR_TYPE_GRAY || d.bit_depth != 8) throw IoError("'" + path.string() + "': expected 8-bit gray");
  Grid<std::uint8_t> m(d.height, d.width);
  m.data = d.bytes;
  return m;
}

DatasetSplit split_names(const std::vector<std::string>& names) {
  const std::size_t n = names.size();
  const std::size_t val = n / 10;
  const std::size_t test = n / 5;
  const std::size_t train = n - val - test;
  DatasetSplit s;
  s.train.assign(names.begin(), names.begin() + train);
  s.val.assign(names.begin() + train, names.begin() + train + val);
  s.test.assign(names.begin() + train + val, names.end());
  return s;
}

void save_sample(const std::filesystem::path& dir, const std::string& name, const Sample& s) {
  save_png_rgb(dir / (name + "_img.png"), s.image);
  save_png_gray16(dir / (name + "_inst.png"), s.inst);
  save_png_gray8(dir / (name + "_type.png"), s.types);
}

Sample load_sample(const std::filesystem::path& dir, const std::string& name) {
  Sample s;
  s.image = load_png_rgb(dir / (name + "_img.png"));
  s.inst = load_png_gray16(dir / (name + "_inst.png"));
  s.types = load_png_gray8(dir / (name + "_type.png"));
  if (!s.inst.same_dims(s.types) || static_cast<std::size_t>(s.inst.height) != s.image.shape().h ||
      static_cast<std::size_t>(s.inst.width) != s.image.shape().w) {
    throw IoError("sample '" + name + "': image and label sizes differ");
  }
  return s;
}

void write_name_list(const std::filesystem::path& path, const std::vector<std::string>& names) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  for (const auto& n : names) out << n << '\n';
}

std::vector<std::string> read_name_list(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) names.push_back(line);
  }
  return names;
}

std::vector<Sample> load_split(const std::filesystem::path& dir, const std::string& split) {
  std::vector<Sample> out;
  for (const auto& n : read_name_list(dir / (split + ".txt"))) out.push_back(load_sample(dir, n));
  return out;
}

}  // namespace repsnet
