#include "repsnet/serialize.hpp"

#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace repsnet {

namespace {

constexpr std::array<char, 4> kTensorMagic{'R', 'S', 'T', 'N'};
constexpr std::array<char, 4> kCheckpointMagic{'R', 'S', 'C', 'K'};
constexpr std::uint32_t kMaxRank = 8;
constexpr std::uint32_t kMaxName = 4096;

void put_u32(std::ostream& os, std::uint32_t v) {
  const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                              static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw FormatError("unexpected end of stream");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void expect_magic(std::istream& is, const std::array<char, 4>& magic, const char* what) {
  std::array<char, 4> got{};
  if (!is.read(got.data(), 4) || got != magic) throw FormatError(std::string("bad magic, not a ") + what);
}

}  // namespace

std::size_t StoredTensor::numel() const {
  std::size_t n = 1;
  for (auto d : dims) n *= d;
  return n;
}

StoredTensor StoredTensor::from(const Tensor& t) {
  const Shape& s = t.shape();
  return {{static_cast<std::uint32_t>(s.n), static_cast<std::uint32_t>(s.c), static_cast<std::uint32_t>(s.h),
           static_cast<std::uint32_t>(s.w)},
          std::vector<float>(t.values().begin(), t.values().end())};
}

StoredTensor StoredTensor::vector(std::span<const float> v) {
  return {{static_cast<std::uint32_t>(v.size())}, std::vector<float>(v.begin(), v.end())};
}

Tensor StoredTensor::to_tensor() const {
  if (dims.size() != 4) throw FormatError("expected a rank-4 tensor, got rank " + std::to_string(dims.size()));
  return Tensor({dims[0], dims[1], dims[2], dims[3]}, data);
}

void write_tensor(std::ostream& os, const StoredTensor& t) {
  if (t.numel() != t.data.size()) throw ShapeError("stored tensor payload does not match its dims");
  os.write(kTensorMagic.data(), 4);
  put_u32(os, static_cast<std::uint32_t>(t.dims.size()));
  for (auto d : t.dims) put_u32(os, d);
  for (float f : t.data) put_u32(os, std::bit_cast<std::uint32_t>(f));
  if (!os) throw FormatError("tensor write failed");
}

StoredTensor read_tensor(std::istream& is) {
  expect_magic(is, kTensorMagic, "tensor");
  StoredTensor t;
  const std::uint32_t rank = get_u32(is);
  if (rank > kMaxRank) throw FormatError("tensor rank " + std::to_string(rank) + " too large");
  t.dims.resize(rank);
  for (auto& d : t.dims) d = get_u32(is);
  t.data.resize(t.numel());
  for (auto& f : t.data) f = std::bit_cast<float>(get_u32(is));
  return t;
}

void save_tensor(const std::filesystem::path& path, const StoredTensor& t) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  write_tensor(os, t);
}

StoredTensor load_tensor(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  return read_tensor(is);
}

void write_checkpoint(std::ostream& os, const NamedTensors& entries) {
  os.write(kCheckpointMagic.data(), 4);
  put_u32(os, static_cast<std::uint32_t>(entries.size()));
  for (const auto& [name, t] : entries) {
    put_u32(os, static_cast<std::uint32_t>(name.size()));
    os.write(name.data(), static_cast<std::streamsize>(name.size()));
    write_tensor(os, t);
  }
  if (!os) throw FormatError("checkpoint write failed");
}

NamedTensors read_checkpoint(std::istream& is) {
  expect_magic(is, kCheckpointMagic, "checkpoint");
  const std::uint32_t count = get_u32(is);
  NamedTensors out;
  out.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    const std::uint32_t len = get_u32(is);
    if (len > kMaxName) throw FormatError("checkpoint entry name too long");
    std::string name(len, '\0');
    if (!is.read(name.data(), len)) throw FormatError("unexpected end of stream");
    out.emplace_back(std::move(name), read_tensor(is));
  }
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& entries) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot open " + path.string() + " for writing");
  write_checkpoint(os, entries);
}

NamedTensors load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + path.string());
  return read_checkpoint(is);
}

StoredTensor text_to_tensor(const std::string& text) {
  StoredTensor t;
  t.dims = {static_cast<std::uint32_t>(text.size())};
  t.data.reserve(text.size());
  for (unsigned char ch : text) t.data.push_back(static_cast<float>(ch));
  return t;
}

std::string tensor_to_text(const StoredTensor& t) {
  std::string s;
  s.reserve(t.data.size());
  for (float f : t.data) {
    if (f < 0.0f || f > 255.0f) throw FormatError("text entry contains a non-byte value");
    s.push_back(static_cast<char>(static_cast<unsigned char>(f)));
  }
  return s;
}

const StoredTensor& find_entry(const NamedTensors& entries, const std::string& name) {
  for (const auto& [n, t] : entries) {
    if (n == name) return t;
  }
  throw FormatError("checkpoint has no entry named '" + name + "'");
}

}  // namespace repsnet
