#pragma once

// Binary tensor files: "RSTN", u32 LE rank, rank x u32 LE dims, f32 LE payload.
// Checkpoints: "RSCK", u32 LE entry count, then per entry a u32 LE name length,
// the name bytes, and one tensor in the encoding above.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "repsnet/tensor.hpp"

namespace repsnet {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A tensor of arbitrary rank as stored on disk.
struct StoredTensor {
  std::vector<std::uint32_t> dims;
  std::vector<float> data;

  static StoredTensor from(const Tensor& t);
  static StoredTensor vector(std::span<const float> v);
  Tensor to_tensor() const;  // requires rank 4
  std::size_t numel() const;
  friend bool operator==(const StoredTensor&, const StoredTensor&) = default;
};

using NamedTensors = std::vector<std::pair<std::string, StoredTensor>>;

void write_tensor(std::ostream& os, const StoredTensor& t);
StoredTensor read_tensor(std::istream& is);

void save_tensor(const std::filesystem::path& path, const StoredTensor& t);
StoredTensor load_tensor(const std::filesystem::path& path);

void write_checkpoint(std::ostream& os, const NamedTensors& entries);
NamedTensors read_checkpoint(std::istream& is);

void save_checkpoint(const std::filesystem::path& path, const NamedTensors& entries);
NamedTensors load_checkpoint(const std::filesystem::path& path);

/// Text stored as a rank-1 tensor of byte codes, one float per byte.
StoredTensor text_to_tensor(const std::string& text);
std::string tensor_to_text(const StoredTensor& t);

const StoredTensor& find_entry(const NamedTensors& entries, const std::string& name);

}  // namespace repsnet
