#pragma once

// PNG images and the on-disk dataset layout.
//
//   <dir>/index.txt              every basename, one per line
//   <dir>/{train,val,test}.txt   split membership
//   <dir>/<name>_img.png         8-bit RGB
//   <dir>/<name>_inst.png        16-bit gray instance ids
//   <dir>/<name>_type.png        8-bit gray classes

#include <filesystem>
#include <string>
#include <vector>

#include "repsnet/synth.hpp"

namespace repsnet {

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Values are clamped to [0, 1] and rounded to 8 bits. Only channel-count 3
/// images of a batch of one are accepted.
void save_png_rgb(const std::filesystem::path& path, const Tensor& image);
/// Returns (1, 3, H, W) with values k / 255.
Tensor load_png_rgb(const std::filesystem::path& path);

/// Ids must fit in 16 bits.
void save_png_gray16(const std::filesystem::path& path, const InstanceMap& inst);
InstanceMap load_png_gray16(const std::filesystem::path& path);

void save_png_gray8(const std::filesystem::path& path, const Grid<std::uint8_t>& map);
Grid<std::uint8_t> load_png_gray8(const std::filesystem::path& path);

/// Raw 8-bit RGB, row-major interleaved.
void save_png_rgb8(const std::filesystem::path& path, int height, int width, const std::vector<std::uint8_t>& rgb);

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
};

/// 7:1:2 split in index order; rounding leftovers go to train.
DatasetSplit split_names(const std::vector<std::string>& names);

void save_sample(const std::filesystem::path& dir, const std::string& name, const Sample& s);
Sample load_sample(const std::filesystem::path& dir, const std::string& name);

void write_name_list(const std::filesystem::path& path, const std::vector<std::string>& names);
std::vector<std::string> read_name_list(const std::filesystem::path& path);

/// Loads every sample listed in <dir>/<split>.txt.
std::vector<Sample> load_split(const std::filesystem::path& dir, const std::string& split);

}  // namespace repsnet
