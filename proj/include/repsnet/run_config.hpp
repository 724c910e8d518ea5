#pragma once

// Settings of one run of the command-line tool, as flat key=value text.

#include <cstdint>
#include <string>

#include "repsnet/network.hpp"
#include "repsnet/postprocess.hpp"
#include "repsnet/synth.hpp"
#include "repsnet/training.hpp"

namespace repsnet {

struct RunConfig {
  std::uint64_t seed = 1;
  int dataset_count = 200;
  SynthSpec synth;
  RepSNetConfig net;
  FitOptions fit;  // only the scalar settings are read; paths come from run_dir
  SegmentConfig post;
  std::string data_dir = "data";
  std::string run_dir = "run";

  // 1e-4 needs hundreds of epochs on the 200-image synthetic set; 1e-3
  // reaches a usable model in about 30.
  RunConfig() { fit.lr = 1e-3; }

  void validate() const;
  /// Every key with its current value, in a fixed order. from_text(to_text())
  /// gives back an equal config.
  std::string to_text() const;
  /// Starts from the defaults and overrides the keys present. Unknown keys,
  /// duplicates and malformed values throw ValueError.
  static RunConfig from_text(const std::string& text);
  static RunConfig from_file(const std::string& path);

  /// Overrides one key with the same rules as from_text.
  void set(const std::string& key, const std::string& value);
};

}  // namespace repsnet
