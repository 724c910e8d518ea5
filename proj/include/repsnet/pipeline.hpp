#pragma once

// Building blocks of the command-line tool: dataset synthesis, verified
// fusion, inference, evaluation and benchmarking.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "repsnet/io.hpp"
#include "repsnet/metrics.hpp"
#include "repsnet/network.hpp"
#include "repsnet/postprocess.hpp"
#include "repsnet/run_config.hpp"

namespace repsnet {

/// Runs fn(0..n-1) on up to `threads` workers. Rethrows the exception of the
/// lowest failing index after all workers stop.
void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn);

/// Seed of sample `index` in a dataset with base seed `seed`.
std::uint64_t sample_seed(std::uint64_t seed, std::size_t index);

/// Basename of sample `index`, e.g. "s0007".
std::string sample_name(std::size_t index);

/// In-memory dataset of cfg.dataset_count samples split 7:1:2.
struct Dataset {
  std::vector<Sample> train;
  std::vector<Sample> val;
  std::vector<Sample> test;
};
Dataset synth_dataset(const RunConfig& cfg, int threads = 1);

/// Writes the dataset of synth_dataset with index and split lists.
void write_synth_dataset(const std::filesystem::path& dir, const RunConfig& cfg, int threads = 1);

/// Largest max-abs difference over the three outputs.
double max_output_diff(const NetOutputs& a, const NetOutputs& b);

struct FuseReport {
  RepSNet fused;
  std::size_t params_before = 0;
  std::size_t params_after = 0;
  double analytic_ratio = 0.0;  // fused / train-mode parameters from the config alone
  double max_diff = 0.0;        // over all trial inputs
  bool equivalent = false;
};

inline constexpr double kFuseTolerance = 1e-3;

/// Fuses `net` and compares both forwards on `trials` uniform random images
/// of size height x width.
FuseReport fuse_and_verify(const RepSNet& net, int trials = 5, std::uint64_t seed = 1, int height = 64, int width = 64,
                           double tolerance = kFuseTolerance);

/// Throws ShapeError with a padding instruction when the image does not fit
/// the network.
void check_divisible(const RepSNetConfig& cfg, const Tensor& image);

Segmentation infer_image(const RepSNet& net, const Tensor& image, const SegmentConfig& post);

/// RGB bytes of `image` with instance inner boundaries painted in their class color.
std::vector<std::uint8_t> overlay_rgb(const Tensor& image, const InstanceMap& inst, const std::vector<int>& classes);

/// Display color of classes 1..6 (index 0 unused).
std::array<std::uint8_t, 3> class_color(int cls);

/// Rows of "instance_id,class,pixel_count".
std::string class_csv(const InstanceMap& inst, const std::vector<int>& classes);

struct BenchReport {
  std::size_t params_train = 0;
  std::size_t params_fused = 0;
  double flops_train = 0.0;
  double flops_fused = 0.0;
  double seconds_train = 0.0;  // median over repeats, one forward
  double seconds_fused = 0.0;
};

/// Times the train-mode inference forward and the fused forward on the same
/// inputs. Repeats alternate between the two networks.
BenchReport bench(const RepSNet& train_net, int height, int width, int repeats = 10, std::uint64_t seed = 1);

/// Scores every pair. Classes are read from the type maps by majority.
std::vector<SegReport> evaluate_pairs(const std::vector<InstanceMap>& gt_inst, const std::vector<TypeMap>& gt_types,
                                      const std::vector<InstanceMap>& pred_inst, const std::vector<TypeMap>& pred_types,
                                      int threads = 1);

/// Segments every sample with `net` and scores it against its labels.
AggregateReport evaluate_model(const RepSNet& net, const std::vector<Sample>& data, const SegmentConfig& post,
                               int threads = 1);

}  // namespace repsnet
