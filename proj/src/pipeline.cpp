#include "repsnet/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <exception>
#include <mutex>
#include <random>
#include <sstream>
#include <thread>

namespace repsnet {

void parallel_for(std::size_t n, int threads, const std::function<void(std::size_t)>& fn) {
  const std::size_t workers = std::min<std::size_t>(n, static_cast<std::size_t>(std::max(1, threads)));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::mutex mu;
  std::size_t failed_index = n;
  std::exception_ptr failure;
  auto work = [&] {
    for (std::size_t i = next++; i < n; i = next++) {
      try {
        fn(i);
      } catch (...) {
        std::lock_guard lock(mu);
        if (i < failed_index) {
          failed_index = i;
          failure = std::current_exception();
        }
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

std::uint64_t sample_seed(std::uint64_t seed, std::size_t index) {
  // splitmix64 of the pair, so neighbouring base seeds share no samples.
  std::uint64_t z = seed * 0x9E3779B97F4A7C15ull + index + 1;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::string sample_name(std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "s%04zu", index);
  return buf;
}

Dataset synth_dataset(const RunConfig& cfg, int threads) {
  cfg.validate();
  const std::size_t n = static_cast<std::size_t>(cfg.dataset_count);
  std::vector<Sample> all(n);
  parallel_for(n, threads, [&](std::size_t i) { all[i] = synth_sample(sample_seed(cfg.seed, i), cfg.synth); });
  std::vector<std::string> names(n);
  for (std::size_t i = 0; i < n; ++i) names[i] = sample_name(i);
  const DatasetSplit split = split_names(names);
  Dataset d;
  std::size_t i = 0;
  for (; i < split.train.size(); ++i) d.train.push_back(std::move(all[i]));
  for (; i < split.train.size() + split.val.size(); ++i) d.val.push_back(std::move(all[i]));
  for (; i < n; ++i) d.test.push_back(std::move(all[i]));
  return d;
}

void write_synth_dataset(const std::filesystem::path& dir, const RunConfig& cfg, int threads) {
  cfg.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
  const std::size_t n = static_cast<std::size_t>(cfg.dataset_count);
  std::vector<std::string> names(n);
  for (std::size_t i = 0; i < n; ++i) names[i] = sample_name(i);
  parallel_for(n, threads, [&](std::size_t i) { save_sample(dir, names[i], synth_sample(sample_seed(cfg.seed, i), cfg.synth)); });
  const DatasetSplit split = split_names(names);
  write_name_list(dir / "index.txt", names);
  write_name_list(dir / "train.txt", split.train);
  write_name_list(dir / "val.txt", split.val);
  write_name_list(dir / "test.txt", split.test);
}

double max_output_diff(const NetOutputs& a, const NetOutputs& b) {
  return std::max({max_abs_diff(a.np_logits, b.np_logits), max_abs_diff(a.nt_logits, b.nt_logits), max_abs_diff(a.bd, b.bd)});
}

namespace {

Tensor random_image(std::mt19937_64& rng, int height, int width) {
  Tensor x({1, 3, static_cast<std::size_t>(height), static_cast<std::size_t>(width)});
  std::uniform_real_distribution<float> u(0.0f, 1.0f);
  for (auto& v : x.values()) v = u(rng);
  return x;
}

}  // namespace

FuseReport fuse_and_verify(const RepSNet& net, int trials, std::uint64_t seed, int height, int width, double tolerance) {
  FuseReport r{reparameterize(net)};
  r.params_before = net.parameter_count();
  r.params_after = r.fused.parameter_count();
  r.analytic_ratio = static_cast<double>(analytic_cost(net.config(), true, height, width).parameters) /
                     static_cast<double>(analytic_cost(net.config(), false, height, width).parameters);
  std::mt19937_64 rng(seed);
  for (int t = 0; t < trials; ++t) {
    const Tensor x = random_image(rng, height, width);
    r.max_diff = std::max(r.max_diff, max_output_diff(net.forward(x), r.fused.forward(x)));
  }
  r.equivalent = r.max_diff <= tolerance;
  return r;
}

void check_divisible(const RepSNetConfig& cfg, const Tensor& image) {
  const auto& s = image.shape();
  const std::size_t d = static_cast<std::size_t>(cfg.spatial_divisor());
  if (s.h % d != 0 || s.w % d != 0) {
    const std::size_t ph = (d - s.h % d) % d;
    const std::size_t pw = (d - s.w % d) % d;
    throw ShapeError("image is " + std::to_string(s.h) + "x" + std::to_string(s.w) + " but height and width must be multiples of " +
                     std::to_string(d) + "; pad by " + std::to_string(ph) + " rows and " + std::to_string(pw) +
                     " columns (to " + std::to_string(s.h + ph) + "x" + std::to_string(s.w + pw) + ")");
  }
}

Segmentation infer_image(const RepSNet& net, const Tensor& image, const SegmentConfig& post) {
  check_divisible(net.config(), image);
  const NetOutputs out = net.forward(image);
  return segment(out.np_logits, out.nt_logits, out.bd, post);
}

std::array<std::uint8_t, 3> class_color(int cls) {
  static constexpr std::array<std::array<std::uint8_t, 3>, 7> kColors{{
      {255, 255, 255},
      {230, 25, 75},
      {60, 180, 75},
      {0, 130, 200},
      {245, 130, 48},
      {145, 30, 180},
      {255, 225, 25},
  }};
  if (cls < 1 || cls > 6) return kColors[0];
  return kColors[static_cast<std::size_t>(cls)];
}

std::vector<std::uint8_t> overlay_rgb(const Tensor& image, const InstanceMap& inst, const std::vector<int>& classes) {
  const auto& s = image.shape();
  if (s.n != 1 || s.c != 3 || s.h != static_cast<std::size_t>(inst.height) || s.w != static_cast<std::size_t>(inst.width)) {
    throw ShapeError("overlay_rgb: image " + to_string(s) + " does not match the instance map");
  }
  std::vector<std::uint8_t> rgb(s.plane() * 3);
  for (std::size_t i = 0; i < s.plane(); ++i) {
    for (std::size_t c = 0; c < 3; ++c) {
      rgb[i * 3 + c] = static_cast<std::uint8_t>(std::lround(std::clamp(image.plane(0, c)[i], 0.0f, 1.0f) * 255.0f));
    }
  }
  const Mask edge = inner_boundary(inst);
  for (std::size_t i = 0; i < edge.size(); ++i) {
    if (!edge.data[i]) continue;
    const auto id = static_cast<std::size_t>(inst.data[i]);
    const auto color = class_color(id < classes.size() ? classes[id] : 0);
    for (std::size_t c = 0; c < 3; ++c) rgb[i * 3 + c] = color[c];
  }
  return rgb;
}

std::string class_csv(const InstanceMap& inst, const std::vector<int>& classes) {
  std::vector<std::size_t> area(static_cast<std::size_t>(max_label(inst)) + 1, 0);
  for (auto v : inst.data) {
    if (v > 0) ++area[static_cast<std::size_t>(v)];
  }
  std::ostringstream os;
  os << "instance_id,class,pixel_count\n";
  for (std::size_t id = 1; id < area.size(); ++id) {
    if (area[id] == 0) continue;
    os << id << ',' << (id < classes.size() ? classes[id] : 0) << ',' << area[id] << '\n';
  }
  return os.str();
}

BenchReport bench(const RepSNet& train_net, int height, int width, int repeats, std::uint64_t seed) {
  if (repeats < 1) throw ValueError("bench needs at least one repeat");
  const RepSNet fused = reparameterize(train_net);
  BenchReport r;
  r.params_train = train_net.parameter_count();
  r.params_fused = fused.parameter_count();
  r.flops_train = analytic_cost(train_net.config(), train_net.fused(), height, width).flops;
  r.flops_fused = analytic_cost(fused.config(), true, height, width).flops;

  std::mt19937_64 rng(seed);
  const Tensor x = random_image(rng, height, width);
  auto time_one = [&](const RepSNet& net) {
    const auto t0 = std::chrono::steady_clock::now();
    const NetOutputs out = net.forward(x);
    const auto t1 = std::chrono::steady_clock::now();
    if (out.np_logits.empty()) throw NumericError("empty forward output");
    return std::chrono::duration<double>(t1 - t0).count();
  };
  time_one(train_net);  // warm-up
  time_one(fused);
  std::vector<double> tt;
  std::vector<double> tf;
  for (int i = 0; i < repeats; ++i) {
    tt.push_back(time_one(train_net));
    tf.push_back(time_one(fused));
  }
  auto median = [](std::vector<double> v) {
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  r.seconds_train = median(tt);
  r.seconds_fused = median(tf);
  return r;
}

std::vector<SegReport> evaluate_pairs(const std::vector<InstanceMap>& gt_inst, const std::vector<TypeMap>& gt_types,
                                      const std::vector<InstanceMap>& pred_inst, const std::vector<TypeMap>& pred_types,
                                      int threads) {
  const std::size_t n = gt_inst.size();
  if (gt_types.size() != n || pred_inst.size() != n || pred_types.size() != n) throw ValueError("evaluate_pairs: list lengths differ");
  std::vector<SegReport> out(n);
  parallel_for(n, threads, [&](std::size_t i) {
    out[i] = evaluate(gt_inst[i], classes_from_types(gt_inst[i], gt_types[i]), pred_inst[i],
                      classes_from_types(pred_inst[i], pred_types[i]));
  });
  return out;
}

AggregateReport evaluate_model(const RepSNet& net, const std::vector<Sample>& data, const SegmentConfig& post, int threads) {
  std::vector<SegReport> reports(data.size());
  parallel_for(data.size(), threads, [&](std::size_t i) {
    const Segmentation seg = infer_image(net, data[i].image, post);
    reports[i] = evaluate(data[i].inst, classes_from_types(data[i].inst, data[i].types), seg.inst, seg.classes);
  });
  return aggregate(reports);
}

}  // namespace repsnet
