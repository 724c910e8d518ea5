#include "repsnet/run_config.hpp"

#include <charconv>
#include <functional>
#include <sstream>

#include "repsnet/config.hpp"

namespace repsnet {

namespace {

std::string fmt(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);  // shortest round-trip form
  return std::string(buf, r.ptr);
}
std::string fmt(int v) { return std::to_string(v); }
std::string fmt(bool v) { return v ? "1" : "0"; }

std::string join(const std::vector<int>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + std::to_string(xs[i]);
  return s;
}

struct Field {
  const char* key;
  std::function<void(RunConfig&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define INT_FIELD(name, member) \
  Field { name, [](RunConfig& c, const std::string& v) { c.member = parse_int(v, name); }, [](const RunConfig& c) { return fmt(c.member); } }
#define DOUBLE_FIELD(name, member)                                                             \
  Field {                                                                                      \
    name, [](RunConfig& c, const std::string& v) { c.member = parse_double(v, name); },       \
        [](const RunConfig& c) { return fmt(static_cast<double>(c.member)); }                 \
  }
#define BOOL_FIELD(name, member) \
  Field { name, [](RunConfig& c, const std::string& v) { c.member = parse_bool(v, name); }, [](const RunConfig& c) { return fmt(c.member); } }

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      Field{"seed",
            [](RunConfig& c, const std::string& v) {
              std::uint64_t s = 0;
              const auto* end = v.data() + v.size();
              auto [ptr, ec] = std::from_chars(v.data(), end, s);
              if (ec != std::errc{} || ptr != end || v.empty()) throw ValueError("key 'seed': expected an unsigned integer, got '" + v + "'");
              c.seed = s;
            },
            [](const RunConfig& c) { return std::to_string(c.seed); }},
      Field{"image_size",
            [](RunConfig& c, const std::string& v) { c.synth.height = c.synth.width = parse_int(v, "image_size"); },
            [](const RunConfig& c) {
              if (c.synth.height != c.synth.width) throw ValueError("image_size: height and width differ");
              return fmt(c.synth.height);
            }},
      INT_FIELD("dataset_count", dataset_count),
      INT_FIELD("nuclei_min", synth.min_nuclei),
      INT_FIELD("nuclei_max", synth.max_nuclei),
      DOUBLE_FIELD("radius_min", synth.min_radius),
      DOUBLE_FIELD("radius_max", synth.max_radius),
      DOUBLE_FIELD("overlap_prob", synth.overlap_prob),
      DOUBLE_FIELD("noise_sigma", synth.noise_sigma),
      Field{"units_per_block", [](RunConfig& c, const std::string& v) { c.net.units_per_block = parse_int_list(v); },
            [](const RunConfig& c) { return join(c.net.units_per_block); }},
      INT_FIELD("base_width", net.base_width),
      BOOL_FIELD("multi_branch_encoder", net.multi_branch_encoder),
      BOOL_FIELD("multi_branch_decoder", net.multi_branch_decoder),
      DOUBLE_FIELD("lambda_np", fit.train.weights.np),
      DOUBLE_FIELD("lambda_nt", fit.train.weights.nt),
      DOUBLE_FIELD("lambda_bd", fit.train.weights.bd),
      DOUBLE_FIELD("lambda_nb", fit.train.weights.nb),
      DOUBLE_FIELD("lr", fit.lr),
      DOUBLE_FIELD("lr_floor", fit.lr_floor),
      INT_FIELD("patience", fit.patience),
      INT_FIELD("epochs", fit.epochs),
      DOUBLE_FIELD("max_seconds", fit.max_seconds),
      INT_FIELD("batch_size", fit.train.batch_size),
      BOOL_FIELD("augment", fit.train.augment),
      INT_FIELD("tau", fit.train.iso.tau),
      DOUBLE_FIELD("nb_smooth", fit.train.iso.e),
      INT_FIELD("e_t", post.bvm.e_t),
      DOUBLE_FIELD("r_max", post.r_max),
      Field{"post", [](RunConfig& c, const std::string& v) { c.post.mode = parse_post_mode(v); },
            [](const RunConfig& c) { return std::string(c.post.mode == PostMode::kBvm ? "bvm" : "naive"); }},
      Field{"data_dir", [](RunConfig& c, const std::string& v) { c.data_dir = v; }, [](const RunConfig& c) { return c.data_dir; }},
      Field{"run_dir", [](RunConfig& c, const std::string& v) { c.run_dir = v; }, [](const RunConfig& c) { return c.run_dir; }},
  };
  return table;
}

#undef INT_FIELD
#undef DOUBLE_FIELD
#undef BOOL_FIELD

}  // namespace

void RunConfig::validate() const {
  if (dataset_count < 1) throw ValueError("dataset_count must be positive");
  synth.validate();
  net.validate();
  if (synth.height % net.spatial_divisor() != 0 || synth.width % net.spatial_divisor() != 0) {
    throw ValueError("image_size must be a multiple of " + std::to_string(net.spatial_divisor()) + " for this network depth");
  }
  if (!(fit.lr > 0.0)) throw ValueError("lr must be positive");
  if (!(fit.lr_floor > 0.0) || fit.lr_floor > fit.lr) throw ValueError("lr_floor must be in (0, lr]");
  if (fit.patience < 1) throw ValueError("patience must be at least 1");
  if (fit.epochs < 0) throw ValueError("epochs must be non-negative");
  if (fit.max_seconds < 0.0) throw ValueError("max_seconds must be non-negative");
  if (fit.train.batch_size < 1) throw ValueError("batch_size must be positive");
  const auto& w = fit.train.weights;
  if (w.np < 0.0 || w.nt < 0.0 || w.bd < 0.0 || w.nb < 0.0) throw ValueError("loss weights must be non-negative");
  fit.train.iso.validate();
  if (post.bvm.e_t < 0) throw ValueError("e_t must be non-negative");
  if (!(post.r_max >= 0.0)) throw ValueError("r_max must be non-negative");
  if (data_dir.empty() || run_dir.empty()) throw ValueError("data_dir and run_dir must be set");
}

std::string RunConfig::to_text() const {
  std::ostringstream os;
  for (const auto& f : fields()) os << f.key << '=' << f.get(*this) << '\n';
  return os.str();
}

void RunConfig::set(const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (key == f.key) {
      f.set(*this, value);
      return;
    }
  }
  throw ValueError("unknown config key '" + key + "'");
}

RunConfig RunConfig::from_text(const std::string& text) {
  RunConfig c;
  for (const auto& [key, value] : parse_key_values(text)) c.set(key, value);
  c.validate();
  return c;
}

RunConfig RunConfig::from_file(const std::string& path) { return from_text(read_text_file(path)); }

}  // namespace repsnet
