// repsnet: synthesize data, train, fuse, infer, evaluate, check gradients, bench.
//
// Exit codes: 0 success, 1 usage error, 2 validation or equivalence failure,
// 3 numeric failure (NaN).

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "repsnet/gradcheck.hpp"
#include "repsnet/pipeline.hpp"

namespace fs = std::filesystem;
using namespace repsnet;

namespace {

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};
class ValidationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Common {
  int threads = 1;
};

struct ConfigArgs {
  std::string file;
  std::vector<std::string> overrides;

  void add(CLI::App* cmd) {
    cmd->add_option("--config", file, "key=value config file (defaults when absent)")->check(CLI::ExistingFile);
    cmd->add_option("--set", overrides, "override one config key, e.g. --set epochs=5")->take_all();
  }
  RunConfig load() const {
    RunConfig c = file.empty() ? RunConfig{} : RunConfig::from_file(file);
    for (const auto& kv : overrides) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
      c.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    c.validate();
    return c;
  }
};

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw IoError("write to '" + path.string() + "' failed");
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
}

/// Names from <dir>/<split>.txt, else <dir>/index.txt, else every <name><suffix>.
std::vector<std::string> list_names(const fs::path& dir, const std::string& split, const std::string& suffix) {
  if (!split.empty()) return read_name_list(dir / (split + ".txt"));
  if (fs::exists(dir / "index.txt")) return read_name_list(dir / "index.txt");
  if (!fs::is_directory(dir)) throw IoError("'" + dir.string() + "' is not a directory");
  std::vector<std::string> names;
  for (const auto& e : fs::directory_iterator(dir)) {
    const std::string f = e.path().filename().string();
    if (f.size() > suffix.size() && f.ends_with(suffix)) names.push_back(f.substr(0, f.size() - suffix.size()));
  }
  std::sort(names.begin(), names.end());
  return names;
}

// ---------------------------------------------------------------- synth

int cmd_synth(const ConfigArgs& ca, const std::string& out, int count, long long seed, const Common& common) {
  RunConfig cfg = ca.load();
  if (count > 0) cfg.dataset_count = count;
  if (seed >= 0) cfg.seed = static_cast<std::uint64_t>(seed);
  if (!out.empty()) cfg.data_dir = out;
  cfg.validate();
  write_synth_dataset(cfg.data_dir, cfg, common.threads);
  write_text(fs::path(cfg.data_dir) / "config.txt", cfg.to_text());
  const DatasetSplit s = split_names(read_name_list(fs::path(cfg.data_dir) / "index.txt"));
  std::printf("wrote %d samples to %s (train %zu, val %zu, test %zu)\n", cfg.dataset_count, cfg.data_dir.c_str(), s.train.size(),
              s.val.size(), s.test.size());
  return 0;
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  std::string data;
  std::string out;
  int epochs = -1;
  long long seed = -1;
  bool no_reparam = false;
  bool no_repupsample = false;
  bool no_nb_loss = false;
  bool overfit_one = false;
  int overfit_steps = 200;
};

int cmd_train(const ConfigArgs& ca, const TrainArgs& a) {
  RunConfig cfg = ca.load();
  if (!a.data.empty()) cfg.data_dir = a.data;
  if (!a.out.empty()) cfg.run_dir = a.out;
  if (a.epochs >= 0) cfg.fit.epochs = a.epochs;
  if (a.seed >= 0) cfg.seed = static_cast<std::uint64_t>(a.seed);
  if (a.no_reparam) cfg.net.multi_branch_encoder = false;
  if (a.no_repupsample) cfg.net.multi_branch_decoder = false;
  if (a.no_nb_loss) cfg.fit.train.weights.nb = 0.0;
  cfg.validate();

  const fs::path data = cfg.data_dir;
  if (!fs::exists(data / "train.txt")) throw UsageError("no dataset at '" + data.string() + "' (run 'repsnet synth' first)");
  const std::vector<Sample> train = load_split(data, "train");
  const std::vector<Sample> val = fs::exists(data / "val.txt") ? load_split(data, "val") : std::vector<Sample>{};
  if (train.empty()) throw UsageError("training split is empty");

  const fs::path run = cfg.run_dir;
  make_dir(run);
  write_text(run / "config.txt", cfg.to_text());
  std::fputs(cfg.to_text().c_str(), stdout);

  RepSNet net(cfg.net, cfg.seed);
  if (a.overfit_one) {
    const OverfitResult r = overfit_one(net, train.front(), a.overfit_steps, cfg.fit.lr, cfg.fit.train);
    save_checkpoint(run / "model.ckpt", net.state_dict());
    std::printf("overfit-one: %d steps, total loss %.6f -> %.6f (%.2f%% of initial)\n", r.steps, r.initial, r.final,
                100.0 * r.final / r.initial);
    return 0;
  }

  FitOptions fo = cfg.fit;
  fo.seed = cfg.seed;
  fo.log_csv = run / "loss.csv";
  fo.checkpoint = run / "model.ckpt";
  fo.on_epoch = [](int epoch, const EpochLosses& tr, const EpochLosses& va, double lr) {
    std::printf("epoch %3d  L_np %.4f  L_nt %.4f  L_bd %.4f  L_nb %.4f  total %.4f  val %.4f  lr %.2e\n", epoch, tr.np, tr.nt,
                tr.bd, tr.nb, tr.total, va.total, lr);
    std::fflush(stdout);
  };
  const FitResult r = fit(net, train, val, fo);
  std::printf("trained %d epochs in %.1fs; best validation loss %.4f at epoch %d; checkpoint %s\n", r.epochs_run, r.seconds,
              r.best_val, r.best_epoch, fo.checkpoint.c_str());
  return 0;
}

// ---------------------------------------------------------------- fuse

int cmd_fuse(const std::string& in, const std::string& out, int trials, std::uint64_t seed) {
  const RepSNet net = RepSNet::from_state_dict(load_checkpoint(in));
  const int side = std::max(64, net.config().spatial_divisor());
  const FuseReport r = fuse_and_verify(net, trials, seed, side, side);
  std::printf("parameters: %zu -> %zu (ratio %.6f, analytic %.6f)%s\n", r.params_before, r.params_after,
              static_cast<double>(r.params_after) / static_cast<double>(r.params_before), r.analytic_ratio,
              net.fused() ? "; input already fused, no-op" : "");
  std::printf("equivalence on %d random %dx%d inputs: max abs diff %.3e (tolerance %.0e)\n", trials, side, side, r.max_diff,
              kFuseTolerance);
  if (!r.equivalent) throw ValidationFailure("fused network differs from the input network; nothing written");
  save_checkpoint(out, r.fused.state_dict());
  std::printf("wrote %s\n", out.c_str());
  return 0;
}

// ---------------------------------------------------------------- infer

struct InferArgs {
  std::string checkpoint;
  std::string images;
  std::string split;
  std::string out;
  std::string mode = "fused";
  bool overlay = false;
};

int cmd_infer(const ConfigArgs& ca, const InferArgs& a, const Common& common) {
  const RunConfig cfg = ca.load();
  RepSNet net = RepSNet::from_state_dict(load_checkpoint(a.checkpoint));
  if (a.mode == "fused") {
    net.reparameterize();
  } else if (net.fused()) {
    throw UsageError("checkpoint is fused; --mode train needs a training-mode checkpoint");
  }
  const auto names = list_names(a.images, a.split, "_img.png");
  if (names.empty()) throw UsageError("no images found in '" + a.images + "'");
  const fs::path out = a.out;
  make_dir(out);
  std::vector<std::size_t> counts(names.size());
  parallel_for(names.size(), common.threads, [&](std::size_t i) {
    const Tensor image = load_png_rgb(fs::path(a.images) / (names[i] + "_img.png"));
    const Segmentation seg = infer_image(net, image, cfg.post);
    save_png_gray16(out / (names[i] + "_inst.png"), seg.inst);
    save_png_gray8(out / (names[i] + "_type.png"), paint_classes(seg.inst, seg.classes));
    write_text(out / (names[i] + "_classes.csv"), class_csv(seg.inst, seg.classes));
    if (a.overlay) {
      save_png_rgb8(out / (names[i] + "_overlay.png"), seg.inst.height, seg.inst.width, overlay_rgb(image, seg.inst, seg.classes));
    }
    counts[i] = static_cast<std::size_t>(max_label(seg.inst));
  });
  std::size_t total = 0;
  for (auto c : counts) total += c;
  std::printf("segmented %zu images (%s mode, %s post-processing): %zu instances; outputs in %s\n", names.size(), a.mode.c_str(),
              cfg.post.mode == PostMode::kBvm ? "bvm" : "naive", total, a.out.c_str());
  return 0;
}

// ---------------------------------------------------------------- eval

std::string opt_str(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", *v);
  return buf;
}

int cmd_eval(const std::string& pred, const std::string& gt, const std::string& split, const std::string& out,
             const Common& common) {
  const auto names = list_names(gt, split, "_inst.png");
  std::vector<std::string> ok;
  std::vector<std::string> missing;
  for (const auto& n : names) {
    (fs::exists(fs::path(pred) / (n + "_inst.png")) && fs::exists(fs::path(pred) / (n + "_type.png")) ? ok : missing).push_back(n);
  }
  std::vector<std::string> extra;
  if (split.empty()) {
    const std::set<std::string> known(names.begin(), names.end());
    for (const auto& n : list_names(pred, "", "_inst.png")) {
      if (!known.count(n)) extra.push_back(n);
    }
  }
  for (const auto& n : missing) std::fprintf(stderr, "skipped %s: no prediction in %s\n", n.c_str(), pred.c_str());
  for (const auto& n : extra) std::fprintf(stderr, "skipped %s: no ground truth in %s\n", n.c_str(), gt.c_str());

  std::vector<InstanceMap> gi(ok.size()), pi(ok.size());
  std::vector<TypeMap> gtypes(ok.size()), ptypes(ok.size());
  parallel_for(ok.size(), common.threads, [&](std::size_t i) {
    gi[i] = load_png_gray16(fs::path(gt) / (ok[i] + "_inst.png"));
    gtypes[i] = load_png_gray8(fs::path(gt) / (ok[i] + "_type.png"));
    pi[i] = load_png_gray16(fs::path(pred) / (ok[i] + "_inst.png"));
    ptypes[i] = load_png_gray8(fs::path(pred) / (ok[i] + "_type.png"));
    if (!gi[i].same_dims(pi[i])) throw ValidationFailure("'" + ok[i] + "': prediction and ground truth sizes differ");
  });
  const auto reports = evaluate_pairs(gi, gtypes, pi, ptypes, common.threads);
  const AggregateReport ag = aggregate(reports);

  make_dir(out);
  std::ostringstream rows;
  rows << "name,dice,aji,pq,mpq,tp,fp,fn";
  for (int c = 1; c <= kPositiveClasses; ++c) rows << ",pq_class" << c;
  rows << '\n';
  for (std::size_t i = 0; i < ok.size(); ++i) {
    const auto& r = reports[i];
    char buf[128];
    std::snprintf(buf, sizeof buf, "%s,%.6f,%.6f,%.6f,", ok[i].c_str(), r.dice, r.aji, r.pq.pq);
    rows << buf << opt_str(r.mpq) << ',' << r.pq.tp << ',' << r.pq.fp << ',' << r.pq.fn;
    for (const auto& c : r.class_pq) rows << ',' << opt_str(c);
    rows << '\n';
  }
  write_text(fs::path(out) / "per_image.csv", rows.str());

  std::ostringstream csv;
  csv << "images,empty_images,dice,aji,pq,mpq,tp,fp,fn\n";
  char line[256];
  std::snprintf(line, sizeof line, "%d,%d,%.6f,%.6f,%.6f,%.6f,%d,%d,%d\n", ag.images, ag.empty_images, ag.dice, ag.aji, ag.pq, ag.mpq,
                ag.tp, ag.fp, ag.fn);
  csv << line;
  write_text(fs::path(out) / "summary.csv", csv.str());

  std::ostringstream txt;
  txt << "images evaluated   " << ag.images << " (+" << ag.empty_images << " empty in both maps)\n";
  std::snprintf(line, sizeof line, "DICE  %.4f\nAJI   %.4f\nPQ    %.4f\nmPQ   %.4f\nTP %d  FP %d  FN %d\n", ag.dice, ag.aji, ag.pq,
                ag.mpq, ag.tp, ag.fp, ag.fn);
  txt << line;
  for (int c = 0; c < kPositiveClasses; ++c) {
    std::snprintf(line, sizeof line, "PQ class %d  %.4f  (%d images)\n", c + 1, ag.class_pq[c], ag.class_images[c]);
    txt << line;
  }
  write_text(fs::path(out) / "summary.txt", txt.str());
  std::fputs(txt.str().c_str(), stdout);

  if (!missing.empty() || !extra.empty()) {
    throw ValidationFailure(std::to_string(missing.size() + extra.size()) + " basename(s) without a counterpart were skipped");
  }
  return 0;
}

// ---------------------------------------------------------------- checkgrad / bench

int cmd_checkgrad(std::uint64_t seed) {
  std::printf("%-28s %12s %10s  %s\n", "check", "rel error", "tolerance", "result");
  std::vector<std::string> failed;
  for (const auto& c : run_gradient_checks(seed)) {
    std::printf("%-28s %12.3e %10.0e  %s\n", c.name.c_str(), c.error, c.tolerance, c.passed ? "pass" : "FAIL");
    if (!c.passed) failed.push_back(c.name);
  }
  if (!failed.empty()) {
    std::string list;
    for (const auto& f : failed) list += (list.empty() ? "" : ", ") + f;
    throw ValidationFailure("gradient check failed: " + list);
  }
  return 0;
}

int cmd_bench(const std::string& checkpoint, int size, int repeats, std::uint64_t seed) {
  const RepSNet net = RepSNet::from_state_dict(load_checkpoint(checkpoint));
  if (net.fused()) throw UsageError("bench needs a training-mode checkpoint to compare against its fused form");
  if (size % net.config().spatial_divisor() != 0) {
    throw UsageError("--size must be a multiple of " + std::to_string(net.config().spatial_divisor()));
  }
  const BenchReport r = bench(net, size, size, repeats, seed);
  std::printf("input 1x3x%dx%d, median of %d forwards\n", size, size, repeats);
  std::printf("%-14s %12s %14s %12s\n", "", "params", "MFLOPs", "ms/forward");
  std::printf("%-14s %12zu %14.3f %12.3f\n", "multi-branch", r.params_train, r.flops_train / 1e6, r.seconds_train * 1e3);
  std::printf("%-14s %12zu %14.3f %12.3f\n", "fused", r.params_fused, r.flops_fused / 1e6, r.seconds_fused * 1e3);
  std::printf("%-14s %12.4f %14.4f %12.4f\n", "fused/multi", static_cast<double>(r.params_fused) / r.params_train,
              r.flops_fused / r.flops_train, r.seconds_fused / r.seconds_train);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"RepSNet nucleus instance segmentation"};
  app.require_subcommand(1);
  Common common;
  app.add_option("--threads", common.threads, "worker threads for per-image work; 1 is fully deterministic")
      ->check(CLI::PositiveNumber);

  ConfigArgs synth_cfg, train_cfg, infer_cfg;

  auto* synth = app.add_subcommand("synth", "write a synthetic dataset split 7:1:2");
  synth_cfg.add(synth);
  std::string synth_out;
  int synth_count = 0;
  long long synth_seed = -1;
  synth->add_option("--out", synth_out, "output directory (default: data_dir)");
  synth->add_option("--count", synth_count, "number of samples (default: dataset_count)")->check(CLI::PositiveNumber);
  synth->add_option("--seed", synth_seed, "base seed (default: seed)")->check(CLI::NonNegativeNumber);

  auto* train = app.add_subcommand("train", "train on <data_dir>; writes model.ckpt, loss.csv and config.txt to <run_dir>");
  train_cfg.add(train);
  TrainArgs ta;
  train->add_option("--data", ta.data, "dataset directory (default: data_dir)");
  train->add_option("--out", ta.out, "run directory (default: run_dir)");
  train->add_option("--epochs", ta.epochs, "epochs (default: epochs)")->check(CLI::NonNegativeNumber);
  train->add_option("--seed", ta.seed, "weight-init and shuffling seed (default: seed)")->check(CLI::NonNegativeNumber);
  train->add_flag("--no-reparam", ta.no_reparam, "plain 3x3 encoder units instead of multi-branch RepVGG units");
  train->add_flag("--no-repupsample", ta.no_repupsample, "plain 3x3 upsampling units instead of two-branch RepUpsample units");
  train->add_flag("--no-nb-loss", ta.no_nb_loss, "drop the isoheight boundary loss (lambda_nb = 0)");
  train->add_flag("--overfit-one", ta.overfit_one, "fit the first training sample alone and report the loss drop");
  train->add_option("--overfit-steps", ta.overfit_steps, "steps for --overfit-one")->check(CLI::PositiveNumber);

  auto* fuse = app.add_subcommand("fuse", "fuse a training-mode checkpoint after verifying equivalence");
  std::string fuse_in, fuse_out;
  int fuse_trials = 5;
  std::uint64_t fuse_seed = 1;
  fuse->add_option("input", fuse_in, "training-mode checkpoint")->required()->check(CLI::ExistingFile);
  fuse->add_option("output", fuse_out, "fused checkpoint to write")->required();
  fuse->add_option("--trials", fuse_trials, "random inputs for the equivalence check")->check(CLI::PositiveNumber);
  fuse->add_option("--seed", fuse_seed, "seed of the random inputs");

  auto* infer = app.add_subcommand(
      "infer", "segment images; boundary pixels are those with strictly more than e_t votes");
  infer_cfg.add(infer);
  InferArgs ia;
  infer->add_option("--checkpoint", ia.checkpoint, "model checkpoint")->required()->check(CLI::ExistingFile);
  infer->add_option("--images", ia.images, "directory of <name>_img.png files")->required()->check(CLI::ExistingDirectory);
  infer->add_option("--split", ia.split, "read names from <images>/<split>.txt");
  infer->add_option("--out", ia.out, "output directory")->required();
  infer->add_option("--mode", ia.mode, "run the training-mode or fused network")->check(CLI::IsMember({"train", "fused"}));
  infer->add_flag("--overlay", ia.overlay, "also write <name>_overlay.png with class-colored boundaries");
  std::string post_mode;
  infer->add_option("--post", post_mode, "bvm (boundary voting) or naive (components of the NP mask)")
      ->check(CLI::IsMember({"bvm", "naive"}));

  auto* eval = app.add_subcommand("eval", "score predicted maps against ground truth");
  std::string ev_pred, ev_gt, ev_split, ev_out;
  eval->add_option("--pred", ev_pred, "directory of predicted <name>_inst.png / <name>_type.png")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--gt", ev_gt, "ground-truth dataset directory")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--split", ev_split, "read names from <gt>/<split>.txt");
  eval->add_option("--out", ev_out, "report directory")->required();

  auto* checkgrad = app.add_subcommand("checkgrad", "finite-difference check of every backward pass");
  std::uint64_t cg_seed = 1;
  checkgrad->add_option("--seed", cg_seed, "seed of the random test tensors");

  auto* bench_cmd = app.add_subcommand("bench", "compare multi-branch and fused forward cost");
  std::string bench_ckpt;
  int bench_size = 64, bench_repeats = 10;
  std::uint64_t bench_seed = 1;
  bench_cmd->add_option("--checkpoint", bench_ckpt, "training-mode checkpoint")->required()->check(CLI::ExistingFile);
  bench_cmd->add_option("--size", bench_size, "square input side")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--repeats", bench_repeats, "timed forwards per network")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--seed", bench_seed, "seed of the random input");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*synth) return cmd_synth(synth_cfg, synth_out, synth_count, synth_seed, common);
    if (*train) return cmd_train(train_cfg, ta);
    if (*fuse) return cmd_fuse(fuse_in, fuse_out, fuse_trials, fuse_seed);
    if (*infer) {
      if (!post_mode.empty()) infer_cfg.overrides.push_back("post=" + post_mode);
      return cmd_infer(infer_cfg, ia, common);
    }
    if (*eval) return cmd_eval(ev_pred, ev_gt, ev_split, ev_out, common);
    if (*checkgrad) return cmd_checkgrad(cg_seed);
    if (*bench_cmd) return cmd_bench(bench_ckpt, bench_size, bench_repeats, bench_seed);
  } catch (const NumericError& e) {
    std::fprintf(stderr, "numeric failure: %s\n", e.what());
    return 3;
  } catch (const ValidationFailure& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const ShapeError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 1;
}
