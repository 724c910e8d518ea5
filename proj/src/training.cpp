#include "repsnet/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

namespace repsnet {

Tensor stack_images(const std::vector<const Sample*>& batch) {
  if (batch.empty()) throw ValueError("empty batch");
  const Shape one = batch.front()->image.shape();
  Tensor out({batch.size(), one.c, one.h, one.w});
  for (std::size_t n = 0; n < batch.size(); ++n) {
    if (batch[n]->image.shape() != one) throw ShapeError("all images in a batch must share one size");
    std::copy(batch[n]->image.values().begin(), batch[n]->image.values().end(), &out(n, 0, 0, 0));
  }
  return out;
}

namespace {

Targets batch_targets(const std::vector<const Sample*>& batch, int tau) {
  std::vector<InstanceMap> inst;
  std::vector<TypeMap> types;
  for (const auto* s : batch) {
    inst.push_back(s->inst);
    types.push_back(s->types);
  }
  return make_targets(inst, types, tau);
}

void accumulate(EpochLosses& acc, const LossReport& r) {
  acc.np += r.np;
  acc.nt += r.nt;
  acc.bd += r.bd;
  acc.nb += r.nb;
  acc.total += r.total;
  ++acc.steps;
}

void finish(EpochLosses& acc) {
  if (acc.steps == 0) return;
  acc.np /= acc.steps;
  acc.nt /= acc.steps;
  acc.bd /= acc.steps;
  acc.nb /= acc.steps;
  acc.total /= acc.steps;
}

}  // namespace

EpochLosses train_epoch(RepSNet& net, const std::vector<Sample>& data, AdamState& state, double lr,
                        const TrainOptions& opt, std::mt19937_64& rng) {
  if (data.empty()) throw ValueError("training set is empty");
  if (opt.batch_size < 1) throw ValueError("batch size must be positive");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);

  EpochLosses acc;
  std::vector<Sample> augmented;
  for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
    const std::size_t end = std::min(order.size(), start + opt.batch_size);
    std::vector<const Sample*> batch;
    augmented.clear();
    augmented.reserve(end - start);
    for (std::size_t i = start; i < end; ++i) {
      if (opt.augment) {
        augmented.push_back(augment(data[order[i]], rng));
        batch.push_back(&augmented.back());
      } else {
        batch.push_back(&data[order[i]]);
      }
    }
    const Tensor x = stack_images(batch);
    const Targets t = batch_targets(batch, opt.iso.tau);
    const NetOutputs out = net.train_forward(x);
    const LossReport loss = total_loss(out, t, opt.weights, opt.iso);
    net.zero_grad();
    net.backward(loss.grads);
    const auto params = net.parameters();
    adam_step(params, state, lr);
    for (const auto& p : params) {
      if (!all_finite(std::span<const float>(p.value))) throw NumericError("non-finite parameter '" + p.name + "' after an optimizer step");
    }
    accumulate(acc, loss);
  }
  finish(acc);
  return acc;
}

EpochLosses evaluate_loss(const RepSNet& net, const std::vector<Sample>& data, const TrainOptions& opt) {
  EpochLosses acc;
  for (std::size_t start = 0; start < data.size(); start += opt.batch_size) {
    const std::size_t end = std::min(data.size(), start + opt.batch_size);
    std::vector<const Sample*> batch;
    for (std::size_t i = start; i < end; ++i) batch.push_back(&data[i]);
    const LossReport loss = total_loss(net.forward(stack_images(batch)), batch_targets(batch, opt.iso.tau), opt.weights, opt.iso);
    accumulate(acc, loss);
  }
  finish(acc);
  return acc;
}

FitResult fit(RepSNet& net, const std::vector<Sample>& train, const std::vector<Sample>& val, const FitOptions& opt) {
  if (opt.epochs < 0) throw ValueError("epochs must be non-negative");
  const auto t0 = std::chrono::steady_clock::now();
  auto elapsed = [&] { return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); };

  FitResult result;
  result.best_state = net.state_dict();
  result.final_lr = opt.lr;
  std::ofstream log;
  if (!opt.log_csv.empty()) {
    log.open(opt.log_csv);
    if (!log) throw ValueError("cannot write '" + opt.log_csv.string() + "'");
    log << "epoch,L_np,L_nt,L_bd,L_nb,total,val_total,lr\n";
    log.precision(8);
  }
  auto write_best = [&] {
    if (!opt.checkpoint.empty()) save_checkpoint(opt.checkpoint, result.best_state);
  };
  if (opt.epochs == 0) {
    write_best();
    return result;
  }

  const std::vector<Sample>& held = val.empty() ? train : val;
  PlateauScheduler sched(opt.lr, opt.patience, 0.5, opt.lr_floor);
  AdamState state;
  std::mt19937_64 rng(opt.seed);
  double lr = opt.lr;
  for (int epoch = 1; epoch <= opt.epochs; ++epoch) {
    const EpochLosses tr = train_epoch(net, train, state, lr, opt.train, rng);
    const EpochLosses va = evaluate_loss(net, held, opt.train);
    if (!std::isfinite(va.total)) throw NumericError("non-finite validation loss");
    const double used_lr = lr;
    lr = sched.observe(va.total);
    if (sched.improved_last()) {
      result.best_val = va.total;
      result.best_epoch = epoch;
      result.best_state = net.state_dict();
      write_best();
    }
    if (log.is_open()) {
      log << epoch << ',' << tr.np << ',' << tr.nt << ',' << tr.bd << ',' << tr.nb << ',' << tr.total << ',' << va.total
          << ',' << used_lr << '\n';
      log.flush();
    }
    if (opt.on_epoch) opt.on_epoch(epoch, tr, va, used_lr);
    result.epochs_run = epoch;
    if (opt.max_seconds > 0.0 && elapsed() >= opt.max_seconds) break;
  }
  result.final_lr = lr;
  result.seconds = elapsed();
  return result;
}

OverfitResult overfit_one(RepSNet& net, const Sample& sample, int steps, double lr, const TrainOptions& opt) {
  if (steps < 1) throw ValueError("overfit_one needs at least one step");
  const std::vector<const Sample*> batch{&sample};
  const Tensor x = stack_images(batch);
  const Targets t = batch_targets(batch, opt.iso.tau);
  AdamState state;
  OverfitResult r;
  for (int step = 0; step <= steps; ++step) {
    const LossReport loss = total_loss(net.train_forward(x), t, opt.weights, opt.iso);
    if (step == 0) r.initial = loss.total;
    r.final = loss.total;
    if (step == steps) break;
    net.zero_grad();
    net.backward(loss.grads);
    adam_step(net.parameters(), state, lr);
    r.steps = step + 1;
  }
  return r;
}

}  // namespace repsnet
