#include "mret/train.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>
#include <numeric>
#include <sstream>

#include "mret/metrics.hpp"

namespace mret {

void TrainConfig::validate() const {
  if (!(base_lr > 0.0)) throw ConfigError("train: base_lr must be > 0");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("train: momentum must lie in [0, 1)");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (!(mos_hi > mos_lo)) throw ConfigError("train: mos range must be non-empty");
  if (clip_grad_norm < 0.0) throw ConfigError("train: clip_grad_norm must be >= 0");
}

int TrainConfig::steps_per_epoch(std::size_t n) const {
  return static_cast<int>((n + static_cast<std::size_t>(batch_size) - 1) / static_cast<std::size_t>(batch_size));
}

int TrainConfig::total_steps(std::size_t n) const { return epochs * steps_per_epoch(n); }

double TrainConfig::to_target(double mos) const {
  return mos_normalization ? (mos - mos_lo) / (mos_hi - mos_lo) : mos;
}

double TrainConfig::to_mos(double prediction) const {
  return mos_normalization ? prediction * (mos_hi - mos_lo) + mos_lo : prediction;
}

double l2_loss(std::span<const double> predictions, std::span<const double> labels) {
  if (predictions.empty()) throw NumericsError("l2_loss on an empty batch");
  if (predictions.size() != labels.size()) throw ShapeError("l2_loss: prediction and label counts differ");
  double s = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) s += (predictions[i] - labels[i]) * (predictions[i] - labels[i]);
  return s / static_cast<double>(predictions.size());
}

double cosine_lr(std::int64_t step, std::int64_t total_steps, double base) {
  if (total_steps < 1) throw ConfigError("cosine_lr: total_steps must be >= 1");
  if (step < 0 || step > total_steps) throw ConfigError("cosine_lr: step outside [0, total_steps]");
  if (step == total_steps) return 0.0;
  return 0.5 * base * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total_steps)));
}

void sgd_step(ModelParams& params, const GradMap& grads, OptState& state, double lr, double momentum) {
  for (const auto& [name, g] : grads) {
    auto it = params.find(name);
    if (it == params.end()) throw ConfigError("gradient for unknown parameter " + name);
    if (g.shape() != it->second.shape())
      throw ShapeError("gradient for " + name + " has shape " + shape_str(g.shape()) + ", parameter is " +
                       shape_str(it->second.shape()));
    if (!g.all_finite()) throw NumericsError("non-finite gradient for " + name);
  }
  // Staged so an overflowing update leaves params and state untouched.
  TensorMap next_theta, next_v;
  for (const auto& [name, g] : grads) {
    Tensor theta = params.at(name);
    auto vit = state.velocity.find(name);
    Tensor v = vit == state.velocity.end() ? Tensor(g.shape(), 0.0) : vit->second;
    for (std::size_t i = 0; i < g.size(); ++i) {
      v[i] = round_to_precision(momentum * v[i] + g[i]);
      theta[i] = round_to_precision(theta[i] - lr * v[i]);
    }
    if (!theta.all_finite() || !v.all_finite()) throw NumericsError("update of " + name + " is not finite");
    next_theta.emplace(name, std::move(theta));
    next_v.emplace(name, std::move(v));
  }
  for (auto& [name, t] : next_theta) params.at(name) = std::move(t);
  for (auto& [name, v] : next_v) state.velocity[name] = std::move(v);
  ++state.step;
}

std::string history_csv(const std::vector<HistoryRow>& rows) {
  std::ostringstream os;
  os << "epoch,step,lr,train_loss,val_srcc,val_plcc\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  for (const auto& r : rows) {
    os << r.epoch << ',' << r.step << ',' << num(r.lr) << ',' << num(r.train_loss) << ','
       << (r.val_srcc ? num(*r.val_srcc) : "") << ',' << (r.val_plcc ? num(*r.val_plcc) : "") << '\n';
  }
  return os.str();
}

EvalResult evaluate(const std::vector<LabeledVideo>& videos, const ModelParams& params, const ModelConfig& mcfg,
                    const TrainConfig& tcfg, const ClipOptions& clip) {
  EvalResult out;
  ClipOptions opts = clip;
  opts.center = CenterMode::infer;
  for (const auto& v : videos) {
    out.predictions.push_back(tcfg.to_mos(predict(v.video, params, mcfg, opts).score));
    out.labels.push_back(v.mos);
  }
  try {
    out.srcc = srcc(out.predictions, out.labels);
    out.plcc = plcc(out.predictions, out.labels);
  } catch (const CorrelationError&) {
    out.srcc.reset();
    out.plcc.reset();
  }
  return out;
}

namespace {

void clip_by_global_norm(GradMap& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, g] : grads)
    for (double v : g.data()) sq += v * v;
  const double norm = std::sqrt(sq);
  if (norm <= max_norm || norm == 0.0) return;
  const double f = max_norm / norm;
  for (auto& [name, g] : grads)
    for (double& v : g.data()) v *= f;
}

}  // namespace

TrainResult train_loop(const std::vector<LabeledVideo>& train_set, const std::vector<LabeledVideo>& val_set,
                       const ModelConfig& mcfg, const TrainConfig& tcfg, const TrainOptions& opts) {
  mcfg.validate();
  tcfg.validate();
  if (train_set.empty()) throw ConfigError("training dataset is empty");

  TrainResult result;
  result.params = opts.initial ? *opts.initial : init_random(mcfg, tcfg.seed);
  check_params(result.params, mcfg);
  result.best_params = result.params;

  ClipOptions clip;
  clip.center = CenterMode::train;
  clip.sampler = opts.sampler;
  clip.strategy = opts.strategy;

  // Pyramids do not depend on the alignment centre, so they are built once.
  std::vector<std::vector<PyramidGroup>> pyramids;
  for (const auto& v : train_set) pyramids.push_back(prepare_pyramids(v.video, mcfg, clip));

  ClipOptions eval_clip = clip;
  eval_clip.center = CenterMode::infer;
  eval_clip.sampler_seed = tcfg.seed;

  Rng center_rng = Rng::derive(tcfg.seed, "center-draw");
  const int steps_per_epoch = tcfg.steps_per_epoch(train_set.size());
  const std::int64_t total = tcfg.total_steps(train_set.size());
  std::vector<std::size_t> order(train_set.size());
  std::int64_t step = 0;

  for (int epoch = 0; epoch < tcfg.epochs && !result.diverged; ++epoch) {
    std::iota(order.begin(), order.end(), 0);
    Rng shuffle_rng = Rng::derive(tcfg.seed, "data-shuffle", static_cast<std::uint64_t>(epoch));
    shuffle_rng.shuffle(order.begin(), order.end());

    for (int s = 0; s < steps_per_epoch; ++s, ++step) {
      const std::size_t begin = static_cast<std::size_t>(s) * tcfg.batch_size;
      const std::size_t end = std::min(begin + tcfg.batch_size, order.size());
      const double weight = 1.0 / static_cast<double>(end - begin);
      const double lr = cosine_lr(step, total, tcfg.base_lr);

      GradMap batch_grads;
      double batch_loss = 0.0;
      HistoryRow row{epoch, step, lr, 0.0, std::nullopt, std::nullopt};
      try {
        for (std::size_t b = begin; b < end; ++b) {
          const std::size_t idx = order[b];
          const auto tubes = sample_clip(pyramids[idx], mcfg, clip, center_rng);
          Tape tape;
          ParamVars p(tape, result.params);
          const Var pred = forward_clip(p, tubes, mcfg, clip);
          const Var diff = ops::sub(pred, tape.constant(Tensor::scalar(tcfg.to_target(train_set[idx].mos))));
          const Var loss = ops::mul(diff, diff);
          batch_loss += weight * loss.value().item();
          for (auto& [name, g] : tape.backward(loss)) {
            auto [it, fresh] = batch_grads.try_emplace(name, Tensor(g.shape(), 0.0));
            for (std::size_t i = 0; i < g.size(); ++i) it->second[i] += weight * g[i];
          }
        }
        if (!std::isfinite(batch_loss)) throw NumericsError("non-finite training loss");
        if (tcfg.clip_grad_norm > 0.0) clip_by_global_norm(batch_grads, tcfg.clip_grad_norm);
        row.train_loss = batch_loss;
        if (s + 1 < steps_per_epoch) {
          sgd_step(result.params, batch_grads, result.opt, lr, tcfg.momentum);
        } else {
          // The epoch-end evaluation can still overflow; keep the pre-step state until it passes.
          ModelParams next = result.params;
          OptState next_opt = result.opt;
          sgd_step(next, batch_grads, next_opt, lr, tcfg.momentum);
          const auto eval = evaluate(val_set.empty() ? train_set : val_set, next, mcfg, tcfg, eval_clip);
          row.val_srcc = eval.srcc;
          row.val_plcc = eval.plcc;
          result.params = std::move(next);
          result.opt = std::move(next_opt);
        }
      } catch (const NumericsError& e) {
        result.diverged = true;
        result.divergence_message = "diverged at step " + std::to_string(step) + ": " + e.what();
        break;
      }

      if (s + 1 == steps_per_epoch) {
        const bool better = row.val_srcc && (!result.best_srcc || *row.val_srcc > *result.best_srcc);
        if (better || epoch == 0) {
          if (row.val_srcc) result.best_srcc = row.val_srcc;
          result.best_epoch = epoch;
          result.best_params = result.params;
          result.best_opt = result.opt;
        }
      }
      result.history.push_back(row);
      if (opts.on_step) opts.on_step(row);
    }
  }
  return result;
}

}  // namespace mret
