#include "avse/neural/train.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "avse/error.hpp"
#include "avse/random.hpp"

namespace avse::nn {

void adam_step(ModelParams& params, std::span<const double> grad, AdamState& state, const AdamConfig& cfg) {
  const std::size_t n = params.values.size();
  if (grad.size() != n) throw Error("adam_step: gradient size mismatch");
  if (state.m.size() != n) state.m.assign(n, 0.0);
  if (state.v.size() != n) state.v.assign(n, 0.0);
  state.step += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  for (const ParamEntry& e : params.layout.entries()) {
    if (!e.trainable) continue;
    for (std::size_t k = e.offset; k < e.offset + e.size; ++k) {
      const double g = grad[k];
      state.m[k] = cfg.beta1 * state.m[k] + (1.0 - cfg.beta1) * g;
      state.v[k] = cfg.beta2 * state.v[k] + (1.0 - cfg.beta2) * g * g;
      const double m_hat = state.m[k] / bc1;
      const double v_hat = state.v[k] / bc2;
      params.values[k] -= cfg.learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

EarlyStopper::EarlyStopper(int patience) : patience_(patience) {
  if (patience < 1) throw Error("early stopping patience must be at least 1");
}

bool EarlyStopper::update(double val_loss) {
  ++epoch_;
  if (val_loss < best_loss_) {
    best_loss_ = val_loss;
    best_epoch_ = epoch_;
    epochs_since_best_ = 0;
    return true;
  }
  ++epochs_since_best_;
  return false;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw Error("train: learning rate must be positive");
  if (max_epochs < 1) throw Error("train: max_epochs must be at least 1");
  if (batch_size < 1) throw Error("train: batch size must be at least 1");
  if (patience < 1) throw Error("train: patience must be at least 1");
  if (!(alpha >= 0.0)) throw Error("train: alpha must be non-negative");
}

BatchGradient loss_and_gradient(const Network& net, std::span<const AvSegment* const> batch, LossKind kind,
                                double alpha, Phase phase) {
  BatchGradient out;
  const int frames = net.config().output_frames;
  const int bins = net.config().output_bins;
  const Matrix logits = net.forward(batch, phase, &out.cache);
  const RealMatrix pred = stack_logits(logits, frames, bins);
  RealMatrix target(pred.rows(), pred.cols());
  for (std::size_t n = 0; n < batch.size(); ++n)
    target.middleRows(static_cast<Eigen::Index>(n) * frames, frames) = batch[n]->target_irm;
  const LossValue loss = compute_loss(kind, pred, target, alpha);
  out.loss = loss.value;
  out.grad = net.backward(out.cache, unstack_gradient(loss.gradient, frames, bins));
  return out;
}

double evaluate_loss(const Network& net, std::span<const AvSegment> segments, LossKind kind, double alpha,
                     int batch_size) {
  if (segments.empty()) throw Error("evaluate_loss: no segments");
  const int frames = net.config().output_frames;
  const int bins = net.config().output_bins;
  double total = 0.0;
  for (std::size_t start = 0; start < segments.size(); start += static_cast<std::size_t>(batch_size)) {
    const std::size_t end = std::min(segments.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<const AvSegment*> batch;
    for (std::size_t i = start; i < end; ++i) batch.push_back(&segments[i]);
    const RealMatrix pred = stack_logits(net.forward(batch, Phase::Inference, nullptr), frames, bins);
    RealMatrix target(pred.rows(), pred.cols());
    for (std::size_t n = 0; n < batch.size(); ++n)
      target.middleRows(static_cast<Eigen::Index>(n) * frames, frames) = batch[n]->target_irm;
    total += compute_loss(kind, pred, target, alpha).value * static_cast<double>(batch.size());
  }
  return total / static_cast<double>(segments.size());
}

TrainResult train(Network& net, std::span<const AvSegment> train_segments, std::span<const AvSegment> val_segments,
                  const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  if (train_segments.empty()) throw Error("train: empty training set");
  if (val_segments.empty()) throw Error("train: empty validation set");

  const AdamConfig adam_cfg{cfg.learning_rate};
  TrainResult result;
  result.best_params = net.params();
  EarlyStopper stopper(cfg.patience);
  std::uint64_t best_steps = net.optimizer_steps();

  std::vector<std::size_t> order(train_segments.size());
  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(child_seed(cfg.seed, static_cast<std::uint64_t>(epoch)));
    shuffle(order, rng);

    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
      std::vector<const AvSegment*> batch;
      for (std::size_t i = start; i < end; ++i) batch.push_back(&train_segments[order[i]]);
      BatchGradient bg = loss_and_gradient(net, batch, cfg.loss_kind, cfg.alpha);
      if (!std::isfinite(bg.loss)) {
        std::ostringstream msg;
        msg << "train: non-finite loss at epoch " << epoch << ", batch starting at " << start << " ("
            << batch.front()->key() << ")";
        throw Error(msg.str());
      }
      net.commit_batch_statistics(bg.cache);
      adam_step(net.params(), bg.grad, result.adam, adam_cfg);
      net.set_optimizer_steps(result.adam.step);
      loss_sum += bg.loss * static_cast<double>(batch.size());
      seen += batch.size();
    }

    const double val_loss = evaluate_loss(net, val_segments, cfg.loss_kind, cfg.alpha);
    if (!std::isfinite(val_loss)) throw Error("train: non-finite validation loss at epoch " + std::to_string(epoch));
    const EpochRecord rec{epoch, loss_sum / static_cast<double>(seen), val_loss};
    result.history.push_back(rec);
    if (on_epoch) on_epoch(rec);
    if (stopper.update(val_loss)) {
      result.best_params = net.params();
      best_steps = net.optimizer_steps();
    }
    if (stopper.should_stop()) break;
  }

  result.best_epoch = stopper.best_epoch();
  net.params() = result.best_params;
  net.set_optimizer_steps(best_steps);
  return result;
}

void write_history_csv(const std::filesystem::path& path, std::span<const EpochRecord> history) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "epoch,train_loss,val_loss\n";
  out.precision(10);
  for (const auto& r : history) out << r.epoch << ',' << r.train_loss << ',' << r.val_loss << '\n';
}

}  // namespace avse::nn
