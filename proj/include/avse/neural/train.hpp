#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "avse/losses.hpp"
#include "avse/mixer.hpp"
#include "avse/neural/network.hpp"

namespace avse::nn {

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  std::uint64_t step = 0;
};

struct AdamConfig {
  double learning_rate = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// One bias-corrected Adam update of the trainable entries.
void adam_step(ModelParams& params, std::span<const double> grad, AdamState& state, const AdamConfig& cfg);

// Tracks the best validation loss; reports stop once `patience` epochs pass
// without a strict improvement.
class EarlyStopper {
 public:
  explicit EarlyStopper(int patience);

  // Returns true when this epoch is the new best.
  bool update(double val_loss);
  bool should_stop() const { return epochs_since_best_ >= patience_; }
  int best_epoch() const { return best_epoch_; }
  double best_loss() const { return best_loss_; }

 private:
  int patience_;
  int epoch_ = -1;
  int best_epoch_ = -1;
  int epochs_since_best_ = 0;
  double best_loss_ = std::numeric_limits<double>::infinity();
};

struct TrainConfig {
  double learning_rate = 1e-4;
  int max_epochs = 100;
  int batch_size = 16;
  LossKind loss_kind = LossKind::Hybrid;
  double alpha = kDefaultAlpha;
  int patience = 5;
  std::uint64_t seed = 0;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  ModelParams best_params;
  std::vector<EpochRecord> history;
  int best_epoch = -1;
  AdamState adam;
};

// Batch loss: forward in training mode, loss over the stacked masks, backward.
struct BatchGradient {
  double loss = 0.0;
  std::vector<double> grad;
  ForwardCache cache;
};
BatchGradient loss_and_gradient(const Network& net, std::span<const AvSegment* const> batch, LossKind kind,
                                double alpha, Phase phase = Phase::Training);

// Mean loss over segments in inference mode.
double evaluate_loss(const Network& net, std::span<const AvSegment> segments, LossKind kind, double alpha,
                     int batch_size = 32);

// Epoch order is a seeded shuffle derived from (seed, epoch). On return the
// network holds the best-validation parameters.
using EpochCallback = std::function<void(const EpochRecord&)>;
TrainResult train(Network& net, std::span<const AvSegment> train_segments, std::span<const AvSegment> val_segments,
                  const TrainConfig& cfg, const EpochCallback& on_epoch = {});

void write_history_csv(const std::filesystem::path& path, std::span<const EpochRecord> history);

}  // namespace avse::nn
