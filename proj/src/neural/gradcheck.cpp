#include "avse/neural/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "avse/error.hpp"
#include "avse/random.hpp"
#include "avse/neural/train.hpp"

namespace avse::nn {
namespace {

constexpr double kKinkMargin = 1e-3;

double batch_loss(const Network& net, const AvSegment& seg, LossKind kind, double alpha) {
  const AvSegment* batch[] = {&seg};
  const Matrix logits = net.forward(batch, Phase::Training, nullptr);
  return compute_loss(kind, stack_logits(logits, net.config().output_frames, net.config().output_bins),
                      seg.target_irm, alpha)
      .value;
}

}  // namespace

GradCheckResult gradient_check(const Network& net, const AvSegment& segment, const GradCheckOptions& opts) {
  Network probe = net;
  AvSegment seg = segment;

  if (opts.loss == LossKind::Mae || opts.loss == LossKind::Hybrid) {
    const AvSegment* batch[] = {&seg};
    const RealMatrix pred = stack_logits(probe.forward(batch, Phase::Training, nullptr),
                                         probe.config().output_frames, probe.config().output_bins);
    for (Eigen::Index k = 0; k < pred.size(); ++k) {
      double& t = seg.target_irm.data()[k];
      const double p = pred.data()[k];
      if (std::abs(p - t) < kKinkMargin) t = p + (t >= p ? 2.0 : -2.0) * kKinkMargin;
    }
  }

  const AvSegment* batch[] = {&seg};
  const BatchGradient analytic = loss_and_gradient(probe, batch, opts.loss, opts.alpha);

  std::vector<std::size_t> indices;
  std::vector<const ParamEntry*> tensors;
  for (const auto& e : probe.params().layout.entries())
    if (e.trainable) tensors.push_back(&e);
  Rng rng(opts.seed);
  if (opts.max_params == 0) {
    for (const auto* e : tensors)
      for (std::size_t k = 0; k < e->size; ++k) indices.push_back(e->offset + k);
  } else {
    const std::size_t per_tensor = std::max<std::size_t>(1, (opts.max_params + tensors.size() - 1) / tensors.size());
    for (const auto* e : tensors) {
      if (e->size <= per_tensor) {
        for (std::size_t k = 0; k < e->size; ++k) indices.push_back(e->offset + k);
      } else {
        for (std::size_t k = 0; k < per_tensor; ++k) indices.push_back(e->offset + uniform_index(rng, e->size));
      }
    }
  }

  std::vector<double> numeric(indices.size());
  double scale = 0.0;
  for (std::size_t j = 0; j < indices.size(); ++j) {
    double& w = probe.params().values[indices[j]];
    const double saved = w;
    w = saved + opts.step;
    const double up = batch_loss(probe, seg, opts.loss, opts.alpha);
    w = saved - opts.step;
    const double down = batch_loss(probe, seg, opts.loss, opts.alpha);
    w = saved;
    numeric[j] = (up - down) / (2.0 * opts.step);
    scale = std::max(scale, std::abs(analytic.grad[indices[j]]));
  }

  GradCheckResult result;
  result.checked = indices.size();
  const double floor = std::max(1e-3 * scale, 1e-300);
  for (std::size_t j = 0; j < indices.size(); ++j) {
    const double a = analytic.grad[indices[j]];
    const double n = numeric[j];
    const double rel = std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor});
    if (rel > result.max_relative_error || result.worst_parameter.empty()) {
      if (rel >= result.max_relative_error) {
        result.max_relative_error = rel;
        for (const auto* e : tensors)
          if (indices[j] >= e->offset && indices[j] < e->offset + e->size)
            result.worst_parameter = e->name + "[" + std::to_string(indices[j] - e->offset) + "]";
      }
    }
  }
  return result;
}

}  // namespace avse::nn
