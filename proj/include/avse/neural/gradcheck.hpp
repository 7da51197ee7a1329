#pragma once

#include <cstdint>
#include <string>

#include "avse/losses.hpp"
#include "avse/mixer.hpp"
#include "avse/neural/network.hpp"

namespace avse::nn {

struct GradCheckOptions {
  LossKind loss = LossKind::Hybrid;
  double alpha = kDefaultAlpha;
  double step = 1e-5;
  // Parameters compared, spread over every trainable tensor; 0 checks all.
  std::size_t max_params = 600;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t checked = 0;
  std::string worst_parameter;
};

// Compares the reverse-mode gradient of the batch-of-one training-mode loss
// with central differences. Relative error is |a - n| / max(|a|, |n|, floor),
// where floor = 1e-3 * max|a| over the checked set, so entries many orders
// below the gradient scale are judged on an absolute footing.
// For MAE, targets within 1e-3 of the prediction are pushed 2e-3 away first so
// no difference sits on the kink.
GradCheckResult gradient_check(const Network& net, const AvSegment& segment, const GradCheckOptions& opts);

}  // namespace avse::nn
