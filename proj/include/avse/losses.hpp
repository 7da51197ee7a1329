#pragma once

#include <string_view>

#include "avse/signal.hpp"

namespace avse {

enum class LossKind { Mse, Mae, Hybrid };

std::string_view to_string(LossKind k);
LossKind parse_loss_kind(std::string_view s);

inline constexpr double kCosineEpsilon = 1e-8;
inline constexpr double kDefaultAlpha = 0.5;

struct LossValue {
  double value = 0.0;
  RealMatrix gradient;  // d value / d pred
};

LossValue mse_loss(const RealMatrix& pred, const RealMatrix& target);

// Subgradient uses sign(0) = 0.
LossValue mae_loss(const RealMatrix& pred, const RealMatrix& target);

// Rows are frames. Mean over all frames of 1 - <p,m> / (|p||m| + eps);
// frames whose target row is all zero contribute neither loss nor gradient.
LossValue cosine_loss(const RealMatrix& pred, const RealMatrix& target);

LossValue hybrid_loss(const RealMatrix& pred, const RealMatrix& target, double alpha = kDefaultAlpha);

LossValue compute_loss(LossKind kind, const RealMatrix& pred, const RealMatrix& target,
                       double alpha = kDefaultAlpha);

}  // namespace avse
