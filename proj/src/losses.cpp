#include "avse/losses.hpp"

#include <cmath>
#include <string>

#include "avse/error.hpp"

namespace avse {
namespace {

void require_same_shape(const RealMatrix& pred, const RealMatrix& target, const char* name) {
  if (pred.rows() != target.rows() || pred.cols() != target.cols())
    throw Error(std::string(name) + ": shape mismatch");
  if (pred.size() == 0) throw Error(std::string(name) + ": empty input");
}

}  // namespace

std::string_view to_string(LossKind k) {
  switch (k) {
    case LossKind::Mse: return "mse";
    case LossKind::Mae: return "mae";
    case LossKind::Hybrid: return "hybrid";
  }
  return "?";
}

LossKind parse_loss_kind(std::string_view s) {
  if (s == "mse") return LossKind::Mse;
  if (s == "mae") return LossKind::Mae;
  if (s == "hybrid") return LossKind::Hybrid;
  throw Error("unknown loss '" + std::string(s) + "' (expected mse|mae|hybrid)");
}

LossValue mse_loss(const RealMatrix& pred, const RealMatrix& target) {
  require_same_shape(pred, target, "mse_loss");
  const double k = static_cast<double>(pred.size());
  RealMatrix diff = pred - target;
  return {diff.squaredNorm() / k, diff * (2.0 / k)};
}

LossValue mae_loss(const RealMatrix& pred, const RealMatrix& target) {
  require_same_shape(pred, target, "mae_loss");
  const double k = static_cast<double>(pred.size());
  RealMatrix diff = pred - target;
  RealMatrix grad = diff.unaryExpr([k](double d) { return d > 0.0 ? 1.0 / k : d < 0.0 ? -1.0 / k : 0.0; });
  return {diff.cwiseAbs().sum() / k, std::move(grad)};
}

LossValue cosine_loss(const RealMatrix& pred, const RealMatrix& target) {
  require_same_shape(pred, target, "cosine_loss");
  const double frames = static_cast<double>(pred.rows());
  LossValue out{0.0, RealMatrix::Zero(pred.rows(), pred.cols())};
  for (Eigen::Index t = 0; t < pred.rows(); ++t) {
    const auto p = pred.row(t);
    const auto m = target.row(t);
    const double nm = m.norm();
    if (nm == 0.0) continue;
    const double np = p.norm();
    const double dot = p.dot(m);
    const double denom = np * nm + kCosineEpsilon;
    out.value += 1.0 - dot / denom;
    // d(dot/denom)/dp = m/denom - dot * nm * p / (np * denom^2)
    auto g = out.gradient.row(t);
    g = m / denom;
    if (np > 0.0) g -= p * (dot * nm / (np * denom * denom));
    g *= -1.0 / frames;
  }
  out.value /= frames;
  return out;
}

LossValue hybrid_loss(const RealMatrix& pred, const RealMatrix& target, double alpha) {
  if (!(alpha >= 0.0)) throw Error("hybrid_loss: alpha must be non-negative");
  LossValue mae = mae_loss(pred, target);
  if (alpha == 0.0) return mae;
  LossValue cos = cosine_loss(pred, target);
  mae.value += alpha * cos.value;
  mae.gradient += alpha * cos.gradient;
  return mae;
}

LossValue compute_loss(LossKind kind, const RealMatrix& pred, const RealMatrix& target, double alpha) {
  switch (kind) {
    case LossKind::Mse: return mse_loss(pred, target);
    case LossKind::Mae: return mae_loss(pred, target);
    case LossKind::Hybrid: return hybrid_loss(pred, target, alpha);
  }
  throw Error("unknown loss kind");
}

}  // namespace avse
