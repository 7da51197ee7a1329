#pragma once

#include <filesystem>

#include "avse/losses.hpp"
#include "avse/neural/network.hpp"
#include "avse/neural/train.hpp"

namespace avse::nn {

inline constexpr std::uint32_t kCheckpointConfigVersion = 1;

struct Checkpoint {
  ModelConfig config;
  LossKind loss_kind = LossKind::Hybrid;  // objective the parameters were trained with
  double alpha = kDefaultAlpha;
  std::vector<double> params;
  AdamState adam;
};

// "AVSE1", versioned config block, parameters as little-endian f64, then the
// Adam moment vectors and step counter.
void write_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint(const std::filesystem::path& path);

Checkpoint make_checkpoint(const Network& net, LossKind loss, double alpha, const AdamState& adam);
Network network_from(const Checkpoint& ckpt);

}  // namespace avse::nn
