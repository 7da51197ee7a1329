#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "avse/signal.hpp"

namespace avse {

inline constexpr double kSnrCapDb = 120.0;

// Mean absolute difference over all entries.
double mask_mae(const RealMatrix& pred, const RealMatrix& target);

// 10 log10(sum ref^2 / sum (ref - est)^2), capped at 120 dB when the error
// energy falls below 1e-12 of the reference energy.
double snr_db(const Waveform& reference, const Waveform& estimate);

// Percentage decrease from mae_a to mae_av; mae_a must be positive.
double relative_improvement(double mae_a, double mae_av);

// Reporting precision for percentages.
double round1(double x);

struct EvalRow {
  std::string model;
  std::string loss;
  std::string mode;
  double snr_db_mean = 0.0;
  double mask_mae_mean = 0.0;
};

void write_eval_csv(const std::filesystem::path& path, const std::vector<EvalRow>& rows);

}  // namespace avse
