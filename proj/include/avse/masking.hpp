#pragma once

#include "avse/signal.hpp"

namespace avse {

inline constexpr double kIrmEpsilon = 1e-12;

// Values in [0, 1], rows are frames.
struct RatioMask {
  RealMatrix data;
};

// |S|^2 / (|S|^2 + |N|^2 + eps); 0/0 resolves to 0.
RatioMask ideal_ratio_mask(const PowerSpectrogram& speech_power, const PowerSpectrogram& noise_power);

PowerSpectrogram apply_mask(const RatioMask& mask, const PowerSpectrogram& mixture_power);

// Magnitude sqrt(enhanced_power) with the mixture phase, then istft.
Waveform reconstruct(const PowerSpectrogram& enhanced_power, const ComplexSpectrogram& mixture);

// Inference-time projection of raw predictor output onto [0, 1].
RatioMask clamp_mask(const RealMatrix& raw);

}  // namespace avse
