#include "avse/masking.hpp"

#include <cmath>
#include <limits>

#include "avse/error.hpp"

namespace avse {
namespace {

void require_same_shape(const RealMatrix& a, const RealMatrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw Error(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                std::to_string(b.cols()) + ")");
}

}  // namespace

RatioMask ideal_ratio_mask(const PowerSpectrogram& speech_power, const PowerSpectrogram& noise_power) {
  require_same_shape(speech_power.data, noise_power.data, "ideal_ratio_mask");
  if ((speech_power.data.array() < 0.0).any() || (noise_power.data.array() < 0.0).any())
    throw Error("ideal_ratio_mask: negative power");
  const auto& s = speech_power.data.array();
  const auto& n = noise_power.data.array();
  return RatioMask{(s / (s + n + kIrmEpsilon)).matrix()};
}

PowerSpectrogram apply_mask(const RatioMask& mask, const PowerSpectrogram& mixture_power) {
  require_same_shape(mask.data, mixture_power.data, "apply_mask");
  return PowerSpectrogram{mask.data.cwiseProduct(mixture_power.data)};
}

Waveform reconstruct(const PowerSpectrogram& enhanced_power, const ComplexSpectrogram& mixture) {
  if (enhanced_power.frames() != mixture.frames() || enhanced_power.bins() != mixture.bins())
    throw Error("reconstruct: shape mismatch between enhanced power and mixture");
  ComplexSpectrogram out{ComplexMatrix(mixture.frames(), mixture.bins()), mixture.config};
  for (Eigen::Index k = 0; k < mixture.frames(); ++k) {
    for (Eigen::Index b = 0; b < mixture.bins(); ++b) {
      const std::complex<double> m = mixture.data(k, b);
      const double mag = std::sqrt(std::max(0.0, enhanced_power.data(k, b)));
      const double abs_m = std::sqrt(m.real() * m.real() + m.imag() * m.imag());
      if (abs_m == 0.0) {
        // No phase to borrow.
        out.data(k, b) = {mag, 0.0};
        continue;
      }
      double gain = mag / abs_m;
      // Unit gain (an all-ones mask) must leave the bin bit-identical.
      if (std::abs(gain - 1.0) <= 4.0 * std::numeric_limits<double>::epsilon()) gain = 1.0;
      out.data(k, b) = m * gain;
    }
  }
  return istft(out);
}

RatioMask clamp_mask(const RealMatrix& raw) { return RatioMask{raw.cwiseMax(0.0).cwiseMin(1.0)}; }

}  // namespace avse
