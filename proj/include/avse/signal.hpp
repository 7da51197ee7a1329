#pragma once

#include <complex>
#include <vector>

#include <Eigen/Core>

namespace avse {

inline constexpr int kSampleRate = 16000;

using RealMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ComplexMatrix =
    Eigen::Matrix<std::complex<double>, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Waveform {
  std::vector<double> samples;
  int sample_rate_hz = kSampleRate;

  std::size_t size() const { return samples.size(); }
  double duration_ms() const { return 1000.0 * samples.size() / sample_rate_hz; }
};

// Throws unless the rate is 16 kHz and every sample is finite.
void validate(const Waveform& w);

// Mean square over all samples.
double mean_power(const Waveform& w);

struct StftConfig {
  int window_ms = 25;
  int hop_ms = 10;
  int fft_size = 512;

  int window_length() const { return kSampleRate * window_ms / 1000; }
  int hop_length() const { return kSampleRate * hop_ms / 1000; }
  int n_bins() const { return fft_size / 2 + 1; }
  void validate() const;
};

// Rows are frames, columns are bins.
struct ComplexSpectrogram {
  ComplexMatrix data;
  StftConfig config;

  Eigen::Index frames() const { return data.rows(); }
  Eigen::Index bins() const { return data.cols(); }
};

struct PowerSpectrogram {
  RealMatrix data;

  Eigen::Index frames() const { return data.rows(); }
  Eigen::Index bins() const { return data.cols(); }
};

// Periodic Hamming: 0.54 - 0.46 cos(2 pi n / N).
std::vector<double> hamming_window(int length);

// Frames are left aligned with no centre padding; frame k covers
// samples [hop*k, hop*k + window).
int stft_frame_count(std::size_t n_samples, const StftConfig& cfg = {});

ComplexSpectrogram stft(const Waveform& w, const StftConfig& cfg = {});

// Weighted overlap-add, normalised by the summed squared window.
Waveform istft(const ComplexSpectrogram& s);

PowerSpectrogram power_spectrum(const ComplexSpectrogram& s);

}  // namespace avse
