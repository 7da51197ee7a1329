#include "avse/signal.hpp"

#include <cmath>
#include <memory>
#include <mutex>
#include <numbers>
#include <string>

#include <fftw3.h>

#include "avse/error.hpp"

namespace avse {
namespace {

struct FftwFree {
  void operator()(void* p) const { fftw_free(p); }
};

// FFTW planning is not thread-safe, execution on fresh aligned buffers is.
class RealFft {
 public:
  explicit RealFft(int n) : n_(n) {
    auto* in = static_cast<double*>(fftw_malloc(sizeof(double) * n));
    auto* out = static_cast<fftw_complex*>(fftw_malloc(sizeof(fftw_complex) * (n / 2 + 1)));
    forward_ = fftw_plan_dft_r2c_1d(n, in, out, FFTW_ESTIMATE);
    inverse_ = fftw_plan_dft_c2r_1d(n, out, in, FFTW_ESTIMATE);
    fftw_free(in);
    fftw_free(out);
  }
  ~RealFft() {
    fftw_destroy_plan(forward_);
    fftw_destroy_plan(inverse_);
  }
  RealFft(const RealFft&) = delete;
  RealFft& operator=(const RealFft&) = delete;

  int size() const { return n_; }
  void forward(double* in, fftw_complex* out) const { fftw_execute_dft_r2c(forward_, in, out); }
  // Unnormalised; destroys `in`.
  void inverse(fftw_complex* in, double* out) const { fftw_execute_dft_c2r(inverse_, in, out); }

 private:
  int n_;
  fftw_plan forward_;
  fftw_plan inverse_;
};

const RealFft& fft_for(int n) {
  static std::mutex mu;
  static std::vector<std::unique_ptr<RealFft>> plans;
  std::lock_guard lock(mu);
  for (const auto& p : plans)
    if (p->size() == n) return *p;
  plans.push_back(std::make_unique<RealFft>(n));
  return *plans.back();
}

template <class T>
std::unique_ptr<T[], FftwFree> fftw_buffer(std::size_t n) {
  return std::unique_ptr<T[], FftwFree>(static_cast<T*>(fftw_malloc(sizeof(T) * n)));
}

}  // namespace

void validate(const Waveform& w) {
  if (w.sample_rate_hz != kSampleRate)
    throw Error("waveform sample rate " + std::to_string(w.sample_rate_hz) +
                " Hz, expected 16000 Hz");
  for (double x : w.samples)
    if (!std::isfinite(x)) throw Error("waveform contains non-finite samples");
}

double mean_power(const Waveform& w) {
  if (w.samples.empty()) return 0.0;
  double acc = 0.0;
  for (double x : w.samples) acc += x * x;
  return acc / static_cast<double>(w.samples.size());
}

void StftConfig::validate() const {
  if (window_length() <= 0 || hop_length() <= 0) throw Error("stft: non-positive window or hop");
  if (window_length() > fft_size) throw Error("stft: window longer than fft size");
  if (hop_length() > window_length()) throw Error("stft: hop longer than window");
  if ((fft_size & (fft_size - 1)) != 0) throw Error("stft: fft size must be a power of two");
}

std::vector<double> hamming_window(int length) {
  std::vector<double> w(length);
  for (int n = 0; n < length; ++n)
    w[n] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * n / length);
  return w;
}

int stft_frame_count(std::size_t n_samples, const StftConfig& cfg) {
  const auto win = static_cast<std::size_t>(cfg.window_length());
  if (n_samples < win) return 0;
  return static_cast<int>((n_samples - win) / cfg.hop_length()) + 1;
}

ComplexSpectrogram stft(const Waveform& w, const StftConfig& cfg) {
  validate(w);
  cfg.validate();
  const int win = cfg.window_length();
  const int hop = cfg.hop_length();
  const int n_fft = cfg.fft_size;
  if (w.size() < static_cast<std::size_t>(win))
    throw Error("stft: waveform too short (" + std::to_string(w.size()) + " samples, need " +
                std::to_string(win) + ")");

  const int n_frames = stft_frame_count(w.size(), cfg);
  const auto window = hamming_window(win);
  const RealFft& fft = fft_for(n_fft);
  auto in = fftw_buffer<double>(n_fft);
  auto out = fftw_buffer<fftw_complex>(cfg.n_bins());

  ComplexSpectrogram s{ComplexMatrix(n_frames, cfg.n_bins()), cfg};
  for (int k = 0; k < n_frames; ++k) {
    const double* frame = w.samples.data() + static_cast<std::size_t>(k) * hop;
    for (int n = 0; n < win; ++n) in[n] = frame[n] * window[n];
    for (int n = win; n < n_fft; ++n) in[n] = 0.0;
    fft.forward(in.get(), out.get());
    for (int b = 0; b < cfg.n_bins(); ++b) s.data(k, b) = {out[b][0], out[b][1]};
  }
  return s;
}

Waveform istft(const ComplexSpectrogram& s) {
  const StftConfig& cfg = s.config;
  cfg.validate();
  if (s.bins() != cfg.n_bins())
    throw Error("istft: spectrogram has " + std::to_string(s.bins()) + " bins, config expects " +
                std::to_string(cfg.n_bins()));
  if (s.frames() < 1) throw Error("istft: spectrogram has no frames");

  const int win = cfg.window_length();
  const int hop = cfg.hop_length();
  const int n_fft = cfg.fft_size;
  const auto window = hamming_window(win);
  const std::size_t length = static_cast<std::size_t>(s.frames() - 1) * hop + win;

  std::vector<double> acc(length, 0.0);
  std::vector<double> norm(length, 0.0);
  const RealFft& fft = fft_for(n_fft);
  auto in = fftw_buffer<fftw_complex>(cfg.n_bins());
  auto out = fftw_buffer<double>(n_fft);

  for (Eigen::Index k = 0; k < s.frames(); ++k) {
    for (int b = 0; b < cfg.n_bins(); ++b) {
      in[b][0] = s.data(k, b).real();
      in[b][1] = s.data(k, b).imag();
    }
    // A real signal has real DC and Nyquist bins.
    in[0][1] = 0.0;
    in[cfg.n_bins() - 1][1] = 0.0;
    fft.inverse(in.get(), out.get());
    const std::size_t offset = static_cast<std::size_t>(k) * hop;
    for (int n = 0; n < win; ++n) {
      acc[offset + n] += window[n] * out[n] / n_fft;
      norm[offset + n] += window[n] * window[n];
    }
  }

  Waveform w;
  w.samples.resize(length);
  for (std::size_t i = 0; i < length; ++i) w.samples[i] = norm[i] > 0.0 ? acc[i] / norm[i] : 0.0;
  return w;
}

PowerSpectrogram power_spectrum(const ComplexSpectrogram& s) {
  return PowerSpectrogram{s.data.cwiseAbs2()};
}

}  // namespace avse
