#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "avse/mixer.hpp"
#include "avse/neural/layers.hpp"
#include "avse/neural/params.hpp"
#include "avse/signal.hpp"

namespace avse::nn {

enum class AudioEncoderKind : std::uint8_t { Fc, Lstm };
enum class Mode : std::uint8_t { A, AV };

std::string_view to_string(AudioEncoderKind k);
std::string_view to_string(Mode m);
AudioEncoderKind parse_audio_encoder(std::string_view s);
Mode parse_mode(std::string_view s);

inline constexpr int kMinScaledWidth = 8;

struct ModelConfig {
  Mode mode = Mode::AV;
  AudioEncoderKind audio_encoder = AudioEncoderKind::Fc;
  std::vector<int> conv_channels{96, 128, 128, 128, 128};
  std::vector<int> video_linear_widths{1024, 512, 256};
  std::vector<int> audio_widths{512, 512, 512};
  std::vector<int> predictor_widths{512, 512, 512};
  int output_bins = kBins;
  int output_frames = kSegmentFrames;
  std::uint64_t seed = 0;
  double scale_factor = 0.25;
  bool log_compress = true;  // feed log(1 + power) to the audio encoder

  // round(width * scale), floored at kMinScaledWidth.
  int scaled(int width) const;
  int audio_embedding_dim() const { return scaled(audio_widths.back()); }
  int video_embedding_dim() const { return mode == Mode::AV ? scaled(video_linear_widths.back()) : 0; }
  int predictor_input_dim() const { return audio_embedding_dim() + video_embedding_dim(); }
  int output_dim() const { return output_bins * output_frames; }
  void validate() const;
};

bool operator==(const ModelConfig& a, const ModelConfig& b);

struct VideoCache {
  std::vector<ConvBlockCache> conv;
  std::vector<DenseCache> linear;
};

struct AudioCache {
  Matrix input;  // [20*257 x B] for FC
  std::vector<DenseCache> linear;
  std::vector<std::vector<Matrix>> lstm_inputs;  // per layer, per step
  std::vector<LstmCache> lstm;
};

struct PredictorCache {
  std::vector<DenseCache> linear;
  DenseCache output;
};

struct ForwardCache {
  Phase phase = Phase::Training;
  std::size_t batch = 0;
  VideoCache video;
  AudioCache audio;
  PredictorCache predictor;
};

// Audio-visual mask regressor: a VGG-M style video encoder, a fully
// connected or LSTM audio encoder and a fully connected mask predictor with a
// linear output layer. Activations are [features x batch].
class Network {
 public:
  explicit Network(ModelConfig config);
  Network(ModelConfig config, ModelParams params);

  const ModelConfig& config() const { return config_; }
  const ModelParams& params() const { return params_; }
  ModelParams& params() { return params_; }
  std::size_t parameter_count() const { return params_.values.size(); }

  // Adam steps taken so far; zero means untrained.
  std::uint64_t optimizer_steps() const { return steps_; }
  void set_optimizer_steps(std::uint64_t n) { steps_ = n; }

  // Videos are 12x96x128 u8, scaled to [0, 1]. Returns [video_dim x B].
  Matrix video_encoder_forward(std::span<const std::uint8_t* const> videos, Phase phase,
                               VideoCache* cache) const;
  // Mixture power spectra, 20x257 each. Returns [audio_dim x B].
  Matrix audio_encoder_forward(std::span<const RealMatrix* const> mixture_power, AudioCache* cache) const;
  // Concatenated [audio; video] embedding in, raw mask logits [5140 x B] out.
  Matrix mask_predictor_forward(const Matrix& embedding, PredictorCache* cache) const;

  // Full forward pass in the model's own mode. AV mode requires video.
  Matrix forward(std::span<const AvSegment* const> batch, Phase phase, ForwardCache* cache) const;

  // Gradient of the loss w.r.t. every parameter (zeros for running statistics),
  // given dL/dlogits with the same layout forward() returned.
  std::vector<double> backward(const ForwardCache& cache, const Matrix& dlogits) const;

  // Moves running statistics towards the batch statistics of a training pass.
  void commit_batch_statistics(const ForwardCache& cache);

 private:
  void build_layout();
  void initialise();

  ModelConfig config_;
  ModelParams params_;
  std::uint64_t steps_ = 0;
  std::vector<ConvShape> conv_shapes_;
};

Matrix prepare_audio_input(const RealMatrix& power, bool log_compress);

// Logit column b -> rows [20b, 20b+20) of a stacked [20B x 257] matrix.
RealMatrix stack_logits(const Matrix& logits, int frames, int bins);
Matrix unstack_gradient(const RealMatrix& stacked, int frames, int bins);

// Clamped masks for each segment of the batch, inference mode.
std::vector<RealMatrix> predict_masks(const Network& net, std::span<const AvSegment* const> batch);

}  // namespace avse::nn
