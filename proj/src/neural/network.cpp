#include "avse/neural/network.hpp"

#include <cmath>
#include <string>

#include "avse/error.hpp"
#include "avse/masking.hpp"
#include "avse/random.hpp"

namespace avse::nn {
namespace {

constexpr int kVideoChannels = kSegmentVideoFrames;

std::string indexed(std::string_view prefix, std::size_t i, std::string_view suffix) {
  return std::string(prefix) + std::to_string(i) + "." + std::string(suffix);
}

}  // namespace

std::string_view to_string(AudioEncoderKind k) { return k == AudioEncoderKind::Fc ? "fc" : "lstm"; }
std::string_view to_string(Mode m) { return m == Mode::A ? "A" : "AV"; }

AudioEncoderKind parse_audio_encoder(std::string_view s) {
  if (s == "fc" || s == "FC") return AudioEncoderKind::Fc;
  if (s == "lstm" || s == "LSTM") return AudioEncoderKind::Lstm;
  throw Error("unknown audio encoder '" + std::string(s) + "' (expected fc|lstm)");
}

Mode parse_mode(std::string_view s) {
  if (s == "A" || s == "a") return Mode::A;
  if (s == "AV" || s == "av") return Mode::AV;
  throw Error("unknown mode '" + std::string(s) + "' (expected A|AV)");
}

int ModelConfig::scaled(int width) const {
  return std::max(kMinScaledWidth, static_cast<int>(std::lround(width * scale_factor)));
}

void ModelConfig::validate() const {
  if (!(scale_factor > 0.0 && scale_factor <= 1.0)) throw Error("model config: scale_factor must be in (0, 1]");
  if (conv_channels.size() != 5) throw Error("model config: the video encoder has five conv blocks");
  if (video_linear_widths.empty() || audio_widths.empty() || predictor_widths.empty())
    throw Error("model config: empty width list");
  for (const auto* list : {&conv_channels, &video_linear_widths, &audio_widths, &predictor_widths})
    for (int w : *list)
      if (w <= 0) throw Error("model config: widths must be positive");
  if (output_bins != kBins || output_frames != kSegmentFrames)
    throw Error("model config: output must be 20 frames x 257 bins");
}

bool operator==(const ModelConfig& a, const ModelConfig& b) {
  return a.mode == b.mode && a.audio_encoder == b.audio_encoder && a.conv_channels == b.conv_channels &&
         a.video_linear_widths == b.video_linear_widths && a.audio_widths == b.audio_widths &&
         a.predictor_widths == b.predictor_widths && a.output_bins == b.output_bins &&
         a.output_frames == b.output_frames && a.seed == b.seed && a.scale_factor == b.scale_factor &&
         a.log_compress == b.log_compress;
}

Network::Network(ModelConfig config) : config_(std::move(config)) {
  config_.validate();
  build_layout();
  params_.values.assign(params_.layout.total(), 0.0);
  initialise();
}

Network::Network(ModelConfig config, ModelParams params) : config_(std::move(config)) {
  config_.validate();
  build_layout();
  if (params.values.size() != params_.layout.total())
    throw Error("model parameters do not match the configuration (" + std::to_string(params.values.size()) +
                " values, layout needs " + std::to_string(params_.layout.total()) + ")");
  if (!params.all_finite()) throw Error("model parameters contain non-finite values");
  params_.values = std::move(params.values);
}

void Network::build_layout() {
  ParamLayout& L = params_.layout;
  conv_shapes_.clear();
  if (config_.mode == Mode::AV) {
    int c_in = kVideoChannels;
    int h = kVideoHeight;
    int w = kVideoWidth;
    for (std::size_t i = 0; i < config_.conv_channels.size(); ++i) {
      const int c_out = config_.scaled(config_.conv_channels[i]);
      conv_shapes_.push_back({c_in, c_out, h, w});
      L.add(indexed("video.conv", i, "weight"), {c_out, 9 * c_in});
      L.add(indexed("video.bn", i, "gamma"), {c_out});
      L.add(indexed("video.bn", i, "beta"), {c_out});
      L.add(indexed("video.bn", i, "running_mean"), {c_out}, false);
      L.add(indexed("video.bn", i, "running_var"), {c_out}, false);
      c_in = c_out;
      h /= 2;
      w /= 2;
    }
    int in = c_in * h * w;
    for (std::size_t i = 0; i < config_.video_linear_widths.size(); ++i) {
      const int out = config_.scaled(config_.video_linear_widths[i]);
      L.add(indexed("video.fc", i, "weight"), {out, in});
      L.add(indexed("video.fc", i, "bias"), {out});
      in = out;
    }
  }

  int in = config_.output_dim();
  if (config_.audio_encoder == AudioEncoderKind::Lstm) in = config_.output_bins;
  for (std::size_t i = 0; i < config_.audio_widths.size(); ++i) {
    const int out = config_.scaled(config_.audio_widths[i]);
    if (config_.audio_encoder == AudioEncoderKind::Fc) {
      L.add(indexed("audio.fc", i, "weight"), {out, in});
      L.add(indexed("audio.fc", i, "bias"), {out});
    } else {
      L.add(indexed("audio.lstm", i, "weight"), {4 * out, in + out});
      L.add(indexed("audio.lstm", i, "bias"), {4 * out});
    }
    in = out;
  }

  in = config_.predictor_input_dim();
  for (std::size_t i = 0; i < config_.predictor_widths.size(); ++i) {
    const int out = config_.scaled(config_.predictor_widths[i]);
    L.add(indexed("predictor.fc", i, "weight"), {out, in});
    L.add(indexed("predictor.fc", i, "bias"), {out});
    in = out;
  }
  L.add("predictor.out.weight", {config_.output_dim(), in});
  L.add("predictor.out.bias", {config_.output_dim()});
}

void Network::initialise() {
  for (const ParamEntry& e : params_.layout.entries()) {
    double* p = params_.values.data() + e.offset;
    const std::string& n = e.name;
    auto ends_with = [&](std::string_view s) { return n.size() >= s.size() && n.compare(n.size() - s.size(), s.size(), s) == 0; };
    if (ends_with("gamma") || ends_with("running_var")) {
      std::fill(p, p + e.size, 1.0);
    } else if (ends_with("weight")) {
      double fan_in = e.shape[1];
      double fan_out = e.shape[0];
      if (n.find(".conv") != std::string::npos) {
        fan_in = e.shape[1];
        fan_out = 9.0 * e.shape[0];
      }
      const double limit = std::sqrt(6.0 / (fan_in + fan_out));
      Rng rng(child_seed(config_.seed, n));
      for (std::size_t k = 0; k < e.size; ++k) p[k] = uniform(rng, -limit, limit);
    } else {
      std::fill(p, p + e.size, 0.0);
    }
  }
}

Matrix prepare_audio_input(const RealMatrix& power, bool log_compress) {
  Matrix x(power.size(), 1);
  const double* src = power.data();
  for (Eigen::Index k = 0; k < power.size(); ++k) x(k, 0) = log_compress ? std::log1p(src[k]) : src[k];
  return x;
}

Matrix Network::video_encoder_forward(std::span<const std::uint8_t* const> videos, Phase phase,
                                      VideoCache* cache) const {
  if (config_.mode != Mode::AV) throw Error("video encoder requested from an audio-only model");
  const std::size_t batch = videos.size();
  const int pixels = kVideoHeight * kVideoWidth;
  std::vector<Matrix> x(batch);
  for (std::size_t n = 0; n < batch; ++n) {
    if (videos[n] == nullptr) throw Error("video encoder: missing video input");
    x[n].resize(kVideoChannels, pixels);
    for (int c = 0; c < kVideoChannels; ++c)
      for (int p = 0; p < pixels; ++p) x[n](c, p) = videos[n][static_cast<std::size_t>(c) * pixels + p] / 255.0;
  }
  if (cache) {
    cache->conv.assign(conv_shapes_.size(), {});
    cache->linear.assign(config_.video_linear_widths.size(), {});
  }
  for (std::size_t i = 0; i < conv_shapes_.size(); ++i) {
    const ConvShape& s = conv_shapes_[i];
    const ConstMatrixMap w(params_.data(indexed("video.conv", i, "weight")), s.out_channels, 9 * s.in_channels);
    const BatchNormParams bn{params_.data(indexed("video.bn", i, "gamma")), params_.data(indexed("video.bn", i, "beta")),
                             params_.data(indexed("video.bn", i, "running_mean")),
                             params_.data(indexed("video.bn", i, "running_var"))};
    x = conv_block_forward(s, w, bn, x, phase, cache ? &cache->conv[i] : nullptr);
  }
  const Eigen::Index flat = x.front().size();
  Matrix h(flat, static_cast<Eigen::Index>(batch));
  for (std::size_t n = 0; n < batch; ++n) h.col(static_cast<Eigen::Index>(n)) = Eigen::Map<const Vector>(x[n].data(), flat);
  for (std::size_t i = 0; i < config_.video_linear_widths.size(); ++i) {
    const auto& e = params_.layout.at(indexed("video.fc", i, "weight"));
    const ConstMatrixMap w(params_.values.data() + e.offset, e.shape[0], e.shape[1]);
    h = dense_forward(w, params_.data(indexed("video.fc", i, "bias")), h, true, cache ? &cache->linear[i] : nullptr);
  }
  return h;
}

Matrix Network::audio_encoder_forward(std::span<const RealMatrix* const> mixture_power, AudioCache* cache) const {
  const auto batch = static_cast<Eigen::Index>(mixture_power.size());
  const int frames = config_.output_frames;
  const int bins = config_.output_bins;
  for (const RealMatrix* p : mixture_power)
    if (p == nullptr || p->rows() != frames || p->cols() != bins)
      throw Error("audio encoder: expected a 20x257 mixture power spectrum");

  if (config_.audio_encoder == AudioEncoderKind::Fc) {
    Matrix h(static_cast<Eigen::Index>(frames) * bins, batch);
    for (Eigen::Index n = 0; n < batch; ++n) h.col(n) = prepare_audio_input(*mixture_power[n], config_.log_compress);
    if (cache) {
      cache->input = h;
      cache->linear.assign(config_.audio_widths.size(), {});
    }
    for (std::size_t i = 0; i < config_.audio_widths.size(); ++i) {
      const auto& e = params_.layout.at(indexed("audio.fc", i, "weight"));
      const ConstMatrixMap w(params_.values.data() + e.offset, e.shape[0], e.shape[1]);
      h = dense_forward(w, params_.data(indexed("audio.fc", i, "bias")), h, true, cache ? &cache->linear[i] : nullptr);
    }
    return h;
  }

  std::vector<Matrix> xs(frames, Matrix(bins, batch));
  for (Eigen::Index n = 0; n < batch; ++n) {
    const Matrix in = prepare_audio_input(*mixture_power[n], config_.log_compress);
    for (int t = 0; t < frames; ++t) xs[t].col(n) = in.col(0).segment(static_cast<Eigen::Index>(t) * bins, bins);
  }
  if (cache) {
    cache->lstm.assign(config_.audio_widths.size(), {});
    cache->lstm_inputs.clear();
  }
  for (std::size_t i = 0; i < config_.audio_widths.size(); ++i) {
    const int hidden = config_.scaled(config_.audio_widths[i]);
    const auto& e = params_.layout.at(indexed("audio.lstm", i, "weight"));
    const ConstMatrixMap w(params_.values.data() + e.offset, e.shape[0], e.shape[1]);
    if (cache) cache->lstm_inputs.push_back(xs);
    xs = lstm_forward(w, params_.data(indexed("audio.lstm", i, "bias")), hidden, xs, cache ? &cache->lstm[i] : nullptr);
  }
  return xs.back();
}

Matrix Network::mask_predictor_forward(const Matrix& embedding, PredictorCache* cache) const {
  if (embedding.rows() != config_.predictor_input_dim())
    throw Error("mask predictor: embedding has " + std::to_string(embedding.rows()) + " rows, expected " +
                std::to_string(config_.predictor_input_dim()));
  if (cache) cache->linear.assign(config_.predictor_widths.size(), {});
  Matrix h = embedding;
  for (std::size_t i = 0; i < config_.predictor_widths.size(); ++i) {
    const auto& e = params_.layout.at(indexed("predictor.fc", i, "weight"));
    const ConstMatrixMap w(params_.values.data() + e.offset, e.shape[0], e.shape[1]);
    h = dense_forward(w, params_.data(indexed("predictor.fc", i, "bias")), h, true, cache ? &cache->linear[i] : nullptr);
  }
  const auto& e = params_.layout.at("predictor.out.weight");
  const ConstMatrixMap w(params_.values.data() + e.offset, e.shape[0], e.shape[1]);
  return dense_forward(w, params_.data("predictor.out.bias"), h, false, cache ? &cache->output : nullptr);
}

Matrix Network::forward(std::span<const AvSegment* const> batch, Phase phase, ForwardCache* cache) const {
  if (batch.empty()) throw Error("forward: empty batch");
  std::vector<const RealMatrix*> audio;
  std::vector<const std::uint8_t*> video;
  for (const AvSegment* s : batch) {
    audio.push_back(&s->mixture_power);
    if (config_.mode == Mode::AV) {
      if (s->video.size() != static_cast<std::size_t>(kSegmentVideoFrames) * kVideoFrameBytes)
        throw Error("forward: AV mode needs 12x96x128 video for segment " + s->key());
      video.push_back(s->video.data());
    }
  }
  if (cache) {
    *cache = ForwardCache{};
    cache->phase = phase;
    cache->batch = batch.size();
  }
  Matrix embedding = audio_encoder_forward(audio, cache ? &cache->audio : nullptr);
  if (config_.mode == Mode::AV) {
    const Matrix v = video_encoder_forward(video, phase, cache ? &cache->video : nullptr);
    Matrix joint(embedding.rows() + v.rows(), embedding.cols());
    joint.topRows(embedding.rows()) = embedding;
    joint.bottomRows(v.rows()) = v;
    embedding = std::move(joint);
  }
  return mask_predictor_forward(embedding, cache ? &cache->predictor : nullptr);
}

std::vector<double> Network::backward(const ForwardCache& cache, const Matrix& dlogits) const {
  std::vector<double> grad(params_.values.size(), 0.0);
  auto gmap = [&](const std::string& name) {
    const auto& e = params_.layout.at(name);
    return MatrixMap(grad.data() + e.offset, e.shape[0], e.shape.size() > 1 ? e.shape[1] : 1);
  };
  auto wmap = [&](const std::string& name) {
    const auto& e = params_.layout.at(name);
    return ConstMatrixMap(params_.values.data() + e.offset, e.shape[0], e.shape[1]);
  };
  auto gptr = [&](const std::string& name) { return grad.data() + params_.layout.at(name).offset; };

  // Mask predictor.
  MatrixMap dw_out = gmap("predictor.out.weight");
  Matrix d = dense_backward(wmap("predictor.out.weight"), dw_out, gptr("predictor.out.bias"),
                            cache.predictor.output, dlogits, false);
  for (std::size_t i = config_.predictor_widths.size(); i-- > 0;) {
    const std::string wn = indexed("predictor.fc", i, "weight");
    MatrixMap dw = gmap(wn);
    d = dense_backward(wmap(wn), dw, gptr(indexed("predictor.fc", i, "bias")), cache.predictor.linear[i], d, true);
  }

  const int audio_dim = config_.audio_embedding_dim();
  Matrix d_audio = d.topRows(audio_dim);

  if (config_.mode == Mode::AV) {
    Matrix dv = d.bottomRows(config_.video_embedding_dim());
    for (std::size_t i = config_.video_linear_widths.size(); i-- > 0;) {
      const std::string wn = indexed("video.fc", i, "weight");
      MatrixMap dw = gmap(wn);
      dv = dense_backward(wmap(wn), dw, gptr(indexed("video.fc", i, "bias")), cache.video.linear[i], dv, true);
    }
    const ConvShape& last = conv_shapes_.back();
    std::vector<Matrix> dmaps(cache.batch);
    for (std::size_t n = 0; n < cache.batch; ++n)
      dmaps[n] = Eigen::Map<const Matrix>(dv.col(static_cast<Eigen::Index>(n)).data(), last.out_channels,
                                          last.pooled_pixels());
    for (std::size_t i = conv_shapes_.size(); i-- > 0;) {
      const ConvShape& s = conv_shapes_[i];
      const std::string wn = indexed("video.conv", i, "weight");
      const ConstMatrixMap w(params_.data(wn), s.out_channels, 9 * s.in_channels);
      MatrixMap dw(grad.data() + params_.layout.at(wn).offset, s.out_channels, 9 * s.in_channels);
      const BatchNormParams bn{params_.data(indexed("video.bn", i, "gamma")), params_.data(indexed("video.bn", i, "beta")),
                               nullptr, nullptr};
      dmaps = conv_block_backward(s, w, bn, dw, gptr(indexed("video.bn", i, "gamma")),
                                  gptr(indexed("video.bn", i, "beta")), cache.video.conv[i], dmaps, i > 0);
    }
  }

  if (config_.audio_encoder == AudioEncoderKind::Fc) {
    for (std::size_t i = config_.audio_widths.size(); i-- > 0;) {
      const std::string wn = indexed("audio.fc", i, "weight");
      MatrixMap dw = gmap(wn);
      d_audio = dense_backward(wmap(wn), dw, gptr(indexed("audio.fc", i, "bias")), cache.audio.linear[i], d_audio, true);
    }
  } else {
    const int frames = config_.output_frames;
    std::vector<Matrix> dhs(frames);
    const int top = config_.scaled(config_.audio_widths.back());
    for (int t = 0; t < frames; ++t) dhs[t] = Matrix::Zero(top, d_audio.cols());
    dhs.back() = d_audio;
    for (std::size_t i = config_.audio_widths.size(); i-- > 0;) {
      const int hidden = config_.scaled(config_.audio_widths[i]);
      const std::string wn = indexed("audio.lstm", i, "weight");
      MatrixMap dw = gmap(wn);
      dhs = lstm_backward(wmap(wn), dw, gptr(indexed("audio.lstm", i, "bias")), hidden, cache.audio.lstm[i], dhs);
    }
  }
  return grad;
}

void Network::commit_batch_statistics(const ForwardCache& cache) {
  if (cache.phase != Phase::Training || config_.mode != Mode::AV) return;
  for (std::size_t i = 0; i < conv_shapes_.size(); ++i) {
    const ConvBlockCache& c = cache.video.conv[i];
    const double n = static_cast<double>(cache.batch) * conv_shapes_[i].pixels();
    const double unbias = n > 1.0 ? n / (n - 1.0) : 1.0;
    Eigen::Map<Vector> rm(params_.data(indexed("video.bn", i, "running_mean")), conv_shapes_[i].out_channels);
    Eigen::Map<Vector> rv(params_.data(indexed("video.bn", i, "running_var")), conv_shapes_[i].out_channels);
    rm = kBatchNormMomentum * rm + (1.0 - kBatchNormMomentum) * c.batch_mean;
    rv = kBatchNormMomentum * rv + (1.0 - kBatchNormMomentum) * unbias * c.batch_var;
  }
}

RealMatrix stack_logits(const Matrix& logits, int frames, int bins) {
  RealMatrix out(logits.cols() * frames, bins);
  for (Eigen::Index n = 0; n < logits.cols(); ++n)
    std::copy(logits.col(n).data(), logits.col(n).data() + logits.rows(), out.data() + n * logits.rows());
  return out;
}

Matrix unstack_gradient(const RealMatrix& stacked, int frames, int bins) {
  const Eigen::Index per = static_cast<Eigen::Index>(frames) * bins;
  const Eigen::Index batch = stacked.size() / per;
  Matrix out(per, batch);
  for (Eigen::Index n = 0; n < batch; ++n)
    std::copy(stacked.data() + n * per, stacked.data() + (n + 1) * per, out.col(n).data());
  return out;
}

std::vector<RealMatrix> predict_masks(const Network& net, std::span<const AvSegment* const> batch) {
  const Matrix logits = net.forward(batch, Phase::Inference, nullptr);
  const int frames = net.config().output_frames;
  const int bins = net.config().output_bins;
  std::vector<RealMatrix> masks;
  masks.reserve(batch.size());
  for (Eigen::Index n = 0; n < logits.cols(); ++n) {
    RealMatrix m(frames, bins);
    std::copy(logits.col(n).data(), logits.col(n).data() + logits.rows(), m.data());
    masks.push_back(clamp_mask(m).data);
  }
  return masks;
}

}  // namespace avse::nn
