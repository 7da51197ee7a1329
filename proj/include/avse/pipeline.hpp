#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "avse/corpus_io.hpp"
#include "avse/mixer.hpp"
#include "avse/neural/network.hpp"
#include "avse/synth.hpp"
#include "avse/viseme.hpp"

namespace avse {

using UtteranceLoader = std::function<Utterance(const ManifestEntry&)>;

// Reads WAV/GVF/TSV files relative to base_dir.
UtteranceLoader manifest_loader(std::filesystem::path base_dir);
// Renders planned utterances on demand without touching the filesystem.
UtteranceLoader plan_loader(const CorpusPlan& plan);
std::vector<ManifestEntry> plan_manifest(const CorpusPlan& plan);

struct MixSpec {
  double snr_db = 0.0;
  std::uint64_t seed = 0;
  // Keep a seeded subset of this many target utterances (0 keeps all).
  std::size_t max_utterances = 0;
};

// Mixes every (selected) utterance of a partition with its seeded interferer
// and cuts it into segments.
std::vector<PreparedUtterance> prepare_partition(std::span<const ManifestEntry> entries, Partition partition,
                                                 const UtteranceLoader& load, const MixSpec& spec);

std::vector<AvSegment> collect_segments(std::span<const PreparedUtterance> utterances);

struct EnhancementScores {
  double snr_db_mean = 0.0;
  double mask_mae_mean = 0.0;
  std::size_t utterances = 0;
  std::size_t segments = 0;
};

// SNR of each reconstruction against the clean signal passed through the
// same analysis/synthesis, averaged over utterances; mask MAE against the
// IRM averaged over segments.
EnhancementScores evaluate_model(const nn::Network& net, std::span<const PreparedUtterance> utterances);
EnhancementScores evaluate_oracle(std::span<const PreparedUtterance> utterances);
// Unprocessed mixture, i.e. an all-ones mask.
EnhancementScores evaluate_mixture(std::span<const PreparedUtterance> utterances);

// Predicted and target masks per segment, for per-viseme analysis.
ModelEval model_eval(const nn::Network& net, std::span<const PreparedUtterance> utterances);

// Enhances a noisy recording. Video is required for audio-visual models.
// The output has the input's length; samples past the last whole segment
// are zero.
Waveform enhance(const nn::Network& net, const Waveform& mixture, const VideoClip* video);

// A single 0 dB audio-visual segment from two short synthetic speakers, for
// gradient checks and smoke tests.
AvSegment synthetic_segment(std::uint64_t seed);

}  // namespace avse
