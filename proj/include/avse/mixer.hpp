#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "avse/corpus_io.hpp"
#include "avse/signal.hpp"
#include "avse/viseme.hpp"

namespace avse {

struct MixResult {
  Waveform mixture;
  double gain = 1.0;
  Waveform scaled_noise;  // gain * interferer, fitted to the target length
};

// Interferer is truncated or cyclically repeated to the target length and
// scaled so the full-utterance power ratio equals snr_db.
MixResult mix_at_snr(const Waveform& target, const Waveform& interferer, double snr_db);

inline constexpr int kSegmentMs = 200;
inline constexpr int kSegmentSamples = kSampleRate * kSegmentMs / 1000;
inline constexpr int kSegmentFrames = 20;
inline constexpr int kSegmentVideoFrames = 12;
inline constexpr int kBins = 257;

// One 200 ms training unit.
struct AvSegment {
  RealMatrix mixture_power;  // 20 x 257
  RealMatrix target_irm;     // 20 x 257
  std::vector<std::uint8_t> video;  // 12 x 96 x 128
  std::vector<Viseme> frame_visemes;  // 20
  std::string speaker_id;
  std::string utterance_id;
  int segment_index = 0;

  std::string key() const { return utterance_id + "#" + std::to_string(segment_index); }
};

int segment_count(std::size_t n_samples);

// Centre time of every audio frame of a segment, in ms from utterance start.
std::array<double, kSegmentFrames> segment_frame_centers_ms(int segment_index);

// Segments plus the utterance-level spectra they were sliced from. Spectra keep
// only the 20*K frames covered by segments; signals are zero-padded at the end
// so that the last segment's final frame exists.
struct PreparedUtterance {
  std::vector<AvSegment> segments;
  ComplexSpectrogram clean;
  ComplexSpectrogram noise;
  ComplexSpectrogram mixture;
};

PreparedUtterance prepare_utterance(const Utterance& u, const Waveform& mixture, const Waveform& noise);

std::vector<AvSegment> segment_utterance(const Utterance& u, const Waveform& mixture, const Waveform& noise);

struct SpeakerInfo {
  std::string id;
  Gender gender = Gender::F;
};

struct SplitSpec {
  std::array<double, 3> ratios{0.8, 0.1, 0.1};
  bool stratify_by_gender = true;
  std::uint64_t seed = 0;
};

struct SpeakerSplit {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;

  const std::vector<std::string>& of(Partition p) const;
  // Throws if the id is in none of the partitions.
  Partition partition_of(const std::string& speaker_id) const;
};

// Largest-remainder apportionment of n items.
std::array<std::size_t, 3> partition_counts(std::size_t n, const std::array<double, 3>& ratios);

// Speakers are sorted, shuffled by a seeded generator and apportioned 80/10/10
// within each gender (or over all speakers when not stratified).
SpeakerSplit split_speakers(std::span<const SpeakerInfo> speakers, const SplitSpec& spec);

struct InterfererPair {
  std::string target_id;
  std::string interferer_id;
};

// Each utterance in the partition gets a seeded random interferer utterance
// from a different speaker of the same partition.
std::vector<InterfererPair> pair_interferers(std::span<const ManifestEntry> utterances,
                                             Partition partition, std::uint64_t seed);

}  // namespace avse
