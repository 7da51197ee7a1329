#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "avse/corpus_io.hpp"
#include "avse/mixer.hpp"
#include "avse/viseme.hpp"

namespace avse {

struct SpeakerProfile {
  std::string speaker_id;
  Gender gender = Gender::F;
  double f0_hz = 150.0;          // [90, 250]
  double formant_shift = 1.0;    // [0.9, 1.1]
  double mouth_scale = 1.0;      // [0.85, 1.15]
};

// Drawn from hash(corpus_seed, speaker_id); female voices in [160, 250] Hz,
// male in [90, 150] Hz.
SpeakerProfile make_speaker_profile(std::uint64_t corpus_seed, const std::string& speaker_id, Gender gender);

// Normalised mouth parameters, each in [0, 1]. Shared by all phonemes of a viseme.
struct MouthShape {
  double aperture = 0.0;
  double width = 0.0;
  double teeth = 0.0;
};

MouthShape mouth_shape(Viseme v);

enum class RecipeKind : std::uint8_t { Silence, Voiced, Fricative, Plosive };

struct PhonemeRecipe {
  std::string_view phoneme;
  RecipeKind kind = RecipeKind::Silence;
  int min_ms = 0;
  int max_ms = 0;
  double f1 = 0.0;  // formant peaks of the harmonic stack (Hz)
  double f2 = 0.0;
  double band_lo = 0.0;  // noise band (Hz)
  double band_hi = 0.0;
  double level = 0.0;  // target RMS
  bool voicing = false;  // adds a weak low harmonic stack to noise
};

const PhonemeRecipe& phoneme_recipe(std::string_view phoneme);

struct PlannedPhone {
  std::string phoneme;
  int duration_ms = 0;
};

struct UtterancePlan {
  std::string id;
  std::string speaker_id;
  Gender gender = Gender::F;
  std::vector<PlannedPhone> phones;
  std::uint64_t seed = 0;

  std::size_t sample_count() const;
};

// Renders audio (20 ms crossfades), 60 fps ellipse-mouth video and the exact
// alignment for a fixed phone plan.
Utterance synth_utterance(std::span<const PlannedPhone> phones, const SpeakerProfile& profile, std::uint64_t seed,
                          const std::string& utterance_id = "utt");

// Samples a duration per phoneme from its recipe range.
Utterance synth_utterance(std::span<const std::string> phonemes, const SpeakerProfile& profile, std::uint64_t seed,
                          const std::string& utterance_id = "utt");

// One rendered 96x128 mouth frame.
std::vector<std::uint8_t> render_mouth(Viseme v, double mouth_scale);

struct CorpusSpec {
  int n_speakers = 40;
  int utterances_per_speaker = 20;
  std::uint64_t seed = 0;
  // Minimum segment frames per viseme in every partition; a violating plan
  // is resampled with a fresh child seed up to max_attempts times.
  int min_viseme_frames = 100;
  int max_attempts = 16;
};

struct CorpusPlan {
  CorpusSpec spec;
  std::vector<SpeakerProfile> speakers;
  SpeakerSplit split;
  std::vector<UtterancePlan> utterances;
  int attempt = 0;

  const SpeakerProfile& speaker(const std::string& id) const;
  Partition partition_of(const UtterancePlan& u) const { return split.partition_of(u.speaker_id); }
  ManifestEntry manifest_entry(const UtterancePlan& u) const;
};

// Segment-frame counts per viseme for one partition of a plan.
std::array<std::size_t, kVisemeCount> viseme_frame_counts(const CorpusPlan& plan, Partition p);

CorpusPlan plan_corpus(const CorpusSpec& spec);
Utterance render_utterance(const CorpusPlan& plan, const UtterancePlan& u);

// Writes wav/, video/, align/ and manifest.jsonl under out_dir.
std::vector<ManifestEntry> generate_corpus(const CorpusSpec& spec, const std::filesystem::path& out_dir);

}  // namespace avse
