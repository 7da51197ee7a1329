#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "avse/signal.hpp"
#include "avse/viseme.hpp"

namespace avse {

enum class Gender : std::uint8_t { F, M };
enum class Partition : std::uint8_t { Train, Val, Test };

std::string_view to_string(Gender g);
std::string_view to_string(Partition p);
Gender parse_gender(std::string_view s);
Partition parse_partition(std::string_view s);

inline constexpr int kVideoHeight = 96;
inline constexpr int kVideoWidth = 128;
inline constexpr int kVideoFps = 60;
inline constexpr std::size_t kVideoFrameBytes = kVideoHeight * kVideoWidth;

// Grayscale mouth crops, frames stored back to back, row-major.
struct VideoClip {
  int height = kVideoHeight;
  int width = kVideoWidth;
  int fps = kVideoFps;
  std::vector<std::uint8_t> pixels;

  std::size_t frame_bytes() const { return static_cast<std::size_t>(height) * width; }
  int frame_count() const { return frame_bytes() ? static_cast<int>(pixels.size() / frame_bytes()) : 0; }
  std::span<const std::uint8_t> frame(int i) const {
    return {pixels.data() + static_cast<std::size_t>(i) * frame_bytes(), frame_bytes()};
  }
  double duration_ms() const { return 1000.0 * frame_count() / fps; }
};

struct Utterance {
  std::string id;
  std::string speaker_id;
  Gender gender = Gender::F;
  Waveform audio;
  VideoClip video;
  Alignment alignment;
};

// Throws if the audio/video durations disagree by more than one video frame,
// the video is not 60 fps 96x128, or the alignment is unordered/overlapping.
void validate(const Utterance& u);

struct ManifestEntry {
  std::string id;
  std::string speaker_id;
  Gender gender = Gender::F;
  std::string wav_path;
  std::string video_path;
  std::string align_path;
  Partition partition = Partition::Train;
};

// One JSON object per line. Relative paths resolve against the manifest's directory.
std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries);

// "GVF1", then little-endian u32 height, width, frame_count, fps, then pixels.
VideoClip read_gvf(const std::filesystem::path& path);
void write_gvf(const std::filesystem::path& path, const VideoClip& clip);

// UTF-8 lines "start_ms<TAB>end_ms<TAB>phoneme".
Alignment read_alignment(const std::filesystem::path& path);
void write_alignment(const std::filesystem::path& path, const Alignment& alignment);

// FNV-1a 64 over the manifest bytes followed by every file it references, as
// 16 hex digits.
std::string corpus_digest(const std::filesystem::path& manifest_path);

Utterance load_utterance(const ManifestEntry& entry, const std::filesystem::path& base_dir);

}  // namespace avse
