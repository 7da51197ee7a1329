#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "avse/signal.hpp"

namespace avse {

// The 13 viseme classes, in the table order used for reporting.
enum class Viseme : std::uint8_t { V1, SIL, P, V3, SH, L, V2, G, Z, T, TH, F, V4 };

inline constexpr int kVisemeCount = 13;

inline constexpr std::array<Viseme, kVisemeCount> kAllVisemes = {
    Viseme::V1, Viseme::SIL, Viseme::P, Viseme::V3, Viseme::SH, Viseme::L, Viseme::V2,
    Viseme::G,  Viseme::Z,   Viseme::T, Viseme::TH, Viseme::F,  Viseme::V4};

// "/P/", "/SIL/", ...
std::string_view viseme_name(Viseme v);
Viseme viseme_from_name(std::string_view name);

struct PhonemeEntry {
  std::string_view phoneme;  // without slashes, lower case
  Viseme viseme;
};

// Every phoneme of the mapping table, grouped by viseme in table order.
std::span<const PhonemeEntry> phoneme_table();

// Accepts "b" or "/b/", any case. Throws naming the symbol when unknown.
Viseme phoneme_to_viseme(std::string_view phoneme);

// Percentage of a uniform guess over the viseme set.
inline constexpr double kChanceRecallPct = 100.0 / kVisemeCount;

struct AlignmentInterval {
  double start_ms = 0.0;
  double end_ms = 0.0;
  std::string phoneme;
};
using Alignment = std::vector<AlignmentInterval>;

// Half-open intervals [start, end); times not covered by any interval are /SIL/.
std::vector<Viseme> label_frames(const Alignment& alignment, std::span<const double> frame_times_ms);

struct VisemeMae {
  std::size_t frames = 0;
  double mae = 0.0;
};

// Frame-weighted MAE per viseme over every (frame, bin) entry carrying that
// label. Visemes without frames are absent from the map.
std::map<Viseme, VisemeMae> per_viseme_mae(std::span<const RealMatrix> pred_masks,
                                           std::span<const RealMatrix> target_masks,
                                           std::span<const std::vector<Viseme>> frame_labels);

// Masks predicted by one model over a fixed, keyed segment set.
struct ModelEval {
  std::vector<std::string> segment_keys;
  std::vector<RealMatrix> pred_masks;
  std::vector<RealMatrix> target_masks;
  std::vector<std::vector<Viseme>> frame_labels;
};

struct VisemeReportRow {
  Viseme viseme;
  std::size_t frames = 0;
  double mae_audio_only = 0.0;
  double mae_audiovisual = 0.0;
  double percent_delta = 0.0;
};

// Sorted by descending percent_delta.
using PerVisemeReport = std::vector<VisemeReportRow>;

PerVisemeReport build_report(const ModelEval& audio_only, const ModelEval& audiovisual);

void write_report_csv(const std::filesystem::path& path, const PerVisemeReport& report);
void write_report_svg(const std::filesystem::path& path, const PerVisemeReport& report);

}  // namespace avse
