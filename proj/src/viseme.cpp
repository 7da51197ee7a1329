#include "avse/viseme.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "avse/error.hpp"
#include "avse/metrics.hpp"

namespace avse {
namespace {

constexpr std::array<std::string_view, kVisemeCount> kNames = {
    "/V1/", "/SIL/", "/P/", "/V3/", "/SH/", "/L/", "/V2/",
    "/G/",  "/Z/",   "/T/", "/TH/", "/F/",  "/V4/"};

constexpr PhonemeEntry kTable[] = {
    {"aa", Viseme::V1},  {"ah", Viseme::V1},  {"ao", Viseme::V1},  {"aw", Viseme::V1},
    {"er", Viseme::V1},  {"oy", Viseme::V1},
    {"sil", Viseme::SIL}, {"sp", Viseme::SIL},
    {"p", Viseme::P},    {"b", Viseme::P},    {"m", Viseme::P},
    {"ae", Viseme::V3},  {"eh", Viseme::V3},  {"ey", Viseme::V3},  {"ay", Viseme::V3},
    {"y", Viseme::V3},
    {"sh", Viseme::SH},  {"zh", Viseme::SH},  {"ch", Viseme::SH},  {"jh", Viseme::SH},
    {"l", Viseme::L},    {"el", Viseme::L},   {"r", Viseme::L},
    {"uw", Viseme::V2},  {"uh", Viseme::V2},  {"ow", Viseme::V2},  {"w", Viseme::V2},
    {"g", Viseme::G},    {"ng", Viseme::G},   {"k", Viseme::G},    {"hh", Viseme::G},
    {"z", Viseme::Z},    {"s", Viseme::Z},
    {"t", Viseme::T},    {"d", Viseme::T},    {"n", Viseme::T},    {"en", Viseme::T},
    {"th", Viseme::TH},  {"dh", Viseme::TH},
    {"f", Viseme::F},    {"v", Viseme::F},
    {"ih", Viseme::V4},  {"iy", Viseme::V4},
};

std::string normalise(std::string_view p) {
  std::string s;
  for (char c : p)
    if (c != '/' && !std::isspace(static_cast<unsigned char>(c)))
      s.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  return s;
}

}  // namespace

std::string_view viseme_name(Viseme v) { return kNames.at(static_cast<std::size_t>(v)); }

Viseme viseme_from_name(std::string_view name) {
  std::string wanted = "/";
  for (char c : name)
    if (c != '/') wanted.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
  wanted.push_back('/');
  for (std::size_t i = 0; i < kNames.size(); ++i)
    if (kNames[i] == wanted) return static_cast<Viseme>(i);
  throw Error("unknown viseme '" + std::string(name) + "'");
}

std::span<const PhonemeEntry> phoneme_table() { return kTable; }

Viseme phoneme_to_viseme(std::string_view phoneme) {
  const std::string key = normalise(phoneme);
  for (const auto& e : kTable)
    if (e.phoneme == key) return e.viseme;
  throw Error("unknown phoneme '" + std::string(phoneme) + "'");
}

std::vector<Viseme> label_frames(const Alignment& alignment,
                                 std::span<const double> frame_times_ms) {
  std::vector<Viseme> labels;
  labels.reserve(frame_times_ms.size());
  for (double t : frame_times_ms) {
    // Later intervals win at shared edges because the earlier one is half-open.
    auto it = std::find_if(alignment.begin(), alignment.end(), [t](const AlignmentInterval& iv) {
      return iv.start_ms <= t && t < iv.end_ms;
    });
    labels.push_back(it == alignment.end() ? Viseme::SIL : phoneme_to_viseme(it->phoneme));
  }
  return labels;
}

std::map<Viseme, VisemeMae> per_viseme_mae(std::span<const RealMatrix> pred_masks,
                                           std::span<const RealMatrix> target_masks,
                                           std::span<const std::vector<Viseme>> frame_labels) {
  if (pred_masks.size() != target_masks.size() || pred_masks.size() != frame_labels.size())
    throw Error("per_viseme_mae: segment count mismatch");

  std::array<double, kVisemeCount> sum{};
  std::array<std::size_t, kVisemeCount> frames{};
  std::array<std::size_t, kVisemeCount> entries{};
  for (std::size_t s = 0; s < pred_masks.size(); ++s) {
    const RealMatrix& p = pred_masks[s];
    const RealMatrix& t = target_masks[s];
    if (p.rows() != t.rows() || p.cols() != t.cols())
      throw Error("per_viseme_mae: mask shape mismatch in segment " + std::to_string(s));
    if (static_cast<Eigen::Index>(frame_labels[s].size()) != p.rows())
      throw Error("per_viseme_mae: label count does not match frame count in segment " +
                  std::to_string(s));
    for (Eigen::Index f = 0; f < p.rows(); ++f) {
      const auto v = static_cast<std::size_t>(frame_labels[s][f]);
      sum[v] += (p.row(f) - t.row(f)).cwiseAbs().sum();
      frames[v] += 1;
      entries[v] += static_cast<std::size_t>(p.cols());
    }
  }

  std::map<Viseme, VisemeMae> out;
  for (std::size_t v = 0; v < kVisemeCount; ++v)
    if (frames[v] > 0) out[static_cast<Viseme>(v)] = {frames[v], sum[v] / entries[v]};
  return out;
}

PerVisemeReport build_report(const ModelEval& audio_only, const ModelEval& audiovisual) {
  if (audio_only.segment_keys != audiovisual.segment_keys)
    throw Error("build_report: evaluations cover different segment sets");
  if (audio_only.frame_labels != audiovisual.frame_labels)
    throw Error("build_report: evaluations disagree on frame labels");

  const auto a = per_viseme_mae(audio_only.pred_masks, audio_only.target_masks, audio_only.frame_labels);
  const auto av = per_viseme_mae(audiovisual.pred_masks, audiovisual.target_masks, audiovisual.frame_labels);

  PerVisemeReport report;
  for (const auto& [v, stats] : a) {
    const VisemeMae& other = av.at(v);
    VisemeReportRow row{v, stats.frames, stats.mae, other.mae, 0.0};
    row.percent_delta = stats.mae > 0.0 ? relative_improvement(stats.mae, other.mae) : 0.0;
    report.push_back(row);
  }
  std::stable_sort(report.begin(), report.end(), [](const auto& x, const auto& y) {
    return x.percent_delta > y.percent_delta;
  });
  return report;
}

void write_report_csv(const std::filesystem::path& path, const PerVisemeReport& report) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << "viseme,frames,mae_a,mae_av,pct_delta\n";
  for (const auto& r : report) {
    out << viseme_name(r.viseme) << ',' << r.frames << ',';
    out.precision(6);
    out << std::fixed << r.mae_audio_only << ',' << r.mae_audiovisual << ',';
    out.precision(1);
    out << round1(r.percent_delta) << '\n';
    out << std::defaultfloat;
  }
}

void write_report_svg(const std::filesystem::path& path, const PerVisemeReport& report) {
  constexpr int kBarWidth = 40;
  constexpr int kGap = 12;
  constexpr int kPlotHeight = 240;
  constexpr int kMargin = 50;
  const int width = 2 * kMargin + static_cast<int>(report.size()) * (kBarWidth + kGap);
  const int height = kPlotHeight + 2 * kMargin;

  double lo = 0.0;
  double hi = 1.0;
  for (const auto& r : report) {
    lo = std::min(lo, r.percent_delta);
    hi = std::max(hi, r.percent_delta);
  }
  const double span = hi - lo;
  auto y_of = [&](double v) { return kMargin + (hi - v) / span * kPlotHeight; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width << "\" height=\"" << height
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<text x=\"" << kMargin << "\" y=\"20\">MAE decrease per viseme (%)</text>\n";
  const double zero = y_of(0.0);
  svg << "<line x1=\"" << kMargin << "\" y1=\"" << zero << "\" x2=\"" << width - kMargin
      << "\" y2=\"" << zero << "\" stroke=\"black\"/>\n";
  int x = kMargin + kGap / 2;
  for (const auto& r : report) {
    const double top = std::min(zero, y_of(r.percent_delta));
    const double h = std::abs(y_of(r.percent_delta) - zero);
    svg << "<rect x=\"" << x << "\" y=\"" << top << "\" width=\"" << kBarWidth << "\" height=\"" << h
        << "\" fill=\"" << (r.percent_delta >= 0 ? "#4477aa" : "#cc6677") << "\"/>\n";
    svg << "<text x=\"" << x + kBarWidth / 2 << "\" y=\"" << top - 4
        << "\" text-anchor=\"middle\">" << round1(r.percent_delta) << "</text>\n";
    svg << "<text x=\"" << x + kBarWidth / 2 << "\" y=\"" << kMargin + kPlotHeight + 20
        << "\" text-anchor=\"middle\">" << viseme_name(r.viseme) << "</text>\n";
    x += kBarWidth + kGap;
  }
  svg << "</svg>\n";

  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << svg.str();
}

}  // namespace avse
