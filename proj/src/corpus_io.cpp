#include "avse/corpus_io.hpp"

#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "avse/error.hpp"
#include "avse/wav.hpp"

namespace avse {
namespace {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

std::filesystem::path resolve(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path path(p);
  return path.is_absolute() ? path : base / path;
}

// Shortest text that parses back to the same double.
std::string format_ms(double ms) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, ms);
  return std::string(buf, res.ptr);
}

}  // namespace

std::string_view to_string(Gender g) { return g == Gender::F ? "F" : "M"; }

std::string_view to_string(Partition p) {
  switch (p) {
    case Partition::Train: return "train";
    case Partition::Val: return "val";
    case Partition::Test: return "test";
  }
  return "?";
}

Gender parse_gender(std::string_view s) {
  if (s == "F" || s == "f") return Gender::F;
  if (s == "M" || s == "m") return Gender::M;
  throw Error("unknown gender '" + std::string(s) + "'");
}

Partition parse_partition(std::string_view s) {
  if (s == "train") return Partition::Train;
  if (s == "val") return Partition::Val;
  if (s == "test") return Partition::Test;
  throw Error("unknown partition '" + std::string(s) + "'");
}

void validate(const Utterance& u) {
  validate(u.audio);
  if (u.video.fps != kVideoFps) throw Error("utterance " + u.id + ": video must be 60 fps");
  if (u.video.height != kVideoHeight || u.video.width != kVideoWidth)
    throw Error("utterance " + u.id + ": video frames must be 96x128");
  if (u.video.pixels.size() % u.video.frame_bytes() != 0)
    throw Error("utterance " + u.id + ": partial video frame");
  if (std::abs(u.audio.duration_ms() - u.video.duration_ms()) > 1000.0 / kVideoFps)
    throw Error("utterance " + u.id + ": audio and video durations differ by more than a frame");
  double last_end = 0.0;
  for (const auto& iv : u.alignment) {
    if (iv.end_ms < iv.start_ms || iv.start_ms < last_end)
      throw Error("utterance " + u.id + ": alignment intervals overlap or are unordered");
    last_end = iv.end_ms;
  }
}

std::vector<ManifestEntry> read_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest: " + path.string());
  std::vector<ManifestEntry> entries;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      ManifestEntry e;
      e.id = j.at("id").get<std::string>();
      e.speaker_id = j.at("speaker_id").get<std::string>();
      e.gender = parse_gender(j.at("gender").get<std::string>());
      e.wav_path = j.at("wav_path").get<std::string>();
      e.video_path = j.at("video_path").get<std::string>();
      e.align_path = j.at("align_path").get<std::string>();
      e.partition = parse_partition(j.at("partition").get<std::string>());
      entries.push_back(std::move(e));
    } catch (const nlohmann::json::exception& ex) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": " + ex.what());
    }
  }
  return entries;
}

void write_manifest(const std::filesystem::path& path, std::span<const ManifestEntry> entries) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write manifest: " + path.string());
  for (const auto& e : entries) {
    nlohmann::ordered_json j;
    j["id"] = e.id;
    j["speaker_id"] = e.speaker_id;
    j["gender"] = to_string(e.gender);
    j["wav_path"] = e.wav_path;
    j["video_path"] = e.video_path;
    j["align_path"] = e.align_path;
    j["partition"] = to_string(e.partition);
    out << j.dump() << '\n';
  }
  if (!out) throw Error("failed writing manifest: " + path.string());
}

VideoClip read_gvf(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open video file: " + path.string());
  char magic[4];
  std::uint32_t header[4];
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(header), sizeof(header));
  if (!in || std::memcmp(magic, "GVF1", 4) != 0)
    throw Error("not a GVF1 video file: " + path.string());
  VideoClip clip;
  clip.height = static_cast<int>(header[0]);
  clip.width = static_cast<int>(header[1]);
  clip.fps = static_cast<int>(header[3]);
  clip.pixels.resize(static_cast<std::size_t>(header[0]) * header[1] * header[2]);
  in.read(reinterpret_cast<char*>(clip.pixels.data()), static_cast<std::streamsize>(clip.pixels.size()));
  if (!in) throw Error("truncated GVF1 video file: " + path.string());
  return clip;
}

void write_gvf(const std::filesystem::path& path, const VideoClip& clip) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write video file: " + path.string());
  const std::uint32_t header[4] = {static_cast<std::uint32_t>(clip.height),
                                   static_cast<std::uint32_t>(clip.width),
                                   static_cast<std::uint32_t>(clip.frame_count()),
                                   static_cast<std::uint32_t>(clip.fps)};
  out.write("GVF1", 4);
  out.write(reinterpret_cast<const char*>(header), sizeof(header));
  out.write(reinterpret_cast<const char*>(clip.pixels.data()), static_cast<std::streamsize>(clip.pixels.size()));
  if (!out) throw Error("failed writing video file: " + path.string());
}

Alignment read_alignment(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open alignment file: " + path.string());
  Alignment out;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto t1 = line.find('\t');
    const auto t2 = t1 == std::string::npos ? t1 : line.find('\t', t1 + 1);
    if (t2 == std::string::npos)
      throw Error(path.string() + ":" + std::to_string(line_no) + ": expected 3 tab-separated fields");
    try {
      out.push_back({std::stod(line.substr(0, t1)), std::stod(line.substr(t1 + 1, t2 - t1 - 1)),
                     line.substr(t2 + 1)});
    } catch (const std::logic_error&) {
      throw Error(path.string() + ":" + std::to_string(line_no) + ": bad time value");
    }
  }
  return out;
}

void write_alignment(const std::filesystem::path& path, const Alignment& alignment) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write alignment file: " + path.string());
  for (const auto& iv : alignment)
    out << format_ms(iv.start_ms) << '\t' << format_ms(iv.end_ms) << '\t' << iv.phoneme << '\n';
}

namespace {

void fnv_update(std::uint64_t& h, const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path.string());
  char buf[1 << 16];
  while (in) {
    in.read(buf, sizeof buf);
    for (std::streamsize i = 0; i < in.gcount(); ++i) {
      h ^= static_cast<unsigned char>(buf[i]);
      h *= 0x100000001b3ULL;
    }
  }
}

}  // namespace

std::string corpus_digest(const std::filesystem::path& manifest_path) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  fnv_update(h, manifest_path);
  const auto base = manifest_path.parent_path();
  for (const auto& e : read_manifest(manifest_path))
    for (const auto* p : {&e.wav_path, &e.video_path, &e.align_path}) fnv_update(h, resolve(base, *p));
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(h));
  return hex;
}

Utterance load_utterance(const ManifestEntry& entry, const std::filesystem::path& base_dir) {
  Utterance u;
  u.id = entry.id;
  u.speaker_id = entry.speaker_id;
  u.gender = entry.gender;
  u.audio = read_wav(resolve(base_dir, entry.wav_path));
  u.video = read_gvf(resolve(base_dir, entry.video_path));
  u.alignment = read_alignment(resolve(base_dir, entry.align_path));
  validate(u);
  return u;
}

}  // namespace avse
