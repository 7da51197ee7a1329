#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "catch_amalgamated.hpp"

#include "avse/corpus_io.hpp"
#include "avse/error.hpp"
#include "avse/wav.hpp"

using namespace avse;
namespace fs = std::filesystem;
using Catch::Matchers::ContainsSubstring;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / "avse_test_wav";
  fs::create_directories(dir);
  return dir / name;
}

void put16(std::vector<std::uint8_t>& b, std::uint16_t v) {
  b.push_back(v & 0xff);
  b.push_back(v >> 8);
}
void put32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) b.push_back((v >> (8 * i)) & 0xff);
}

// Hand-built RIFF header so the reader is checked against bytes it did not write.
std::vector<std::uint8_t> wav_bytes(std::uint16_t format, std::uint16_t channels, std::uint32_t rate,
                                    std::uint16_t bits, const std::vector<std::int16_t>& pcm) {
  std::vector<std::uint8_t> b;
  const std::uint32_t data_bytes = static_cast<std::uint32_t>(pcm.size() * 2);
  b.insert(b.end(), {'R', 'I', 'F', 'F'});
  put32(b, 36 + data_bytes);
  b.insert(b.end(), {'W', 'A', 'V', 'E', 'f', 'm', 't', ' '});
  put32(b, 16);
  put16(b, format);
  put16(b, channels);
  put32(b, rate);
  put32(b, rate * channels * bits / 8);
  put16(b, static_cast<std::uint16_t>(channels * bits / 8));
  put16(b, bits);
  b.insert(b.end(), {'d', 'a', 't', 'a'});
  put32(b, data_bytes);
  for (auto s : pcm) put16(b, static_cast<std::uint16_t>(s));
  return b;
}

void dump(const fs::path& p, const std::vector<std::uint8_t>& b) {
  std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

}  // namespace

TEST_CASE("reads hand-built PCM") {
  const auto p = scratch("hand.wav");
  dump(p, wav_bytes(1, 1, 16000, 16, {0, 16384, -32768, 32767}));
  const Waveform w = read_wav(p);
  REQUIRE(w.size() == 4);
  CHECK(w.sample_rate_hz == 16000);
  CHECK(w.samples[0] == 0.0);
  CHECK(w.samples[1] == 0.5);
  CHECK(w.samples[2] == -1.0);
  CHECK(w.samples[3] == Catch::Approx(32767.0 / 32768.0));
}

TEST_CASE("rejects other encodings by field") {
  const auto p = scratch("bad.wav");
  dump(p, wav_bytes(3, 1, 16000, 16, {0}));
  CHECK_THROWS_WITH(read_wav(p), ContainsSubstring("encoding"));
  dump(p, wav_bytes(1, 2, 16000, 16, {0, 0}));
  CHECK_THROWS_WITH(read_wav(p), ContainsSubstring("channel"));
  dump(p, wav_bytes(1, 1, 44100, 16, {0}));
  CHECK_THROWS_WITH(read_wav(p), ContainsSubstring("sample rate"));
  dump(p, wav_bytes(1, 1, 16000, 8, {0}));
  CHECK_THROWS_WITH(read_wav(p), ContainsSubstring("bit depth"));
  dump(p, {'n', 'o', 'p', 'e'});
  CHECK_THROWS_AS(read_wav(p), Error);
  CHECK_THROWS_AS(read_wav(scratch("missing.wav")), Error);
}

TEST_CASE("write then read clips and quantises") {
  const auto p = scratch("rt.wav");
  Waveform w;
  w.samples = {0.25, -0.125, 1.7, -3.0, 1e-7};
  write_wav(p, w);
  const Waveform r = read_wav(p);
  REQUIRE(r.size() == 5);
  CHECK(r.samples[0] == 0.25);
  CHECK(r.samples[1] == -0.125);
  CHECK(r.samples[2] == Catch::Approx(32767.0 / 32768.0));
  CHECK(r.samples[3] == -1.0);
  CHECK(r.samples[4] == 0.0);
  CHECK(fs::file_size(p) == 44 + 10);
}

TEST_CASE("GVF round trip and header layout") {
  VideoClip v;
  v.pixels.resize(3 * kVideoFrameBytes);
  for (std::size_t i = 0; i < v.pixels.size(); ++i) v.pixels[i] = static_cast<std::uint8_t>(i * 7);
  const auto p = scratch("clip.gvf");
  write_gvf(p, v);
  CHECK(fs::file_size(p) == 4 + 16 + v.pixels.size());

  std::ifstream in(p, std::ios::binary);
  std::vector<std::uint8_t> head(20);
  in.read(reinterpret_cast<char*>(head.data()), 20);
  CHECK(std::string(head.begin(), head.begin() + 4) == "GVF1");
  auto u32 = [&](int off) { return head[off] | head[off + 1] << 8 | head[off + 2] << 16 | head[off + 3] << 24; };
  CHECK(u32(4) == 96);
  CHECK(u32(8) == 128);
  CHECK(u32(12) == 3);
  CHECK(u32(16) == 60);

  const VideoClip r = read_gvf(p);
  CHECK(r.frame_count() == 3);
  CHECK(r.pixels == v.pixels);

  dump(p, {'G', 'V', 'F', '2'});
  CHECK_THROWS_AS(read_gvf(p), Error);
}

TEST_CASE("alignment TSV") {
  const auto p = scratch("a.tsv");
  Alignment a{{0.0, 100.0, "sil"}, {100.0, 162.5, "b"}};
  write_alignment(p, a);
  const Alignment r = read_alignment(p);
  REQUIRE(r.size() == 2);
  CHECK(r[1].start_ms == 100.0);
  CHECK(r[1].end_ms == 162.5);
  CHECK(r[1].phoneme == "b");

  std::ofstream(p) << "0\t10\n";
  CHECK_THROWS_WITH(read_alignment(p), ContainsSubstring(":1:"));
}

TEST_CASE("manifest round trip resolves nothing on write") {
  const auto p = scratch("m.jsonl");
  std::vector<ManifestEntry> e{{"u1", "s1", Gender::F, "wav/u1.wav", "video/u1.gvf", "align/u1.tsv", Partition::Train},
                               {"u2", "s2", Gender::M, "wav/u2.wav", "video/u2.gvf", "align/u2.tsv", Partition::Test}};
  write_manifest(p, e);
  const auto r = read_manifest(p);
  REQUIRE(r.size() == 2);
  CHECK(r[1].gender == Gender::M);
  CHECK(r[1].partition == Partition::Test);
  CHECK(r[0].wav_path == "wav/u1.wav");

  std::ofstream(p) << "{\"id\": \"x\"}\n";
  CHECK_THROWS_AS(read_manifest(p), Error);
}

TEST_CASE("enum spellings") {
  CHECK(parse_gender("F") == Gender::F);
  CHECK(to_string(Gender::M) == "M");
  CHECK(parse_partition("val") == Partition::Val);
  CHECK(to_string(Partition::Test) == "test");
  CHECK_THROWS_AS(parse_gender("X"), Error);
}

TEST_CASE("utterance validation") {
  Utterance u;
  u.id = "u";
  u.audio.samples.assign(16000, 0.0);
  u.video.pixels.assign(60 * kVideoFrameBytes, 0);
  u.alignment = {{0, 500, "sil"}, {500, 1000, "aa"}};
  CHECK_NOTHROW(validate(u));

  u.video.pixels.assign(59 * kVideoFrameBytes, 0);
  CHECK_NOTHROW(validate(u));
  u.video.pixels.assign(58 * kVideoFrameBytes, 0);
  CHECK_THROWS_AS(validate(u), Error);

  u.video.pixels.assign(60 * kVideoFrameBytes, 0);
  u.alignment = {{0, 600, "sil"}, {500, 1000, "aa"}};
  CHECK_THROWS_AS(validate(u), Error);
}

TEST_CASE("corpus digest covers referenced files") {
  const fs::path dir = scratch("digest").parent_path() / "digest";
  fs::create_directories(dir / "wav");
  Waveform w;
  w.samples = {0.1, 0.2};
  write_wav(dir / "wav/u1.wav", w);
  std::vector<ManifestEntry> e{{"u1", "s1", Gender::F, "wav/u1.wav", "wav/u1.wav", "wav/u1.wav", Partition::Train}};
  write_manifest(dir / "manifest.jsonl", e);

  const std::string d1 = corpus_digest(dir / "manifest.jsonl");
  CHECK(d1.size() == 16);
  CHECK(d1 == corpus_digest(dir / "manifest.jsonl"));
  w.samples[1] = 0.3;
  write_wav(dir / "wav/u1.wav", w);
  CHECK(d1 != corpus_digest(dir / "manifest.jsonl"));
}
