#include "avse/wav.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <vector>

#include "avse/error.hpp"

namespace avse {
namespace {

static_assert(std::endian::native == std::endian::little, "little-endian host required");

std::uint32_t u32(const char* p) {
  std::uint32_t v;
  std::memcpy(&v, p, 4);
  return v;
}

std::uint16_t u16(const char* p) {
  std::uint16_t v;
  std::memcpy(&v, p, 2);
  return v;
}

template <class T>
void put(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

}  // namespace

Waveform read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open wav file: " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::string where = " (" + path.string() + ")";

  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
      std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
    throw Error("not a RIFF/WAVE file" + where);

  bool have_fmt = false;
  std::size_t pos = 12;
  while (pos + 8 <= bytes.size()) {
    const char* id = bytes.data() + pos;
    const std::uint32_t size = u32(id + 4);
    const std::size_t body = pos + 8;
    if (body + size > bytes.size()) throw Error("truncated chunk in wav file" + where);

    if (std::memcmp(id, "fmt ", 4) == 0) {
      if (size < 16) throw Error("wav fmt chunk too small" + where);
      const char* f = bytes.data() + body;
      const auto format = u16(f);
      const auto channels = u16(f + 2);
      const auto rate = u32(f + 4);
      const auto bits = u16(f + 14);
      if (format != 1) throw Error("unsupported wav encoding " + std::to_string(format) + ", expected PCM (1)" + where);
      if (channels != 1) throw Error("unsupported wav channel count " + std::to_string(channels) + ", expected mono" + where);
      if (rate != kSampleRate) throw Error("unsupported wav sample rate " + std::to_string(rate) + ", expected 16000" + where);
      if (bits != 16) throw Error("unsupported wav bit depth " + std::to_string(bits) + ", expected 16" + where);
      have_fmt = true;
    } else if (std::memcmp(id, "data", 4) == 0) {
      if (!have_fmt) throw Error("wav data chunk precedes fmt chunk" + where);
      Waveform w;
      w.samples.resize(size / 2);
      const char* d = bytes.data() + body;
      for (std::size_t i = 0; i < w.samples.size(); ++i) {
        std::int16_t s;
        std::memcpy(&s, d + 2 * i, 2);
        w.samples[i] = s / 32768.0;
      }
      return w;
    }
    pos = body + size + (size & 1u);
  }
  throw Error("wav file has no data chunk" + where);
}

void write_wav(const std::filesystem::path& path, const Waveform& w) {
  validate(w);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot create wav file: " + path.string());
  const auto data_bytes = static_cast<std::uint32_t>(w.samples.size() * 2);
  out.write("RIFF", 4);
  put<std::uint32_t>(out, 36 + data_bytes);
  out.write("WAVEfmt ", 8);
  put<std::uint32_t>(out, 16);
  put<std::uint16_t>(out, 1);
  put<std::uint16_t>(out, 1);
  put<std::uint32_t>(out, kSampleRate);
  put<std::uint32_t>(out, kSampleRate * 2);
  put<std::uint16_t>(out, 2);
  put<std::uint16_t>(out, 16);
  out.write("data", 4);
  put<std::uint32_t>(out, data_bytes);
  for (double x : w.samples) {
    const double c = std::clamp(x, -1.0, 1.0);
    put<std::int16_t>(out, static_cast<std::int16_t>(std::lround(std::min(c * 32768.0, 32767.0))));
  }
  if (!out) throw Error("failed writing wav file: " + path.string());
}

}  // namespace avse
