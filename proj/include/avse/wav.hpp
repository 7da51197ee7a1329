#pragma once

#include <filesystem>

#include "avse/signal.hpp"

namespace avse {

// RIFF/WAVE, PCM 16-bit little-endian, mono, 16 kHz. Anything else is
// rejected with a message naming the offending field.
Waveform read_wav(const std::filesystem::path& path);

// Samples are clipped to [-1, 1] and quantised to 16 bits.
void write_wav(const std::filesystem::path& path, const Waveform& w);

}  // namespace avse
