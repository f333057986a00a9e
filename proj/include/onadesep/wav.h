#pragma once

#include <filesystem>

#include "onadesep/core.h"

namespace onadesep {

enum class WavEncoding { kPcm16, kFloat32 };

// Reads a mono RIFF/WAVE file (16-bit PCM or 32-bit IEEE float).
Waveform read_wav(const std::filesystem::path& path);

// Writes a mono RIFF/WAVE file. Float32 is lossless for Waveform samples;
// PCM16 clips to [-1, 1] and rounds.
void write_wav(const std::filesystem::path& path, const Waveform& w,
               WavEncoding encoding = WavEncoding::kFloat32);

}  // namespace onadesep
