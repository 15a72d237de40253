#pragma once

#include <filesystem>
#include <vector>

namespace aqualoc::io {

/// Samples in [-1, 1], one vector per channel.
struct Audio {
  double sample_rate = 44100.0;
  std::vector<std::vector<double>> channels;
};

/// 16-bit PCM only. Throws IoError on unreadable or unsupported files.
Audio read_wav(const std::filesystem::path& path);

/// Writes 16-bit PCM, clipping to [-1, 1].
void write_wav(const std::filesystem::path& path, const Audio& audio);

}  // namespace aqualoc::io
