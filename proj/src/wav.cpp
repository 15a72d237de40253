#include "aqualoc/wav.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include <fmt/format.h>

#include "aqualoc/error.hpp"

namespace aqualoc::io {
namespace {

std::uint32_t le32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

std::uint16_t le16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

void put32(std::string& s, std::uint32_t v) {
  for (int k = 0; k < 4; ++k) s.push_back(static_cast<char>((v >> (8 * k)) & 0xff));
}

void put16(std::string& s, std::uint16_t v) {
  s.push_back(static_cast<char>(v & 0xff));
  s.push_back(static_cast<char>(v >> 8));
}

}  // namespace

Audio read_wav(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open '{}'", path.string()));
  const std::vector<unsigned char> bytes{std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
    throw IoError(fmt::format("'{}' is not a RIFF/WAVE file", path.string()));
  }

  std::uint16_t format = 0, channels = 0, bits = 0;
  std::uint32_t rate = 0;
  const unsigned char* data = nullptr;
  std::size_t data_len = 0;
  for (std::size_t pos = 12; pos + 8 <= bytes.size();) {
    const std::uint32_t len = le32(bytes.data() + pos + 4);
    const unsigned char* body = bytes.data() + pos + 8;
    const std::size_t avail = std::min<std::size_t>(len, bytes.size() - pos - 8);
    if (std::memcmp(bytes.data() + pos, "fmt ", 4) == 0 && avail >= 16) {
      format = le16(body);
      channels = le16(body + 2);
      rate = le32(body + 4);
      bits = le16(body + 14);
    } else if (std::memcmp(bytes.data() + pos, "data", 4) == 0) {
      data = body;
      data_len = avail;
    }
    pos += 8 + len + (len & 1u);
  }
  if (format != 1 || bits != 16 || channels == 0 || rate == 0) {
    throw IoError(fmt::format("'{}': only 16-bit PCM is supported", path.string()));
  }
  if (!data) throw IoError(fmt::format("'{}' has no data chunk", path.string()));

  Audio audio;
  audio.sample_rate = rate;
  audio.channels.assign(channels, {});
  const std::size_t frames = data_len / (2u * channels);
  for (auto& ch : audio.channels) ch.reserve(frames);
  for (std::size_t f = 0; f < frames; ++f) {
    for (std::size_t c = 0; c < channels; ++c) {
      const auto raw = static_cast<std::int16_t>(le16(data + 2 * (f * channels + c)));
      audio.channels[c].push_back(raw / 32768.0);
    }
  }
  return audio;
}

void write_wav(const std::filesystem::path& path, const Audio& audio) {
  if (audio.channels.empty()) throw DomainError("no channels to write");
  const std::size_t frames = audio.channels.front().size();
  for (const auto& ch : audio.channels) {
    if (ch.size() != frames) throw DomainError("channels differ in length");
  }
  if (!(audio.sample_rate > 0.0) || audio.sample_rate != std::floor(audio.sample_rate)) {
    throw DomainError("sample rate must be a positive integer");
  }
  const auto channels = static_cast<std::uint16_t>(audio.channels.size());
  const auto rate = static_cast<std::uint32_t>(audio.sample_rate);
  const auto data_len = static_cast<std::uint32_t>(frames * channels * 2u);

  std::string out = "RIFF";
  put32(out, 36 + data_len);
  out += "WAVEfmt ";
  put32(out, 16);
  put16(out, 1);
  put16(out, channels);
  put32(out, rate);
  put32(out, rate * channels * 2u);
  put16(out, static_cast<std::uint16_t>(channels * 2u));
  put16(out, 16);
  out += "data";
  put32(out, data_len);
  for (std::size_t f = 0; f < frames; ++f) {
    for (const auto& ch : audio.channels) {
      const double v = std::clamp(ch[f], -1.0, 1.0);
      put16(out, static_cast<std::uint16_t>(static_cast<std::int16_t>(std::lround(v * 32767.0))));
    }
  }
  std::ofstream file(path, std::ios::binary);
  if (!file || !file.write(out.data(), static_cast<std::streamsize>(out.size()))) {
    throw IoError(fmt::format("cannot write '{}'", path.string()));
  }
}

}  // namespace aqualoc::io
