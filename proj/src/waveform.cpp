#include "aqualoc/waveform.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <fmt/format.h>

#include "aqualoc/error.hpp"

namespace aqualoc::waveform {
namespace {

bool is_prime(std::size_t n) {
  if (n < 2) return false;
  for (std::size_t d = 2; d * d <= n; ++d) {
    if (n % d == 0) return false;
  }
  return true;
}

double peak_abs(std::span<const double> x) {
  double peak = 0.0;
  for (double v : x) peak = std::max(peak, std::abs(v));
  return peak;
}

// Real time-domain signal from positive-frequency bins via Hermitian loading.
std::vector<double> real_from_bins(const std::vector<dsp::Complex>& positive) {
  const std::size_t n = positive.size();
  std::vector<dsp::Complex> spectrum(positive);
  for (std::size_t k = 1; k < n; ++k) {
    if (positive[k] != dsp::Complex{}) spectrum[n - k] = std::conj(positive[k]);
  }
  auto time = dsp::ifft(spectrum);
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = time[i].real();
  const double peak = peak_abs(out);
  if (peak > 0.0) {
    for (double& v : out) v /= peak;
  }
  return out;
}

}  // namespace

std::size_t PreambleConfig::first_bin() const {
  return static_cast<std::size_t>(std::ceil(band_lo_hz * static_cast<double>(symbol_len) / fs));
}

std::size_t PreambleConfig::last_bin() const {
  return static_cast<std::size_t>(std::floor(band_hi_hz * static_cast<double>(symbol_len) / fs));
}

std::size_t PreambleConfig::effective_zc_length() const {
  if (zc_length != 0) return zc_length;
  std::size_t n = in_band_bins();
  while (n > 2 && !is_prime(n)) --n;
  return n;
}

void validate(const PreambleConfig& config) {
  if (!(config.fs > 0.0)) throw DomainError("fs must be positive");
  if (config.symbol_len < 8) throw DomainError("symbol_len too short");
  if (config.cp_len > config.symbol_len) throw DomainError("cp_len exceeds symbol_len");
  if (config.pn_signs.empty()) throw DomainError("pn_signs is empty");
  for (int s : config.pn_signs) {
    if (s != 1 && s != -1) throw DomainError("pn_signs entries must be +1 or -1");
  }
  if (!(config.band_lo_hz > 0.0) || !(config.band_hi_hz > config.band_lo_hz)) {
    throw DomainError("band must satisfy 0 < lo < hi");
  }
  if (!(config.band_hi_hz < config.fs / 2.0)) {
    throw DomainError("band upper edge must be below fs/2");
  }
  if (config.last_bin() < config.first_bin()) throw DomainError("band holds no DFT bin");
  const std::size_t length = config.effective_zc_length();
  if (length == 0 || config.zc_root == 0) throw DomainError("zc root and length must be positive");
  if (std::gcd(config.zc_root, length) != 1) {
    throw DomainError(fmt::format("zc_root {} is not coprime with zc length {}",
                                  config.zc_root, length));
  }
}

std::vector<dsp::Complex> zadoff_chu(std::size_t root, std::size_t length) {
  // x[n] = exp(-i pi u n (n + L mod 2) / L); the index is reduced modulo 2L.
  std::vector<dsp::Complex> seq(length);
  const unsigned long long u = root;
  const unsigned long long len = length;
  for (unsigned long long n = 0; n < len; ++n) {
    const auto index = (u * n * (n + len % 2)) % (2 * len);
    seq[n] = std::polar(1.0, -std::numbers::pi * static_cast<double>(index) /
                                 static_cast<double>(len));
  }
  return seq;
}

std::vector<double> ofdm_symbol(const PreambleConfig& config) {
  validate(config);
  const auto zc = zadoff_chu(config.zc_root, config.effective_zc_length());
  std::vector<dsp::Complex> bins(config.symbol_len);
  const std::size_t first = config.first_bin();
  // Every in-band bin is loaded; the ZC sequence is cyclically extended when
  // its prime length is shorter than the band.
  for (std::size_t q = 0; q < config.in_band_bins(); ++q) {
    bins[first + q] = zc[q % zc.size()];
  }
  return real_from_bins(bins);
}

std::vector<dsp::Complex> reference_spectrum(const PreambleConfig& config) {
  const auto symbol = ofdm_symbol(config);
  return dsp::fft(std::span<const double>(symbol));
}

std::vector<double> generate_preamble(const PreambleConfig& config) {
  const auto symbol = ofdm_symbol(config);
  std::vector<double> out;
  out.reserve(config.preamble_len());
  for (int sign : config.pn_signs) {
    const double s = static_cast<double>(sign);
    for (std::size_t i = config.symbol_len - config.cp_len; i < config.symbol_len; ++i) {
      out.push_back(s * symbol[i]);
    }
    for (double v : symbol) out.push_back(s * v);
  }
  return out;
}

std::pair<std::size_t, std::size_t> subband_bins(std::size_t index, std::size_t group_size,
                                                 const PreambleConfig& config) {
  if (group_size == 0 || index >= group_size) {
    throw DomainError(fmt::format("sub-band {} out of range for group of {}", index, group_size));
  }
  const std::size_t bins = config.in_band_bins();
  if (group_size > bins) throw DomainError("group larger than the number of in-band bins");
  const std::size_t first = config.first_bin();
  return {first + index * bins / group_size, first + (index + 1) * bins / group_size};
}

std::vector<double> encode_id(std::size_t id, std::size_t group_size,
                              const PreambleConfig& config) {
  validate(config);
  const auto [lo, hi] = subband_bins(id, group_size, config);
  std::vector<dsp::Complex> bins(config.symbol_len);
  for (std::size_t k = lo; k < hi; ++k) bins[k] = 1.0;
  return real_from_bins(bins);
}

IdDecision decode_id(std::span<const double> samples, std::size_t group_size,
                     const PreambleConfig& config) {
  if (samples.size() < config.symbol_len) throw DomainError("ID decode needs one full symbol");
  const auto spectrum = dsp::fft(samples.first(config.symbol_len));
  IdDecision best;
  double best_energy = -1.0;
  double total = 0.0;
  for (std::size_t j = 0; j < group_size; ++j) {
    const auto [lo, hi] = subband_bins(j, group_size, config);
    double energy = 0.0;
    for (std::size_t k = lo; k < hi; ++k) energy += std::norm(spectrum[k]);
    total += energy;
    if (energy > best_energy) {
      best_energy = energy;
      best.id = j;
    }
  }
  best.confidence = total > 0.0 ? best_energy / total : 0.0;
  return best;
}

std::uint8_t encode_depth(double depth_m) {
  if (!(depth_m >= 0.0 && depth_m <= kMaxDepthM)) {
    throw DomainError(fmt::format("depth {} m outside [0, {}] m", depth_m, kMaxDepthM));
  }
  return static_cast<std::uint8_t>(std::lround(depth_m / kDepthStepM));
}

double decode_depth(std::uint8_t code) { return static_cast<double>(code) * kDepthStepM; }

std::uint16_t encode_timestamp_diff(double diff_samples) {
  if (!(diff_samples >= 0.0 && diff_samples < kMaxTimestampDiffSamples)) {
    throw DomainError(fmt::format("timestamp difference {} samples outside [0, {})",
                                  diff_samples, kMaxTimestampDiffSamples));
  }
  return static_cast<std::uint16_t>(std::floor(diff_samples / kTimestampStepSamples));
}

double decode_timestamp_diff(std::uint16_t code) {
  return static_cast<double>(code) * kTimestampStepSamples;
}

std::size_t payload_bits(std::size_t group_size) {
  if (group_size < 2) throw DomainError("a payload needs at least two devices");
  return kTimestampBits * (group_size - 1) + kDepthBits;
}

Bits pack_payload(const PayloadPacket& packet, std::size_t group_size) {
  const std::size_t total = payload_bits(group_size);
  if (packet.timestamp_codes.size() != group_size - 1) {
    throw DomainError(fmt::format("expected {} timestamp codes, got {}", group_size - 1,
                                  packet.timestamp_codes.size()));
  }
  if (decode_depth(packet.depth_code) > kMaxDepthM + 1e-9) {
    throw DomainError("depth code exceeds the 40 m range");
  }
  const auto max_code = static_cast<std::uint16_t>(
      (kMaxTimestampDiffSamples - 1) / kTimestampStepSamples);
  Bits bits;
  bits.reserve(total);
  auto put = [&bits](unsigned value, int width) {
    for (int b = width - 1; b >= 0; --b) bits.push_back(static_cast<std::uint8_t>((value >> b) & 1u));
  };
  put(packet.depth_code, kDepthBits);
  for (std::uint16_t code : packet.timestamp_codes) {
    if (code > max_code && code != kNotHeardCode) {
      throw DomainError(fmt::format("timestamp code {} out of range", code));
    }
    put(code, kTimestampBits);
  }
  return bits;
}

PayloadPacket unpack_payload(std::span<const std::uint8_t> bits, std::size_t group_size,
                             std::size_t device_id) {
  if (bits.size() != payload_bits(group_size)) {
    throw DomainError(fmt::format("payload must be {} bits, got {}", payload_bits(group_size),
                                  bits.size()));
  }
  std::size_t pos = 0;
  auto take = [&](int width) {
    unsigned value = 0;
    for (int b = 0; b < width; ++b) {
      if (bits[pos] > 1) throw DomainError("bit values must be 0 or 1");
      value = (value << 1) | bits[pos++];
    }
    return value;
  };
  PayloadPacket packet;
  packet.device_id = device_id;
  packet.depth_code = static_cast<std::uint8_t>(take(kDepthBits));
  for (std::size_t j = 0; j + 1 < group_size; ++j) {
    packet.timestamp_codes.push_back(static_cast<std::uint16_t>(take(kTimestampBits)));
  }
  return packet;
}

std::string to_hex(std::span<const std::uint8_t> bits) {
  static constexpr char kDigits[] = "0123456789abcdef";
  std::string out;
  for (std::size_t i = 0; i < bits.size(); i += 4) {
    unsigned nibble = 0;
    for (std::size_t b = 0; b < 4; ++b) {
      nibble <<= 1;
      if (i + b < bits.size()) nibble |= bits[i + b] & 1u;
    }
    out.push_back(kDigits[nibble]);
  }
  return out;
}

std::pair<double, double> fsk_tones(std::size_t band_index, std::size_t group_size,
                                    const PreambleConfig& config, double bit_rate) {
  if (group_size == 0 || band_index >= group_size) {
    throw DomainError(fmt::format("band {} out of range for group of {}", band_index, group_size));
  }
  const double width = (config.band_hi_hz - config.band_lo_hz) / static_cast<double>(group_size);
  const double base = config.band_lo_hz + width * static_cast<double>(band_index);
  auto snap = [bit_rate](double f) { return std::round(f / bit_rate) * bit_rate; };
  const double space = snap(base + 0.25 * width);
  const double mark = snap(base + 0.75 * width);
  if (space == mark) throw DomainError("sub-band too narrow for two orthogonal FSK tones");
  return {space, mark};
}

std::size_t fsk_samples_per_bit(const PreambleConfig& config, double bit_rate) {
  if (!(bit_rate > 0.0)) throw DomainError("bit rate must be positive");
  return static_cast<std::size_t>(std::llround(config.fs / bit_rate));
}

std::vector<double> fsk_modulate(std::span<const std::uint8_t> bits, std::size_t band_index,
                                 std::size_t group_size, const PreambleConfig& config,
                                 double bit_rate) {
  const auto [space, mark] = fsk_tones(band_index, group_size, config, bit_rate);
  const std::size_t per_bit = fsk_samples_per_bit(config, bit_rate);
  std::vector<double> out;
  out.reserve(bits.size() * per_bit);
  for (std::size_t b = 0; b < bits.size(); ++b) {
    const double f = bits[b] ? mark : space;
    for (std::size_t n = 0; n < per_bit; ++n) {
      const double t = static_cast<double>(b * per_bit + n) / config.fs;
      out.push_back(std::sin(2.0 * std::numbers::pi * f * t));
    }
  }
  return out;
}

Bits fsk_demodulate(std::span<const double> samples, std::size_t band_index,
                    std::size_t group_size, const PreambleConfig& config, double bit_rate) {
  const auto [space, mark] = fsk_tones(band_index, group_size, config, bit_rate);
  const std::size_t per_bit = fsk_samples_per_bit(config, bit_rate);
  // Non-coherent energy detector on the two tones.
  auto tone_energy = [&](std::size_t start, double f) {
    double i_sum = 0.0, q_sum = 0.0;
    for (std::size_t n = 0; n < per_bit; ++n) {
      const double phase = 2.0 * std::numbers::pi * f * static_cast<double>(start + n) / config.fs;
      i_sum += samples[start + n] * std::cos(phase);
      q_sum += samples[start + n] * std::sin(phase);
    }
    return i_sum * i_sum + q_sum * q_sum;
  };
  Bits bits;
  for (std::size_t start = 0; start + per_bit <= samples.size(); start += per_bit) {
    bits.push_back(tone_energy(start, mark) > tone_energy(start, space) ? 1 : 0);
  }
  return bits;
}

}  // namespace aqualoc::waveform
