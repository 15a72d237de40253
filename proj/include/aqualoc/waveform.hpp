#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "aqualoc/fft.hpp"

namespace aqualoc::waveform {

/// ZC-filled OFDM preamble layout. zc_length = 0 selects the largest prime
/// not exceeding the number of in-band bins.
struct PreambleConfig {
  double fs = 44100.0;
  std::size_t symbol_len = 1920;
  std::size_t cp_len = 540;
  double band_lo_hz = 1000.0;
  double band_hi_hz = 5000.0;
  std::vector<int> pn_signs{+1, +1, -1, +1};
  std::size_t zc_root = 1;
  std::size_t zc_length = 0;

  std::size_t num_symbols() const { return pn_signs.size(); }
  std::size_t block_len() const { return cp_len + symbol_len; }
  std::size_t preamble_len() const { return num_symbols() * block_len(); }
  std::size_t first_bin() const;
  std::size_t last_bin() const;  // inclusive
  std::size_t in_band_bins() const { return last_bin() - first_bin() + 1; }
  std::size_t effective_zc_length() const;
};

/// Throws DomainError if the layout is unusable.
void validate(const PreambleConfig& config);

std::vector<dsp::Complex> zadoff_chu(std::size_t root, std::size_t length);

/// One CP-free OFDM symbol (before PN sign), peak-normalized to 1.
std::vector<double> ofdm_symbol(const PreambleConfig& config);

/// Frequency-domain reference X(k) of ofdm_symbol(), full symbol_len bins.
std::vector<dsp::Complex> reference_spectrum(const PreambleConfig& config);

/// PN-signed symbols, each preceded by its cyclic prefix.
std::vector<double> generate_preamble(const PreambleConfig& config);

// ---------------------------------------------------------------------------
// Device ID (MFSK over N equal sub-bands of the preamble band)

/// Half-open bin range [first, second) of sub-band `index` out of `group_size`.
std::pair<std::size_t, std::size_t> subband_bins(std::size_t index, std::size_t group_size,
                                                 const PreambleConfig& config);

std::vector<double> encode_id(std::size_t id, std::size_t group_size,
                              const PreambleConfig& config);

struct IdDecision {
  std::size_t id = 0;
  /// Fraction of in-band energy in the winning sub-band; 0 for silent input.
  double confidence = 0.0;
};

/// Maximum-likelihood sub-band choice over the first symbol_len samples.
IdDecision decode_id(std::span<const double> samples, std::size_t group_size,
                     const PreambleConfig& config);

// ---------------------------------------------------------------------------
// Timestamp/depth report payload

inline constexpr double kDepthStepM = 0.2;
inline constexpr double kMaxDepthM = 40.0;
inline constexpr int kDepthBits = 8;
inline constexpr int kTimestampBits = 10;
inline constexpr int kTimestampStepSamples = 2;
/// 2 * tau_max = 42 ms at 44.1 kHz.
inline constexpr int kMaxTimestampDiffSamples = 1852;
/// All-ones code reserved for "message not heard".
inline constexpr std::uint16_t kNotHeardCode = (1u << kTimestampBits) - 1;

using Bits = std::vector<std::uint8_t>;

struct PayloadPacket {
  std::size_t device_id = 1;
  std::uint8_t depth_code = 0;
  /// One code per other device in ascending id order, kNotHeardCode if unheard.
  std::vector<std::uint16_t> timestamp_codes;

  bool operator==(const PayloadPacket&) const = default;
};

std::uint8_t encode_depth(double depth_m);
double decode_depth(std::uint8_t code);
std::uint16_t encode_timestamp_diff(double diff_samples);
double decode_timestamp_diff(std::uint16_t code);

/// 10 (N - 1) + 8
std::size_t payload_bits(std::size_t group_size);

// FEC hook: a coder would wrap pack_payload/unpack_payload on the Bits level.
Bits pack_payload(const PayloadPacket& packet, std::size_t group_size);
PayloadPacket unpack_payload(std::span<const std::uint8_t> bits, std::size_t group_size,
                             std::size_t device_id);

/// MSB-first hex, zero-padded to a whole nibble.
std::string to_hex(std::span<const std::uint8_t> bits);

// ---------------------------------------------------------------------------
// Binary FSK uplink

inline constexpr double kFskBitRate = 100.0;

/// (space, mark) tone frequencies for the sub-band, snapped to multiples of the
/// bit rate so the tones are orthogonal over one bit.
std::pair<double, double> fsk_tones(std::size_t band_index, std::size_t group_size,
                                    const PreambleConfig& config,
                                    double bit_rate = kFskBitRate);

std::size_t fsk_samples_per_bit(const PreambleConfig& config, double bit_rate = kFskBitRate);

std::vector<double> fsk_modulate(std::span<const std::uint8_t> bits, std::size_t band_index,
                                 std::size_t group_size, const PreambleConfig& config,
                                 double bit_rate = kFskBitRate);

Bits fsk_demodulate(std::span<const double> samples, std::size_t band_index,
                    std::size_t group_size, const PreambleConfig& config,
                    double bit_rate = kFskBitRate);

}  // namespace aqualoc::waveform
