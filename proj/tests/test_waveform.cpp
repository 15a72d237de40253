#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <random>

#include "aqualoc/error.hpp"
#include "aqualoc/waveform.hpp"

using namespace aqualoc;
using namespace aqualoc::waveform;

namespace {

// Direct O(N^2) DFT power spectrum, independent of the FFT wrapper.
std::vector<double> naive_power(std::span<const double> x) {
  const std::size_t n = x.size();
  std::vector<double> power(n / 2 + 1);
  for (std::size_t k = 0; k < power.size(); ++k) {
    std::complex<double> acc;
    for (std::size_t t = 0; t < n; ++t) {
      const double phase = -2.0 * std::numbers::pi * static_cast<double>(k * t % n) / static_cast<double>(n);
      acc += x[t] * std::complex<double>(std::cos(phase), std::sin(phase));
    }
    power[k] = std::norm(acc);
  }
  return power;
}

std::vector<double> segment(const std::vector<double>& pre, const PreambleConfig& cfg, std::size_t i) {
  const auto begin = pre.begin() + static_cast<long>(i * cfg.block_len() + cfg.cp_len);
  return {begin, begin + static_cast<long>(cfg.symbol_len)};
}

}  // namespace

TEST_CASE("default preamble layout") {
  const PreambleConfig cfg;
  CHECK(cfg.first_bin() == 44);
  CHECK(cfg.last_bin() == 217);
  CHECK(cfg.in_band_bins() == 174);
  CHECK(cfg.effective_zc_length() == 173);
  const auto pre = generate_preamble(cfg);
  CHECK(pre.size() == 9840);
  double peak = 0.0;
  for (double v : pre) peak = std::max(peak, std::abs(v));
  CHECK(peak == doctest::Approx(1.0));
}

TEST_CASE("preamble symbols follow the PN signs and carry cyclic prefixes") {
  const PreambleConfig cfg;
  const auto pre = generate_preamble(cfg);
  const auto s0 = segment(pre, cfg, 0);
  const auto s1 = segment(pre, cfg, 1);
  const auto s2 = segment(pre, cfg, 2);
  const auto s3 = segment(pre, cfg, 3);
  for (std::size_t i = 0; i < cfg.symbol_len; ++i) {
    CHECK(s1[i] == s0[i]);
    CHECK(s2[i] == -s0[i]);
    CHECK(s3[i] == s0[i]);
  }
  for (std::size_t b = 0; b < cfg.num_symbols(); ++b) {
    for (std::size_t i = 0; i < cfg.cp_len; ++i) {
      const std::size_t start = b * cfg.block_len();
      CHECK(pre[start + i] == pre[start + cfg.symbol_len + i]);
    }
  }
}

TEST_CASE("preamble energy stays in the 1-5 kHz band") {
  const PreambleConfig cfg;
  const auto pre = generate_preamble(cfg);
  const auto power = naive_power(pre);
  double in_band = 0.0, total = 0.0;
  for (std::size_t k = 0; k < power.size(); ++k) {
    const double f = static_cast<double>(k) * cfg.fs / static_cast<double>(pre.size());
    total += power[k];
    if (f >= 1000.0 && f <= 5000.0) in_band += power[k];
  }
  CHECK((total - in_band) / total < 0.01);
}

TEST_CASE("Zadoff-Chu sequence has constant amplitude and ideal autocorrelation") {
  for (std::size_t root : {1u, 2u, 7u}) {
    const auto zc = zadoff_chu(root, 173);
    for (const auto& z : zc) CHECK(std::abs(z) == doctest::Approx(1.0));
    for (std::size_t lag = 1; lag < zc.size(); ++lag) {
      std::complex<double> acc;
      for (std::size_t n = 0; n < zc.size(); ++n) acc += zc[n] * std::conj(zc[(n + lag) % zc.size()]);
      CHECK(std::abs(acc) < 1e-9);
    }
  }
}

TEST_CASE("preamble config validation") {
  PreambleConfig cfg;
  cfg.zc_length = 10;
  cfg.zc_root = 4;
  CHECK_THROWS_AS(validate(cfg), DomainError);
  PreambleConfig high;
  high.band_hi_hz = 30000.0;
  CHECK_THROWS_AS(validate(high), DomainError);
  PreambleConfig signs;
  signs.pn_signs = {1, 2};
  CHECK_THROWS_AS(validate(signs), DomainError);
}

TEST_CASE("MFSK id symbols concentrate energy in their sub-band") {
  const PreambleConfig cfg;
  const auto sym = encode_id(3, 6, cfg);
  REQUIRE(sym.size() == cfg.symbol_len);
  const auto power = naive_power(sym);
  const auto [lo, hi] = subband_bins(3, 6, cfg);
  double band = 0.0, in_band = 0.0;
  for (std::size_t k = cfg.first_bin(); k <= cfg.last_bin(); ++k) {
    in_band += power[k];
    if (k >= lo && k < hi) band += power[k];
  }
  CHECK(band / in_band > 0.9);

  const auto other = encode_id(1, 6, cfg);
  double cross = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < sym.size(); ++i) {
    cross += sym[i] * other[i];
    na += sym[i] * sym[i];
    nb += other[i] * other[i];
  }
  CHECK(std::abs(cross) / std::sqrt(na * nb) < 1e-9);
  CHECK_THROWS_AS(encode_id(6, 6, cfg), DomainError);
}

TEST_CASE("MFSK id round trip for every group size") {
  const PreambleConfig cfg;
  for (std::size_t n = 3; n <= 8; ++n) {
    for (std::size_t id = 0; id < n; ++id) {
      const auto decision = decode_id(encode_id(id, n, cfg), n, cfg);
      CHECK(decision.id == id);
      CHECK(decision.confidence > 0.9);
    }
  }
  CHECK(decode_id(encode_id(2, 5, cfg), 5, cfg).id == 2);
}

TEST_CASE("MFSK id decoding at 0 dB in-band SNR") {
  const PreambleConfig cfg;
  const auto sym = encode_id(4, 6, cfg);
  double signal_power = 0.0;
  for (double v : sym) signal_power += v * v;
  signal_power /= static_cast<double>(sym.size());
  // White noise of variance s2 puts s2 * (2 * in-band bins / N) of its power in band.
  const double band_fraction = 2.0 * static_cast<double>(cfg.in_band_bins()) / static_cast<double>(cfg.symbol_len);
  const double sigma = std::sqrt(signal_power / band_fraction);
  int correct = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    std::mt19937_64 rng(1000 + trial);
    std::normal_distribution<double> noise(0.0, sigma);
    auto rx = sym;
    for (double& v : rx) v += noise(rng);
    if (decode_id(rx, 6, cfg).id == 4) ++correct;
  }
  CHECK(correct >= 990);
}

TEST_CASE("silent input decodes with zero confidence") {
  const PreambleConfig cfg;
  const std::vector<double> zeros(cfg.symbol_len, 0.0);
  const auto decision = decode_id(zeros, 6, cfg);
  CHECK(decision.confidence == 0.0);
  CHECK(decision.id < 6);
  const std::vector<double> short_input(10, 0.0);
  CHECK_THROWS_AS(decode_id(short_input, 6, cfg), DomainError);
}

TEST_CASE("payload field quantization") {
  CHECK(payload_bits(6) == 58);
  CHECK(payload_bits(3) == 28);
  CHECK(encode_depth(2.0) == 10);
  CHECK(encode_depth(40.0) == 200);
  CHECK(encode_timestamp_diff(400.0) == 200);
  CHECK(encode_timestamp_diff(401.0) == 200);
  CHECK(decode_timestamp_diff(200) == 400.0);
  CHECK_THROWS_AS(encode_depth(-0.1), DomainError);
  CHECK_THROWS_AS(encode_depth(40.5), DomainError);
  CHECK_THROWS_AS(encode_timestamp_diff(1852.0), DomainError);
  CHECK_THROWS_AS(encode_timestamp_diff(-1.0), DomainError);
}

TEST_CASE("payload pack and unpack are inverse on random packets") {
  std::mt19937_64 rng(2024);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 3 + static_cast<std::size_t>(trial % 6);
    PayloadPacket packet;
    packet.device_id = 1 + rng() % (n - 1);
    packet.depth_code = static_cast<std::uint8_t>(rng() % 201);
    for (std::size_t j = 0; j + 1 < n; ++j) {
      const bool heard = rng() % 8 != 0;
      packet.timestamp_codes.push_back(heard ? static_cast<std::uint16_t>(rng() % 926) : kNotHeardCode);
    }
    const auto bits = pack_payload(packet, n);
    CHECK(bits.size() == 10 * (n - 1) + 8);
    CHECK(unpack_payload(bits, n, packet.device_id) == packet);
  }
}

TEST_CASE("payload rejects malformed packets") {
  PayloadPacket packet{1, 10, {1, 2}};
  CHECK_THROWS_AS(pack_payload(packet, 4), DomainError);
  packet.timestamp_codes = {1, 2, 1000};
  CHECK_THROWS_AS(pack_payload(packet, 4), DomainError);
  packet.timestamp_codes = {1, 2, 3};
  packet.depth_code = 201;
  CHECK_THROWS_AS(pack_payload(packet, 4), DomainError);
  const Bits short_bits(5, 0);
  CHECK_THROWS_AS(unpack_payload(short_bits, 4, 1), DomainError);
}

TEST_CASE("hex rendering") {
  const Bits bits{1, 0, 1, 0, 1, 1};
  CHECK(to_hex(bits) == "ac");
}

TEST_CASE("FSK round trip in every band") {
  const PreambleConfig cfg;
  std::mt19937_64 rng(5);
  for (std::size_t n = 3; n <= 8; ++n) {
    for (std::size_t band = 0; band < n; ++band) {
      Bits bits(payload_bits(n));
      for (auto& b : bits) b = static_cast<std::uint8_t>(rng() & 1u);
      const auto audio = fsk_modulate(bits, band, n, cfg);
      CHECK(fsk_demodulate(audio, band, n, cfg) == bits);
    }
  }
}

TEST_CASE("FSK airtime is bit count over bit rate") {
  const PreambleConfig cfg;
  const Bits bits(58, 1);
  const auto audio = fsk_modulate(bits, 0, 6, cfg);
  CHECK(static_cast<double>(audio.size()) / cfg.fs == doctest::Approx(0.58));
}

TEST_CASE("simultaneous FSK uplinks in disjoint bands both decode") {
  const PreambleConfig cfg;
  std::mt19937_64 rng(8);
  const std::size_t n = 6;
  Bits a(payload_bits(n)), b(payload_bits(n));
  for (auto& v : a) v = static_cast<std::uint8_t>(rng() & 1u);
  for (auto& v : b) v = static_cast<std::uint8_t>(rng() & 1u);
  auto mix = fsk_modulate(a, 1, n, cfg);
  const auto other = fsk_modulate(b, 4, n, cfg);
  for (std::size_t i = 0; i < mix.size(); ++i) mix[i] += 0.7 * other[i];
  CHECK(fsk_demodulate(mix, 1, n, cfg) == a);
  CHECK(fsk_demodulate(mix, 4, n, cfg) == b);
}
