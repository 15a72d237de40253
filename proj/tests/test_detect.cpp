#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "aqualoc/detect.hpp"
#include "aqualoc/error.hpp"
#include "aqualoc/physics.hpp"
#include "aqualoc/waveform.hpp"

using namespace aqualoc;
using namespace aqualoc::detect;
using waveform::PreambleConfig;

namespace {

std::vector<double> embed(const std::vector<double>& signal, std::size_t offset, std::size_t total) {
  std::vector<double> stream(total, 0.0);
  for (std::size_t i = 0; i < signal.size() && offset + i < total; ++i) stream[offset + i] = signal[i];
  return stream;
}

double mean_power(std::span<const double> x) {
  double p = 0.0;
  for (double v : x) p += v * v;
  return p / static_cast<double>(x.size());
}

void add_noise(std::vector<double>& x, double sigma, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  for (double& v : x) v += noise(rng);
}

ChannelEstimate constructed(const std::vector<std::pair<std::size_t, double>>& peaks, double floor = 0.0) {
  ChannelEstimate est;
  est.taps.assign(1920, dsp::Complex{});
  for (auto [i, a] : peaks) est.taps[i] = a;
  est.noise_floor = floor;
  return est;
}

}  // namespace

TEST_CASE("cross-correlation locates a clean preamble") {
  const PreambleConfig cfg;
  const auto pre = waveform::generate_preamble(cfg);
  const auto stream = embed(pre, 5000, 20000);
  const auto result = cross_correlate(stream, pre);
  REQUIRE(!result.candidates.empty());
  CHECK(result.candidates.front() == 5000);
  CHECK(result.curve[5000] == doctest::Approx(1.0));
}

TEST_CASE("cross-correlation keeps the true offset in the top five at -5 dB") {
  const PreambleConfig cfg;
  const auto pre = waveform::generate_preamble(cfg);
  const double sigma = std::sqrt(mean_power(pre) * std::pow(10.0, 0.5));
  int hits = 0;
  for (int trial = 0; trial < 500; ++trial) {
    std::mt19937_64 rng(trial);
    const std::size_t offset = 1000 + rng() % 4000;
    auto stream = embed(pre, offset, 16000);
    add_noise(stream, sigma, 10000 + trial);
    const auto result = cross_correlate(stream, pre);
    const auto top = std::min<std::size_t>(5, result.candidates.size());
    if (std::find(result.candidates.begin(), result.candidates.begin() + static_cast<long>(top), offset) !=
        result.candidates.begin() + static_cast<long>(top)) {
      ++hits;
    }
  }
  CHECK(hits >= 475);
}

TEST_CASE("auto-correlation of a clean preamble") {
  const PreambleConfig cfg;
  const auto pre = waveform::generate_preamble(cfg);
  const auto stream = embed(pre, 300, 12000);
  CHECK(auto_correlate(stream, 300, cfg) >= 0.99);
  CHECK_THROWS_AS(auto_correlate(stream, 5000, cfg), DomainError);
}

TEST_CASE("auto-correlation rejects white noise") {
  const PreambleConfig cfg;
  int false_alarms = 0;
  for (int seed = 0; seed < 1000; ++seed) {
    std::vector<double> noise(cfg.preamble_len(), 0.0);
    add_noise(noise, 1.0, static_cast<std::uint64_t>(seed));
    if (auto_correlate(noise, 0, cfg) > kDetectionThreshold) ++false_alarms;
  }
  CHECK(false_alarms <= 10);
}

TEST_CASE("auto-correlation is invariant to a common multipath channel") {
  const PreambleConfig cfg;
  const auto pre = waveform::generate_preamble(cfg);
  const auto channel = physics::synth_channel(3, {.num_taps = 5, .decay_rate = 1.0, .direct_attenuation = 0.5});
  const auto rx = physics::propagate(pre, 0.0, channel, cfg.fs, 1500.0, 0);
  CHECK(auto_correlate(rx, 0, cfg) >= 0.99);

  // Same channel at 0 dB SNR still passes the gate.
  auto noisy = rx;
  add_noise(noisy, std::sqrt(mean_power(std::span<const double>(rx).first(cfg.preamble_len()))), 77);
  CHECK(auto_correlate(noisy, 0, cfg) > kDetectionThreshold);
}

TEST_CASE("LS channel estimate of an identity channel") {
  const PreambleConfig cfg;
  const auto pre = waveform::generate_preamble(cfg);
  const auto stream = embed(pre, 0, pre.size() + 100);
  const auto est = estimate_channel(stream, 0, cfg);
  for (std::size_t k = cfg.first_bin(); k <= cfg.last_bin(); ++k) {
    CHECK(std::abs(est.frequency_response[k] - dsp::Complex(1.0, 0.0)) < 1e-9);
  }
  CHECK(std::abs(est.frequency_response[10]) == 0.0);
  const auto mags = est.magnitudes();
  CHECK(std::max_element(mags.begin(), mags.end()) - mags.begin() == 0);
  CHECK(mags[0] == doctest::Approx(1.0));

  // With the window started ahead of the arrival the tail holds only sidelobes.
  const auto early = estimate_channel(embed(pre, 300, pre.size() + 400), 30, cfg);
  CHECK(early.noise_floor < 1e-4);
}

TEST_CASE("LS channel estimate resolves two taps") {
  const PreambleConfig cfg;
  const auto pre = waveform::generate_preamble(cfg);
  physics::ChannelProfile two;
  two.taps = {{0, 1.0}, {50, 0.5}};
  const auto rx = physics::propagate(pre, 0.0, two, cfg.fs, 1500.0, 0);
  const auto est = estimate_channel(rx, 0, cfg);
  const auto mags = est.magnitudes();
  CHECK(is_peak(mags, 0));
  CHECK(is_peak(mags, 50));
  CHECK(mags[0] / mags[50] == doctest::Approx(2.0).epsilon(0.05));

  // Noiseless LS residual: H(k) X(k) PN_1 reproduces the first received symbol.
  const auto ref = waveform::reference_spectrum(cfg);
  const std::vector<double> first(rx.begin() + static_cast<long>(cfg.cp_len),
                                  rx.begin() + static_cast<long>(cfg.cp_len + cfg.symbol_len));
  const auto y = dsp::fft(std::span<const double>(first));
  for (std::size_t k = cfg.first_bin(); k <= cfg.last_bin(); ++k) {
    CHECK(std::abs(est.frequency_response[k] * ref[k] - y[k]) < 1e-8 * (1.0 + std::abs(y[k])));
  }
}

TEST_CASE("coarse timing error shifts the channel estimate") {
  const PreambleConfig cfg;
  const auto pre = waveform::generate_preamble(cfg);
  const auto stream = embed(pre, 400, pre.size() + 800);
  const auto est = estimate_channel(stream, 390, cfg);
  const auto mags = est.magnitudes();
  CHECK(std::max_element(mags.begin(), mags.end()) - mags.begin() == 10);
  CHECK_THROWS_AS(estimate_channel(stream, 1000, cfg), DomainError);
}

TEST_CASE("peak predicate") {
  std::vector<double> delta(20, 0.0);
  delta[0] = 1.0;
  CHECK(is_peak(delta, 0));
  CHECK_FALSE(is_peak(delta, 1));

  const std::vector<double> flat(20, 0.5);
  for (std::size_t i = 0; i < flat.size(); ++i) CHECK_FALSE(is_peak(flat, i));

  std::vector<double> twin(20, 0.1);
  twin[8] = twin[9] = 0.9;
  CHECK(is_peak(twin, 8));
  CHECK_FALSE(is_peak(twin, 9));

  std::vector<double> edge(10, 0.0);
  edge[9] = 1.0;
  CHECK(is_peak(edge, 9));
}

TEST_CASE("direct path from constructed dual-microphone channels") {
  const DirectPathParams params;  // 0.16 m, 1500 m/s, 44.1 kHz -> 4.704 samples
  CHECK(params.max_offset_samples() == doctest::Approx(4.704));

  const auto path = find_direct_path(constructed({{100, 0.6}, {300, 1.0}}),
                                     constructed({{103, 0.5}, {301, 1.0}}), params);
  CHECK(path.n == 100);
  CHECK(path.m == 103);
  CHECK(path.tau_los == 101.5);

  const auto skipped = find_direct_path(constructed({{90, 0.6}, {200, 1.0}}),
                                        constructed({{120, 0.7}, {202, 1.0}}), params);
  CHECK(skipped.n == 200);
  CHECK(skipped.m == 202);
  CHECK(skipped.tau_los == 201.0);

  // Below noise floor + lambda: a peak at 0.3 over a floor of 0.15 is rejected.
  const auto floored = find_direct_path(constructed({{50, 0.3}, {70, 1.0}}, 0.15),
                                        constructed({{50, 0.3}, {71, 1.0}}, 0.15), params);
  CHECK(floored.n == 70);

  CHECK_THROWS_AS(find_direct_path(constructed({{100, 0.1}}), constructed({{100, 0.1}}), params),
                  NoDirectPath);
}

TEST_CASE("direct path always honors the microphone spacing constraint") {
  const DirectPathParams params;
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> amp(0.0, 1.0);
  int found = 0;
  for (int trial = 0; trial < 500; ++trial) {
    ChannelEstimate a, b;
    a.taps.resize(1920);
    b.taps.resize(1920);
    for (std::size_t i = 0; i < 1920; ++i) {
      a.taps[i] = amp(rng) * amp(rng) * amp(rng);
      b.taps[i] = amp(rng) * amp(rng) * amp(rng);
    }
    a.noise_floor = 0.05;
    b.noise_floor = 0.05;
    try {
      const auto path = find_direct_path(a, b, params);
      ++found;
      CHECK(std::abs(static_cast<double>(path.n) - static_cast<double>(path.m)) <= params.max_offset_samples());
      CHECK(path.tau_los == 0.5 * static_cast<double>(path.n + path.m));
    } catch (const NoDirectPath&) {
    }
  }
  CHECK(found > 100);
}

TEST_CASE("buffer calibration arithmetic") {
  CHECK(calibrate_offset(1000, 400).offset_samples == 600);
  CHECK(calibrate_offset(777, 777).offset_samples == 0);
  CHECK(calibrate_offset(1000, 400).offset_samples == calibrate_offset(1000, 400).offset_samples);

  CHECK(reply_index(10000, calibrate_offset(1000, 400), 1.0, 44100.0) == 54700);
  CHECK(reply_index(1234, calibrate_offset(0, 0), 0.0, 44100.0) == 1234);
  CHECK(reply_index(0, BufferCalibration{-300}, 0.5, 44100.0) == 21750);
}

TEST_CASE("sampling-rate drift error") {
  CHECK(drift_error(50e-6, 50e-6, 1.0, 123456.0, 44100.0) == doctest::Approx(-50e-6));
  CHECK(drift_error(0.0, 0.0, 1.0, 99999.0, 44100.0) == 0.0);
  CHECK(drift_error(0.0, 10e-6, 1.0, 44100.0 * 60.0, 44100.0) == doctest::Approx(600e-6));
  // Linear in each argument.
  const double base = drift_error(20e-6, 35e-6, 0.8, 5000.0, 44100.0);
  CHECK(drift_error(40e-6, 70e-6, 0.8, 5000.0, 44100.0) == doctest::Approx(2.0 * base));
  const double t_part = drift_error(20e-6, 20e-6, 0.8, 0.0, 44100.0);
  CHECK(drift_error(20e-6, 20e-6, 1.6, 0.0, 44100.0) == doctest::Approx(2.0 * t_part));
  const double e_part = drift_error(0.0, 5e-6, 0.0, 1000.0, 44100.0);
  CHECK(drift_error(0.0, 5e-6, 0.0, 3000.0, 44100.0) == doctest::Approx(3.0 * e_part));
}

TEST_CASE("end-to-end noiseless single-tap ranging recovers the delay") {
  const PreambleConfig cfg;
  const auto pre = waveform::generate_preamble(cfg);
  for (double distance : {3.0, 15.0, 27.5}) {
    const std::size_t pad = 2000;
    const auto rx = physics::propagate(pre, distance, physics::ChannelProfile{}, cfg.fs, 1500.0, 0);
    const auto stream = embed(rx, pad, pad + rx.size() + 3000);
    const auto ranging = range_dual_mic(stream, stream, cfg);
    REQUIRE(ranging.has_value());
    const double truth = static_cast<double>(pad) + std::round(distance * cfg.fs / 1500.0);
    CHECK(std::abs(ranging->arrival_index - truth) <= 1.0);
    CHECK(ranging->detection.score >= 0.99);
  }
}

TEST_CASE("end-to-end ranging with an attenuated direct path") {
  const PreambleConfig cfg;
  const auto pre = waveform::generate_preamble(cfg);
  physics::ChannelProfile weak;
  weak.taps = {{0, 0.45}, {60, 1.0}, {140, -0.6}};
  const auto rx1 = physics::propagate(pre, 10.0, weak, cfg.fs, 1500.0, 0);
  const auto rx2 = physics::propagate(pre, 10.05, weak, cfg.fs, 1500.0, 0);
  const auto s1 = embed(rx1, 1500, rx1.size() + 4000);
  const auto s2 = embed(rx2, 1500, rx1.size() + 4000);
  const auto ranging = range_dual_mic(s1, s2, cfg);
  REQUIRE(ranging.has_value());
  const double truth = 1500.0 + std::round(10.0 * cfg.fs / 1500.0);
  CHECK(std::abs(ranging->arrival_index - truth) <= 2.0);
  CHECK(std::abs(static_cast<double>(ranging->path.n) - static_cast<double>(ranging->path.m)) <= 4.704);
}

TEST_CASE("pure noise yields candidates but no detection") {
  const PreambleConfig cfg;
  const auto pre = waveform::generate_preamble(cfg);
  for (int seed = 0; seed < 20; ++seed) {
    std::vector<double> noise(30000, 0.0);
    add_noise(noise, 0.3, 500 + static_cast<std::uint64_t>(seed));
    CHECK_FALSE(cross_correlate(noise, pre).candidates.empty());
    CHECK_FALSE(detect_preamble(noise, cfg).has_value());
  }
}
