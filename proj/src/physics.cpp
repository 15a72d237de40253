#include "aqualoc/physics.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "aqualoc/error.hpp"

namespace aqualoc::physics {

void validate(const WaterParams& params) {
  auto check = [](double value, double lo, double hi, const char* name) {
    if (!(value >= lo && value <= hi)) {
      throw DomainError(fmt::format("{} = {} outside [{}, {}]", name, value, lo, hi));
    }
  };
  check(params.temperature_c, 0.0, 35.0, "temperature_c");
  check(params.salinity_ppt, 0.0, 45.0, "salinity_ppt");
  check(params.depth_m, 0.0, 100.0, "depth_m");
}

double sound_speed(const WaterParams& params) {
  validate(params);
  const double t = params.temperature_c;
  return 1449.0 + 4.6 * t - 0.055 * t * t + 0.0003 * t * t * t +
         1.39 * (params.salinity_ppt - 35.0) + 0.017 * params.depth_m;
}

double pressure_to_depth(double pressure_pa, double water_density, double g, double p0) {
  if (!(water_density > 0.0) || !(g > 0.0)) {
    throw DomainError("water density and gravity must be positive");
  }
  if (!(pressure_pa >= p0)) {
    throw DomainError(fmt::format("pressure {} Pa is below surface pressure {} Pa",
                                  pressure_pa, p0));
  }
  return (pressure_pa - p0) / (water_density * g);
}

void validate(const ChannelProfile& profile) {
  if (profile.taps.empty()) throw DomainError("channel profile has no taps");
  if (profile.direct_tap_index >= profile.taps.size()) {
    throw DomainError("direct_tap_index out of range");
  }
  if (!(profile.noise_std >= 0.0)) throw DomainError("noise_std must be >= 0");
  const bool sorted = std::is_sorted(
      profile.taps.begin(), profile.taps.end(),
      [](const Tap& a, const Tap& b) { return a.delay_samples < b.delay_samples; });
  if (!sorted) throw DomainError("channel taps must be sorted by delay");
  const auto direct_delay = profile.taps[profile.direct_tap_index].delay_samples;
  if (profile.taps.front().delay_samples < direct_delay) {
    throw DomainError("channel tap precedes the direct path");
  }
}

std::vector<double> propagate(std::span<const double> signal, double distance_m,
                              const ChannelProfile& profile, double fs, double c,
                              std::uint64_t seed) {
  if (signal.empty()) throw DomainError("cannot propagate an empty signal");
  if (!(distance_m >= 0.0) || !(fs > 0.0) || !(c > 0.0)) {
    throw DomainError("propagate requires distance >= 0, fs > 0, c > 0");
  }
  validate(profile);

  const auto flight = static_cast<std::size_t>(std::llround(distance_m * fs / c));
  const std::size_t last_delay = profile.taps.back().delay_samples;
  std::vector<double> out(signal.size() + flight + last_delay, 0.0);

  for (const Tap& tap : profile.taps) {
    const std::size_t shift = flight + tap.delay_samples;
    for (std::size_t n = 0; n < signal.size(); ++n) {
      out[n + shift] += tap.amplitude * signal[n];
    }
  }

  if (profile.noise_std > 0.0) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, profile.noise_std);
    for (double& x : out) x += noise(rng);
  }
  return out;
}

ChannelProfile synth_channel(std::uint64_t seed, const ChannelSynthConfig& config) {
  if (config.num_taps == 0) throw DomainError("num_taps must be >= 1");
  if (config.num_taps - 1 > config.max_delay_samples) {
    throw DomainError("more reflections than distinct delays available");
  }
  std::mt19937_64 rng(seed);

  ChannelProfile profile;
  profile.noise_std = config.noise_std;
  profile.direct_tap_index = 0;
  profile.taps.assign(1, Tap{0, config.direct_attenuation});

  std::vector<std::size_t> delays(config.max_delay_samples);
  for (std::size_t i = 0; i < delays.size(); ++i) delays[i] = i + 1;
  std::shuffle(delays.begin(), delays.end(), rng);
  delays.resize(config.num_taps - 1);
  std::sort(delays.begin(), delays.end());

  std::bernoulli_distribution flip(0.5);
  const double span = static_cast<double>(std::max<std::size_t>(config.max_delay_samples, 1));
  for (std::size_t d : delays) {
    const double magnitude = std::exp(-config.decay_rate * static_cast<double>(d) / span);
    profile.taps.push_back(Tap{d, flip(rng) ? -magnitude : magnitude});
  }
  return profile;
}

}  // namespace aqualoc::physics
