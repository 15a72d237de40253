#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace aqualoc::physics {

inline constexpr double kDefaultSoundSpeed = 1500.0;  // m/s
inline constexpr double kWaterDensity = 997.0;        // kg/m^3
inline constexpr double kGravity = 9.81;              // m/s^2
inline constexpr double kSurfacePressure = 101325.0;  // Pa

struct WaterParams {
  double temperature_c = 10.0;
  double salinity_ppt = 35.0;
  double depth_m = 0.0;
};

/// Throws DomainError unless T in [0, 35] C, S in [0, 45] ppt, D in [0, 100] m.
void validate(const WaterParams& params);

/// Wilson's polynomial for the speed of sound in water, m/s.
double sound_speed(const WaterParams& params);

/// Hydrostatic depth h = (P - P0) / (rho g). Throws DomainError if P < P0.
double pressure_to_depth(double pressure_pa, double water_density = kWaterDensity,
                         double g = kGravity, double p0 = kSurfacePressure);

struct Tap {
  std::size_t delay_samples = 0;
  double amplitude = 1.0;
};

/// Tapped-delay-line multipath channel. Tap delays are added to the time of
/// flight; no tap may precede the direct tap.
struct ChannelProfile {
  std::vector<Tap> taps{Tap{}};
  double noise_std = 0.0;
  std::size_t direct_tap_index = 0;
};

/// Throws DomainError when taps are empty, unsorted, or a tap precedes the
/// direct tap.
void validate(const ChannelProfile& profile);

/// Delays `signal` by round(distance * fs / c) + direct tap delay, convolves
/// with the taps and adds seeded white Gaussian noise of `profile.noise_std`.
/// The output spans the whole delayed response.
std::vector<double> propagate(std::span<const double> signal, double distance_m,
                              const ChannelProfile& profile, double fs, double c,
                              std::uint64_t seed);

struct ChannelSynthConfig {
  std::size_t num_taps = 5;
  double decay_rate = 1.0;          // amplitude e-folds over max_delay_samples
  double direct_attenuation = 1.0;  // direct tap amplitude
  std::size_t max_delay_samples = 256;
  double noise_std = 0.0;
};

/// Random reverberant channel: direct tap at delay 0 with amplitude
/// `direct_attenuation`, later taps at sorted random delays with
/// exp(-decay_rate * delay / max_delay) magnitude and random sign.
ChannelProfile synth_channel(std::uint64_t seed, const ChannelSynthConfig& config);

}  // namespace aqualoc::physics
