#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "aqualoc/error.hpp"
#include "aqualoc/physics.hpp"

using namespace aqualoc;
using namespace aqualoc::physics;

TEST_CASE("sound speed matches hand-evaluated polynomial") {
  CHECK(sound_speed({0.0, 35.0, 0.0}) == doctest::Approx(1449.0).epsilon(1e-12));
  // 1449 + 46 - 5.5 + 0.3
  CHECK(sound_speed({10.0, 35.0, 0.0}) == doctest::Approx(1489.8).epsilon(1e-12));
  CHECK(sound_speed({10.0, 35.0, 40.0}) == doctest::Approx(1490.48).epsilon(1e-12));
}

TEST_CASE("sound speed rejects out-of-range water") {
  CHECK_THROWS_AS(sound_speed({-1.0, 35.0, 0.0}), DomainError);
  CHECK_THROWS_AS(sound_speed({36.0, 35.0, 0.0}), DomainError);
  CHECK_THROWS_AS(sound_speed({10.0, 46.0, 0.0}), DomainError);
  CHECK_THROWS_AS(sound_speed({10.0, 35.0, 101.0}), DomainError);
  CHECK_THROWS_AS(sound_speed({std::nan(""), 35.0, 0.0}), DomainError);
}

TEST_CASE("sound speed stays within [1400, 1600] over the valid box") {
  for (double t = 0.0; t <= 35.0; t += 0.5) {
    for (double s = 0.0; s <= 45.0; s += 5.0) {
      for (double d = 0.0; d <= 100.0; d += 25.0) {
        const double c = sound_speed({t, s, d});
        CHECK(c >= 1400.0);
        CHECK(c <= 1600.0);
      }
    }
  }
}

TEST_CASE("pressure to depth") {
  CHECK(pressure_to_depth(101325.0) == 0.0);
  // rho g = 997 * 9.81 = 9780.57 Pa per meter
  CHECK(pressure_to_depth(111105.57) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(pressure_to_depth(120886.14) == doctest::Approx(2.0).epsilon(1e-12));
  CHECK_THROWS_AS(pressure_to_depth(100000.0), DomainError);

  double previous = -1.0;
  for (double p = 101325.0; p < 600000.0; p += 1234.5) {
    const double h = pressure_to_depth(p);
    CHECK(h > previous);
    previous = h;
  }
}

TEST_CASE("propagate through an identity channel") {
  const std::vector<double> impulse{1.0};
  const auto out = propagate(impulse, 0.0, ChannelProfile{}, 44100.0, 1500.0, 7);
  REQUIRE(out.size() == 1);
  CHECK(out[0] == 1.0);
}

TEST_CASE("propagate delays by the time of flight") {
  const std::vector<double> impulse{1.0};
  const auto out = propagate(impulse, 15.0, ChannelProfile{}, 44100.0, 1500.0, 7);
  const auto peak = std::max_element(out.begin(), out.end()) - out.begin();
  CHECK(peak == 441);  // 15 / 1500 * 44100

  ChannelProfile late;
  late.taps = {Tap{12, 1.0}};
  const auto shifted = propagate(impulse, 15.0, late, 44100.0, 1500.0, 7);
  CHECK(std::max_element(shifted.begin(), shifted.end()) - shifted.begin() == 441 + 12);
}

TEST_CASE("propagate is deterministic per seed and linear without noise") {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> dist;
  std::vector<double> a(300), b(300), sum(300);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = dist(rng);
    b[i] = dist(rng);
    sum[i] = 2.0 * a[i] - 0.5 * b[i];
  }
  ChannelProfile noisy = synth_channel(11, {});
  noisy.noise_std = 0.3;
  CHECK(propagate(a, 12.3, noisy, 44100.0, 1500.0, 99) ==
        propagate(a, 12.3, noisy, 44100.0, 1500.0, 99));
  CHECK(propagate(a, 12.3, noisy, 44100.0, 1500.0, 99) !=
        propagate(a, 12.3, noisy, 44100.0, 1500.0, 100));

  const ChannelProfile clean = synth_channel(11, {});
  const auto ya = propagate(a, 12.3, clean, 44100.0, 1500.0, 1);
  const auto yb = propagate(b, 12.3, clean, 44100.0, 1500.0, 1);
  const auto ys = propagate(sum, 12.3, clean, 44100.0, 1500.0, 1);
  for (std::size_t i = 0; i < ys.size(); ++i) {
    CHECK(ys[i] == doctest::Approx(2.0 * ya[i] - 0.5 * yb[i]).epsilon(1e-9));
  }
}

TEST_CASE("propagate rejects bad input") {
  const std::vector<double> empty;
  CHECK_THROWS_AS(propagate(empty, 1.0, {}, 44100.0, 1500.0, 0), DomainError);
  const std::vector<double> one{1.0};
  CHECK_THROWS_AS(propagate(one, -1.0, {}, 44100.0, 1500.0, 0), DomainError);
  ChannelProfile early;
  early.taps = {Tap{0, 0.4}, Tap{5, 1.0}};
  early.direct_tap_index = 1;
  CHECK_THROWS_AS(propagate(one, 1.0, early, 44100.0, 1500.0, 0), DomainError);
}

TEST_CASE("synthetic channels") {
  const auto single = synth_channel(5, {.num_taps = 1, .decay_rate = 1.0, .direct_attenuation = 1.0});
  REQUIRE(single.taps.size() == 1);
  CHECK(single.taps[0].delay_samples == 0);
  CHECK(single.taps[0].amplitude == 1.0);

  const ChannelSynthConfig cfg{.num_taps = 5, .decay_rate = 1.0, .direct_attenuation = 0.3};
  const auto a = synth_channel(42, cfg);
  const auto b = synth_channel(42, cfg);
  REQUIRE(a.taps.size() == 5);
  for (std::size_t i = 0; i < a.taps.size(); ++i) {
    CHECK(a.taps[i].delay_samples == b.taps[i].delay_samples);
    CHECK(a.taps[i].amplitude == b.taps[i].amplitude);
  }
  CHECK_NOTHROW(validate(a));
  const auto strongest = std::max_element(a.taps.begin(), a.taps.end(), [](const Tap& x, const Tap& y) {
    return std::abs(x.amplitude) < std::abs(y.amplitude);
  });
  CHECK(strongest - a.taps.begin() != static_cast<long>(a.direct_tap_index));

  CHECK_THROWS_AS(synth_channel(1, {.num_taps = 0}), DomainError);
}
