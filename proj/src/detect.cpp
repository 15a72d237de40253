#include "aqualoc/detect.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <fmt/format.h>

#include "aqualoc/error.hpp"

namespace aqualoc::detect {
namespace {

double dot(std::span<const double> a, std::span<const double> b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

std::span<const double> symbol_segment(std::span<const double> stream, std::size_t start,
                                       std::size_t index,
                                       const waveform::PreambleConfig& config) {
  return stream.subspan(start + index * config.block_len() + config.cp_len, config.symbol_len);
}

}  // namespace

CorrelationResult cross_correlate(std::span<const double> stream,
                                  std::span<const double> preamble,
                                  const CorrelationOptions& options) {
  if (preamble.empty() || stream.size() < preamble.size()) {
    throw DomainError("stream must be at least as long as the preamble");
  }
  const std::size_t lags = stream.size() - preamble.size() + 1;
  const std::size_t n = stream.size() + preamble.size();

  std::vector<dsp::Complex> s(n), p(n);
  std::copy(stream.begin(), stream.end(), s.begin());
  std::copy(preamble.begin(), preamble.end(), p.begin());
  auto fs = dsp::fft(s);
  const auto fp = dsp::fft(p);
  for (std::size_t k = 0; k < n; ++k) fs[k] *= std::conj(fp[k]);
  const auto raw = dsp::ifft(fs);

  std::vector<double> energy(stream.size() + 1, 0.0);
  for (std::size_t i = 0; i < stream.size(); ++i) energy[i + 1] = energy[i] + stream[i] * stream[i];
  const double preamble_norm = std::sqrt(dot(preamble, preamble));

  CorrelationResult result;
  result.curve.resize(lags);
  for (std::size_t k = 0; k < lags; ++k) {
    const double window = energy[k + preamble.size()] - energy[k];
    const double denom = preamble_norm * std::sqrt(std::max(window, 0.0));
    result.curve[k] = denom > 1e-12 ? raw[k].real() / denom : 0.0;
  }

  double mean = 0.0;
  for (double v : result.curve) mean += std::abs(v);
  mean /= static_cast<double>(lags);
  double var = 0.0;
  for (double v : result.curve) var += (std::abs(v) - mean) * (std::abs(v) - mean);
  const double sigma = std::sqrt(var / static_cast<double>(lags));
  result.threshold = mean + options.sigma_multiplier * sigma;

  std::vector<std::size_t> above;
  std::size_t best = 0;
  for (std::size_t k = 0; k < lags; ++k) {
    if (std::abs(result.curve[k]) > std::abs(result.curve[best])) best = k;
    if (std::abs(result.curve[k]) > result.threshold) above.push_back(k);
  }
  if (above.empty()) above.push_back(best);
  std::stable_sort(above.begin(), above.end(), [&](std::size_t a, std::size_t b) {
    return std::abs(result.curve[a]) > std::abs(result.curve[b]);
  });
  for (std::size_t k : above) {
    const bool suppressed = std::any_of(
        result.candidates.begin(), result.candidates.end(), [&](std::size_t kept) {
          return (k > kept ? k - kept : kept - k) <= options.min_separation;
        });
    if (suppressed) continue;
    result.candidates.push_back(k);
    if (result.candidates.size() >= options.max_candidates) break;
  }
  return result;
}

double auto_correlate(std::span<const double> stream, std::size_t candidate,
                      const waveform::PreambleConfig& config) {
  if (candidate + config.preamble_len() > stream.size()) {
    throw DomainError("candidate leaves no room for the full preamble");
  }
  const std::size_t count = config.num_symbols();
  std::vector<std::vector<double>> segments;
  segments.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    auto seg = symbol_segment(stream, candidate, i, config);
    std::vector<double> corrected(seg.begin(), seg.end());
    for (double& v : corrected) v *= config.pn_signs[i];
    segments.push_back(std::move(corrected));
  }
  if (count < 2) return 1.0;
  double total = 0.0;
  std::size_t pairs = 0;
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t j = i + 1; j < count; ++j) {
      const double denom = std::sqrt(dot(segments[i], segments[i]) * dot(segments[j], segments[j]));
      total += denom > 0.0 ? dot(segments[i], segments[j]) / denom : 0.0;
      ++pairs;
    }
  }
  return total / static_cast<double>(pairs);
}

std::vector<double> ChannelEstimate::magnitudes() const {
  std::vector<double> out(taps.size());
  std::transform(taps.begin(), taps.end(), out.begin(), [](dsp::Complex z) { return std::abs(z); });
  return out;
}

ChannelEstimate estimate_channel(std::span<const double> stream, std::size_t coarse_index,
                                 const waveform::PreambleConfig& config,
                                 std::size_t mic_index) {
  if (coarse_index + config.preamble_len() > stream.size()) {
    throw DomainError(fmt::format("coarse index {} leaves no room for the preamble in {} samples",
                                  coarse_index, stream.size()));
  }
  const auto reference = waveform::reference_spectrum(config);
  const std::size_t len = config.symbol_len;
  const std::size_t first = config.first_bin();
  const std::size_t last = config.last_bin();

  ChannelEstimate est;
  est.mic_index = mic_index;
  est.coarse_index = coarse_index;
  est.frequency_response.assign(len, dsp::Complex{});
  const double count = static_cast<double>(config.num_symbols());
  for (std::size_t i = 0; i < config.num_symbols(); ++i) {
    const auto spectrum = dsp::fft(symbol_segment(stream, coarse_index, i, config));
    const double sign = config.pn_signs[i];
    for (std::size_t k = first; k <= last; ++k) {
      if (std::abs(reference[k]) < 1e-12) continue;
      est.frequency_response[k] += spectrum[k] / (sign * reference[k]) / count;
    }
  }

  std::vector<dsp::Complex> tapered(len);
  const double band = static_cast<double>(last - first + 1);
  for (std::size_t k = first; k <= last; ++k) {
    const double s = std::sin(std::numbers::pi * (static_cast<double>(k - first) + 0.5) / band);
    tapered[k] = est.frequency_response[k] * s * s;
  }
  est.taps = dsp::ifft(tapered);

  double peak = 0.0;
  for (const auto& z : est.taps) peak = std::max(peak, std::abs(z));
  if (peak > 0.0) {
    for (auto& z : est.taps) z /= peak;
  }
  const std::size_t tail = std::min(kNoiseTailTaps, len);
  double power = 0.0;
  for (std::size_t i = len - tail; i < len; ++i) power += std::norm(est.taps[i]);
  est.noise_floor = power / static_cast<double>(tail);
  return est;
}

bool is_peak(std::span<const double> taps, std::size_t n, std::size_t window) {
  if (n >= taps.size()) return false;
  const double value = std::abs(taps[n]);
  const std::size_t lo = n >= window ? n - window : 0;
  const std::size_t hi = std::min(taps.size() - 1, n + window);
  bool exceeds_some = false;
  for (std::size_t k = lo; k <= hi; ++k) {
    if (k == n) continue;
    const double other = std::abs(taps[k]);
    if (k < n && !(value > other)) return false;
    if (k > n && value < other) return false;
    if (value > other) exceeds_some = true;
  }
  return exceeds_some;
}

DirectPath find_direct_path(const ChannelEstimate& h1, const ChannelEstimate& h2,
                            const DirectPathParams& params) {
  const auto mag1 = h1.magnitudes();
  const auto mag2 = h2.magnitudes();
  auto admissible = [&](const std::vector<double>& mag, double floor) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < mag.size(); ++i) {
      if (mag[i] > floor + params.lambda && is_peak(mag, i)) out.push_back(i);
    }
    return out;
  };
  const auto first = admissible(mag1, h1.noise_floor);
  const auto second = admissible(mag2, h2.noise_floor);
  const double max_offset = params.max_offset_samples();

  std::optional<DirectPath> best;
  auto better = [](const DirectPath& a, const DirectPath& b) {
    const auto sum_a = a.n + a.m, sum_b = b.n + b.m;
    if (sum_a != sum_b) return sum_a < sum_b;
    const auto gap_a = a.n > a.m ? a.n - a.m : a.m - a.n;
    const auto gap_b = b.n > b.m ? b.n - b.m : b.m - b.n;
    if (gap_a != gap_b) return gap_a < gap_b;
    return a.n < b.n;
  };
  for (std::size_t n : first) {
    for (std::size_t m : second) {
      const double gap = std::abs(static_cast<double>(n) - static_cast<double>(m));
      if (gap > max_offset) continue;
      DirectPath cand{n, m, 0.5 * static_cast<double>(n + m)};
      if (!best || better(cand, *best)) best = cand;
    }
  }
  if (!best) {
    throw NoDirectPath(fmt::format("no admissible peak pair ({} / {} candidate taps)",
                                   first.size(), second.size()));
  }
  return *best;
}

BufferCalibration calibrate_offset(std::int64_t speaker_index, std::int64_t mic_index) {
  return BufferCalibration{speaker_index - mic_index, 0.0, 0.0};
}

std::int64_t reply_index(std::int64_t m2, const BufferCalibration& cal, double t_reply,
                         double fs) {
  return m2 + cal.offset_samples + std::llround(fs * t_reply);
}

double drift_error(double alpha, double beta, double t_reply0, double elapsed_samples,
                   double fs) {
  return -alpha * t_reply0 + elapsed_samples * (beta - alpha) / fs;
}

std::optional<Detection> detect_preamble(std::span<const double> stream,
                                         const waveform::PreambleConfig& config,
                                         const PipelineOptions& options) {
  const auto preamble = waveform::generate_preamble(config);
  if (stream.size() < preamble.size()) return std::nullopt;
  const auto corr = cross_correlate(stream, preamble, options.correlation);
  std::size_t checked = 0;
  for (std::size_t cand : corr.candidates) {
    if (checked++ >= options.max_checked_candidates) break;
    if (cand + config.preamble_len() > stream.size()) continue;
    const double score = auto_correlate(stream, cand, config);
    if (score > options.threshold) {
      const std::size_t coarse = cand >= options.backoff ? cand - options.backoff : 0;
      return Detection{cand, coarse, score};
    }
  }
  return std::nullopt;
}

std::optional<Ranging> range_dual_mic(std::span<const double> mic1, std::span<const double> mic2,
                                      const waveform::PreambleConfig& config,
                                      const PipelineOptions& options) {
  const auto detection = detect_preamble(mic1, config, options);
  if (!detection) return std::nullopt;
  Ranging r;
  r.detection = *detection;
  r.h1 = estimate_channel(mic1, detection->coarse_index, config, 0);
  r.h2 = estimate_channel(mic2, detection->coarse_index, config, 1);
  r.path = find_direct_path(r.h1, r.h2, options.direct);
  r.arrival_index = static_cast<double>(detection->coarse_index) + r.path.tau_los;
  return r;
}

std::string channel_csv(const ChannelEstimate& estimate) {
  std::string out = "tap,magnitude\n";
  const auto mags = estimate.magnitudes();
  for (std::size_t i = 0; i < mags.size(); ++i) out += fmt::format("{},{:.6f}\n", i, mags[i]);
  return out;
}

}  // namespace aqualoc::detect
