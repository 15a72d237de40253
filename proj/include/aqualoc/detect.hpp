#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "aqualoc/fft.hpp"
#include "aqualoc/waveform.hpp"

namespace aqualoc::detect {

/// Minimum mean pairwise correlation of the sign-corrected preamble symbols.
inline constexpr double kDetectionThreshold = 0.35;
/// Channel taps averaged for the noise floor.
inline constexpr std::size_t kNoiseTailTaps = 100;

struct CorrelationOptions {
  double sigma_multiplier = 5.0;     // threshold = mean + k * std of |curve|
  std::size_t min_separation = 64;   // non-maximum suppression radius
  std::size_t max_candidates = 16;
};

struct CorrelationResult {
  std::vector<double> curve;  // normalized, one value per lag
  std::vector<std::size_t> candidates;  // sorted by |curve| descending
  double threshold = 0.0;
};

/// Normalized cross-correlation of `preamble` against every window of
/// `stream`. The global maximum is always reported as a candidate, so the
/// auto-correlation gate downstream makes the detection decision.
CorrelationResult cross_correlate(std::span<const double> stream,
                                  std::span<const double> preamble,
                                  const CorrelationOptions& options = {});

/// Mean pairwise normalized correlation of the PN-corrected, CP-stripped
/// symbol segments of a preamble starting at `candidate`. Range [-1, 1].
double auto_correlate(std::span<const double> stream, std::size_t candidate,
                      const waveform::PreambleConfig& config);

struct ChannelEstimate {
  std::vector<dsp::Complex> taps;                // time domain, max |tap| = 1
  std::vector<dsp::Complex> frequency_response;  // raw LS estimate per bin
  double noise_floor = 0.0;                      // mean |tap|^2 of the tail
  std::size_t mic_index = 0;
  std::size_t coarse_index = 0;

  std::vector<double> magnitudes() const;
};

/// Least-squares estimate averaged over the PN-signed symbols of the preamble
/// starting at `coarse_index`. Out-of-band bins are zeroed; the in-band
/// response is Hann-tapered before the inverse transform to keep sinc
/// sidelobes under the direct-path margin.
ChannelEstimate estimate_channel(std::span<const double> stream, std::size_t coarse_index,
                                 const waveform::PreambleConfig& config,
                                 std::size_t mic_index = 0);

/// Strict local maximum of |taps| over n +/- window (truncated at the edges);
/// among equal values the earliest index is the peak.
bool is_peak(std::span<const double> taps, std::size_t n, std::size_t window = 3);

struct DirectPathParams {
  double lambda = 0.2;
  double mic_distance_m = 0.16;
  double c = 1500.0;
  double fs = 44100.0;

  double max_offset_samples() const { return mic_distance_m * fs / c; }
};

struct DirectPath {
  std::size_t n = 0;  // tap index, microphone 1
  std::size_t m = 0;  // tap index, microphone 2
  double tau_los = 0.0;
};

/// Earliest admissible peak pair: minimizes (n + m) / 2 subject to both taps
/// exceeding their noise floor plus lambda, both being peaks, and
/// |n - m| <= d fs / c. Ties go to the smaller |n - m|, then smaller n.
/// Throws NoDirectPath when no pair is feasible.
DirectPath find_direct_path(const ChannelEstimate& h1, const ChannelEstimate& h2,
                            const DirectPathParams& params = {});

// ---------------------------------------------------------------------------
// Speaker/microphone buffer timing

struct BufferCalibration {
  std::int64_t offset_samples = 0;  // n1 - m1
  double alpha = 0.0;               // speaker clock skew
  double beta = 0.0;                // microphone clock skew
};

BufferCalibration calibrate_offset(std::int64_t speaker_index, std::int64_t mic_index);

/// Speaker index at which to write a reply detected at microphone index m2:
/// n2 = m2 + (n1 - m1) + fs * t_reply.
std::int64_t reply_index(std::int64_t m2, const BufferCalibration& cal, double t_reply,
                         double fs);

/// Reply-time error from sampling-rate skew:
/// -alpha * t_reply0 + elapsed (beta - alpha) / fs.
double drift_error(double alpha, double beta, double t_reply0, double elapsed_samples,
                   double fs);

// ---------------------------------------------------------------------------
// End-to-end receiver

struct PipelineOptions {
  CorrelationOptions correlation;
  double threshold = kDetectionThreshold;
  std::size_t max_checked_candidates = 5;
  /// Samples the channel-estimation window starts ahead of the correlation
  /// peak, so paths earlier than the strongest one keep positive tap indices.
  std::size_t backoff = 270;
  DirectPathParams direct;
};

struct Detection {
  std::size_t peak_index = 0;
  std::size_t coarse_index = 0;
  double score = 0.0;
};

std::optional<Detection> detect_preamble(std::span<const double> stream,
                                         const waveform::PreambleConfig& config,
                                         const PipelineOptions& options = {});

struct Ranging {
  Detection detection;
  ChannelEstimate h1;
  ChannelEstimate h2;
  DirectPath path;
  double arrival_index = 0.0;  // coarse_index + tau_los, in stream samples
};

/// Detects on microphone 1 and estimates both channels at the same coarse
/// index. Returns nullopt when no preamble passes the gate; throws
/// NoDirectPath when detection succeeds but no tap pair is admissible.
/// Pass the same stream twice for a single-microphone receiver.
std::optional<Ranging> range_dual_mic(std::span<const double> mic1, std::span<const double> mic2,
                                      const waveform::PreambleConfig& config,
                                      const PipelineOptions& options = {});

/// "tap,magnitude" rows.
std::string channel_csv(const ChannelEstimate& estimate);

}  // namespace aqualoc::detect
