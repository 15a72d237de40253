#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "aqualoc/physics.hpp"
#include "aqualoc/topology.hpp"

namespace aqualoc::protocol {

/// TDM timing in seconds.
struct SlotConfig {
  double delta0 = 0.600;
  double delta1 = 0.320;
  double t_packet = 0.278;
  double t_guard = 0.042;
  std::size_t group_size = 0;
};

/// Throws DomainError unless delta1 == t_packet + t_guard and all are positive.
void validate(const SlotConfig& cfg);

/// Longest link whose round-trip propagation still fits inside the guard.
double max_guard_range_m(const SlotConfig& cfg, double c);

/// Local transmit time of a leader-synchronized device: delta0 + (i - 1) delta1.
double slot_time(std::size_t i, const SlotConfig& cfg);

/// Local transmit time of a device that missed the leader and first heard
/// device j at local time t_i_j. Uses t_i_j + (i - j) delta1 when
/// (i - j) delta1 > delta0, and t_i_j + (N - j + i) delta1 otherwise.
double relay_sync(std::size_t i, std::size_t j, double t_i_j, const SlotConfig& cfg);

/// delta0 + (N - 1) delta1 when everyone hears the leader,
/// delta0 + 2 (N - 1) delta1 otherwise.
double round_time(std::size_t n, bool all_in_range, const SlotConfig& cfg);

struct DeviceAgent {
  std::size_t id = 0;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  double clock_skew_ppm = 0.0;
  double depth = 0.0;
  /// Facing direction in the horizontal plane; the microphones sit
  /// perpendicular to it. Defaults to +x.
  double heading_rad = 0.0;
  /// Explicit audibility; when empty, audibility follows Environment::max_range_m.
  std::optional<std::vector<std::size_t>> range_set;
};

enum class Fidelity { timestamp, audio };

struct Environment {
  double c = physics::kDefaultSoundSpeed;
  double fs = 44100.0;
  double max_range_m = 30.0;
  double link_drop_prob = 0.0;
  double jitter_std_s = 0.0;
  /// Timestamp fidelity: floor reception times to the sample grid.
  bool quantize = false;
  double mic_distance_m = 0.16;
  /// Audio fidelity channel; a zero-noise single tap by default.
  physics::ChannelProfile channel;
};

struct ReceptionLog {
  std::size_t device = 0;
  std::optional<std::size_t> sync_source;  // nullopt: silent this round
  std::map<std::size_t, double> timestamps;  // j -> T^i_j, local seconds; includes i
  /// Direct-path taps of each heard device at this receiver's microphones.
  std::map<std::size_t, topology::FlipEvidence> direct_paths;

  bool silent() const { return !sync_source.has_value(); }
};

struct Event {
  enum class Kind { transmit, receive, drop };
  Kind kind = Kind::transmit;
  double global_time = 0.0;
  std::size_t sender = 0;
  std::size_t receiver = 0;  // equals sender for transmit events
  double local_time = 0.0;   // sender's clock for transmit, receiver's otherwise
  std::optional<std::size_t> relay_of;  // sync source carried in a relay message
};

struct RoundResult {
  std::vector<ReceptionLog> logs;  // indexed by device id
  std::vector<Event> events;       // in global-time order
  std::vector<std::size_t> silent;
  /// Latest local slot start plus delta1.
  double completion_time = 0.0;
  /// Same, on the global clock, including propagation.
  double global_completion_time = 0.0;
};

/// Event-driven simulation of one round. Deterministic in `seed`.
/// Throws ProtocolViolation if two packets overlap at any receiver, and
/// DomainError for malformed agents or configuration.
RoundResult run_round(const std::vector<DeviceAgent>& agents, const Environment& env,
                      const SlotConfig& cfg, std::uint64_t seed,
                      Fidelity fidelity = Fidelity::timestamp);

/// c/2 [(T^i_j - T^i_i) - (T^j_j - T^j_i)]. When one of the cross timestamps
/// is missing, falls back to a device k heard by both whose distances to i
/// and j are directly measurable. nullopt when neither works.
std::optional<double> pairwise_distance(const std::vector<ReceptionLog>& logs, std::size_t i,
                                        std::size_t j, double c);

/// Distance and weight matrices, agent depths, leader heading and the
/// leader's flip evidence.
topology::TopologyProblem build_problem(const RoundResult& round,
                                        const std::vector<DeviceAgent>& agents, double c);

std::string to_string(Event::Kind kind);

}  // namespace aqualoc::protocol
