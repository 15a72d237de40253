#include "aqualoc/protocol.hpp"

#include <algorithm>
#include <cmath>
#include <queue>
#include <random>

#include <fmt/format.h>

#include "aqualoc/detect.hpp"
#include "aqualoc/error.hpp"
#include "aqualoc/waveform.hpp"

namespace aqualoc::protocol {
namespace {

constexpr std::size_t kAudioPad = 2000;

struct Clock {
  double sync_global = 0.0;  // global time at which the local clock was set
  double sync_local = 0.0;   // local reading assigned at that instant
  double rate = 1.0;

  double local(double t) const { return sync_local + rate * (t - sync_global); }
  double global(double l) const { return sync_global + (l - sync_local) / rate; }
};

struct Pending {
  double time = 0.0;
  bool transmit = true;
  std::size_t sender = 0;
  std::size_t receiver = 0;
  std::uint64_t order = 0;  // FIFO among equal times

  bool operator>(const Pending& o) const {
    if (time != o.time) return time > o.time;
    return order > o.order;
  }
};

struct MicPair {
  Eigen::Vector3d right;
  Eigen::Vector3d left;
};

MicPair mics_of(const DeviceAgent& a, double spacing) {
  const Eigen::Vector3d left_dir(-std::sin(a.heading_rad), std::cos(a.heading_rad), 0.0);
  return {a.position - 0.5 * spacing * left_dir, a.position + 0.5 * spacing * left_dir};
}

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t mix(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  return splitmix(splitmix(splitmix(seed) ^ a) ^ b);
}

void validate_agents(const std::vector<DeviceAgent>& agents) {
  if (agents.empty()) throw DomainError("at least the leader is required");
  for (std::size_t i = 0; i < agents.size(); ++i) {
    const auto& a = agents[i];
    if (a.id != i) throw DomainError(fmt::format("agent ids must be 0..N-1 in order (got {} at {})", a.id, i));
    if (!a.position.allFinite() || !std::isfinite(a.depth) || !std::isfinite(a.heading_rad)) {
      throw DomainError(fmt::format("agent {} has non-finite geometry", i));
    }
    if (!std::isfinite(a.clock_skew_ppm) || std::abs(a.clock_skew_ppm) > 1000.0) {
      throw DomainError(fmt::format("agent {} clock skew out of range", i));
    }
    if (a.range_set) {
      for (std::size_t j : *a.range_set) {
        if (j >= agents.size() || j == i) throw DomainError(fmt::format("agent {} has invalid range entry {}", i, j));
      }
    }
  }
}

std::vector<std::vector<bool>> audibility(const std::vector<DeviceAgent>& agents, double max_range) {
  const std::size_t n = agents.size();
  std::vector<std::vector<bool>> hear(n, std::vector<bool>(n, false));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      if (agents[i].range_set) {
        const auto& s = *agents[i].range_set;
        hear[i][j] = std::find(s.begin(), s.end(), j) != s.end();
      } else {
        hear[i][j] = (agents[i].position - agents[j].position).norm() <= max_range;
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (hear[i][j] != hear[j][i]) throw DomainError(fmt::format("range relation not symmetric for ({}, {})", i, j));
    }
  }
  return hear;
}

struct AudioLink {
  std::optional<double> delay_s;
  topology::FlipEvidence taps;
};

class AudioRanger {
 public:
  explicit AudioRanger(const Environment& env) : env_(env) {
    cfg_.fs = env.fs;
    preamble_ = waveform::generate_preamble(cfg_);
    padded_.assign(kAudioPad, 0.0);
    padded_.insert(padded_.end(), preamble_.begin(), preamble_.end());
    padded_.resize(padded_.size() + 3000, 0.0);
    opts_.direct.c = env.c;
    opts_.direct.fs = env.fs;
    opts_.direct.mic_distance_m = env.mic_distance_m;
  }

  AudioLink measure(const DeviceAgent& tx, const DeviceAgent& rx, std::uint64_t seed) const {
    const auto mics = mics_of(rx, env_.mic_distance_m);
    const auto s1 = physics::propagate(padded_, (mics.right - tx.position).norm(), env_.channel, env_.fs, env_.c, seed);
    const auto s2 = physics::propagate(padded_, (mics.left - tx.position).norm(), env_.channel, env_.fs, env_.c, seed + 1);
    const std::size_t len = std::min(s1.size(), s2.size());
    AudioLink out;
    try {
      const auto r = detect::range_dual_mic(std::span(s1).first(len), std::span(s2).first(len), cfg_, opts_);
      if (!r) return out;
      out.delay_s = (r->arrival_index - static_cast<double>(kAudioPad)) / env_.fs;
      out.taps = {static_cast<double>(r->path.m), static_cast<double>(r->path.n)};
    } catch (const NoDirectPath&) {
    }
    return out;
  }

 private:
  const Environment& env_;
  waveform::PreambleConfig cfg_;
  detect::PipelineOptions opts_;
  std::vector<double> preamble_;
  std::vector<double> padded_;
};

}  // namespace

void validate(const SlotConfig& cfg) {
  if (!(cfg.delta0 > 0.0 && cfg.delta1 > 0.0 && cfg.t_packet > 0.0 && cfg.t_guard > 0.0)) {
    throw DomainError("slot durations must be positive");
  }
  if (std::abs(cfg.delta1 - (cfg.t_packet + cfg.t_guard)) > 1e-9) {
    throw DomainError(fmt::format("delta1 ({}) must equal t_packet + t_guard ({})", cfg.delta1,
                                  cfg.t_packet + cfg.t_guard));
  }
}

double max_guard_range_m(const SlotConfig& cfg, double c) { return 0.5 * cfg.t_guard * c; }

double slot_time(std::size_t i, const SlotConfig& cfg) {
  if (i == 0) throw DomainError("the leader has no reply slot");
  if (cfg.group_size != 0 && i >= cfg.group_size) {
    throw DomainError(fmt::format("device {} outside group of {}", i, cfg.group_size));
  }
  return cfg.delta0 + static_cast<double>(i - 1) * cfg.delta1;
}

double relay_sync(std::size_t i, std::size_t j, double t_i_j, const SlotConfig& cfg) {
  if (i == 0 || j == 0 || i == j) throw DomainError("relay sync needs two distinct non-leader devices");
  if (cfg.group_size == 0 || i >= cfg.group_size || j >= cfg.group_size) {
    throw DomainError("relay sync needs group_size covering both devices");
  }
  const double ahead = (static_cast<double>(i) - static_cast<double>(j)) * cfg.delta1;
  if (ahead > cfg.delta0) return t_i_j + ahead;
  const auto n = static_cast<double>(cfg.group_size);
  return t_i_j + (n - static_cast<double>(j) + static_cast<double>(i)) * cfg.delta1;
}

double round_time(std::size_t n, bool all_in_range, const SlotConfig& cfg) {
  if (n < 2) throw DomainError("a round needs at least two devices");
  const double slots = static_cast<double>(n - 1) * (all_in_range ? 1.0 : 2.0);
  return cfg.delta0 + slots * cfg.delta1;
}

RoundResult run_round(const std::vector<DeviceAgent>& agents, const Environment& env, const SlotConfig& cfg_in,
                      std::uint64_t seed, Fidelity fidelity) {
  validate(cfg_in);
  validate_agents(agents);
  if (!(env.c > 0.0 && env.fs > 0.0) || env.link_drop_prob < 0.0 || env.link_drop_prob > 1.0 ||
      env.jitter_std_s < 0.0) {
    throw DomainError("invalid environment");
  }
  SlotConfig cfg = cfg_in;
  if (cfg.group_size == 0) cfg.group_size = agents.size();
  if (cfg.group_size != agents.size()) throw DomainError("group_size must match the number of agents");

  const std::size_t n = agents.size();
  const auto hear = audibility(agents, env.max_range_m);

  std::mt19937_64 rng(seed);
  std::vector<std::vector<bool>> dropped(n, std::vector<bool>(n, false));
  std::bernoulli_distribution drop(env.link_drop_prob);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) dropped[i][j] = dropped[j][i] = hear[i][j] && drop(rng);
  }
  std::normal_distribution<double> jitter(0.0, env.jitter_std_s);

  std::optional<AudioRanger> audio;
  if (fidelity == Fidelity::audio) audio.emplace(env);

  RoundResult result;
  result.logs.resize(n);
  std::vector<std::optional<Clock>> clocks(n);
  std::vector<std::optional<double>> tx_global(n);
  std::vector<double> tx_local(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) result.logs[i].device = i;

  std::priority_queue<Pending, std::vector<Pending>, std::greater<>> queue;
  std::uint64_t order = 0;
  auto schedule_tx = [&](std::size_t i, double local) {
    tx_local[i] = local;
    result.logs[i].timestamps[i] = local;
    queue.push({clocks[i]->global(local), true, i, i, order++});
  };

  clocks[0] = Clock{0.0, 0.0, 1.0 + agents[0].clock_skew_ppm * 1e-6};
  result.logs[0].sync_source = 0;
  schedule_tx(0, 0.0);

  std::vector<std::vector<std::pair<double, std::size_t>>> busy(n);  // (start, sender)

  while (!queue.empty()) {
    const Pending ev = queue.top();
    queue.pop();
    const std::size_t j = ev.sender;
    if (ev.transmit) {
      tx_global[j] = ev.time;
      busy[j].push_back({ev.time, j});
      Event e{Event::Kind::transmit, ev.time, j, j, tx_local[j], std::nullopt};
      if (j != 0 && result.logs[j].sync_source != 0u) e.relay_of = result.logs[j].sync_source;
      result.events.push_back(e);
      for (std::size_t r = 0; r < n; ++r) {
        if (r == j || !hear[j][r]) continue;
        const double arrival = ev.time + (agents[r].position - agents[j].position).norm() / env.c;
        busy[r].push_back({arrival, j});
        queue.push({arrival, false, j, r, order++});
      }
      continue;
    }

    const std::size_t r = ev.receiver;
    if (dropped[j][r]) {
      result.events.push_back({Event::Kind::drop, ev.time, j, r, 0.0, std::nullopt});
      continue;
    }
    double measured = ev.time;
    topology::FlipEvidence taps;
    if (audio) {
      const auto link = audio->measure(agents[j], agents[r], mix(seed, j, r));
      if (!link.delay_s) {
        result.events.push_back({Event::Kind::drop, ev.time, j, r, 0.0, std::nullopt});
        continue;
      }
      measured = *tx_global[j] + *link.delay_s;
      taps = link.taps;
    } else {
      const auto mics = mics_of(agents[r], env.mic_distance_m);
      taps = {(mics.left - agents[j].position).norm() * env.fs / env.c,
              (mics.right - agents[j].position).norm() * env.fs / env.c};
    }
    if (env.jitter_std_s > 0.0) measured += jitter(rng);

    auto& log = result.logs[r];
    if (!clocks[r]) {
      const double rate = 1.0 + agents[r].clock_skew_ppm * 1e-6;
      if (j == 0) {
        clocks[r] = Clock{measured, 0.0, rate};
        log.sync_source = 0;
        log.timestamps[0] = 0.0;
        schedule_tx(r, slot_time(r, cfg));
      } else {
        // The relay message stands in for the leader's: j's own slot time
        // becomes this device's reading at arrival.
        const double anchor = tx_local[j];
        clocks[r] = Clock{measured, anchor, rate};
        log.sync_source = j;
        log.timestamps[j] = anchor;
        schedule_tx(r, relay_sync(r, j, anchor, cfg));
      }
    } else {
      double local = clocks[r]->local(measured);
      if (env.quantize && fidelity == Fidelity::timestamp) local = std::floor(local * env.fs) / env.fs;
      log.timestamps[j] = local;
    }
    log.direct_paths[j] = taps;
    result.events.push_back({Event::Kind::receive, ev.time, j, r, log.timestamps[j], std::nullopt});
  }

  for (std::size_t r = 0; r < n; ++r) {
    auto& b = busy[r];
    std::sort(b.begin(), b.end());
    for (std::size_t k = 1; k < b.size(); ++k) {
      if (b[k].first < b[k - 1].first + cfg.t_packet) {
        throw ProtocolViolation(fmt::format("packets from {} and {} overlap at device {} (t = {:.6f} s)",
                                            b[k - 1].second, b[k].second, r, b[k].first));
      }
    }
  }

  for (std::size_t i = 0; i < n; ++i) {
    if (result.logs[i].silent()) {
      result.silent.push_back(i);
      continue;
    }
    result.completion_time = std::max(result.completion_time, tx_local[i] + cfg.delta1);
    result.global_completion_time = std::max(result.global_completion_time, *tx_global[i] + cfg.delta1);
  }
  return result;
}

std::optional<double> pairwise_distance(const std::vector<ReceptionLog>& logs, std::size_t i, std::size_t j,
                                        double c) {
  if (i >= logs.size() || j >= logs.size()) throw DomainError("pairwise_distance: device index out of range");
  if (i == j) return 0.0;
  auto get = [&](std::size_t at, std::size_t from) -> std::optional<double> {
    const auto& ts = logs[at].timestamps;
    const auto it = ts.find(from);
    if (it == ts.end()) return std::nullopt;
    return it->second;
  };
  auto direct = [&](std::size_t a, std::size_t b) -> std::optional<double> {
    const auto aa = get(a, a), ab = get(a, b), bb = get(b, b), ba = get(b, a);
    if (!aa || !ab || !bb || !ba) return std::nullopt;
    return 0.5 * c * ((*ab - *aa) - (*bb - *ba));
  };
  if (auto d = direct(i, j)) return d;

  // One-way measurement b -> a, with the missing direction replaced by a
  // shared listener k: tau_ab = (T^a_b - T^b_b) - (T^a_k - T^b_k) + tau_ak - tau_bk.
  auto one_way = [&](std::size_t a, std::size_t b) -> std::optional<double> {
    const auto ab = get(a, b), bb = get(b, b);
    if (!ab || !bb) return std::nullopt;
    for (std::size_t k = 0; k < logs.size(); ++k) {
      if (k == a || k == b) continue;
      const auto ak = get(a, k), bk = get(b, k);
      if (!ak || !bk) continue;
      const auto d_ak = direct(a, k), d_bk = direct(b, k);
      if (!d_ak || !d_bk) continue;
      const double tau = (*ab - *bb) - (*ak - *bk) + (*d_ak - *d_bk) / c;
      return c * tau;
    }
    return std::nullopt;
  };
  if (auto d = one_way(i, j)) return d;
  return one_way(j, i);
}

topology::TopologyProblem build_problem(const RoundResult& round, const std::vector<DeviceAgent>& agents, double c) {
  const std::size_t n = agents.size();
  if (round.logs.size() != n) throw DomainError("round logs do not match the agent list");
  topology::TopologyProblem p;
  p.distances = topology::Matrix::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  p.weights = p.distances;
  p.depths.resize(static_cast<Eigen::Index>(n));
  for (std::size_t i = 0; i < n; ++i) {
    p.depths(static_cast<Eigen::Index>(i)) = agents[i].depth;
    for (std::size_t j = i + 1; j < n; ++j) {
      if (round.logs[i].silent() || round.logs[j].silent()) continue;
      const auto d = pairwise_distance(round.logs, i, j, c);
      if (!d) continue;
      const auto a = static_cast<Eigen::Index>(i), b = static_cast<Eigen::Index>(j);
      p.distances(a, b) = p.distances(b, a) = std::max(*d, 0.0);
      p.weights(a, b) = p.weights(b, a) = 1.0;
    }
  }
  p.leader_heading = {std::cos(agents[0].heading_rad), std::sin(agents[0].heading_rad)};
  p.flip_evidence.assign(n, std::nullopt);
  for (const auto& [dev, taps] : round.logs[0].direct_paths) {
    if (dev >= 2) p.flip_evidence[dev] = taps;
  }
  return p;
}

std::string to_string(Event::Kind kind) {
  switch (kind) {
    case Event::Kind::transmit: return "transmit";
    case Event::Kind::receive: return "receive";
    case Event::Kind::drop: return "drop";
  }
  return "unknown";
}

}  // namespace aqualoc::protocol
