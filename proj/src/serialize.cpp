#include "aqualoc/serialize.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <fmt/format.h>

#include "aqualoc/error.hpp"

namespace aqualoc::io {
namespace {

[[noreturn]] void schema(const std::string& what) { throw DomainError("schema: " + what); }

double number(const Json& v, const std::string& where) {
  if (!v.is_number()) schema(where + " must be a number");
  const double d = v.get<double>();
  if (!std::isfinite(d)) schema(where + " must be finite");
  return d;
}

std::size_t index(const Json& v, const std::string& where) {
  if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<std::int64_t>() >= 0)) {
    schema(where + " must be a non-negative integer");
  }
  return v.get<std::size_t>();
}

bool flag(const Json& v, const std::string& where) {
  if (!v.is_boolean()) schema(where + " must be a boolean");
  return v.get<bool>();
}

const Json* field(const Json& obj, const char* key) {
  const auto it = obj.find(key);
  return it == obj.end() || it->is_null() ? nullptr : &*it;
}

template <class T, class F>
void optional_field(const Json& obj, const char* key, T& target, F convert) {
  if (const Json* v = field(obj, key)) target = convert(*v, key);
}

void require_object(const Json& v, const std::string& where) {
  if (!v.is_object()) schema(where + " must be an object");
}

topology::Matrix matrix(const Json& v, const std::string& where) {
  if (!v.is_array() || v.empty()) schema(where + " must be a non-empty array of rows");
  const auto n = static_cast<Eigen::Index>(v.size());
  topology::Matrix m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Json& row = v[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n) schema(where + " must be square");
    for (Eigen::Index j = 0; j < n; ++j) m(i, j) = number(row[static_cast<std::size_t>(j)], where);
  }
  return m;
}

Json matrix_json(const topology::Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    Json row = Json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

Json links_json(const std::vector<topology::Link>& links) {
  Json out = Json::array();
  for (const auto& l : links) out.push_back({l.i, l.j});
  return out;
}

void check_links(const Json& v, const std::string& where, std::size_t n) {
  if (!v.is_array()) schema(where + " must be an array");
  for (const Json& l : v) {
    if (!l.is_array() || l.size() != 2) schema(where + " entries must be [i, j] pairs");
    if (index(l[0], where) >= n || index(l[1], where) >= n) schema(where + " index out of range");
  }
}

physics::ChannelProfile channel_from_json(const Json& v) {
  require_object(v, "channel");
  physics::ChannelProfile p;
  if (const Json* synth = field(v, "synth")) {
    require_object(*synth, "channel.synth");
    physics::ChannelSynthConfig cfg;
    std::uint64_t seed = 0;
    optional_field(*synth, "seed", seed, [](const Json& x, const char* k) { return static_cast<std::uint64_t>(index(x, k)); });
    optional_field(*synth, "num_taps", cfg.num_taps, [](const Json& x, const char* k) { return index(x, k); });
    optional_field(*synth, "decay_rate", cfg.decay_rate, number);
    optional_field(*synth, "direct_attenuation", cfg.direct_attenuation, number);
    optional_field(*synth, "max_delay_samples", cfg.max_delay_samples, [](const Json& x, const char* k) { return index(x, k); });
    optional_field(*synth, "noise_std", cfg.noise_std, number);
    p = physics::synth_channel(seed, cfg);
  } else if (const Json* taps = field(v, "taps")) {
    if (!taps->is_array() || taps->empty()) schema("channel.taps must be a non-empty array");
    p.taps.clear();
    for (const Json& t : *taps) {
      if (!t.is_array() || t.size() != 2) schema("channel.taps entries must be [delay_samples, amplitude]");
      p.taps.push_back({index(t[0], "channel.taps delay"), number(t[1], "channel.taps amplitude")});
    }
  }
  optional_field(v, "noise_std", p.noise_std, number);
  physics::validate(p);
  return p;
}

}  // namespace

Json to_json(const topology::TopologyProblem& problem) {
  Json evidence = Json::array();
  for (const auto& e : problem.flip_evidence) {
    evidence.push_back(e ? Json{{"m", e->m}, {"n", e->n}} : Json(nullptr));
  }
  Json depths = Json::array();
  for (double h : problem.depths) depths.push_back(h);
  return {{"distances", matrix_json(problem.distances)},
          {"weights", matrix_json(problem.weights)},
          {"depths", depths},
          {"leader_heading", {problem.leader_heading.x(), problem.leader_heading.y()}},
          {"flip_evidence", evidence}};
}

topology::TopologyProblem problem_from_json(const Json& doc) {
  require_object(doc, "problem");
  topology::TopologyProblem p;
  const Json* d = field(doc, "distances");
  const Json* w = field(doc, "weights");
  const Json* h = field(doc, "depths");
  if (!d || !w || !h) schema("problem needs distances, weights and depths");
  p.distances = matrix(*d, "distances");
  p.weights = matrix(*w, "weights");
  if (!h->is_array()) schema("depths must be an array");
  p.depths.resize(static_cast<Eigen::Index>(h->size()));
  for (std::size_t i = 0; i < h->size(); ++i) p.depths(static_cast<Eigen::Index>(i)) = number((*h)[i], "depths");
  if (const Json* heading = field(doc, "leader_heading")) {
    if (!heading->is_array() || heading->size() != 2) schema("leader_heading must be [x, y]");
    p.leader_heading = {number((*heading)[0], "leader_heading"), number((*heading)[1], "leader_heading")};
  }
  if (const Json* ev = field(doc, "flip_evidence")) {
    if (!ev->is_array()) schema("flip_evidence must be an array");
    for (const Json& e : *ev) {
      if (e.is_null()) {
        p.flip_evidence.emplace_back();
        continue;
      }
      require_object(e, "flip_evidence entry");
      const Json* m = field(e, "m");
      const Json* n = field(e, "n");
      if (!m || !n) schema("flip_evidence entries need m and n");
      p.flip_evidence.push_back(topology::FlipEvidence{number(*m, "m"), number(*n, "n")});
    }
  }
  topology::validate(p);
  return p;
}

Json to_json(const topology::Solution& s) {
  Json positions = Json::array();
  for (Eigen::Index i = 0; i < s.positions_3d.rows(); ++i) {
    if (!s.positions_3d.row(i).allFinite()) {
      positions.push_back(nullptr);
    } else {
      positions.push_back({s.positions_3d(i, 0), s.positions_3d(i, 1), s.positions_3d(i, 2)});
    }
  }
  return {{"positions", positions},
          {"stress_m", s.stress_m},
          {"dropped_links", links_json(s.dropped_links)},
          {"clamped_links", links_json(s.clamped_links)},
          {"unlocalized", s.unlocalized},
          {"flip_vote", s.flip_vote},
          {"flip_confident", s.flip_confident},
          {"realizable", s.realizable}};
}

void validate_solution(const Json& doc) {
  require_object(doc, "solution");
  const Json* pos = field(doc, "positions");
  if (!pos || !pos->is_array() || pos->empty()) schema("solution.positions must be a non-empty array");
  const std::size_t n = pos->size();
  for (const Json& p : *pos) {
    if (p.is_null()) continue;
    if (!p.is_array() || p.size() != 3) schema("solution.positions entries must be [x, y, z] or null");
    for (const Json& c : p) number(c, "solution.positions");
  }
  for (const char* key : {"stress_m", "flip_vote"}) {
    const Json* v = field(doc, key);
    if (!v) schema(fmt::format("solution.{} missing", key));
    number(*v, key);
  }
  for (const char* key : {"flip_confident", "realizable"}) {
    const Json* v = field(doc, key);
    if (!v) schema(fmt::format("solution.{} missing", key));
    flag(*v, key);
  }
  for (const char* key : {"dropped_links", "clamped_links"}) {
    const Json* v = field(doc, key);
    if (!v) schema(fmt::format("solution.{} missing", key));
    check_links(*v, key, n);
  }
  const Json* un = field(doc, "unlocalized");
  if (!un || !un->is_array()) schema("solution.unlocalized must be an array");
  for (const Json& i : *un) {
    if (index(i, "unlocalized") >= n || !(*pos)[i.get<std::size_t>()].is_null()) {
      schema("solution.unlocalized must list the null position rows");
    }
  }
}

Json to_json(const protocol::RoundResult& round) {
  Json events = Json::array();
  for (const auto& e : round.events) {
    Json ev{{"kind", protocol::to_string(e.kind)},
            {"global_time_s", e.global_time},
            {"sender", e.sender},
            {"receiver", e.receiver}};
    if (e.kind != protocol::Event::Kind::drop) ev["local_time_s"] = e.local_time;
    if (e.relay_of) ev["relay_of"] = *e.relay_of;
    events.push_back(std::move(ev));
  }
  Json logs = Json::array();
  for (const auto& log : round.logs) {
    Json ts = Json::array();
    for (const auto& [from, t] : log.timestamps) ts.push_back({{"from", from}, {"local_time_s", t}});
    logs.push_back({{"device", log.device},
                    {"sync_source", log.sync_source ? Json(*log.sync_source) : Json(nullptr)},
                    {"timestamps", ts}});
  }
  return {{"events", events},
          {"logs", logs},
          {"silent", round.silent},
          {"completion_time_s", round.completion_time},
          {"global_completion_time_s", round.global_completion_time}};
}

void validate_event_log(const Json& doc) {
  require_object(doc, "event log");
  const Json* logs = field(doc, "logs");
  const Json* events = field(doc, "events");
  if (!logs || !logs->is_array() || !events || !events->is_array()) schema("event log needs logs and events arrays");
  const std::size_t n = logs->size();
  double last = -std::numeric_limits<double>::infinity();
  for (const Json& e : *events) {
    require_object(e, "event");
    const Json* kind = field(e, "kind");
    if (!kind || !kind->is_string() ||
        (*kind != "transmit" && *kind != "receive" && *kind != "drop")) {
      schema("event.kind must be transmit, receive or drop");
    }
    const Json* t = field(e, "global_time_s");
    if (!t) schema("event.global_time_s missing");
    const double now = number(*t, "event.global_time_s");
    if (now < last) schema("events must be in time order");
    last = now;
    for (const char* key : {"sender", "receiver"}) {
      const Json* v = field(e, key);
      if (!v || index(*v, key) >= n) schema(fmt::format("event.{} out of range", key));
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    const Json& log = (*logs)[i];
    require_object(log, "log");
    const Json* dev = field(log, "device");
    if (!dev || index(*dev, "device") != i) schema("logs must be ordered by device id");
    const Json* ts = field(log, "timestamps");
    if (!ts || !ts->is_array()) schema("log.timestamps must be an array");
    for (const Json& entry : *ts) {
      require_object(entry, "timestamp");
      const Json* from = field(entry, "from");
      const Json* t = field(entry, "local_time_s");
      if (!from || !t || index(*from, "from") >= n) schema("timestamp entries need from and local_time_s");
      number(*t, "local_time_s");
    }
  }
  for (const char* key : {"completion_time_s", "global_completion_time_s"}) {
    const Json* v = field(doc, key);
    if (!v) schema(fmt::format("{} missing", key));
    number(*v, key);
  }
}

ScenarioFile scenario_from_json(const Json& doc) {
  require_object(doc, "scenario");
  ScenarioFile s;
  if (const Json* seed = field(doc, "seed")) s.seed = index(*seed, "seed");

  if (const Json* water = field(doc, "water")) {
    require_object(*water, "water");
    if (const Json* c = field(*water, "sound_speed")) {
      s.sound_speed = number(*c, "water.sound_speed");
      if (s.sound_speed <= 0.0) schema("water.sound_speed must be positive");
    } else {
      physics::WaterParams w;
      optional_field(*water, "temperature_c", w.temperature_c, number);
      optional_field(*water, "salinity_ppt", w.salinity_ppt, number);
      optional_field(*water, "depth_m", w.depth_m, number);
      s.sound_speed = physics::sound_speed(w);
    }
  }
  s.environment.c = s.sound_speed;

  if (const Json* env = field(doc, "environment")) {
    require_object(*env, "environment");
    optional_field(*env, "fs", s.environment.fs, number);
    optional_field(*env, "max_range_m", s.environment.max_range_m, number);
    optional_field(*env, "link_drop_prob", s.environment.link_drop_prob, number);
    optional_field(*env, "jitter_std_s", s.environment.jitter_std_s, number);
    optional_field(*env, "quantize", s.environment.quantize, flag);
    optional_field(*env, "mic_distance_m", s.environment.mic_distance_m, number);
  }
  if (const Json* ch = field(doc, "channel")) s.environment.channel = channel_from_json(*ch);

  if (const Json* devices = field(doc, "devices")) {
    if (!devices->is_array()) schema("devices must be an array");
    for (std::size_t k = 0; k < devices->size(); ++k) {
      const Json& d = (*devices)[k];
      require_object(d, "device");
      protocol::DeviceAgent a;
      const Json* id = field(d, "id");
      const Json* pos = field(d, "position");
      if (!id || !pos) schema("devices need id and position");
      a.id = index(*id, "device.id");
      if (a.id != k) schema("device ids must be unique and contiguous from 0, in order");
      if (!pos->is_array() || pos->size() != 3) schema("device.position must be [x, y, z]");
      a.position = {number((*pos)[0], "position"), number((*pos)[1], "position"), number((*pos)[2], "position")};
      a.depth = a.position.z();
      optional_field(d, "depth", a.depth, number);
      optional_field(d, "clock_ppm", a.clock_skew_ppm, number);
      if (const Json* hd = field(d, "heading_deg")) {
        a.heading_rad = number(*hd, "heading_deg") * std::numbers::pi / 180.0;
      } else if (k == 0 && devices->size() > 1) {
        // The leader faces the pointed device unless told otherwise.
        const Json& p1 = (*devices)[1]["position"];
        if (p1.is_array() && p1.size() == 3 && p1[0].is_number() && p1[1].is_number()) {
          a.heading_rad = std::atan2(p1[1].get<double>() - a.position.y(), p1[0].get<double>() - a.position.x());
        }
      }
      if (const Json* range = field(d, "range")) {
        if (!range->is_array()) schema("device.range must be an array of ids");
        std::vector<std::size_t> ids;
        for (const Json& r : *range) ids.push_back(index(r, "device.range"));
        a.range_set = std::move(ids);
      }
      s.devices.push_back(std::move(a));
    }
  }

  if (const Json* slots = field(doc, "protocol")) {
    require_object(*slots, "protocol");
    optional_field(*slots, "delta0", s.slots.delta0, number);
    optional_field(*slots, "delta1", s.slots.delta1, number);
    optional_field(*slots, "t_packet", s.slots.t_packet, number);
    optional_field(*slots, "t_guard", s.slots.t_guard, number);
    protocol::validate(s.slots);
  }

  if (const Json* solver = field(doc, "solver")) {
    require_object(*solver, "solver");
    optional_field(*solver, "tol", s.solver.tol, number);
    optional_field(*solver, "max_iter", s.solver.max_iter, [](const Json& x, const char* k) { return static_cast<int>(index(x, k)); });
    optional_field(*solver, "o_max", s.solver.o_max, [](const Json& x, const char* k) { return index(x, k); });
    optional_field(*solver, "stress_threshold_m", s.solver.stress_threshold_m, number);
    optional_field(*solver, "reduction", s.solver.reduction, number);
  }
  s.sweep.solver = s.solver;

  if (const Json* sweep = field(doc, "sweep")) {
    require_object(*sweep, "sweep");
    auto count = [](const Json& x, const char* k) { return index(x, k); };
    optional_field(*sweep, "n_devices", s.sweep.n_devices, count);
    optional_field(*sweep, "eps_1d", s.sweep.eps_1d, number);
    optional_field(*sweep, "eps_h", s.sweep.eps_h, number);
    optional_field(*sweep, "eps_theta_deg", s.sweep.eps_theta_deg, number);
    optional_field(*sweep, "link_drops", s.sweep.link_drops, count);
    optional_field(*sweep, "outlier_count", s.sweep.outlier_count, count);
    optional_field(*sweep, "outlier_magnitude", s.sweep.outlier_magnitude, number);
    optional_field(*sweep, "evidence_corruption", s.sweep.evidence_corruption, number);
    optional_field(*sweep, "trials", s.sweep.trials, count);
    if (const Json* space = field(*sweep, "space")) {
      if (!space->is_array() || space->size() != 3) schema("sweep.space must be [x, y, z]");
      s.sweep.space = {number((*space)[0], "space"), number((*space)[1], "space"), number((*space)[2], "space")};
    }
    montecarlo::validate(s.sweep);
  }
  if (s.seed) s.sweep.seed = *s.seed;
  return s;
}

std::string distance_csv(const topology::Matrix& distances, const topology::Matrix& weights) {
  std::string out;
  for (Eigen::Index i = 0; i < distances.rows(); ++i) {
    for (Eigen::Index j = 0; j < distances.cols(); ++j) {
      if (j > 0) out += ',';
      out += (i == j || weights(i, j) > 0.0) ? fmt::format("{:.3f}", distances(i, j)) : "NA";
    }
    out += '\n';
  }
  return out;
}

Json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(fmt::format("cannot open '{}'", path.string()));
  try {
    return Json::parse(in);
  } catch (const Json::parse_error& e) {
    throw IoError(fmt::format("'{}' is not valid JSON: {}", path.string(), e.what()));
  }
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out || !out.write(text.data(), static_cast<std::streamsize>(text.size()))) {
    throw IoError(fmt::format("cannot write '{}'", path.string()));
  }
}

}  // namespace aqualoc::io
