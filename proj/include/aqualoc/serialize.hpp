#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "aqualoc/montecarlo.hpp"
#include "aqualoc/physics.hpp"
#include "aqualoc/protocol.hpp"
#include "aqualoc/topology.hpp"

namespace aqualoc::io {

using Json = nlohmann::json;

// Problem and solution documents. Matrices are nested row-major arrays and
// links are [i, j] pairs; docs/schemas.md has the full layout. Readers throw
// DomainError on schema violations.

Json to_json(const topology::TopologyProblem& problem);
topology::TopologyProblem problem_from_json(const Json& doc);

Json to_json(const topology::Solution& solution);
void validate_solution(const Json& doc);

/// Event log of one protocol round.
Json to_json(const protocol::RoundResult& round);
void validate_event_log(const Json& doc);

/// Scenario file: every section is optional.
struct ScenarioFile {
  std::optional<std::uint64_t> seed;
  double sound_speed = physics::kDefaultSoundSpeed;
  std::vector<protocol::DeviceAgent> devices;
  protocol::Environment environment;
  protocol::SlotConfig slots;
  topology::SolverOptions solver;
  montecarlo::ScenarioConfig sweep;
};

ScenarioFile scenario_from_json(const Json& doc);

/// N x N matrix of distances with "NA" where the weight is zero.
std::string distance_csv(const topology::Matrix& distances, const topology::Matrix& weights);

/// Throws IoError when the file cannot be read or is not valid JSON.
Json read_json(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace aqualoc::io
