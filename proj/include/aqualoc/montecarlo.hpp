#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "aqualoc/topology.hpp"

namespace aqualoc::montecarlo {

struct ScenarioConfig {
  std::size_t n_devices = 6;
  Eigen::Vector3d space{60.0, 60.0, 10.0};
  double eps_1d = 0.8;         // m
  double eps_h = 0.4;          // m
  double eps_theta_deg = 0.0;  // leader pointing error
  std::size_t link_drops = 0;
  std::size_t outlier_count = 0;
  double outlier_magnitude = 6.0;  // m added to each planted link
  double evidence_corruption = 0.0;  // probability of swapping a voter's m and n
  double min_pointed_m = 4.0;
  double max_pointed_m = 9.0;
  std::size_t trials = 200;
  std::uint64_t seed = 1;
  topology::SolverOptions solver;
};

/// Throws DomainError for impossible settings.
void validate(const ScenarioConfig& cfg);

struct Scenario {
  topology::Positions3 truth;  // world frame
  topology::TopologyProblem problem;
  std::vector<topology::Link> planted_outliers;
  std::vector<topology::Link> dropped_links;
};

/// Deterministic in (cfg.seed, trial). Leader at the horizontal center,
/// device 1 at 3D distance U(min_pointed, max_pointed) from it, the rest
/// uniform in the box. Retries placements whose drops cannot keep the graph
/// uniquely realizable; throws DomainError when retries run out.
Scenario generate_scenario(const ScenarioConfig& cfg, std::size_t trial);

struct TrialOutcome {
  std::vector<double> errors;  // horizontal error per device 1..N-1
  std::vector<topology::Link> dropped_links;
  bool solved = false;  // false when the solver threw
  bool flip_correct = false;
  double mean_error() const;
};

/// Solves a scenario and scores it against the leader-relative truth, with no
/// extra alignment beyond the solver's own.
TrialOutcome evaluate(const Scenario& scenario, const topology::SolverOptions& solver = {});

struct SweepRow {
  double value = 0.0;
  double mean_error_m = 0.0;
  double std_error_m = 0.0;
  std::size_t trials = 0;
  std::size_t failures = 0;
};

/// Parameters: eps_1d, eps_h, eps_theta, n_devices, link_drops, outliers,
/// evidence_corruption.
void set_parameter(ScenarioConfig& cfg, const std::string& name, double value);

/// Mean and standard deviation of the per-device errors pooled over trials.
/// Trials run on `jobs` threads; results do not depend on `jobs`.
SweepRow run_point(const ScenarioConfig& cfg, unsigned jobs = 1);

std::vector<SweepRow> run_sweep(const ScenarioConfig& cfg, const std::string& parameter,
                                const std::vector<double>& values, unsigned jobs = 1);

/// "param,mean_error_m,std_error_m,trials" plus one row per value.
std::string to_csv(const std::vector<SweepRow>& rows);

}  // namespace aqualoc::montecarlo
