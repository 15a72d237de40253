#pragma once

#include <Eigen/Dense>

#include <compare>
#include <cstddef>
#include <optional>
#include <vector>

namespace aqualoc::topology {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Positions2 = Eigen::MatrixX2d;
using Positions3 = Eigen::MatrixX3d;

inline constexpr std::size_t kLeader = 0;
inline constexpr std::size_t kPointed = 1;

struct Link {
  std::size_t i = 0;
  std::size_t j = 0;
  auto operator<=>(const Link&) const = default;
};

/// Direct-path tap indices of a device's signal at the leader's microphones:
/// m on the left microphone, n on the right one.
struct FlipEvidence {
  double m = 0.0;
  double n = 0.0;
};

struct TopologyProblem {
  Matrix distances;  // N x N, meters, symmetric, zero diagonal
  Matrix weights;    // N x N, {0, 1}
  Vector depths;     // N, meters
  Eigen::Vector2d leader_heading{1.0, 0.0};
  std::vector<std::optional<FlipEvidence>> flip_evidence;  // indexed by device

  std::size_t size() const { return static_cast<std::size_t>(distances.rows()); }
};

/// Throws DomainError on shape, symmetry, or weight-range violations.
void validate(const TopologyProblem& problem);

struct SolverOptions {
  double tol = 1e-4;
  int max_iter = 300;
  std::size_t o_max = 3;
  double stress_threshold_m = 1.5;
  double reduction = 0.9;
};

struct Projection {
  Matrix d2d;
  std::vector<Link> clamped;  // pairs where D^2 < dh^2, set to 0
};

/// Horizontal distances sqrt(D^2 - (h_i - h_j)^2).
Projection project_2d(const Matrix& distances, const Vector& depths);

bool is_connected(const Matrix& weights);

/// Weighted sum over i < j of w (d - |p_i - p_j|)^2.
double raw_stress(const Positions2& positions, const Matrix& d2d, const Matrix& weights);

/// RMS link residual in meters: sqrt(raw_stress / sum_{i<j} w).
double normalized_stress(const Positions2& positions, const Matrix& d2d, const Matrix& weights);

/// Classical MDS on the shortest-path completion of the weighted graph;
/// falls back to a seeded random layout when that degenerates.
Positions2 classical_mds(const Matrix& d2d, const Matrix& weights);

struct SmacofResult {
  Positions2 positions;
  double raw_stress = 0.0;
  int iterations = 0;
  std::vector<double> stress_history;  // initial stress first
};

/// Weighted SMACOF (Guttman transform with the Moore-Penrose inverse of V).
/// Stops when the relative stress decrease falls below `tol` or after
/// `max_iter` iterations. Throws GraphError for a disconnected graph.
SmacofResult smacof(const Matrix& d2d, const Matrix& weights,
                    const std::optional<Positions2>& init = std::nullopt, double tol = 1e-4,
                    int max_iter = 300);

/// Rank of the 2D rigidity matrix equals 2N - 3 at generic positions.
bool is_generically_rigid(const Matrix& weights);

/// Redundantly rigid and still connected after deleting any two nodes.
/// Graphs of up to three nodes qualify only when complete.
bool is_uniquely_realizable(const Matrix& weights);

struct OutlierResult {
  Positions2 positions;
  std::vector<Link> dropped_links;
  double stress_m = 0.0;
};

/// Iterative outlier rejection: drops up to o_max links, only ever testing
/// drop sets that keep the graph uniquely realizable.
OutlierResult detect_outliers(const Matrix& d2d, const Matrix& weights,
                              const SolverOptions& options = {});

/// Leader to the origin, pointed device onto `leader_heading`.
/// Throws DegenerateGeometry if they coincide.
Positions2 align_rotation(const Positions2& positions, const Eigen::Vector2d& leader_heading);

/// Mirror image across the line through the leader and the pointed device.
Positions2 mirror(const Positions2& positions);

/// sum_{i >= 2} sgn(m_i - n_i) sgn((x_i - x_0)(y_1 - y_0) - (y_i - y_0)(x_1 - x_0))
int flip_vote(const Positions2& positions,
              const std::vector<std::optional<FlipEvidence>>& evidence);

struct FlipResult {
  Positions2 positions;
  int vote = 0;            // vote of the returned candidate
  bool confident = false;  // false on a tie
};

FlipResult resolve_flip(const Positions2& positions,
                        const std::vector<std::optional<FlipEvidence>>& evidence);

Positions3 lift_3d(const Positions2& positions, const Vector& depths);

struct Solution {
  Positions3 positions_3d;
  double stress_m = 0.0;
  std::vector<Link> dropped_links;
  std::vector<Link> clamped_links;
  std::vector<std::size_t> unlocalized;  // devices without links; NaN rows
  int flip_vote = 0;
  bool flip_confident = false;
  bool realizable = false;
};

/// Projection, outlier-aware SMACOF, rotation alignment, flip voting, depth
/// lift. Devices with no links are excluded and reported as unlocalized.
/// A graph that is connected but not uniquely realizable is still embedded
/// (without outlier rejection) and flagged realizable = false.
Solution solve(const TopologyProblem& problem, const SolverOptions& options = {});

}  // namespace aqualoc::topology
