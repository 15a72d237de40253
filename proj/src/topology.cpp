#include "aqualoc/topology.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include <fmt/format.h>

#include "aqualoc/error.hpp"

namespace aqualoc::topology {
namespace {

constexpr double kCoincident = 1e-6;
constexpr int kSmacofRestarts = 32;

int sgn(double v) { return (v > 0.0) - (v < 0.0); }

std::vector<Link> links_of(const Matrix& weights) {
  std::vector<Link> out;
  const auto n = static_cast<std::size_t>(weights.rows());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (weights(i, j) > 0.0) out.push_back({i, j});
    }
  }
  return out;
}

// Connectivity of the graph restricted to nodes not in `removed`.
bool connected_without(const Matrix& weights, const std::vector<bool>& removed) {
  const auto n = static_cast<std::size_t>(weights.rows());
  std::size_t start = n;
  std::size_t alive = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (!removed[i]) {
      ++alive;
      if (start == n) start = i;
    }
  }
  if (alive <= 1) return true;
  std::vector<bool> seen(n, false);
  std::vector<std::size_t> stack{start};
  seen[start] = true;
  std::size_t reached = 1;
  while (!stack.empty()) {
    const std::size_t u = stack.back();
    stack.pop_back();
    for (std::size_t v = 0; v < n; ++v) {
      if (!removed[v] && !seen[v] && weights(u, v) > 0.0) {
        seen[v] = true;
        ++reached;
        stack.push_back(v);
      }
    }
  }
  return reached == alive;
}

Eigen::Index rigidity_rank(const std::vector<Link>& links, std::size_t n, const Eigen::MatrixX2d& p) {
  if (links.empty()) return 0;
  Matrix r = Matrix::Zero(static_cast<Eigen::Index>(links.size()), static_cast<Eigen::Index>(2 * n));
  for (std::size_t e = 0; e < links.size(); ++e) {
    const auto [i, j] = links[e];
    const Eigen::RowVector2d d = p.row(static_cast<Eigen::Index>(i)) - p.row(static_cast<Eigen::Index>(j));
    const auto row = static_cast<Eigen::Index>(e);
    r.block<1, 2>(row, static_cast<Eigen::Index>(2 * i)) = d;
    r.block<1, 2>(row, static_cast<Eigen::Index>(2 * j)) = -d;
  }
  Eigen::ColPivHouseholderQR<Matrix> qr(r);
  qr.setThreshold(1e-9);
  return qr.rank();
}

// Generic rank: the maximum over three fixed pseudo-random configurations.
bool rigid_links(const std::vector<Link>& links, std::size_t n) {
  if (n <= 1) return true;
  const auto needed = static_cast<Eigen::Index>(2 * n - 3);
  if (static_cast<Eigen::Index>(links.size()) < needed) return false;
  Eigen::Index rank = 0;
  for (std::uint64_t trial = 0; trial < 3; ++trial) {
    std::mt19937_64 rng(0x9e3779b97f4a7c15ULL + trial);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    Eigen::MatrixX2d p(static_cast<Eigen::Index>(n), 2);
    for (Eigen::Index i = 0; i < p.rows(); ++i) p.row(i) << u(rng), u(rng);
    rank = std::max(rank, rigidity_rank(links, n, p));
  }
  return rank == needed;
}

Matrix floyd_complete(const Matrix& d2d, const Matrix& weights) {
  const auto n = d2d.rows();
  const double inf = std::numeric_limits<double>::infinity();
  Matrix dist = Matrix::Constant(n, n, inf);
  for (Eigen::Index i = 0; i < n; ++i) {
    dist(i, i) = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      if (i != j && weights(i, j) > 0.0) dist(i, j) = d2d(i, j);
    }
  }
  for (Eigen::Index k = 0; k < n; ++k) {
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = 0; j < n; ++j) {
        dist(i, j) = std::min(dist(i, j), dist(i, k) + dist(k, j));
      }
    }
  }
  return dist;
}

Positions2 random_layout(Eigen::Index n, double scale) {
  std::mt19937_64 rng(0x51ac0fULL + static_cast<std::uint64_t>(n));
  std::uniform_real_distribution<double> u(-scale, scale);
  Positions2 x(n, 2);
  for (Eigen::Index i = 0; i < n; ++i) x.row(i) << u(rng), u(rng);
  return x;
}

}  // namespace

void validate(const TopologyProblem& problem) {
  const auto n = problem.distances.rows();
  if (n == 0 || problem.distances.cols() != n) throw DomainError("distance matrix must be square and non-empty");
  if (problem.weights.rows() != n || problem.weights.cols() != n) throw DomainError("weight matrix shape mismatch");
  if (problem.depths.size() != n) throw DomainError("depth vector length mismatch");
  if (!problem.flip_evidence.empty() && static_cast<Eigen::Index>(problem.flip_evidence.size()) != n) {
    throw DomainError("flip evidence must have one slot per device");
  }
  if (!problem.leader_heading.allFinite() || problem.leader_heading.norm() < 1e-12) {
    throw DomainError("leader heading must be a non-zero vector");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (problem.distances(i, i) != 0.0 || problem.weights(i, i) != 0.0) {
      throw DomainError("distance and weight diagonals must be zero");
    }
    if (!std::isfinite(problem.depths(i))) throw DomainError("depths must be finite");
    for (Eigen::Index j = 0; j < n; ++j) {
      const double w = problem.weights(i, j);
      if (w != 0.0 && w != 1.0) throw DomainError("weights must be 0 or 1");
      if (w != problem.weights(j, i)) throw DomainError("weight matrix must be symmetric");
      if (w > 0.0) {
        const double d = problem.distances(i, j);
        if (!std::isfinite(d) || d < 0.0) throw DomainError("linked distances must be finite and >= 0");
        if (std::abs(d - problem.distances(j, i)) > 1e-9 * (1.0 + d)) {
          throw DomainError("distance matrix must be symmetric");
        }
      }
    }
  }
}

Projection project_2d(const Matrix& distances, const Vector& depths) {
  const auto n = distances.rows();
  Projection out;
  out.d2d = Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double dh = depths(i) - depths(j);
      const double sq = distances(i, j) * distances(i, j) - dh * dh;
      if (sq < 0.0) out.clamped.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j)});
      out.d2d(i, j) = out.d2d(j, i) = std::sqrt(std::max(sq, 0.0));
    }
  }
  return out;
}

bool is_connected(const Matrix& weights) {
  return connected_without(weights, std::vector<bool>(static_cast<std::size_t>(weights.rows()), false));
}

double raw_stress(const Positions2& positions, const Matrix& d2d, const Matrix& weights) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < positions.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < positions.rows(); ++j) {
      if (weights(i, j) == 0.0) continue;
      const double r = d2d(i, j) - (positions.row(i) - positions.row(j)).norm();
      s += weights(i, j) * r * r;
    }
  }
  return s;
}

double normalized_stress(const Positions2& positions, const Matrix& d2d, const Matrix& weights) {
  double links = 0.0;
  for (Eigen::Index i = 0; i < weights.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < weights.cols(); ++j) links += weights(i, j);
  }
  if (links == 0.0) return 0.0;
  return std::sqrt(raw_stress(positions, d2d, weights) / links);
}

Positions2 classical_mds(const Matrix& d2d, const Matrix& weights) {
  const auto n = d2d.rows();
  Matrix complete = floyd_complete(d2d, weights);
  double scale = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (std::isfinite(complete(i, j))) scale = std::max(scale, complete(i, j));
    }
  }
  if (!complete.allFinite() || scale <= 0.0) return random_layout(n, std::max(scale, 1.0));

  const Matrix centering = Matrix::Identity(n, n) - Matrix::Constant(n, n, 1.0 / static_cast<double>(n));
  const Matrix gram = -0.5 * centering * complete.cwiseProduct(complete) * centering;
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram);
  // Eigenvalues ascend; take the two largest.
  Positions2 x(n, 2);
  for (int c = 0; c < 2; ++c) {
    const Eigen::Index k = n - 1 - c;
    if (k < 0) {
      x.col(c).setZero();
      continue;
    }
    x.col(c) = eig.eigenvectors().col(k) * std::sqrt(std::max(eig.eigenvalues()(k), 0.0));
  }
  if (!x.allFinite() || x.norm() < 1e-12) return random_layout(n, scale);
  // A rank-one start would keep SMACOF on a line; give it a small second axis.
  if (x.col(1).norm() < 1e-9 * x.col(0).norm()) {
    x.col(1) = random_layout(n, 1e-3 * scale).col(1);
  }
  return x;
}

namespace {

SmacofResult smacof_run(const Matrix& d2d, const Matrix& weights, const Matrix& v_pinv, Positions2 start,
                        double tol, int max_iter) {
  const auto n = d2d.rows();
  SmacofResult result;
  result.positions = std::move(start);
  double stress = raw_stress(result.positions, d2d, weights);
  result.stress_history.push_back(stress);
  Matrix b(n, n);
  for (int iter = 0; iter < max_iter && stress > 0.0; ++iter) {
    b.setZero();
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) {
        if (weights(i, j) == 0.0) continue;
        const double dist = (result.positions.row(i) - result.positions.row(j)).norm();
        if (dist < 1e-12) continue;
        b(i, j) = b(j, i) = -weights(i, j) * d2d(i, j) / dist;
      }
    }
    b.diagonal() = -b.rowwise().sum();
    result.positions = v_pinv * b * result.positions;
    const double next = raw_stress(result.positions, d2d, weights);
    ++result.iterations;
    result.stress_history.push_back(next);
    if (next > stress * (1.0 + 1e-9) + 1e-12) {
      throw std::logic_error(fmt::format("smacof: stress rose from {} to {}", stress, next));
    }
    const double relative = (stress - next) / stress;
    stress = next;
    if (relative < tol) break;
  }
  result.raw_stress = stress;
  return result;
}

}  // namespace

SmacofResult smacof(const Matrix& d2d, const Matrix& weights, const std::optional<Positions2>& init,
                    double tol, int max_iter) {
  const auto n = d2d.rows();
  if (weights.rows() != n || weights.cols() != n || d2d.cols() != n) {
    throw DomainError("smacof: matrix shapes differ");
  }
  if (!is_connected(weights)) throw GraphError("smacof: link graph is disconnected");
  if (init && init->rows() != n) throw DomainError("smacof: initial layout has wrong size");
  if (n == 1) {
    SmacofResult single;
    single.positions = Positions2::Zero(1, 2);
    single.stress_history = {0.0};
    return single;
  }

  Matrix v = -weights;
  v.diagonal().setZero();
  v.diagonal() = -v.rowwise().sum();
  const Matrix ones = Matrix::Constant(n, n, 1.0 / static_cast<double>(n));
  const Matrix v_pinv = (v + ones).inverse() - ones;

  if (init) return smacof_run(d2d, weights, v_pinv, *init, tol, max_iter);

  auto best = smacof_run(d2d, weights, v_pinv, classical_mds(d2d, weights), tol, max_iter);
  // Shortest-path completion is only approximate when links are missing, so
  // the MDS start can sit in a poor basin; add seeded random starts.
  const bool complete = (weights.array() > 0.0).count() == n * (n - 1);
  if (!complete) {
    const double scale = std::max(d2d.maxCoeff(), 1.0);
    std::mt19937_64 rng(0x5eedULL + static_cast<std::uint64_t>(n));
    std::uniform_real_distribution<double> u(-scale, scale);
    const double exact = 1e-12 * d2d.squaredNorm();
    for (int restart = 0; restart < kSmacofRestarts && best.raw_stress > exact; ++restart) {
      Positions2 start(n, 2);
      for (Eigen::Index i = 0; i < n; ++i) start.row(i) << u(rng), u(rng);
      auto candidate = smacof_run(d2d, weights, v_pinv, std::move(start), tol, max_iter);
      if (candidate.raw_stress < best.raw_stress) best = std::move(candidate);
    }
  }
  return best;
}

bool is_generically_rigid(const Matrix& weights) {
  return rigid_links(links_of(weights), static_cast<std::size_t>(weights.rows()));
}

bool is_uniquely_realizable(const Matrix& weights) {
  const auto n = static_cast<std::size_t>(weights.rows());
  const auto links = links_of(weights);
  if (n <= 3) return links.size() == n * (n - 1) / 2;
  if (!rigid_links(links, n)) return false;
  for (std::size_t skip = 0; skip < links.size(); ++skip) {
    std::vector<Link> reduced;
    reduced.reserve(links.size() - 1);
    for (std::size_t e = 0; e < links.size(); ++e) {
      if (e != skip) reduced.push_back(links[e]);
    }
    if (!rigid_links(reduced, n)) return false;
  }
  std::vector<bool> removed(n, false);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = a + 1; b < n; ++b) {
      removed[a] = removed[b] = true;
      const bool ok = connected_without(weights, removed);
      removed[a] = removed[b] = false;
      if (!ok) return false;
    }
  }
  return true;
}

OutlierResult detect_outliers(const Matrix& d2d, const Matrix& weights, const SolverOptions& options) {
  auto run = [&](const Matrix& w) {
    auto fit = smacof(d2d, w, std::nullopt, options.tol, options.max_iter);
    return std::make_pair(normalized_stress(fit.positions, d2d, w), std::move(fit.positions));
  };

  auto [e0, p0] = run(weights);
  OutlierResult best{p0, {}, e0};
  if (e0 < options.stress_threshold_m) return best;

  const auto links = links_of(weights);
  for (std::size_t n_drop = 1; n_drop <= std::min(options.o_max, links.size()); ++n_drop) {
    OutlierResult round_best = best;
    // Lexicographic enumeration of n_drop-subsets of the base links.
    std::vector<std::size_t> pick(n_drop);
    std::iota(pick.begin(), pick.end(), 0);
    while (true) {
      Matrix w = weights;
      for (std::size_t idx : pick) {
        const auto [i, j] = links[idx];
        w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = 0.0;
        w(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = 0.0;
      }
      if (is_uniquely_realizable(w)) {
        auto [e, p] = run(w);
        if (best.stress_m - e > options.reduction * best.stress_m && e < round_best.stress_m) {
          round_best.positions = std::move(p);
          round_best.stress_m = e;
          round_best.dropped_links.clear();
          for (std::size_t idx : pick) round_best.dropped_links.push_back(links[idx]);
        }
      }
      // Advance to the next combination.
      std::size_t k = n_drop;
      while (k > 0 && pick[k - 1] == links.size() - n_drop + (k - 1)) --k;
      if (k == 0) break;
      ++pick[k - 1];
      for (std::size_t t = k; t < n_drop; ++t) pick[t] = pick[t - 1] + 1;
    }
    best = std::move(round_best);
    if (best.stress_m < options.stress_threshold_m) return best;
  }
  return best;
}

Positions2 align_rotation(const Positions2& positions, const Eigen::Vector2d& leader_heading) {
  if (positions.rows() <= static_cast<Eigen::Index>(kPointed)) {
    throw DomainError("alignment needs a leader and a pointed device");
  }
  if (leader_heading.norm() < 1e-12) throw DomainError("leader heading must be non-zero");
  Positions2 out = positions.rowwise() - positions.row(kLeader);
  const Eigen::Vector2d pointed = out.row(kPointed).transpose();
  if (pointed.norm() < kCoincident) {
    throw DegenerateGeometry("leader and pointed device coincide in the horizontal plane");
  }
  const double angle = std::atan2(leader_heading.y(), leader_heading.x()) - std::atan2(pointed.y(), pointed.x());
  const Eigen::Matrix2d rot = Eigen::Rotation2Dd(angle).toRotationMatrix();
  return out * rot.transpose();
}

Positions2 mirror(const Positions2& positions) {
  const Eigen::RowVector2d origin = positions.row(kLeader);
  Eigen::Vector2d axis = (positions.row(kPointed) - origin).transpose();
  if (axis.norm() < kCoincident) throw DegenerateGeometry("mirror axis is undefined");
  axis.normalize();
  const Eigen::Matrix2d reflect = 2.0 * axis * axis.transpose() - Eigen::Matrix2d::Identity();
  Positions2 out = positions.rowwise() - origin;
  out = out * reflect.transpose();
  return out.rowwise() + origin;
}

int flip_vote(const Positions2& positions, const std::vector<std::optional<FlipEvidence>>& evidence) {
  const double x0 = positions(kLeader, 0), y0 = positions(kLeader, 1);
  const double x1 = positions(kPointed, 0), y1 = positions(kPointed, 1);
  int vote = 0;
  for (std::size_t i = 2; i < evidence.size() && i < static_cast<std::size_t>(positions.rows()); ++i) {
    if (!evidence[i]) continue;
    const auto row = static_cast<Eigen::Index>(i);
    const double side = (positions(row, 0) - x0) * (y1 - y0) - (positions(row, 1) - y0) * (x1 - x0);
    vote += sgn(evidence[i]->m - evidence[i]->n) * sgn(side);
  }
  return vote;
}

FlipResult resolve_flip(const Positions2& positions, const std::vector<std::optional<FlipEvidence>>& evidence) {
  const int direct = flip_vote(positions, evidence);
  Positions2 mirrored = mirror(positions);
  const int reflected = flip_vote(mirrored, evidence);
  if (reflected > direct) return {std::move(mirrored), reflected, true};
  return {positions, direct, direct != reflected};
}

Positions3 lift_3d(const Positions2& positions, const Vector& depths) {
  if (depths.size() != positions.rows()) throw DomainError("lift_3d: depth count mismatch");
  Positions3 out(positions.rows(), 3);
  out.leftCols<2>() = positions;
  out.col(2) = depths;
  return out;
}

Solution solve(const TopologyProblem& problem, const SolverOptions& options) {
  validate(problem);
  const auto n = static_cast<Eigen::Index>(problem.size());
  if (n < 2) throw DomainError("solve needs at least a leader and a pointed device");

  Solution solution;
  const auto projection = project_2d(problem.distances, problem.depths);
  for (const Link& l : projection.clamped) {
    if (problem.weights(static_cast<Eigen::Index>(l.i), static_cast<Eigen::Index>(l.j)) > 0.0) {
      solution.clamped_links.push_back(l);
    }
  }

  // Devices without any link are left out of the embedding.
  std::vector<Eigen::Index> active;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (problem.weights.row(i).sum() > 0.0 || i <= static_cast<Eigen::Index>(kPointed)) {
      active.push_back(i);
    } else {
      solution.unlocalized.push_back(static_cast<std::size_t>(i));
    }
  }
  const auto m = static_cast<Eigen::Index>(active.size());
  Matrix d2d(m, m), w(m, m);
  std::vector<std::optional<FlipEvidence>> evidence(static_cast<std::size_t>(m));
  for (Eigen::Index a = 0; a < m; ++a) {
    for (Eigen::Index b = 0; b < m; ++b) {
      d2d(a, b) = projection.d2d(active[a], active[b]);
      w(a, b) = problem.weights(active[a], active[b]);
    }
    if (!problem.flip_evidence.empty()) evidence[static_cast<std::size_t>(a)] = problem.flip_evidence[static_cast<std::size_t>(active[a])];
  }
  if (!is_connected(w)) throw GraphError("link graph is disconnected; solve each component separately");

  solution.realizable = is_uniquely_realizable(w);
  Positions2 planar;
  if (solution.realizable) {
    auto outliers = detect_outliers(d2d, w, options);
    planar = std::move(outliers.positions);
    solution.dropped_links.reserve(outliers.dropped_links.size());
    for (const Link& l : outliers.dropped_links) {
      solution.dropped_links.push_back({static_cast<std::size_t>(active[l.i]), static_cast<std::size_t>(active[l.j])});
    }
    solution.stress_m = outliers.stress_m;
  } else {
    planar = smacof(d2d, w, std::nullopt, options.tol, options.max_iter).positions;
    solution.stress_m = normalized_stress(planar, d2d, w);
  }

  const auto aligned = align_rotation(planar, problem.leader_heading);
  const auto flipped = resolve_flip(aligned, evidence);
  solution.flip_vote = flipped.vote;
  solution.flip_confident = flipped.confident;

  Vector active_depths(m);
  for (Eigen::Index a = 0; a < m; ++a) active_depths(a) = problem.depths(active[a]);
  const auto lifted = lift_3d(flipped.positions, active_depths);

  solution.positions_3d = Positions3::Constant(n, 3, std::numeric_limits<double>::quiet_NaN());
  for (Eigen::Index a = 0; a < m; ++a) solution.positions_3d.row(active[a]) = lifted.row(a);
  return solution;
}

}  // namespace aqualoc::topology
