#include "aqualoc/montecarlo.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numbers>
#include <random>
#include <thread>

#include <fmt/format.h>

#include "aqualoc/error.hpp"

namespace aqualoc::montecarlo {
namespace {

constexpr int kDropAttempts = 200;
constexpr int kPlacementAttempts = 50;
constexpr double kMinPointedHorizontal = 2.0;
constexpr double kMicHalfSpacing = 0.08;

std::uint64_t splitmix(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

topology::Positions3 place(const ScenarioConfig& cfg, std::mt19937_64& rng) {
  const auto n = static_cast<Eigen::Index>(cfg.n_devices);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  topology::Positions3 p(n, 3);
  p.row(0) << 0.5 * cfg.space.x(), 0.5 * cfg.space.y(), unit(rng) * cfg.space.z();
  while (true) {
    const double r = cfg.min_pointed_m + unit(rng) * (cfg.max_pointed_m - cfg.min_pointed_m);
    const double z = unit(rng) * cfg.space.z();
    const double dz = z - p(0, 2);
    const double horiz_sq = r * r - dz * dz;
    if (horiz_sq < kMinPointedHorizontal * kMinPointedHorizontal) continue;
    const double angle = unit(rng) * 2.0 * std::numbers::pi;
    const double horiz = std::sqrt(horiz_sq);
    p.row(1) << p(0, 0) + horiz * std::cos(angle), p(0, 1) + horiz * std::sin(angle), z;
    break;
  }
  for (Eigen::Index i = 2; i < n; ++i) {
    p.row(i) << unit(rng) * cfg.space.x(), unit(rng) * cfg.space.y(), unit(rng) * cfg.space.z();
  }
  return p;
}

}  // namespace

void validate(const ScenarioConfig& cfg) {
  if (cfg.n_devices < 3) throw DomainError("scenarios need at least three devices");
  if (!(cfg.space.array() > 0.0).all()) throw DomainError("space extents must be positive");
  if (cfg.eps_1d < 0.0 || cfg.eps_h < 0.0 || cfg.eps_theta_deg < 0.0 || cfg.outlier_magnitude < 0.0) {
    throw DomainError("error half-widths must be non-negative");
  }
  if (cfg.evidence_corruption < 0.0 || cfg.evidence_corruption > 1.0) {
    throw DomainError("evidence corruption is a probability");
  }
  if (!(cfg.min_pointed_m > kMinPointedHorizontal && cfg.max_pointed_m >= cfg.min_pointed_m)) {
    throw DomainError("pointed-device distance range is invalid");
  }
  const std::size_t links = cfg.n_devices * (cfg.n_devices - 1) / 2;
  if (cfg.link_drops + cfg.outlier_count > links) throw DomainError("more drops and outliers than links");
  if (cfg.trials == 0) throw DomainError("trials must be positive");
}

Scenario generate_scenario(const ScenarioConfig& cfg, std::size_t trial) {
  validate(cfg);
  std::mt19937_64 rng(splitmix(cfg.seed ^ splitmix(trial)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto symmetric = [&](double half) { return half * (2.0 * unit(rng) - 1.0); };

  const auto n = static_cast<Eigen::Index>(cfg.n_devices);
  for (int placement = 0; placement < kPlacementAttempts; ++placement) {
    Scenario s;
    s.truth = place(cfg, rng);

    topology::Matrix w = topology::Matrix::Ones(n, n);
    w.diagonal().setZero();
    std::vector<topology::Link> links;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) links.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j)});
    }
    bool ok = cfg.link_drops == 0;
    for (int attempt = 0; attempt < kDropAttempts && !ok; ++attempt) {
      std::vector<topology::Link> shuffled = links;
      std::shuffle(shuffled.begin(), shuffled.end(), rng);
      topology::Matrix trial_w = w;
      for (std::size_t k = 0; k < cfg.link_drops; ++k) {
        const auto [i, j] = shuffled[k];
        trial_w(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = 0.0;
        trial_w(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = 0.0;
      }
      if (topology::is_uniquely_realizable(trial_w)) {
        w = trial_w;
        s.dropped_links.assign(shuffled.begin(), shuffled.begin() + static_cast<std::ptrdiff_t>(cfg.link_drops));
        std::sort(s.dropped_links.begin(), s.dropped_links.end());
        ok = true;
      }
    }
    if (!ok) continue;

    topology::Matrix d = topology::Matrix::Zero(n, n);
    std::vector<topology::Link> kept;
    for (Eigen::Index i = 0; i < n; ++i) {
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double noisy = std::max(0.0, (s.truth.row(i) - s.truth.row(j)).norm() + symmetric(cfg.eps_1d));
        if (w(i, j) > 0.0) {
          d(i, j) = d(j, i) = noisy;
          kept.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j)});
        }
      }
    }
    std::shuffle(kept.begin(), kept.end(), rng);
    for (std::size_t k = 0; k < cfg.outlier_count; ++k) {
      const auto [i, j] = kept[k];
      const auto a = static_cast<Eigen::Index>(i), b = static_cast<Eigen::Index>(j);
      d(a, b) = d(b, a) = d(a, b) + cfg.outlier_magnitude;
      s.planted_outliers.push_back(kept[k]);
    }
    std::sort(s.planted_outliers.begin(), s.planted_outliers.end());

    topology::Vector depths(n);
    for (Eigen::Index i = 0; i < n; ++i) depths(i) = s.truth(i, 2) + symmetric(cfg.eps_h);

    // True bearing from the leader to the pointed device, then pointing error.
    const Eigen::Vector2d to_pointed = (s.truth.block<1, 2>(1, 0) - s.truth.block<1, 2>(0, 0)).transpose();
    const double bearing = std::atan2(to_pointed.y(), to_pointed.x());
    const double pointing = bearing + symmetric(cfg.eps_theta_deg) * std::numbers::pi / 180.0;

    // Leader microphones sit across the true bearing.
    const Eigen::Vector2d left_dir(-std::sin(bearing), std::cos(bearing));
    const Eigen::Vector2d leader = s.truth.block<1, 2>(0, 0).transpose();
    std::vector<std::optional<topology::FlipEvidence>> evidence(static_cast<std::size_t>(n));
    for (Eigen::Index i = 2; i < n; ++i) {
      const Eigen::Vector2d q = s.truth.block<1, 2>(i, 0).transpose();
      topology::FlipEvidence ev{(q - (leader + kMicHalfSpacing * left_dir)).norm(),
                                (q - (leader - kMicHalfSpacing * left_dir)).norm()};
      if (unit(rng) < cfg.evidence_corruption) std::swap(ev.m, ev.n);
      evidence[static_cast<std::size_t>(i)] = ev;
    }

    s.problem = {d, w, depths, {std::cos(pointing), std::sin(pointing)}, std::move(evidence)};
    return s;
  }
  throw DomainError(fmt::format("could not place {} devices with {} drops and keep the graph uniquely realizable",
                                cfg.n_devices, cfg.link_drops));
}

double TrialOutcome::mean_error() const {
  if (errors.empty()) return 0.0;
  double sum = 0.0;
  for (double e : errors) sum += e;
  return sum / static_cast<double>(errors.size());
}

TrialOutcome evaluate(const Scenario& scenario, const topology::SolverOptions& solver) {
  TrialOutcome out;
  topology::Solution sol;
  try {
    sol = topology::solve(scenario.problem, solver);
  } catch (const Error&) {
    return out;
  }
  out.solved = true;
  out.dropped_links = sol.dropped_links;
  const topology::Positions2 truth =
      scenario.truth.leftCols<2>().rowwise() - scenario.truth.block<1, 2>(0, 0);
  const topology::Positions2 est = sol.positions_3d.leftCols<2>();
  const topology::Positions2 other = topology::mirror(est);
  double err = 0.0, err_mirror = 0.0;
  for (Eigen::Index i = 1; i < truth.rows(); ++i) {
    const double e = (est.row(i) - truth.row(i)).norm();
    out.errors.push_back(e);
    err += e;
    err_mirror += (other.row(i) - truth.row(i)).norm();
  }
  out.flip_correct = err <= err_mirror;
  return out;
}

void set_parameter(ScenarioConfig& cfg, const std::string& name, double value) {
  auto count = [&]() {
    if (value < 0.0 || value != std::floor(value)) throw DomainError(fmt::format("{} must be a whole number", name));
    return static_cast<std::size_t>(value);
  };
  if (name == "eps_1d") cfg.eps_1d = value;
  else if (name == "eps_h") cfg.eps_h = value;
  else if (name == "eps_theta") cfg.eps_theta_deg = value;
  else if (name == "n_devices") cfg.n_devices = count();
  else if (name == "link_drops") cfg.link_drops = count();
  else if (name == "outliers") cfg.outlier_count = count();
  else if (name == "evidence_corruption") cfg.evidence_corruption = value;
  else throw DomainError(fmt::format("unknown sweep parameter '{}'", name));
}

SweepRow run_point(const ScenarioConfig& cfg, unsigned jobs) {
  validate(cfg);
  std::vector<TrialOutcome> outcomes(cfg.trials);
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    for (std::size_t t = next++; t < cfg.trials; t = next++) {
      outcomes[t] = evaluate(generate_scenario(cfg, t), cfg.solver);
    }
  };
  const unsigned threads = std::clamp(jobs, 1u, static_cast<unsigned>(cfg.trials));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned k = 0; k < threads; ++k) pool.emplace_back(worker);
  }

  SweepRow row;
  row.trials = cfg.trials;
  double sum = 0.0, sq = 0.0;
  std::size_t count = 0;
  for (const auto& o : outcomes) {
    if (!o.solved) {
      ++row.failures;
      continue;
    }
    for (double e : o.errors) {
      sum += e;
      sq += e * e;
      ++count;
    }
  }
  if (count > 0) {
    row.mean_error_m = sum / static_cast<double>(count);
    row.std_error_m = std::sqrt(std::max(0.0, sq / static_cast<double>(count) - row.mean_error_m * row.mean_error_m));
  }
  return row;
}

std::vector<SweepRow> run_sweep(const ScenarioConfig& cfg, const std::string& parameter,
                                const std::vector<double>& values, unsigned jobs) {
  std::vector<SweepRow> rows;
  for (double v : values) {
    ScenarioConfig point = cfg;
    set_parameter(point, parameter, v);
    SweepRow row = run_point(point, jobs);
    row.value = v;
    rows.push_back(row);
  }
  return rows;
}

std::string to_csv(const std::vector<SweepRow>& rows) {
  std::string out = "param,mean_error_m,std_error_m,trials\n";
  for (const auto& r : rows) {
    out += fmt::format("{},{:.6f},{:.6f},{}\n", r.value, r.mean_error_m, r.std_error_m, r.trials);
  }
  return out;
}

}  // namespace aqualoc::montecarlo
