#include "aqualoc/cli.hpp"

#include <cmath>
#include <cstdlib>
#include <optional>
#include <string>
#include <thread>

#include <CLI11.hpp>
#include <fmt/format.h>

#include "aqualoc/detect.hpp"
#include "aqualoc/error.hpp"
#include "aqualoc/montecarlo.hpp"
#include "aqualoc/physics.hpp"
#include "aqualoc/protocol.hpp"
#include "aqualoc/serialize.hpp"
#include "aqualoc/topology.hpp"
#include "aqualoc/wav.hpp"
#include "aqualoc/waveform.hpp"

namespace aqualoc::cli {
namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string speed_text(double c) {
  const double rounded = std::round(c * 1e6) / 1e6;
  std::string s = fmt::format("{}", rounded);
  if (s.find_first_of(".e") == std::string::npos) s += ".0";
  return s;
}

std::uint64_t resolve_seed(const std::optional<std::uint64_t>& flag, const std::optional<std::uint64_t>& file) {
  if (flag) return *flag;
  if (const char* env = std::getenv("AQUALOC_SEED"); env && *env) {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (*end != '\0' || env[0] == '-') throw UsageError(fmt::format("AQUALOC_SEED='{}' is not a seed", env));
    return v;
  }
  return file.value_or(1);
}

void emit(std::ostream& out, const std::optional<std::string>& path, const std::string& text) {
  if (path) {
    io::write_text(*path, text);
  } else {
    out << text;
  }
}

std::vector<double> parse_values(const std::string& list) {
  std::vector<double> values;
  std::stringstream ss(list);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      values.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::logic_error&) {
      throw UsageError(fmt::format("'{}' is not a number", item));
    }
  }
  if (values.empty()) throw UsageError("--values needs at least one number");
  return values;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Anchor-free underwater acoustic positioning toolkit", "aqualoc"};
  app.require_subcommand(1);

  auto* speed = app.add_subcommand("speed", "Sound speed from temperature, salinity and depth");
  physics::WaterParams water;
  speed->add_option("--t", water.temperature_c, "Temperature, degrees C")->required();
  speed->add_option("--s", water.salinity_ppt, "Salinity, ppt")->required();
  speed->add_option("--d", water.depth_m, "Depth, m")->required();

  auto* preamble = app.add_subcommand("preamble", "Write the ZC-OFDM preamble as 16-bit PCM");
  std::string preamble_out;
  waveform::PreambleConfig pre_cfg;
  preamble->add_option("--out", preamble_out, "Output WAV path")->required();
  preamble->add_option("--fs", pre_cfg.fs, "Sample rate, Hz");
  preamble->add_option("--root", pre_cfg.zc_root, "Zadoff-Chu root");

  auto* detect = app.add_subcommand("detect", "Find a preamble and its direct path in a WAV capture");
  std::string wav_path;
  std::optional<std::string> channel_csv;
  detect::PipelineOptions pipeline;
  detect->add_option("wav", wav_path, "Mono or stereo (right, left) capture")->required();
  detect->add_option("--c", pipeline.direct.c, "Sound speed, m/s");
  detect->add_option("--mic-distance", pipeline.direct.mic_distance_m, "Microphone spacing, m");
  detect->add_option("--channel-csv", channel_csv, "Write the microphone-1 channel estimate here");

  auto* proto = app.add_subcommand("protocol", "Simulate one timestamp-protocol round");
  std::string scenario_path;
  std::optional<std::uint64_t> seed_flag;
  std::string fidelity = "timestamp";
  std::optional<std::string> events_out, distances_out, problem_out;
  proto->add_option("scenario", scenario_path, "Scenario JSON")->required();
  proto->add_option("--seed", seed_flag, "Seed (falls back to AQUALOC_SEED, then the scenario)");
  proto->add_option("--fidelity", fidelity, "timestamp or audio")->check(CLI::IsMember({"timestamp", "audio"}));
  proto->add_option("--events", events_out, "Event log JSON path");
  proto->add_option("--distances", distances_out, "Distance matrix CSV path (stdout if omitted)");
  proto->add_option("--problem", problem_out, "Write the topology problem JSON here");

  auto* solve = app.add_subcommand("solve", "Solve a topology problem");
  std::string problem_path;
  std::optional<std::string> solution_out;
  bool allow_nonunique = false;
  std::string solver_config;
  solve->add_option("problem", problem_path, "Problem JSON")->required();
  solve->add_option("--out", solution_out, "Solution JSON path (stdout if omitted)");
  solve->add_option("--config", solver_config, "Scenario JSON whose solver section to use");
  solve->add_flag("--allow-nonunique", allow_nonunique, "Solve even when the graph is not uniquely realizable");

  auto* mc = app.add_subcommand("montecarlo", "Run a Monte-Carlo sweep");
  std::string sweep_param, sweep_values;
  unsigned jobs = 1;
  std::optional<std::string> csv_out;
  std::optional<std::size_t> trials;
  mc->add_option("scenario", scenario_path, "Scenario JSON")->required();
  mc->add_option("--sweep", sweep_param, "eps_1d, eps_h, eps_theta, n_devices, link_drops, outliers, evidence_corruption")
      ->required();
  mc->add_option("--values", sweep_values, "Comma-separated values")->required();
  mc->add_option("--jobs", jobs, "Worker threads")->check(CLI::Range(1u, 256u));
  mc->add_option("--trials", trials, "Trials per point");
  mc->add_option("--seed", seed_flag, "Seed (falls back to AQUALOC_SEED, then the scenario)");
  mc->add_option("--out", csv_out, "CSV path (stdout if omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (speed->parsed()) {
      out << speed_text(physics::sound_speed(water)) << '\n';
    } else if (preamble->parsed()) {
      const auto samples = waveform::generate_preamble(pre_cfg);
      io::write_wav(preamble_out, {pre_cfg.fs, {samples}});
      out << fmt::format("wrote {} samples to {}\n", samples.size(), preamble_out);
    } else if (detect->parsed()) {
      const auto audio = io::read_wav(wav_path);
      if (audio.channels.size() > 2) throw DomainError("captures must be mono or stereo");
      waveform::PreambleConfig cfg;
      cfg.fs = audio.sample_rate;
      pipeline.direct.fs = audio.sample_rate;
      const auto& mic1 = audio.channels[0];
      const auto& mic2 = audio.channels.size() == 2 ? audio.channels[1] : audio.channels[0];
      const auto ranging = detect::range_dual_mic(mic1, mic2, cfg, pipeline);
      if (!ranging) {
        out << "no detection\n";
        return kExitOk;
      }
      io::Json report{{"detected", true},
                      {"offset_samples", ranging->arrival_index},
                      {"peak_index", ranging->detection.peak_index},
                      {"coarse_index", ranging->detection.coarse_index},
                      {"autocorrelation", ranging->detection.score},
                      {"direct_path", {{"n", ranging->path.n}, {"m", ranging->path.m}, {"tau_los", ranging->path.tau_los}}},
                      {"noise_floor", {ranging->h1.noise_floor, ranging->h2.noise_floor}}};
      out << report.dump(2) << '\n';
      if (channel_csv) io::write_text(*channel_csv, detect::channel_csv(ranging->h1));
    } else if (proto->parsed()) {
      const auto scenario = io::scenario_from_json(io::read_json(scenario_path));
      if (scenario.devices.size() < 2) throw DomainError("the scenario needs at least two devices");
      const auto mode = fidelity == "audio" ? protocol::Fidelity::audio : protocol::Fidelity::timestamp;
      const auto round = protocol::run_round(scenario.devices, scenario.environment, scenario.slots,
                                             resolve_seed(seed_flag, scenario.seed), mode);
      for (std::size_t id : round.silent) {
        err << fmt::format("warning: device {} never synchronized; its links are missing\n", id);
      }
      const auto problem = protocol::build_problem(round, scenario.devices, scenario.sound_speed);
      if (events_out) {
        const auto log = io::to_json(round);
        io::validate_event_log(log);
        io::write_text(*events_out, log.dump(2) + "\n");
      }
      if (problem_out) {
        const auto doc = io::to_json(problem);
        io::problem_from_json(doc);
        io::write_text(*problem_out, doc.dump(2) + "\n");
      }
      const std::string csv = io::distance_csv(problem.distances, problem.weights);
      if (distances_out) io::write_text(*distances_out, csv);
      out << fmt::format("round_time_s: {:.3f}\n", round.completion_time);
      out << fmt::format("global_round_time_s: {:.3f}\n", round.global_completion_time);
      if (!distances_out) out << csv;
    } else if (solve->parsed()) {
      const auto problem = io::problem_from_json(io::read_json(problem_path));
      topology::SolverOptions opts;
      if (!solver_config.empty()) opts = io::scenario_from_json(io::read_json(solver_config)).solver;
      const auto solution = topology::solve(problem, opts);
      if (!solution.realizable && !allow_nonunique) {
        throw GraphError(
            "link graph is not uniquely realizable (needs redundant rigidity and 3-connectivity); "
            "rerun with --allow-nonunique to accept an ambiguous layout");
      }
      const auto doc = io::to_json(solution);
      io::validate_solution(doc);
      emit(out, solution_out, doc.dump(2) + "\n");
    } else if (mc->parsed()) {
      auto scenario = io::scenario_from_json(io::read_json(scenario_path));
      auto cfg = scenario.sweep;
      cfg.seed = resolve_seed(seed_flag, scenario.seed);
      if (trials) cfg.trials = *trials;
      const auto rows = montecarlo::run_sweep(cfg, sweep_param, parse_values(sweep_values), jobs);
      for (const auto& r : rows) {
        if (r.failures > 0) err << fmt::format("warning: {} of {} trials failed at {}={}\n", r.failures, r.trials, sweep_param, r.value);
      }
      emit(out, csv_out, montecarlo::to_csv(rows));
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitDomain;
  }
  return kExitOk;
}

}  // namespace aqualoc::cli
