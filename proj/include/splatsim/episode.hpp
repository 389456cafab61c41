#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "splatsim/env.hpp"
#include "splatsim/metrics.hpp"
#include "splatsim/policy.hpp"

namespace splatsim {

inline constexpr const char* kLogFormat = "splatsim-episode/1";

struct FrameRecord {
  int frame = 0;
  Action action;
  std::vector<double> joints;
  double opening = 0.0;
  double criterion = 0.0;
  std::uint64_t hash = 0;
  std::vector<Vec3> particles;  // empty unless recorded at this frame
};

// Everything needed to re-execute an episode and check the result.
struct EpisodeLog {
  std::string format = kLogFormat;
  std::string scenario;
  std::string scenario_version;
  std::string config_hash;
  std::string code_version = SPLATSIM_VERSION;
  std::string policy;
  std::string checkpoint;
  std::uint64_t seed = 0;
  InitialState initial;
  std::vector<FrameRecord> frames;
  bool success = false;
  bool faulted = false;
  std::string fault;
  std::string trajectory_hash;
};

void save_episode_log(const EpisodeLog& log, const std::filesystem::path& path);
EpisodeLog load_episode_log(const std::filesystem::path& path);

struct RunOptions {
  std::uint64_t seed = 0;
  std::string checkpoint;
  int particle_stride = 0;  // record particles every n frames; 0 never
  std::string policy_label;  // defaults to policy.name()
};

struct EpisodeResult {
  EpisodeOutcome outcome;
  EpisodeLog log;
};

std::uint64_t episode_seed(std::uint64_t seed, const std::string& episode);

// Runs to the horizon. Faults (reset, simulation, policy) end the episode
// and are recorded rather than thrown.
EpisodeResult run_episode(Environment& env, Policy& policy,
                          const InitialState& initial, const RunOptions& opt);

// Re-executes the logged actions. Throws InvalidArgument when the log was
// written for a different scenario name or version.
EpisodeResult replay_episode(Environment& env, const EpisodeLog& log,
                             Domain domain = Domain::kReplay);

using PolicyFactory = std::function<std::unique_ptr<Policy>(const InitialState&)>;

// Worker pool of independent environments; results come back in the order
// of `states` regardless of scheduling.
std::vector<EpisodeResult> run_batch(const Scenario& scenario,
                                     const EnvOptions& env_options,
                                     const PolicyFactory& make,
                                     const std::vector<InitialState>& states,
                                     const RunOptions& opt, int workers);

}  // namespace splatsim
