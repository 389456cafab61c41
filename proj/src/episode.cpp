#include "splatsim/episode.hpp"

#include <atomic>
#include <cstdio>
#include <fstream>
#include <mutex>
#include <thread>

#include <nlohmann/json.hpp>

#include "splatsim/error.hpp"
#include "splatsim/random.hpp"

namespace splatsim {

using nlohmann::json;

namespace {

std::string hex(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t unhex(const std::string& s) { return std::stoull(s, nullptr, 16); }

json action_json(const Action& a) {
  return {{"mode", to_string(a.mode)}, {"payload", a.payload}, {"gripper", a.gripper}};
}

Action action_from(const json& j) {
  Action a;
  a.mode = action_mode_from_string(j.at("mode").get<std::string>());
  a.payload = j.at("payload").get<std::vector<double>>();
  a.gripper = j.at("gripper").get<double>();
  return a;
}

EpisodeOutcome outcome_of(const EpisodeLog& log, Domain domain,
                          std::vector<double> trace) {
  EpisodeOutcome o;
  o.policy = log.policy;
  o.checkpoint = log.checkpoint;
  o.episode = log.initial.episode;
  o.domain = domain;
  o.success = log.success;
  o.faulted = log.faulted;
  o.fault = log.fault;
  o.trajectory_hash = log.trajectory_hash;
  o.trace = std::move(trace);
  return o;
}

}  // namespace

void save_episode_log(const EpisodeLog& log, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  const json header = {{"type", "header"},
                       {"format", log.format},
                       {"scenario", log.scenario},
                       {"scenario_version", log.scenario_version},
                       {"config_hash", log.config_hash},
                       {"code_version", log.code_version},
                       {"policy", log.policy},
                       {"checkpoint", log.checkpoint},
                       {"seed", hex(log.seed)},
                       {"initial", json::parse(to_json(log.initial))}};
  out << header.dump() << '\n';
  for (const FrameRecord& f : log.frames) {
    json j = {{"type", "frame"},       {"frame", f.frame},
              {"action", action_json(f.action)},
              {"joints", f.joints},    {"opening", f.opening},
              {"criterion", f.criterion}, {"hash", hex(f.hash)}};
    if (!f.particles.empty()) {
      json pts = json::array();
      for (const Vec3& p : f.particles) pts.push_back({p.x(), p.y(), p.z()});
      j["particles"] = std::move(pts);
    }
    out << j.dump() << '\n';
  }
  const json result = {{"type", "result"},
                       {"success", log.success},
                       {"faulted", log.faulted},
                       {"fault", log.fault},
                       {"trajectory_hash", log.trajectory_hash}};
  out << result.dump() << '\n';
}

EpisodeLog load_episode_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  EpisodeLog log;
  std::string line;
  int lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      const std::string type = j.at("type").get<std::string>();
      if (type == "header") {
        log.format = j.at("format").get<std::string>();
        if (log.format != kLogFormat)
          throw SchemaError("unsupported log format '" + log.format + "'");
        log.scenario = j.at("scenario").get<std::string>();
        log.scenario_version = j.at("scenario_version").get<std::string>();
        log.config_hash = j.at("config_hash").get<std::string>();
        log.code_version = j.value("code_version", "");
        log.policy = j.at("policy").get<std::string>();
        log.checkpoint = j.value("checkpoint", "");
        log.seed = unhex(j.at("seed").get<std::string>());
        log.initial = initial_state_from_json(j.at("initial").dump());
        header = true;
      } else if (type == "frame") {
        FrameRecord f;
        f.frame = j.at("frame").get<int>();
        f.action = action_from(j.at("action"));
        f.joints = j.at("joints").get<std::vector<double>>();
        f.opening = j.at("opening").get<double>();
        f.criterion = j.at("criterion").get<double>();
        f.hash = unhex(j.at("hash").get<std::string>());
        if (j.contains("particles"))
          for (const json& p : j.at("particles"))
            f.particles.emplace_back(p.at(0).get<double>(), p.at(1).get<double>(),
                                     p.at(2).get<double>());
        log.frames.push_back(std::move(f));
      } else if (type == "result") {
        log.success = j.at("success").get<bool>();
        log.faulted = j.at("faulted").get<bool>();
        log.fault = j.value("fault", "");
        log.trajectory_hash = j.at("trajectory_hash").get<std::string>();
      } else {
        throw SchemaError("unknown record type '" + type + "'");
      }
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    } catch (const SchemaError& e) {
      throw SchemaError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  if (!header) throw SchemaError(path.string() + ": missing header record");
  return log;
}

std::uint64_t episode_seed(std::uint64_t seed, const std::string& episode) {
  Fnv1a h;
  h.add(episode);
  return mix_seed(seed, h.value());
}

namespace {

void append_frame(EpisodeLog& log, const Environment& env, const Action& a,
                  const StepInfo& info, int stride) {
  FrameRecord f;
  f.frame = info.frame;
  f.action = a;
  f.joints = env.joints();
  f.opening = env.opening();
  const auto trace = env.criterion_trace();
  f.criterion = trace.empty() ? 0.0 : trace.back();
  f.hash = info.trajectory_hash;
  if (stride > 0 && info.frame % stride == 0) f.particles = env.model().x;
  log.frames.push_back(std::move(f));
}

void finish(EpisodeLog& log, const Environment& env) {
  if (!log.faulted) log.success = env.verdict().success;
  log.trajectory_hash = env.trajectory_hash_hex();
}

}  // namespace

EpisodeResult run_episode(Environment& env, Policy& policy,
                          const InitialState& initial, const RunOptions& opt) {
  EpisodeLog log;
  log.scenario = env.scenario().name;
  log.scenario_version = env.scenario().version;
  log.config_hash = env.scenario().config_hash;
  log.policy = opt.policy_label.empty() ? policy.name() : opt.policy_label;
  log.checkpoint = opt.checkpoint;
  log.seed = episode_seed(opt.seed, initial.episode);
  log.initial = initial;
  try {
    Observation obs = env.reset(initial);
    policy.begin(env, initial, log.seed);
    while (!env.done()) {
      const std::vector<Action> chunk = policy.act(obs, env);
      if (chunk.empty()) throw PolicyFault("policy returned no actions");
      for (const Action& a : chunk) {
        if (env.done()) break;
        auto [next, info] = env.step(a);
        append_frame(log, env, a, info, opt.particle_stride);
        obs = std::move(next);
      }
    }
  } catch (const Error& e) {
    log.faulted = true;
    log.fault = e.what();
    log.success = false;
  }
  finish(log, env);
  return {outcome_of(log, Domain::kSim, env.criterion_trace()), log};
}

EpisodeResult replay_episode(Environment& env, const EpisodeLog& src, Domain domain) {
  const Scenario& sc = env.scenario();
  if (src.scenario != sc.name || src.scenario_version != sc.version)
    throw InvalidArgument("log was written for scenario " + src.scenario + " v" +
                          src.scenario_version + ", got " + sc.name + " v" + sc.version);
  EpisodeLog log = src;
  log.frames.clear();
  log.faulted = false;
  log.fault.clear();
  log.config_hash = sc.config_hash;
  log.code_version = SPLATSIM_VERSION;
  try {
    env.reset(src.initial);
    for (const FrameRecord& f : src.frames) {
      if (env.done()) break;
      const auto [obs, info] = env.step(f.action);
      append_frame(log, env, f.action, info, 0);
    }
  } catch (const Error& e) {
    log.faulted = true;
    log.fault = e.what();
    log.success = false;
  }
  finish(log, env);
  return {outcome_of(log, domain, env.criterion_trace()), log};
}

std::vector<EpisodeResult> run_batch(const Scenario& scenario,
                                     const EnvOptions& env_options,
                                     const PolicyFactory& make,
                                     const std::vector<InitialState>& states,
                                     const RunOptions& opt, int workers) {
  if (workers < 1) throw InvalidArgument("workers must be >= 1");
  std::vector<EpisodeResult> results(states.size());
  std::atomic<std::size_t> next{0};
  std::mutex error_mutex;
  std::string build_error;

  auto work = [&] {
    std::optional<Environment> env;
    try {
      env.emplace(scenario, env_options);
    } catch (const std::exception& e) {
      std::lock_guard lock(error_mutex);
      build_error = e.what();
      return;
    }
    for (std::size_t i = next++; i < states.size(); i = next++) {
      std::unique_ptr<Policy> policy;
      try {
        policy = make(states[i]);
      } catch (const Error& e) {
        EpisodeLog log;
        log.scenario = scenario.name;
        log.initial = states[i];
        log.faulted = true;
        log.fault = e.what();
        results[i] = {outcome_of(log, Domain::kSim, {}), log};
        continue;
      }
      results[i] = run_episode(*env, *policy, states[i], opt);
    }
  };

  const int n = std::min<int>(workers, static_cast<int>(std::max<std::size_t>(states.size(), 1)));
  if (n == 1) {
    work();
  } else {
    std::vector<std::jthread> pool;
    for (int w = 0; w < n; ++w) pool.emplace_back(work);
  }
  if (!build_error.empty()) throw Error("environment construction failed: " + build_error);
  return results;
}

}  // namespace splatsim
