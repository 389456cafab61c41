// splatsim command-line driver: batch evaluation, replay, alignment tools,
// system identification, debug rendering and reporting.

#include <atomic>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "splatsim/alignment.hpp"
#include "splatsim/episode.hpp"
#include "splatsim/error.hpp"
#include "splatsim/metrics.hpp"
#include "splatsim/policy.hpp"
#include "splatsim/random.hpp"
#include "splatsim/renderer.hpp"
#include "splatsim/scenario.hpp"
#include "splatsim/twin.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace splatsim;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitError = 1;
constexpr int kExitPartial = 2;

std::string read_text(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    throw ParseError(path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

json provenance(const std::string& config_hash) {
  return {{"config_hash", config_hash}, {"code_version", SPLATSIM_VERSION}};
}

fs::path resolve(const fs::path& base, const std::string& p) {
  const fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

// --- Scores shared by eval and report. ---

json score_json(const PolicyScore& s) {
  const auto [lo, hi] = clopper_pearson(s.successes, s.trials);
  const BetaPosterior post = beta_posterior(s.successes, s.trials);
  json q = json::object();
  for (double p : {0.05, 0.25, 0.5, 0.75, 0.95}) {
    char key[8];
    std::snprintf(key, sizeof key, "q%02d", static_cast<int>(p * 100 + 0.5));
    q[key] = beta_quantile(p, post.alpha, post.beta);
  }
  return {{"policy", s.policy},
          {"checkpoint", s.checkpoint},
          {"domain", to_string(s.domain)},
          {"successes", s.successes},
          {"trials", s.trials},
          {"faults", s.faults},
          {"rate", s.rate()},
          {"clopper_pearson_95", {lo, hi}},
          {"posterior", {{"alpha", post.alpha},
                         {"beta", post.beta},
                         {"mean", post.mean},
                         {"interval_95", {post.lo, post.hi}},
                         {"quantiles", q}}}};
}

void print_scores(const std::vector<PolicyScore>& scores) {
  std::printf("%-28s %-12s %-7s %9s %8s %6s  %s\n", "policy", "checkpoint",
              "domain", "succ/n", "rate", "fault", "95% CI");
  for (const PolicyScore& s : scores) {
    const auto [lo, hi] = clopper_pearson(s.successes, s.trials);
    std::printf("%-28s %-12s %-7s %4d/%-4d %8.3f %6d  [%.3f, %.3f]\n",
                s.policy.c_str(), s.checkpoint.c_str(), to_string(s.domain).c_str(),
                s.successes, s.trials, s.rate(), s.faults, lo, hi);
  }
}

// --- eval ---

struct EvalArgs {
  fs::path manifest;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<fs::path> out;
};

PolicySpec policy_from_json(const json& j) {
  PolicySpec p;
  p.kind = j.value("kind", p.kind);
  p.sigma = j.value("sigma", p.sigma);
  p.command = j.value("command", "");
  p.timeout = std::chrono::milliseconds(
      static_cast<long long>(j.value("timeout_s", 30.0) * 1000.0));
  return p;
}

std::vector<InitialState> load_states_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::vector<InitialState> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      out.push_back(initial_state_from_json(line));
    } catch (const Error& e) {
      throw SchemaError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

int cmd_eval(const EvalArgs& args) {
  json manifest = read_json(args.manifest);
  const fs::path base = fs::absolute(args.manifest).parent_path();
  if (!manifest.contains("scenario")) throw SchemaError("manifest needs 'scenario'");

  const fs::path scenario_path = resolve(base, manifest.at("scenario").get<std::string>());
  Scenario scenario = load_scenario(scenario_path);

  const std::uint64_t seed = args.seed ? *args.seed : manifest.value("seed", std::uint64_t{0});
  const int workers = args.workers ? *args.workers : manifest.value("workers", 1);
  const fs::path out = args.out ? *args.out : resolve(base, manifest.value("out", "results"));
  if (workers < 1) throw InvalidArgument("workers must be >= 1");

  const json policy_json = manifest.value("policy", json::object());
  const PolicySpec spec = policy_from_json(policy_json);
  const std::string checkpoint = policy_json.value("checkpoint", "");
  const std::string label = policy_json.value("label", spec.label());

  std::vector<InitialState> states;
  const json source = manifest.value("initial_states", json("grid"));
  if (source.is_string() && source.get<std::string>() == "grid") {
    if (manifest.contains("episodes")) scenario.episodes = manifest.at("episodes").get<int>();
    if (scenario.episodes < 1) throw InvalidArgument("episode count must be >= 1");
    states = sample_initial_grid(scenario);
  } else if (source.is_object() && source.contains("file")) {
    states = load_states_file(resolve(base, source.at("file").get<std::string>()));
    if (manifest.contains("episodes")) {
      const int n = manifest.at("episodes").get<int>();
      if (n < 1) throw InvalidArgument("episode count must be >= 1");
      if (static_cast<std::size_t>(n) < states.size()) states.resize(n);
    }
  } else {
    throw SchemaError("initial_states must be \"grid\" or {\"file\": path}");
  }
  if (states.empty()) throw InvalidArgument("no initial states");

  EnvOptions env_opt;
  env_opt.seed = seed;
  env_opt.render = manifest.value("render", false) || spec.kind == "external";
  if (manifest.contains("substeps")) env_opt.substeps = manifest.at("substeps").get<int>();

  RunOptions run;
  run.seed = seed;
  run.checkpoint = checkpoint;
  run.particle_stride = manifest.value("particle_stride", 0);
  run.policy_label = label;

  fs::create_directories(out / "episodes");
  const PolicyFactory make = [&](const InitialState& s) {
    fs::path images;
    if (spec.kind == "external") {
      images = out / "episodes" / s.episode / "images";
      fs::create_directories(images);
    }
    return make_policy(spec, images);
  };
  const std::vector<EpisodeResult> results =
      run_batch(scenario, env_opt, make, states, run, workers);

  json copy = manifest;
  copy["scenario"] = fs::absolute(scenario_path).lexically_normal().string();
  copy["seed"] = seed;
  copy["workers"] = workers;
  copy["out"] = fs::absolute(out).lexically_normal().string();
  copy["episodes"] = static_cast<int>(states.size());
  copy["provenance"] = provenance(scenario.config_hash);
  write_json(out / "manifest.json", copy);

  std::vector<EpisodeOutcome> outcomes;
  int faults = 0;
  for (const EpisodeResult& r : results) {
    const fs::path dir = out / "episodes" / r.log.initial.episode;
    fs::create_directories(dir);
    save_episode_log(r.log, dir / "log.jsonl");
    outcomes.push_back(r.outcome);
    if (r.outcome.faulted) {
      ++faults;
      std::fprintf(stderr, "episode %s faulted: %s\n", r.outcome.episode.c_str(),
                   r.outcome.fault.c_str());
    }
  }
  save_outcomes(outcomes, out / "outcomes.jsonl");

  const std::vector<PolicyScore> scores = score_outcomes(outcomes);
  json summary = {{"scenario", scenario.name},
                  {"scenario_version", scenario.version},
                  {"episodes", static_cast<int>(outcomes.size())},
                  {"faults", faults},
                  {"scores", json::array()},
                  {"provenance", provenance(scenario.config_hash)}};
  for (const PolicyScore& s : scores) summary["scores"].push_back(score_json(s));
  write_json(out / "summary.json", summary);

  print_scores(scores);
  std::printf("results: %s\n", out.string().c_str());
  return faults ? kExitPartial : kExitOk;
}

// --- replay ---

struct ReplayArgs {
  fs::path input;
  std::optional<fs::path> scenario;
  std::optional<fs::path> truth;
  std::optional<fs::path> out;
  std::optional<double> mu_ground, mu_robot, mu_mesh;
  int workers = 1;
};

int cmd_replay(const ReplayArgs& args) {
  std::vector<fs::path> logs;
  std::optional<fs::path> scenario_path = args.scenario;
  if (fs::is_directory(args.input)) {
    if (!scenario_path) {
      const json m = read_json(args.input / "manifest.json");
      scenario_path = m.at("scenario").get<std::string>();
    }
    for (const auto& e : fs::directory_iterator(args.input / "episodes"))
      if (fs::exists(e.path() / "log.jsonl")) logs.push_back(e.path() / "log.jsonl");
    std::sort(logs.begin(), logs.end());
  } else {
    logs.push_back(args.input);
  }
  if (!scenario_path) throw InvalidArgument("--scenario is required for a single log");
  if (logs.empty()) throw InvalidArgument("no episode logs under " + args.input.string());
  if (args.workers < 1) throw InvalidArgument("workers must be >= 1");

  Scenario scenario = load_scenario(*scenario_path);
  const bool ablation = args.mu_ground || args.mu_robot || args.mu_mesh;
  if (args.mu_ground) scenario.params.friction_mu_ground = *args.mu_ground;
  if (args.mu_robot) scenario.params.friction_mu_robot = *args.mu_robot;
  if (args.mu_mesh) scenario.params.friction_mu_mesh = *args.mu_mesh;

  std::vector<EpisodeLog> originals;
  for (const fs::path& p : logs) originals.push_back(load_episode_log(p));

  std::vector<EpisodeResult> results(originals.size());
  std::atomic<std::size_t> next{0};
  std::vector<std::string> errors(originals.size());
  auto work = [&] {
    Environment env(scenario);
    for (std::size_t i = next++; i < originals.size(); i = next++) {
      try {
        results[i] = replay_episode(env, originals[i]);
      } catch (const Error& e) {
        errors[i] = e.what();
      }
    }
  };
  {
    std::vector<std::jthread> pool;
    const int n = std::min<int>(args.workers, static_cast<int>(originals.size()));
    for (int w = 1; w < n; ++w) pool.emplace_back(work);
    work();
  }
  for (std::size_t i = 0; i < errors.size(); ++i)
    if (!errors[i].empty()) throw InvalidArgument(logs[i].string() + ": " + errors[i]);

  int mismatches = 0, faults = 0;
  std::vector<EpisodeOutcome> outcomes;
  for (std::size_t i = 0; i < results.size(); ++i) {
    const EpisodeOutcome& o = results[i].outcome;
    const std::string& orig = originals[i].trajectory_hash;
    std::string check = "n/a";
    if (!ablation && !orig.empty() && !originals[i].faulted) {
      check = o.trajectory_hash == orig ? "match" : "MISMATCH";
      if (o.trajectory_hash != orig) ++mismatches;
    }
    if (o.faulted) ++faults;
    std::printf("%-12s success=%d faulted=%d hash=%s original=%s %s\n", o.episode.c_str(),
                o.success, o.faulted, o.trajectory_hash.c_str(), orig.c_str(), check.c_str());
    outcomes.push_back(o);
  }

  json report = {{"scenario", scenario.name},
                 {"episodes", static_cast<int>(outcomes.size())},
                 {"hash_mismatches", mismatches},
                 {"ablation", ablation},
                 {"faults", faults},
                 {"provenance", provenance(scenario.config_hash)}};
  if (args.truth) {
    const std::vector<EpisodeOutcome> truth = load_outcomes(*args.truth);
    const Confusion c = replay_confusion(outcomes, truth);
    report["confusion"] = {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}};
    std::printf("confusion (replay x truth): tp=%d fp=%d fn=%d tn=%d\n", c.tp, c.fp, c.fn,
                c.tn);
  }

  const std::optional<fs::path> out =
      args.out ? args.out
               : (fs::is_directory(args.input) ? std::optional(args.input / "replay")
                                               : std::nullopt);
  if (out) {
    fs::create_directories(*out);
    save_outcomes(outcomes, *out / "outcomes.jsonl");
    write_json(*out / "replay.json", report);
  }
  if (mismatches) {
    std::fprintf(stderr, "%d replayed trajectories differ from their logs\n", mismatches);
    return kExitPartial;
  }
  return faults ? kExitPartial : kExitOk;
}

// --- align ---

std::vector<Vec3> load_cloud(const fs::path& path) {
  if (path.extension() == ".ply") {
    std::vector<Vec3> out;
    for (const GaussianKernel& k : load_splat_ply(path).kernels) out.push_back(k.position);
    return out;
  }
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  std::vector<Vec3> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ss(line);
    double x, y, z;
    if (!(ss >> x >> y >> z))
      throw ParseError(path.string() + ":" + std::to_string(lineno) + ": expected x y z");
    out.emplace_back(x, y, z);
  }
  return out;
}

json transform_json(const RigidTransform& t) {
  const Quat q = canonical(t.rotation);
  json m = json::array();
  const Eigen::Matrix4d mat = t.matrix();
  for (int r = 0; r < 4; ++r) m.push_back({mat(r, 0), mat(r, 1), mat(r, 2), mat(r, 3)});
  return {{"translation", {t.translation.x(), t.translation.y(), t.translation.z()}},
          {"rotation_wxyz", {q.w(), q.x(), q.y(), q.z()}},
          {"matrix", m}};
}

struct AlignPoseArgs {
  fs::path src, dst, out = "transform.json";
  int trials = 64;
  double inlier_tol = 0.005;
  bool skip_ransac = false;
  std::uint64_t seed = 0;
};

int cmd_align_pose(const AlignPoseArgs& a) {
  const std::vector<Vec3> src = load_cloud(a.src), dst = load_cloud(a.dst);
  RigidTransform init;
  double inlier_fraction = 1.0;
  if (!a.skip_ransac) {
    RansacOptions ro;
    ro.trials = a.trials;
    ro.inlier_tol = a.inlier_tol;
    ro.seed = a.seed;
    const RansacResult coarse = ransac_coarse_align(src, dst, ro);
    init = coarse.transform;
    inlier_fraction = coarse.inlier_fraction;
    std::printf("coarse: inlier fraction %.4f\n", inlier_fraction);
  }
  const IcpResult fine = icp_refine(src, dst, init);
  std::printf("icp: %d iterations, residual rms %.6e m%s\n", fine.iterations, fine.rms,
              fine.stalled ? " (stalled)" : "");
  json j = transform_json(fine.transform);
  j["rms"] = fine.rms;
  j["ransac_inlier_fraction"] = inlier_fraction;
  j["icp_iterations"] = fine.iterations;
  j["rms_trace"] = fine.rms_trace;
  j["code_version"] = SPLATSIM_VERSION;
  write_json(a.out, j);
  return kExitOk;
}

struct AlignColorArgs {
  std::vector<fs::path> rendered, captured;
  fs::path out = "color.json";
  int degree = 2;
  bool plain = false;
};

int cmd_align_color(const AlignColorArgs& a) {
  if (a.rendered.size() != a.captured.size())
    throw InvalidArgument("--rendered and --captured need the same number of images");
  std::vector<Vec3> p, q;
  for (std::size_t i = 0; i < a.rendered.size(); ++i)
    append_pixel_pairs(load_png(a.rendered[i]), load_png(a.captured[i]), p, q);
  ColorFitOptions opt;
  opt.degree = a.degree;
  opt.robust = !a.plain;
  const ColorFit fit = fit_color_transform(p, q, opt);
  double residual = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    residual += (fit.poly.evaluate(p[i]) - q[i]).squaredNorm();
  std::printf("%zu pixel pairs, degree %d, %zu rounds\n", p.size(), opt.degree,
              fit.objective_after.size());
  std::printf("mean squared residual %.6e\n", p.empty() ? 0.0 : residual / p.size());
  for (int k = 0; k <= fit.poly.degree(); ++k) {
    const Vec3& c = fit.poly.coefficients[k];
    std::printf("f_%d = (%.6f, %.6f, %.6f)\n", k, c.x(), c.y(), c.z());
  }
  save_color_transform(fit.poly, a.out);
  return kExitOk;
}

struct AlignSegmentArgs {
  fs::path scenario, kernels, out = "labeled.ply";
  std::vector<double> joints;
  std::size_t per_link = 2000;
  std::uint64_t seed = 0;
};

int cmd_align_segment(const AlignSegmentArgs& a) {
  const Scenario sc = load_scenario(a.scenario);
  const std::vector<double> q = a.joints.empty() ? sc.home : a.joints;
  if (q.size() != sc.robot.dof())
    throw InvalidArgument("expected " + std::to_string(sc.robot.dof()) + " joint values");
  GaussianSet kernels = load_splat_ply(a.kernels);
  const LabeledCloud cloud = sample_link_points(sc.robot, q, a.per_link, a.seed);
  segment_kernels_to_links(kernels, cloud);
  std::map<int, std::size_t> hist;
  for (const GaussianKernel& k : kernels.kernels) ++hist[k.label];
  std::size_t total = 0;
  for (const auto& [label, n] : hist) {
    const std::string name = label >= 0 && label < static_cast<int>(sc.robot.links.size())
                                 ? sc.robot.links[label].name
                                 : "-";
    std::printf("%4d %-20s %zu\n", label, name.c_str(), n);
    total += n;
  }
  std::printf("total %zu of %zu kernels\n", total, kernels.size());
  save_splat_ply(kernels, a.out);
  return kExitOk;
}

// --- sysid ---

struct SysidArgs {
  fs::path trajectory, config, out = "sysid";
  bool uniform = false;
  std::uint64_t seed = 0;
};

Range range_from(const json& j, const char* key, Range fallback) {
  if (!j.contains(key)) return fallback;
  const auto v = j.at(key).get<std::vector<double>>();
  if (v.size() != 2 || v[0] > v[1]) throw SchemaError(std::string("bad range '") + key + "'");
  return {v[0], v[1]};
}

int cmd_sysid(const SysidArgs& a) {
  const std::string config_text = read_text(a.config);
  json cfg;
  try {
    cfg = json::parse(config_text);
  } catch (const json::exception& e) {
    throw ParseError(a.config.string() + ": " + e.what());
  }
  const TrackedTrajectory traj = load_trajectory(a.trajectory);

  TwinTemplate base;
  const json twin = cfg.value("twin", json::object());
  base.spec.particle_spacing = twin.value("particle_spacing", base.spec.particle_spacing);
  base.spec.total_mass = twin.value("total_mass", base.spec.total_mass);
  base.spec.max_neighbors = twin.value("max_neighbors", base.spec.max_neighbors);
  base.spec.connection_radius = twin.value("connection_radius", base.spec.connection_radius);
  const json sim = cfg.value("sim", json::object());
  base.params.frame_dt = sim.value("frame_dt", base.params.frame_dt);
  base.params.substeps = sim.value("substeps", base.params.substeps);
  base.params.global_drag = sim.value("global_drag", base.params.global_drag);
  base.params.spring_damping = sim.value("spring_damping", base.params.spring_damping);
  base.params.friction_mu_ground = sim.value("friction_mu_ground", base.params.friction_mu_ground);
  if (cfg.contains("ground") && !cfg.at("ground").is_null())
    base.loss.ground = cfg.at("ground").get<double>();
  base.loss.correspondence = cfg.value("correspondence", "index") == "chamfer"
                                 ? Correspondence::kChamfer
                                 : Correspondence::kIndex;

  GlobalParamRanges ranges;
  const json r = cfg.value("ranges", json::object());
  ranges.connection_radius = range_from(r, "connection_radius", {base.spec.connection_radius,
                                                                 base.spec.connection_radius});
  ranges.stiffness = range_from(r, "stiffness", ranges.stiffness);
  ranges.friction = range_from(r, "friction", ranges.friction);
  ranges.damping = range_from(r, "damping", ranges.damping);

  CemOptions cem;
  const json c = cfg.value("cem", json::object());
  cem.population = c.value("population", cem.population);
  cem.elite = c.value("elite", cem.elite);
  cem.generations = c.value("generations", cem.generations);
  cem.seed = mix_seed(a.seed, 0);
  SpsaOptions spsa;
  const json s = cfg.value("spsa", json::object());
  spsa.iterations = s.value("iterations", spsa.iterations);
  spsa.step = s.value("step", spsa.step);
  spsa.perturbation = s.value("perturbation", spsa.perturbation);
  spsa.seed = mix_seed(a.seed, 1);

  Fnv1a h;
  h.add(std::string_view(config_text));
  h.add(std::string_view(read_text(a.trajectory)));
  h.add(a.seed);
  const std::string config_hash = hex64(h.value());

  const GlobalFit global = identify_global_params(traj, base, ranges, cem);
  std::printf("global: radius %.5f stiffness %.3f friction %.3f damping %.3f loss %.6e\n",
              global.best.connection_radius, global.best.stiffness, global.best.friction,
              global.best.damping, global.loss);

  SpringMassModel model = make_candidate(traj, base, global.best);
  json out = {{"format", "splatsim-twin/1"},
              {"connection_radius", global.best.connection_radius},
              {"max_neighbors", base.spec.max_neighbors},
              {"particle_spacing", base.spec.particle_spacing},
              {"total_mass", base.spec.total_mass},
              {"stiffness", global.best.stiffness},
              {"friction", global.best.friction},
              {"damping", global.best.damping},
              {"springs", model.springs().size()}};
  json trace = {{"global", global.trace}, {"per_spring", json::array()}};
  double final_loss = global.loss;
  if (a.uniform) {
    out["stiffness_mode"] = "uniform";
  } else {
    const RefineResult refined = refine_per_spring_stiffness(model, traj, spsa, base.loss);
    out["stiffness_mode"] = "per_spring";
    out["spring_stiffness"] = refined.stiffness;
    out["diverged"] = refined.diverged;
    trace["per_spring"] = refined.trace;
    if (!refined.trace.empty()) final_loss = refined.trace.back();
    std::printf("per-spring: %zu springs, loss %.6e -> %.6e%s\n", refined.stiffness.size(),
                refined.trace.empty() ? 0.0 : refined.trace.front(), final_loss,
                refined.diverged ? " (diverged)" : "");
  }
  out["final_loss"] = final_loss;
  out["provenance"] = provenance(config_hash);
  trace["provenance"] = provenance(config_hash);
  write_json(a.out / "twin_spec.json", out);
  write_json(a.out / "loss_trace.json", trace);

  if (cfg.contains("accept_loss")) {
    const double bound = cfg.at("accept_loss").get<double>();
    std::printf("final loss %.6e, bound %.6e: %s\n", final_loss, bound,
                final_loss < bound ? "accepted" : "above bound");
    if (!(final_loss < bound)) return kExitPartial;
  }
  return kExitOk;
}

// --- render ---

struct RenderArgs {
  fs::path scenario, out = "frame.png";
  std::string camera;
  int episode = 0;
  std::optional<fs::path> initial;
  std::vector<double> joints;
  std::uint64_t seed = 0;
};

int cmd_render(const RenderArgs& a) {
  const Scenario sc = load_scenario(a.scenario);
  InitialState state;
  if (a.initial) {
    state = initial_state_from_json(read_text(*a.initial));
  } else {
    const std::vector<InitialState> grid = sample_initial_grid(sc);
    if (a.episode < 0 || a.episode >= static_cast<int>(grid.size()))
      throw InvalidArgument("episode index out of range [0, " + std::to_string(grid.size()) +
                            ")");
    state = grid[a.episode];
  }
  std::size_t cam = 0;
  if (!a.camera.empty()) {
    cam = sc.cameras.size();
    for (std::size_t i = 0; i < sc.cameras.size(); ++i)
      if (sc.cameras[i].name == a.camera) cam = i;
    if (cam == sc.cameras.size()) throw InvalidArgument("no camera named '" + a.camera + "'");
  }
  if (sc.cameras.empty()) throw InvalidArgument("scenario has no cameras");

  EnvOptions opt;
  opt.seed = a.seed;
  Environment env(sc, opt);
  env.reset(state);
  if (!a.joints.empty()) {
    if (a.joints.size() != sc.robot.arm_joints().size())
      throw InvalidArgument("expected " + std::to_string(sc.robot.arm_joints().size()) +
                            " arm joint values");
    env.step(Action::hold(a.joints, env.opening()));
  }
  const Image img = env.render_camera(cam);
  if (a.out.has_parent_path()) fs::create_directories(a.out.parent_path());
  save_png(img, a.out);
  json meta = {{"scenario", sc.name},
               {"episode", state.episode},
               {"camera", sc.cameras[cam].name},
               {"width", img.width},
               {"height", img.height},
               {"kernels", env.scene_kernels().size()},
               {"provenance", provenance(sc.config_hash)}};
  write_json(fs::path(a.out.string() + ".json"), meta);
  std::printf("%s %dx%d camera %s\n", a.out.string().c_str(), img.width, img.height,
              sc.cameras[cam].name.c_str());
  return kExitOk;
}

// --- report ---

struct ReportArgs {
  std::vector<fs::path> inputs;
  std::optional<fs::path> replay, truth, out;
};

int cmd_report(const ReportArgs& a) {
  std::vector<EpisodeOutcome> all;
  for (const fs::path& p : a.inputs) {
    const fs::path file = fs::is_directory(p) ? p / "outcomes.jsonl" : p;
    auto v = load_outcomes(file);
    all.insert(all.end(), v.begin(), v.end());
  }
  const std::vector<PolicyScore> scores = score_outcomes(all);
  json report = {{"scores", json::array()}, {"code_version", SPLATSIM_VERSION}};
  for (const PolicyScore& s : scores) report["scores"].push_back(score_json(s));
  print_scores(scores);

  // Sim-vs-real agreement over (policy, checkpoint) pairs seen in both.
  std::map<std::string, std::pair<std::optional<double>, std::optional<double>>> paired;
  for (const PolicyScore& s : scores) {
    const std::string key = s.policy + "/" + s.checkpoint;
    if (s.domain == Domain::kSim) paired[key].first = s.rate();
    if (s.domain == Domain::kReal) paired[key].second = s.rate();
  }
  std::vector<double> sim, real;
  for (const auto& [key, v] : paired)
    if (v.first && v.second) {
      sim.push_back(*v.first);
      real.push_back(*v.second);
    }
  if (sim.size() >= 2) {
    const double m = mmrv(sim, real);
    report["sim_vs_real"] = {{"pairs", sim.size()}, {"mmrv", m}};
    std::printf("sim vs real over %zu policies: mmrv %.4f", sim.size(), m);
    try {
      const double r = pearson(sim, real);
      report["sim_vs_real"]["pearson"] = r;
      std::printf(", pearson %.4f", r);
    } catch (const Error& e) {
      std::printf(", pearson undefined (%s)", e.what());
    }
    std::printf("\n");
  }

  if (a.replay || a.truth) {
    if (!a.replay || !a.truth) throw InvalidArgument("--replay and --truth go together");
    const Confusion c = replay_confusion(load_outcomes(*a.replay), load_outcomes(*a.truth));
    report["confusion"] = {{"tp", c.tp}, {"fp", c.fp}, {"fn", c.fn}, {"tn", c.tn}};
    std::printf("confusion (replay x truth): tp=%d fp=%d fn=%d tn=%d\n", c.tp, c.fp, c.fn,
                c.tn);
  }
  if (a.out) write_json(*a.out, report);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"splatsim: splat-rendered spring-mass twins for policy evaluation"};
  app.require_subcommand(1);
  app.set_version_flag("--version", SPLATSIM_VERSION);

  EvalArgs eval;
  std::uint64_t eval_seed = 0;
  int eval_workers = 1;
  std::string eval_out;
  auto* eval_cmd = app.add_subcommand("eval", "Run a batch of episodes from a manifest");
  eval_cmd->add_option("manifest", eval.manifest, "Run manifest (JSON)")
      ->required()->check(CLI::ExistingFile);
  auto* eval_seed_opt = eval_cmd->add_option("--seed", eval_seed, "Base seed");
  auto* eval_workers_opt =
      eval_cmd->add_option("--workers", eval_workers, "Parallel environments");
  auto* eval_out_opt = eval_cmd->add_option("--out", eval_out, "Results directory");

  ReplayArgs replay;
  auto* replay_cmd = app.add_subcommand("replay", "Re-execute logged episodes");
  replay_cmd->add_option("input", replay.input, "Episode log or results directory")
      ->required()->check(CLI::ExistingPath);
  replay_cmd->add_option("--scenario", replay.scenario, "Scenario file");
  replay_cmd->add_option("--truth", replay.truth, "Outcome file to compare verdicts against");
  replay_cmd->add_option("--out", replay.out, "Output directory");
  replay_cmd->add_option("--workers", replay.workers, "Parallel environments");
  replay_cmd->add_option("--mu-ground", replay.mu_ground, "Ground friction override");
  replay_cmd->add_option("--mu-robot", replay.mu_robot, "Gripper friction override");
  replay_cmd->add_option("--mu-mesh", replay.mu_mesh, "Static mesh friction override");
  std::uint64_t replay_seed = 0;
  replay_cmd->add_option("--seed", replay_seed, "Unused; accepted for uniformity");

  auto* align_cmd = app.add_subcommand("align", "Real-to-sim alignment tools");
  align_cmd->require_subcommand(1);
  AlignPoseArgs pose;
  auto* pose_cmd = align_cmd->add_subcommand("pose", "Register SRC onto DST (RANSAC + ICP)");
  pose_cmd->add_option("src", pose.src, "Source cloud (.ply or x y z text)")
      ->required()->check(CLI::ExistingFile);
  pose_cmd->add_option("dst", pose.dst, "Target cloud")->required()->check(CLI::ExistingFile);
  pose_cmd->add_option("--out", pose.out, "Transform file")->capture_default_str();
  pose_cmd->add_option("--trials", pose.trials, "RANSAC hypotheses")->capture_default_str();
  pose_cmd->add_option("--inlier-tol", pose.inlier_tol, "RANSAC inlier distance (m)")
      ->capture_default_str();
  pose_cmd->add_flag("--no-ransac", pose.skip_ransac, "Start ICP from the identity");
  pose_cmd->add_option("--seed", pose.seed, "RANSAC seed");

  AlignColorArgs color;
  auto* color_cmd = align_cmd->add_subcommand("color", "Fit a per-channel colour polynomial");
  color_cmd->add_option("--rendered", color.rendered, "Rendered PNGs")
      ->required()->check(CLI::ExistingFile);
  color_cmd->add_option("--captured", color.captured, "Captured PNGs, same order")
      ->required()->check(CLI::ExistingFile);
  color_cmd->add_option("--degree", color.degree, "Polynomial degree")->capture_default_str();
  color_cmd->add_flag("--plain", color.plain, "Unweighted least squares");
  color_cmd->add_option("--out", color.out, "Colour transform file")->capture_default_str();

  AlignSegmentArgs seg;
  auto* seg_cmd = align_cmd->add_subcommand("segment", "Label robot kernels by link");
  seg_cmd->add_option("--scenario", seg.scenario, "Scenario with the robot")
      ->required()->check(CLI::ExistingFile);
  seg_cmd->add_option("--kernels", seg.kernels, "Robot splat PLY")
      ->required()->check(CLI::ExistingFile);
  seg_cmd->add_option("--joints", seg.joints, "Joint vector (default: home)");
  seg_cmd->add_option("--per-link", seg.per_link, "Surface samples per link")
      ->capture_default_str();
  seg_cmd->add_option("--seed", seg.seed, "Sampling seed");
  seg_cmd->add_option("--out", seg.out, "Labeled PLY")->capture_default_str();

  SysidArgs sysid;
  auto* sysid_cmd = app.add_subcommand("sysid", "Identify twin parameters from a trajectory");
  sysid_cmd->add_option("trajectory", sysid.trajectory, "Tracked trajectory (JSONL)")
      ->required()->check(CLI::ExistingFile);
  sysid_cmd->add_option("--config", sysid.config, "Identification config (JSON)")
      ->required()->check(CLI::ExistingFile);
  sysid_cmd->add_flag("--uniform-stiffness", sysid.uniform, "Stop after the global stage");
  sysid_cmd->add_option("--seed", sysid.seed, "Optimizer seed");
  sysid_cmd->add_option("--out", sysid.out, "Output directory")->capture_default_str();

  RenderArgs rend;
  auto* render_cmd = app.add_subcommand("render", "Render one frame of a scenario");
  render_cmd->add_option("scenario", rend.scenario, "Scenario file")
      ->required()->check(CLI::ExistingFile);
  render_cmd->add_option("--camera", rend.camera, "Camera name (default: first)");
  render_cmd->add_option("--episode", rend.episode, "Grid episode index");
  render_cmd->add_option("--initial", rend.initial, "Initial state JSON");
  render_cmd->add_option("--joints", rend.joints, "Arm joint target held for one frame");
  render_cmd->add_option("--seed", rend.seed, "Kernel sampling seed");
  render_cmd->add_option("--out", rend.out, "Output PNG")->capture_default_str();

  ReportArgs rep;
  auto* report_cmd = app.add_subcommand("report", "Metrics over outcome files");
  report_cmd->add_option("inputs", rep.inputs, "Outcome files or results directories")
      ->required()->check(CLI::ExistingPath);
  report_cmd->add_option("--replay", rep.replay, "Replay outcomes for a confusion matrix");
  report_cmd->add_option("--truth", rep.truth, "Ground-truth outcomes");
  report_cmd->add_option("--out", rep.out, "Report JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitError;
  }

  try {
    if (*eval_cmd) {
      if (*eval_seed_opt) eval.seed = eval_seed;
      if (*eval_workers_opt) eval.workers = eval_workers;
      if (*eval_out_opt) eval.out = eval_out;
      return cmd_eval(eval);
    }
    if (*replay_cmd) return cmd_replay(replay);
    if (*pose_cmd) return cmd_align_pose(pose);
    if (*color_cmd) return cmd_align_color(color);
    if (*seg_cmd) return cmd_align_segment(seg);
    if (*sysid_cmd) return cmd_sysid(sysid);
    if (*render_cmd) return cmd_render(rend);
    if (*report_cmd) return cmd_report(rep);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitError;
  }
  return kExitError;
}
