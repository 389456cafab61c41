#include "splatsim/twin.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "splatsim/error.hpp"
#include "splatsim/random.hpp"
#include "splatsim/spatial.hpp"

namespace splatsim {

using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

json vec_json(const Vec3& v) { return json::array({v.x(), v.y(), v.z()}); }

Vec3 json_vec(const json& j) {
  if (!j.is_array() || j.size() != 3) throw ParseError("expected a 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

}  // namespace

void TwinSpec::validate() const {
  if (!(connection_radius > 0.0)) throw InvalidArgument("connection radius must be > 0");
  if (max_neighbors < 1) throw InvalidArgument("max_neighbors must be >= 1");
  if (!(total_mass > 0.0)) throw InvalidArgument("total mass must be > 0");
  if (stiffness_mode == StiffnessMode::kUniform && !(stiffness > 0.0)) {
    throw InvalidArgument("stiffness must be > 0");
  }
}

SpringMassModel build_spring_mass(std::span<const Vec3> points,
                                  const TwinSpec& spec, SimParams params,
                                  std::vector<int>* isolated) {
  spec.validate();
  if (points.empty()) throw InvalidArgument("cannot build a twin from zero points");
  const int n = static_cast<int>(points.size());
  const KdTree tree(std::vector<Vec3>(points.begin(), points.end()));
  std::vector<std::pair<int, int>> pairs;
  for (int i = 0; i < n; ++i) {
    std::vector<std::pair<double, int>> near;
    for (int j : tree.radius_search(points[i], spec.connection_radius)) {
      if (j != i) near.emplace_back((points[j] - points[i]).squaredNorm(), j);
    }
    std::sort(near.begin(), near.end());
    const std::size_t keep =
        std::min(near.size(), static_cast<std::size_t>(spec.max_neighbors));
    for (std::size_t k = 0; k < keep; ++k) {
      const int j = near[k].second;
      pairs.emplace_back(std::min(i, j), std::max(i, j));
    }
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());

  if (spec.stiffness_mode == StiffnessMode::kPerSpring &&
      spec.spring_stiffness.size() != pairs.size()) {
    throw InvalidArgument("per-spring stiffness has " +
                          std::to_string(spec.spring_stiffness.size()) +
                          " entries, twin has " + std::to_string(pairs.size()) +
                          " springs");
  }
  std::vector<Spring> springs;
  springs.reserve(pairs.size());
  std::vector<int> degree(n, 0);
  for (std::size_t s = 0; s < pairs.size(); ++s) {
    const auto [i, j] = pairs[s];
    const double len = (points[j] - points[i]).norm();
    if (!(len > 0.0)) {
      throw InvalidArgument("coincident points " + std::to_string(i) + " and " +
                            std::to_string(j));
    }
    const double y = spec.stiffness_mode == StiffnessMode::kUniform
                         ? spec.stiffness
                         : spec.spring_stiffness[s];
    springs.push_back({i, j, len, y});
    ++degree[i];
    ++degree[j];
  }
  if (isolated != nullptr) {
    for (int i = 0; i < n; ++i) {
      if (degree[i] == 0) isolated->push_back(i);
    }
  }
  return SpringMassModel(std::vector<Vec3>(points.begin(), points.end()),
                         std::vector<double>(n, spec.total_mass / n),
                         std::move(springs), params);
}

std::vector<Vec3> sample_interior(const TriangleMesh& mesh, double spacing) {
  if (!(spacing > 0.0)) throw InvalidArgument("spacing must be > 0");
  const MeshDistanceField field(mesh);
  const Eigen::AlignedBox3d box = mesh.bounds();
  const Vec3 size = box.sizes();
  std::array<long, 3> count{};
  for (int a = 0; a < 3; ++a) {
    count[a] = std::max(1L, static_cast<long>(std::ceil(size[a] / spacing - 1e-9)));
  }
  std::vector<Vec3> out;
  for (long k = 0; k < count[2]; ++k) {
    for (long j = 0; j < count[1]; ++j) {
      for (long i = 0; i < count[0]; ++i) {
        const Vec3 p = box.min() + spacing * Vec3(i + 0.5, j + 0.5, k + 0.5);
        if (field.inside(p)) out.push_back(p);
      }
    }
  }
  return out;
}

SpringMassModel build_rigid_twin(const TriangleMesh& mesh, double spacing,
                                 const RigidTwinOptions& opt,
                                 SimParams params) {
  if (!(mesh_volume(mesh) > 0.0)) {
    throw InvalidArgument("mesh '" + mesh.name + "' encloses no volume");
  }
  const auto points = sample_interior(mesh, spacing);
  if (points.size() < 4) {
    throw InvalidArgument("spacing " + std::to_string(spacing) +
                          " leaves fewer than 4 interior points");
  }
  const double scale =
      opt.frame_scale > 0.0 ? opt.frame_scale : mesh.bounds().sizes().maxCoeff();
  TwinSpec spec;
  spec.connection_radius = opt.radius * scale;
  spec.max_neighbors = opt.max_neighbors;
  spec.stiffness = opt.stiffness;
  spec.particle_spacing = spacing;
  spec.total_mass = opt.total_mass;
  return build_spring_mass(points, spec, params);
}

void TrackedTrajectory::validate() const {
  if (frames.empty()) throw InvalidArgument("trajectory has no frames");
  const std::size_t n = frames[0].points.size();
  const std::size_t k = frames[0].controls.size();
  for (std::size_t f = 0; f < frames.size(); ++f) {
    if (frames[f].points.size() != n || frames[f].controls.size() != k) {
      throw InvalidArgument("frame " + std::to_string(f) +
                            " changes the point or control count");
    }
    if (f > 0 && !(frames[f].time > frames[f - 1].time)) {
      throw InvalidArgument("frame " + std::to_string(f) +
                            " time is not increasing");
    }
  }
}

void save_trajectory(const TrackedTrajectory& traj,
                     const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  for (const auto& fr : traj.frames) {
    json j;
    j["t"] = fr.time;
    j["points"] = json::array();
    for (const auto& p : fr.points) j["points"].push_back(vec_json(p));
    j["controls"] = json::array();
    for (const auto& p : fr.controls) j["controls"].push_back(vec_json(p));
    out << j.dump() << "\n";
  }
}

TrackedTrajectory load_trajectory(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open " + path.string());
  TrackedTrajectory traj;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      const json j = json::parse(line);
      TrackedFrame fr;
      fr.time = j.at("t").get<double>();
      for (const auto& p : j.at("points")) fr.points.push_back(json_vec(p));
      if (j.contains("controls")) {
        for (const auto& p : j.at("controls")) fr.controls.push_back(json_vec(p));
      }
      traj.frames.push_back(std::move(fr));
    } catch (const json::exception& e) {
      throw ParseError(path.string() + ":" + std::to_string(line_no) + ": " +
                       e.what());
    }
  }
  traj.validate();
  return traj;
}

std::vector<int> control_particles(const SpringMassModel& model,
                                   const TrackedTrajectory& traj) {
  std::vector<int> out;
  if (traj.frames.empty() || traj.frames[0].controls.empty()) return out;
  const KdTree tree(model.x);
  for (const Vec3& c : traj.frames[0].controls) out.push_back(tree.nearest(c).first);
  return out;
}

namespace {

double frame_discrepancy(std::span<const Vec3> sim, std::span<const Vec3> obs,
                         Correspondence mode) {
  if (mode == Correspondence::kIndex) {
    if (sim.size() != obs.size()) {
      throw InvalidArgument("tracked point count " + std::to_string(obs.size()) +
                            " != particle count " + std::to_string(sim.size()));
    }
    double s = 0.0;
    for (std::size_t i = 0; i < sim.size(); ++i) s += (sim[i] - obs[i]).squaredNorm();
    return s / static_cast<double>(sim.size());
  }
  const KdTree ts(std::vector<Vec3>(sim.begin(), sim.end()));
  const KdTree to(std::vector<Vec3>(obs.begin(), obs.end()));
  double a = 0.0;
  for (const Vec3& p : obs) a += ts.nearest(p).second;
  double b = 0.0;
  for (const Vec3& p : sim) b += to.nearest(p).second;
  return 0.5 * (a / obs.size() + b / sim.size());
}

}  // namespace

LossResult trajectory_loss(const SpringMassModel& model,
                           const TrackedTrajectory& traj,
                           const LossOptions& opt,
                           std::vector<std::vector<Vec3>>* rollout) {
  traj.validate();
  SpringMassModel m = model;
  const auto pins = control_particles(m, traj);
  PinTargets targets;
  targets.particles = pins;
  FrameInputs in;
  in.ground = opt.ground;
  if (!pins.empty()) in.pins = &targets;
  if (rollout != nullptr) rollout->assign(1, m.x);

  const std::size_t nf = traj.frames.size();
  if (nf == 1) {
    return {frame_discrepancy(m.x, traj.frames[0].points, opt.correspondence), {}};
  }
  double total = 0.0;
  for (std::size_t f = 1; f < nf; ++f) {
    m.params.frame_dt = traj.frames[f].time - traj.frames[f - 1].time;
    targets.end_positions = traj.frames[f].controls;
    try {
      simulate_frame(m, in);
    } catch (const SimulationFault& e) {
      return {kInf, "frame " + std::to_string(f) + ": " + e.what()};
    }
    if (rollout != nullptr) rollout->push_back(m.x);
    total += frame_discrepancy(m.x, traj.frames[f].points, opt.correspondence);
  }
  return {total / static_cast<double>(nf - 1), {}};
}

TrackedTrajectory synthesize_trajectory(
    const SpringMassModel& model, std::span<const int> control_ids,
    std::span<const std::vector<Vec3>> control_paths,
    std::optional<double> ground) {
  if (control_paths.empty()) throw InvalidArgument("empty control path");
  SpringMassModel m = model;
  TrackedTrajectory traj;
  TrackedFrame first;
  first.time = 0.0;
  first.points = m.x;
  for (int id : control_ids) first.controls.push_back(m.x[id]);
  traj.frames.push_back(first);
  PinTargets targets;
  targets.particles.assign(control_ids.begin(), control_ids.end());
  FrameInputs in;
  in.ground = ground;
  if (!control_ids.empty()) in.pins = &targets;
  for (std::size_t f = 1; f < control_paths.size(); ++f) {
    if (control_paths[f].size() != control_ids.size()) {
      throw InvalidArgument("control path frame size mismatch");
    }
    targets.end_positions = control_paths[f];
    simulate_frame(m, in);
    TrackedFrame fr;
    fr.time = traj.frames.back().time + m.params.frame_dt;
    fr.points = m.x;
    fr.controls = control_paths[f];
    traj.frames.push_back(std::move(fr));
  }
  return traj;
}

SpringMassModel make_candidate(const TrackedTrajectory& traj,
                               const TwinTemplate& base,
                               const GlobalParams& p) {
  TwinSpec spec = base.spec;
  spec.connection_radius = p.connection_radius;
  spec.stiffness_mode = StiffnessMode::kUniform;
  spec.stiffness = p.stiffness;
  SimParams params = base.params;
  params.friction_mu_ground = p.friction;
  params.friction_mu_mesh = p.friction;
  params.spring_damping = p.damping;
  return build_spring_mass(traj.frames.at(0).points, spec, params);
}

namespace {

struct Dim {
  double lo, hi;
  bool log;
  double to_value(double u) const {
    return log ? std::exp(std::log(lo) + u * (std::log(hi) - std::log(lo)))
               : lo + u * (hi - lo);
  }
};

}  // namespace

GlobalFit identify_global_params(const TrackedTrajectory& traj,
                                 const TwinTemplate& base,
                                 const GlobalParamRanges& ranges,
                                 const CemOptions& opt) {
  traj.validate();
  if (opt.population < 1 || opt.elite < 1 || opt.elite > opt.population ||
      opt.generations < 1) {
    throw InvalidArgument("invalid cross-entropy settings");
  }
  const Range* rs[4] = {&ranges.connection_radius, &ranges.stiffness,
                        &ranges.friction, &ranges.damping};
  for (const Range* r : rs) {
    if (!(r->hi >= r->lo)) throw InvalidArgument("parameter range has hi < lo");
  }
  if (!(ranges.stiffness.lo > 0.0) || !(ranges.connection_radius.lo > 0.0)) {
    throw InvalidArgument("stiffness and connection radius ranges must be > 0");
  }
  const Dim dims[4] = {{rs[0]->lo, rs[0]->hi, false},
                       {rs[1]->lo, rs[1]->hi, true},
                       {rs[2]->lo, rs[2]->hi, false},
                       {rs[3]->lo, rs[3]->hi, false}};
  auto params_of = [&](const std::array<double, 4>& u) {
    return GlobalParams{dims[0].to_value(u[0]), dims[1].to_value(u[1]),
                        dims[2].to_value(u[2]), dims[3].to_value(u[3])};
  };

  Rng rng(mix_seed(opt.seed, 0xC3E));
  std::array<double, 4> mean{0.5, 0.5, 0.5, 0.5};
  std::array<double, 4> stdev{0.35, 0.35, 0.35, 0.35};
  GlobalFit fit;
  fit.loss = kInf;
  std::string first_fault;
  const int pop = opt.population;

  for (int g = 0; g < opt.generations; ++g) {
    std::vector<std::array<double, 4>> samples(pop);
    for (auto& s : samples) {
      for (int d = 0; d < 4; ++d) {
        const double z = rng.normal();
        s[d] = rs[d]->fixed() ? 0.0 : std::clamp(mean[d] + stdev[d] * z, 0.0, 1.0);
      }
    }
    std::vector<double> loss(pop, kInf);
    std::vector<std::string> faults(pop);
#pragma omp parallel for schedule(dynamic)
    for (int c = 0; c < pop; ++c) {
      try {
        const auto model = make_candidate(traj, base, params_of(samples[c]));
        const auto r = trajectory_loss(model, traj, base.loss);
        loss[c] = r.loss;
        faults[c] = r.fault;
      } catch (const Error& e) {
        faults[c] = e.what();
      }
    }
    std::vector<int> order(pop);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
      return loss[a] != loss[b] ? loss[a] < loss[b] : a < b;
    });
    for (int c = 0; c < pop; ++c) {
      if (first_fault.empty() && !faults[c].empty()) first_fault = faults[c];
    }
    if (loss[order[0]] < fit.loss) {
      fit.loss = loss[order[0]];
      fit.best = params_of(samples[order[0]]);
    }
    fit.trace.push_back(fit.loss);
    int finite_elites = 0;
    std::array<double, 4> m{0, 0, 0, 0};
    for (int e = 0; e < opt.elite; ++e) {
      if (!std::isfinite(loss[order[e]])) break;
      ++finite_elites;
      for (int d = 0; d < 4; ++d) m[d] += samples[order[e]][d];
    }
    if (finite_elites == 0) continue;
    for (int d = 0; d < 4; ++d) m[d] /= finite_elites;
    std::array<double, 4> var{0, 0, 0, 0};
    for (int e = 0; e < finite_elites; ++e) {
      for (int d = 0; d < 4; ++d) {
        const double dd = samples[order[e]][d] - m[d];
        var[d] += dd * dd;
      }
    }
    for (int d = 0; d < 4; ++d) {
      mean[d] = m[d];
      stdev[d] = std::max(std::sqrt(var[d] / finite_elites), 1e-3);
    }
  }
  if (!std::isfinite(fit.loss)) {
    throw NumericalError("every candidate faulted; first fault: " + first_fault);
  }
  return fit;
}

RefineResult refine_per_spring_stiffness(const SpringMassModel& model,
                                         const TrackedTrajectory& traj,
                                         const SpsaOptions& opt,
                                         const LossOptions& loss_opt) {
  const std::size_t m = model.springs().size();
  RefineResult res;
  res.stiffness.resize(m);
  for (std::size_t s = 0; s < m; ++s) res.stiffness[s] = model.springs()[s].stiffness;
  SpringMassModel work = model;
  auto eval = [&](const std::vector<double>& theta) {
    std::vector<double> y(m);
    for (std::size_t s = 0; s < m; ++s) y[s] = std::exp(theta[s]);
    work.set_stiffness(y);
    return trajectory_loss(work, traj, loss_opt).loss;
  };
  std::vector<double> theta(m);
  for (std::size_t s = 0; s < m; ++s) theta[s] = std::log(res.stiffness[s]);
  const double initial = eval(theta);
  res.trace.push_back(initial);
  if (opt.iterations <= 0 || m == 0) return res;

  const double lo = std::log(opt.y_min);
  const double hi = std::log(opt.y_max);
  std::vector<double> best = theta;
  double best_loss = initial;
  Rng rng(mix_seed(opt.seed, 0x5B5A));
  std::vector<double> delta(m), probe(m);
  for (int k = 0; k < opt.iterations; ++k) {
    const double a = opt.step / std::pow(k + 1.0, 0.602);
    const double c = opt.perturbation / std::pow(k + 1.0, 0.101);
    for (std::size_t s = 0; s < m; ++s) delta[s] = (rng.next_u64() & 1) ? 1.0 : -1.0;
    for (std::size_t s = 0; s < m; ++s) probe[s] = std::clamp(theta[s] + c * delta[s], lo, hi);
    const double lp = eval(probe);
    if (lp < best_loss) { best_loss = lp; best = probe; }
    for (std::size_t s = 0; s < m; ++s) probe[s] = std::clamp(theta[s] - c * delta[s], lo, hi);
    const double lm = eval(probe);
    if (lm < best_loss) { best_loss = lm; best = probe; }
    if (std::isfinite(lp) && std::isfinite(lm) && lp + lm > 0.0) {
      // Gradient of log-loss along delta, which keeps the step scale-free.
      const double g = (lp - lm) / (0.5 * (lp + lm)) / (2.0 * c);
      for (std::size_t s = 0; s < m; ++s) {
        theta[s] = std::clamp(theta[s] - a * g * delta[s], lo, hi);
      }
      const double l = eval(theta);
      if (l < best_loss) { best_loss = l; best = theta; }
      if (!(l <= 10.0 * initial)) {
        res.diverged = true;
        theta = best;
      }
    } else {
      theta = best;
    }
    res.trace.push_back(best_loss);
  }
  for (std::size_t s = 0; s < m; ++s) res.stiffness[s] = std::exp(best[s]);
  return res;
}

}  // namespace splatsim
